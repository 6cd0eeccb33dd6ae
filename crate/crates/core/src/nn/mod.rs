//! Numerical building blocks with forward evaluation and hand-written
//! backward passes.

pub mod attention;
pub mod gradcheck;
pub mod layers;
pub mod linalg;
pub mod model;
pub mod params;
pub mod topk;
pub mod transformer;

pub use attention::{dot_softmax_attend, Attended};
pub use layers::{gelu, LayerNorm, Linear, Mlp};
pub use linalg::Matrix;
pub use model::{CheckpointMeta, ModelParams};
pub use params::Parameters;
pub use topk::top_k_indices;
pub use transformer::TemporalEncoder;
