//! Syntax-hierarchy-enhanced text-video retrieval.
//!
//! Captions are parsed into a four-level syntax tree (sentence, actions,
//! entities, attributes). Each node guides the aggregation of a matching
//! level of video features: frames for the sentence, temporally encoded
//! frames for actions, and patches for entities. The pair score averages
//! node similarities weighted by the tree structure.

#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod fusion;
pub mod nn;
mod parallel;
pub mod rng;
pub mod scoring;
pub mod selfcheck;
pub mod syntax;
pub mod tensor;
pub mod train;

pub use config::{Config, EmptyLayerPolicy, RunConfig, TrainConfig};
pub use dataset::{Dataset, TextItem, VideoItem};
pub use error::{Error, Result};
pub use nn::{Matrix, ModelParams};
pub use scoring::{dsl_postprocess, score_matrix, score_pair, ScoreConfig};
pub use syntax::{build_hierarchy, parse_conllu, SyntaxHierarchy};
pub use tensor::{read_tensor, write_tensor, Tensor};
