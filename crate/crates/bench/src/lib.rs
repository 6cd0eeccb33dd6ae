//! Shared workloads for the criterion benches.

use she_core::tensor::FixtureSpec;
use she_core::{Dataset, ModelParams, RunConfig, ScoreConfig};

/// A synthetic dataset with a freshly initialised model of matching width.
pub struct Workload {
    pub data: Dataset,
    pub params: ModelParams,
    pub score: ScoreConfig,
}

impl Workload {
    pub fn new(pairs: usize, d: usize) -> Self {
        let spec = FixtureSpec {
            seed: 7,
            n_pairs: pairs,
            n_t: 10,
            n_v: 12,
            n_p: 16,
            d,
        };
        let run = RunConfig {
            d,
            ..RunConfig::default()
        };
        Self {
            data: Dataset::synthetic(&spec).expect("synthetic dataset"),
            params: ModelParams::init(d, run.heads, run.max_frames, run.seed).expect("model init"),
            score: ScoreConfig::from(&run),
        }
    }
}
