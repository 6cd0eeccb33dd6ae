//! Fast invariant suite run by `she selfcheck`.

use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::Result;
use crate::nn::gradcheck::{grad_check, GradCheckOptions};
use crate::nn::linalg::Matrix;
use crate::nn::topk::top_k_indices;
use crate::nn::ModelParams;
use crate::rng::SplitMix64;
use crate::scoring::{score_matrix, score_pair, ScoreConfig};
use crate::syntax::SyntaxHierarchy;
use crate::tensor::{FixtureSpec, Tensor};
use crate::train::{batch_loss, batch_loss_and_grad, retrieval_report, symmetric_ce_loss};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheckReport {
    pub checks: Vec<CheckResult>,
}

impl SelfCheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

type Check = fn() -> Result<(bool, String)>;

const CHECKS: &[(&str, Check)] = &[
    ("tensor_roundtrip", tensor_roundtrip),
    ("hierarchy_invariants", hierarchy_invariants),
    ("top_k_oracle", top_k_oracle),
    ("loss_identities", loss_identities),
    ("weight_normalization", weight_normalization),
    ("gradient_check", gradient_check),
    ("metrics_identity", metrics_identity),
    ("thread_determinism", thread_determinism),
];

pub fn run_selfcheck() -> SelfCheckReport {
    let checks = CHECKS
        .iter()
        .map(|(name, f)| {
            let (passed, detail) = f().unwrap_or_else(|e| (false, e.to_string()));
            CheckResult { name, passed, detail }
        })
        .collect();
    SelfCheckReport { checks }
}

fn fixture(seed: u64, n_pairs: usize, d: usize) -> Result<Dataset> {
    Dataset::synthetic(&FixtureSpec {
        seed,
        n_pairs,
        n_t: 8,
        n_v: 4,
        n_p: 9,
        d,
    })
}

fn small_run(d: usize, seed: u64) -> RunConfig {
    RunConfig {
        d,
        heads: 2,
        max_frames: 4,
        seed,
        ..RunConfig::default()
    }
}

fn tensor_roundtrip() -> Result<(bool, String)> {
    let mut rng = SplitMix64::new(7);
    let data: Vec<f32> = (0..60).map(|_| rng.normal() as f32).collect();
    let t = Tensor::new(vec![3, 4, 5], data)?;
    let back = Tensor::from_bytes(&t.to_bytes())?;
    Ok((back == t, "3x4x5 seeded tensor".into()))
}

fn hierarchy_invariants() -> Result<(bool, String)> {
    let mut n = 0;
    for n_t in 1..=12 {
        for t in fixture(n_t as u64, 4, 4)?.texts {
            t.hierarchy.validate()?;
            let back = SyntaxHierarchy::from_json(t.hierarchy.to_json().as_bytes())?;
            if back != t.hierarchy {
                return Ok((false, format!("JSON round trip changed {}", t.id)));
            }
            n += 1;
        }
    }
    Ok((true, format!("{n} synthetic captions")))
}

fn top_k_oracle() -> Result<(bool, String)> {
    let mut rng = SplitMix64::new(11);
    let calls = 2000;
    for _ in 0..calls {
        let n = 1 + rng.below(64);
        let k = 1 + rng.below(8);
        // coarse values plant ties
        let scores: Vec<f64> = (0..n).map(|_| rng.below(5) as f64).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(k);
        order.sort_unstable();
        if top_k_indices(&scores, k)? != order {
            return Ok((false, format!("mismatch for n = {n}, k = {k}")));
        }
    }
    Ok((true, format!("{calls} calls")))
}

fn loss_identities() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for b in [2, 4, 8] {
        let out = symmetric_ce_loss(&Matrix::from_vec(b, b, vec![0.25; b * b]), 4.0)?;
        worst = worst.max((out.loss - (b as f64).ln()).abs());
        for i in 0..b {
            let row: f64 = out.grad.row(i).iter().sum();
            let col: f64 = (0..b).map(|r| out.grad[(r, i)]).sum();
            worst = worst.max(row.abs()).max(col.abs());
        }
    }
    Ok((worst < 1e-10, format!("max deviation {worst:.1e}")))
}

fn weight_normalization() -> Result<(bool, String)> {
    let data = fixture(3, 6, 8)?;
    let run = small_run(8, 3);
    let params = ModelParams::init(8, 2, 4, 3)?;
    let mut worst: f64 = 0.0;
    for t in &data.texts {
        for v in &data.videos {
            let b = score_pair(t, v, &params, ScoreConfig::from(&run))?.breakdown;
            for w in &b.weights[1..] {
                if !w.is_empty() {
                    worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
                }
            }
            let mean = (b.layer_scores[0] + b.layer_scores[1] + b.layer_scores[2]) / 3.0;
            if mean != b.final_score {
                return Ok((false, format!("final score of {} / {} is not the layer mean", t.id, v.id)));
            }
        }
    }
    Ok((worst < 1e-9, format!("max |sum w - 1| {worst:.1e}")))
}

fn gradient_check() -> Result<(bool, String)> {
    let data = fixture(2, 4, 8)?;
    let run = small_run(8, 2);
    let cfg = ScoreConfig::from(&run);
    let params = ModelParams::init(8, 2, 4, 2)?;
    let (_, _, grads) = batch_loss_and_grad(&params, &data.texts, &data.videos, cfg, run.tau, 1)?;
    let opts = GradCheckOptions {
        max_coords_per_tensor: Some(2),
        ..GradCheckOptions::default()
    };
    let report = grad_check(
        &params,
        &grads,
        |p| batch_loss(p, &data.texts, &data.videos, cfg, run.tau, 1),
        opts,
    )?;
    Ok((
        report.max_rel_err < 1e-4,
        format!("{} tensors, max rel err {:.1e}", report.tensors.len(), report.max_rel_err),
    ))
}

fn metrics_identity() -> Result<(bool, String)> {
    let mut s = Matrix::from_vec(5, 5, vec![0.1; 25]);
    for i in 0..5 {
        s[(i, i)] = 1.0;
    }
    let r = retrieval_report(&s)?;
    Ok((r.rsum == 600.0 && r.t2v.mdr == 1, format!("rsum {}", r.rsum)))
}

fn thread_determinism() -> Result<(bool, String)> {
    let data = fixture(5, 5, 8)?;
    let run = small_run(8, 5);
    let params = ModelParams::init(8, 2, 4, 5)?;
    let cfg = ScoreConfig::from(&run);
    let one = score_matrix(&data.texts, &data.videos, &params, cfg, 1)?;
    let four = score_matrix(&data.texts, &data.videos, &params, cfg, 4)?;
    Ok((one == four, "score matrix, 1 vs 4 threads".into()))
}
