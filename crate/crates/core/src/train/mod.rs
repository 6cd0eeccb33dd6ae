//! Contrastive training, optimizer and retrieval evaluation.

mod adam;
mod loss;
mod metrics;

use std::fs;
use std::path::Path;

pub use adam::Adam;
pub use loss::{row_cross_entropy, symmetric_ce_loss, SymmetricLoss};
pub use metrics::{compute_metrics, metrics_from_ranks, ranks, retrieval_report, Direction, RetrievalMetrics, RetrievalReport};

use crate::config::{RunConfig, TrainConfig};
use crate::dataset::{Dataset, TextItem, VideoItem};
use crate::error::{Error, Result};
use crate::nn::linalg::Matrix;
use crate::nn::params::Parameters;
use crate::nn::ModelParams;
use crate::parallel::{ordered_map, with_threads};
use crate::rng::SplitMix64;
use crate::scoring::{score_matrix, score_pair, ScoreConfig};

/// Loss of one batch: every text scored against every video.
pub fn batch_loss(
    params: &ModelParams,
    texts: &[TextItem],
    videos: &[VideoItem],
    cfg: ScoreConfig,
    tau: f64,
    threads: usize,
) -> Result<f64> {
    let s = score_matrix(texts, videos, params, cfg, threads)?;
    Ok(symmetric_ce_loss(&s, tau)?.loss)
}

/// Loss, score matrix and parameter gradient of one batch.
///
/// Forward cells run in parallel; each text row then accumulates its own
/// gradient buffer, and the buffers are summed in row order so the result
/// does not depend on `threads`.
pub fn batch_loss_and_grad(
    params: &ModelParams,
    texts: &[TextItem],
    videos: &[VideoItem],
    cfg: ScoreConfig,
    tau: f64,
    threads: usize,
) -> Result<(SymmetricLoss, Matrix, ModelParams)> {
    let (bt, bv) = (texts.len(), videos.len());
    let cells = ordered_map(threads, bt * bv, |k| score_pair(&texts[k / bv], &videos[k % bv], params, cfg))?;
    let s = Matrix::from_vec(bt, bv, cells.iter().map(|c| c.score()).collect());
    let loss = symmetric_ce_loss(&s, tau)?;
    if !loss.loss.is_finite() {
        return Err(Error::NonFinite("batch loss".into()));
    }
    let rows = ordered_map(threads, bt, |i| {
        let mut g = params.zeros_like();
        for j in 0..bv {
            cells[i * bv + j].backward(&texts[i], &videos[j], params, loss.grad[(i, j)], &mut g);
        }
        Ok(g)
    })?;
    let mut grads = params.zeros_like();
    for g in &rows {
        grads.accumulate(g);
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("parameter gradient".into()));
    }
    Ok((loss, s, grads))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Batch loss before each update.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// `step,loss` CSV, one row per step starting at 1.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (k, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{l}\n", k + 1));
        }
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>, seed: u64) -> Result<()> {
        let dir = dir.as_ref();
        self.params.save(dir, seed)?;
        let path = dir.join(LOSS_FILE);
        fs::write(&path, self.loss_csv()).map_err(|e| Error::io(&path, e))
    }
}

pub const LOSS_FILE: &str = "loss.csv";

/// Offset separating the batching stream from the initialization stream.
const SHUFFLE_STREAM: u64 = 0x5348_4546_4c45;

/// Seeded training from scratch. Batches are drawn without replacement;
/// each epoch reshuffles and drops the last `n mod B` pairs.
pub fn train(data: &Dataset, run: &RunConfig, cfg: &TrainConfig, threads: usize) -> Result<TrainOutcome> {
    run.validate()?;
    let params = ModelParams::init(run.d, run.heads, run.max_frames, run.seed)?;
    train_from(params, data, run, cfg, threads)
}

/// Train starting from given parameters.
pub fn train_from(
    params: ModelParams,
    data: &Dataset,
    run: &RunConfig,
    cfg: &TrainConfig,
    threads: usize,
) -> Result<TrainOutcome> {
    run.validate()?;
    cfg.validate()?;
    let n = data.len();
    if n < cfg.batch_size {
        return Err(Error::Config(format!(
            "{n} pairs cannot fill a batch of {}",
            cfg.batch_size
        )));
    }
    if let Some(d) = data.d() {
        if d != params.d() {
            return Err(Error::DimensionMismatch(format!(
                "data has d = {d} but the model has d = {}",
                params.d()
            )));
        }
    }
    with_threads(threads, || train_loop(params, data, run, cfg, threads))
}

fn train_loop(
    mut params: ModelParams,
    data: &Dataset,
    run: &RunConfig,
    cfg: &TrainConfig,
    threads: usize,
) -> Result<TrainOutcome> {
    let score_cfg = ScoreConfig::from(run);
    let mut opt = Adam::new(&params, cfg.lr, cfg.adam);
    let mut rng = SplitMix64::new(run.seed ^ SHUFFLE_STREAM);
    let per_epoch = data.len() / cfg.batch_size;
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let slot = step % per_epoch;
        if slot == 0 {
            order = (0..data.len()).collect();
            rng.shuffle(&mut order);
        }
        let idx = &order[slot * cfg.batch_size..(slot + 1) * cfg.batch_size];
        let batch = data.subset(idx);
        let (loss, _, grads) = batch_loss_and_grad(&params, &batch.texts, &batch.videos, score_cfg, run.tau, threads)?;
        opt.step(&mut params, &grads);
        if !params.all_finite() {
            return Err(Error::NonFinite(format!("parameters after step {}", step + 1)));
        }
        log::debug!("step {} loss {}", step + 1, loss.loss);
        losses.push(loss.loss);
    }
    Ok(TrainOutcome { params, losses })
}

/// Full score matrix of a dataset and its retrieval metrics.
pub fn evaluate(
    data: &Dataset,
    params: &ModelParams,
    run: &RunConfig,
    threads: usize,
) -> Result<(Matrix, RetrievalReport)> {
    let s = score_matrix(&data.texts, &data.videos, params, ScoreConfig::from(run), threads)?;
    let report = retrieval_report(&s)?;
    Ok((s, report))
}
