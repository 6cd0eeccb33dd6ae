use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use she_core::fusion::build_pair_features;
use she_core::nn::CheckpointMeta;
use she_core::selfcheck::run_selfcheck;
use she_core::tensor::{gen_fixture, read_manifest, FixtureSpec, PairRecord};
use she_core::train::{compute_metrics, train, Direction, RetrievalMetrics};
use she_core::{
    build_hierarchy, dsl_postprocess, parse_conllu, score_matrix, write_tensor, Config, Dataset, Error, Matrix,
    ModelParams, Result, RunConfig, ScoreConfig, Tensor,
};

use crate::{Cli, Command};

/// Exit status when the invariant suite finds a violation.
pub const SELFCHECK_FAILED: u8 = 3;

pub fn run(cli: &Cli) -> Result<u8> {
    let config = match &cli.config {
        Some(path) => Config::from_path(path)?,
        None => Config::default(),
    };
    if cli.dump_config {
        print!("{}", config.to_json());
        return Ok(0);
    }
    let threads = usize::from(cli.threads);
    let Some(command) = &cli.command else {
        return Err(Error::Config("no subcommand given (see --help)".into()));
    };
    match command {
        Command::GenFixtures {
            out,
            seed,
            pairs,
            words,
            frames,
            patches,
            dim,
        } => {
            let spec = FixtureSpec {
                seed: *seed,
                n_pairs: *pairs,
                n_t: *words,
                n_v: *frames,
                n_p: *patches,
                d: *dim,
            };
            let records = gen_fixture(&spec, out)?;
            println!("wrote {} pairs to {}", records.len(), out.join("manifest.json").display());
        }
        Command::BuildHierarchy { input, out } => {
            let bytes = fs::read(input).map_err(|e| io_error(input, e))?;
            let h = build_hierarchy(&parse_conllu(&bytes)?);
            write_file(out, h.to_json().as_bytes())?;
        }
        Command::Fuse {
            manifest,
            params,
            out,
            literal_eq17,
        } => fuse(manifest, params, out, run_config(&config, params, *literal_eq17)?)?,
        Command::Score {
            manifest,
            params,
            out,
            dsl,
            literal_eq17,
        } => score(manifest, params, out, *dsl, run_config(&config, params, *literal_eq17)?, threads)?,
        Command::Train { manifest, out } => {
            let data = Dataset::load(manifest)?;
            let outcome = train(&data, &config.run, &config.train, threads)?;
            outcome.save(out, config.run.seed)?;
            println!(
                "trained {} steps, final loss {}",
                outcome.losses.len(),
                outcome.final_loss().unwrap_or(f64::NAN)
            );
        }
        Command::Eval {
            manifest,
            params,
            report,
            dsl,
            literal_eq17,
        } => eval(manifest, params, report, *dsl, run_config(&config, params, *literal_eq17)?, threads)?,
        Command::Selfcheck => {
            let report = run_selfcheck();
            for c in &report.checks {
                println!("{:<4} {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
            }
            let passed = report.checks.iter().filter(|c| c.passed).count();
            println!("selfcheck: {passed}/{} checks passed", report.checks.len());
            if !report.all_passed() {
                return Ok(SELFCHECK_FAILED);
            }
        }
    }
    Ok(0)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Model shape comes from the checkpoint; everything else from the config.
fn run_config(config: &Config, params: &Path, literal_eq17: bool) -> Result<RunConfig> {
    let meta_path = params.join("meta.json");
    let meta: CheckpointMeta =
        serde_json::from_slice(&fs::read(&meta_path).map_err(|e| io_error(&meta_path, e))?)?;
    Ok(RunConfig {
        d: meta.d,
        heads: meta.heads,
        max_frames: meta.max_frames,
        literal_eq17: literal_eq17 || config.run.literal_eq17,
        ..config.run.clone()
    })
}

fn load_params(dir: &Path) -> Result<ModelParams> {
    Ok(ModelParams::load(dir)?.0)
}

fn matrix_tensor(m: &Matrix) -> Result<Tensor> {
    Tensor::new(vec![m.rows(), m.cols()], m.data().iter().map(|&v| v as f32).collect())
}

fn row_tensor(v: &[f64]) -> Result<Tensor> {
    Tensor::new(vec![1, v.len()], v.iter().map(|&x| x as f32).collect())
}

fn pair_ids(manifest: &Path) -> Result<Vec<String>> {
    Ok(read_manifest(manifest)?.0.into_iter().map(|r: PairRecord| r.pair_id).collect())
}

#[derive(Serialize)]
struct ScoreSidecar {
    rows: Vec<String>,
    columns: Vec<String>,
    dsl: bool,
    /// Text-to-video ranking matrix.
    t2v: PathBuf,
    /// Video-to-text ranking matrix; differs from `t2v` only with DSL.
    v2t: PathBuf,
}

fn score(manifest: &Path, params: &Path, out: &Path, dsl: bool, run: RunConfig, threads: usize) -> Result<()> {
    let data = Dataset::load(manifest)?;
    let model = load_params(params)?;
    let s = score_matrix(&data.texts, &data.videos, &model, ScoreConfig::from(&run), threads)?;
    let ids = pair_ids(manifest)?;
    let file_name = |p: &Path| PathBuf::from(p.file_name().unwrap_or_default());
    let v2t_path = if dsl {
        let stem = out.file_stem().unwrap_or_default().to_string_lossy();
        let p = out.with_file_name(format!("{stem}.v2t.shet"));
        let post = dsl_postprocess(&s, run.tau_dsl)?;
        write_tensor(&matrix_tensor(&post.t2v)?, out)?;
        write_tensor(&matrix_tensor(&post.v2t)?, &p)?;
        p
    } else {
        write_tensor(&matrix_tensor(&s)?, out)?;
        out.to_path_buf()
    };
    let sidecar = ScoreSidecar {
        rows: ids.clone(),
        columns: ids,
        dsl,
        t2v: file_name(out),
        v2t: file_name(&v2t_path),
    };
    write_json(&out.with_extension("json"), &sidecar)
}

#[derive(Serialize)]
struct EvalReport {
    pairs: usize,
    dsl: bool,
    t2v: RetrievalMetrics,
    v2t: RetrievalMetrics,
    rsum: f64,
}

fn eval(manifest: &Path, params: &Path, report: &Path, dsl: bool, run: RunConfig, threads: usize) -> Result<()> {
    let data = Dataset::load(manifest)?;
    let model = load_params(params)?;
    let s = score_matrix(&data.texts, &data.videos, &model, ScoreConfig::from(&run), threads)?;
    let (t2v_scores, v2t_scores) = if dsl {
        let post = dsl_postprocess(&s, run.tau_dsl)?;
        (post.t2v, post.v2t)
    } else {
        (s.clone(), s)
    };
    let t2v = compute_metrics(&t2v_scores, Direction::TextToVideo)?;
    let v2t = compute_metrics(&v2t_scores, Direction::VideoToText)?;
    let rsum = t2v.r1 + t2v.r5 + t2v.r10 + v2t.r1 + v2t.r5 + v2t.r10;
    println!(
        "t2v R@1 {} R@5 {} R@10 {} | v2t R@1 {} R@5 {} R@10 {} | Rsum {rsum}",
        t2v.r1, t2v.r5, t2v.r10, v2t.r1, v2t.r5, v2t.r10
    );
    write_json(
        report,
        &EvalReport {
            pairs: data.len(),
            dsl,
            t2v,
            v2t,
            rsum,
        },
    )
}

#[derive(Serialize)]
struct FuseIndex {
    format_version: u32,
    lambda_frame: usize,
    lambda_patch: usize,
    literal_eq17: bool,
    tensors: Vec<&'static str>,
    pairs: Vec<FusedPair>,
}

#[derive(Serialize)]
struct FusedPair {
    pair_id: String,
    dir: PathBuf,
    /// Frames picked by each action node.
    frame_selection: Vec<Vec<usize>>,
    /// Per noun, per picked frame: the patches picked.
    patch_selection: Vec<Vec<Vec<usize>>>,
    adjective_weights: Vec<Vec<f64>>,
}

const FUSE_TENSORS: [&str; 14] = [
    "text_initial_sentence",
    "text_initial_actions",
    "text_initial_entities",
    "text_initial_attributes",
    "text_sentence",
    "text_actions",
    "text_entities_projected",
    "text_entities_enhanced",
    "text_entities",
    "video_global",
    "video_frame_weights",
    "video_temporal",
    "video_actions",
    "video_entities",
];

/// Features of each manifest pair under its own caption's guidance.
fn fuse(manifest: &Path, params: &Path, out: &Path, run: RunConfig) -> Result<()> {
    let data = Dataset::load(manifest)?;
    let model = load_params(params)?;
    let mut pairs = Vec::with_capacity(data.len());
    for (text, video) in data.texts.iter().zip(&data.videos) {
        let f = build_pair_features(text, video, &model, (&run).into())?;
        let nf = f.node_features();
        let vf = f.video_features();
        let rel = PathBuf::from(&text.id);
        let dir = out.join(&rel);
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        let tensors: [(&str, Tensor); 14] = [
            (FUSE_TENSORS[0], row_tensor(&nf.initial.sentence)?),
            (FUSE_TENSORS[1], matrix_tensor(&nf.initial.actions)?),
            (FUSE_TENSORS[2], matrix_tensor(&nf.initial.entities)?),
            (FUSE_TENSORS[3], matrix_tensor(&nf.initial.attributes)?),
            (FUSE_TENSORS[4], row_tensor(nf.sentence)?),
            (FUSE_TENSORS[5], matrix_tensor(nf.actions)?),
            (FUSE_TENSORS[6], matrix_tensor(nf.entities_projected)?),
            (FUSE_TENSORS[7], matrix_tensor(nf.entities_enhanced)?),
            (FUSE_TENSORS[8], matrix_tensor(nf.entities)?),
            (FUSE_TENSORS[9], row_tensor(vf.global)?),
            (FUSE_TENSORS[10], row_tensor(vf.frame_weights)?),
            (FUSE_TENSORS[11], matrix_tensor(vf.temporal)?),
            (FUSE_TENSORS[12], matrix_tensor(vf.actions)?),
            (FUSE_TENSORS[13], matrix_tensor(vf.entities)?),
        ];
        for (name, t) in &tensors {
            write_tensor(t, dir.join(format!("{name}.shet")))?;
        }
        pairs.push(FusedPair {
            pair_id: text.id.clone(),
            dir: rel,
            frame_selection: vf.selected_frames.to_vec(),
            patch_selection: vf.selected_patches.to_vec(),
            adjective_weights: f.enhancement.adjective_weights.clone(),
        });
    }
    let index = FuseIndex {
        format_version: 1,
        lambda_frame: run.lambda_frame,
        lambda_patch: run.lambda_patch,
        literal_eq17: run.literal_eq17,
        tensors: FUSE_TENSORS.to_vec(),
        pairs,
    };
    write_json(&out.join("index.json"), &index)
}
