use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{LayerNorm, Mlp};
use super::params::{join, ParamView, ParamViewMut, Parameters};
use super::transformer::TemporalEncoder;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{read_tensor, write_tensor, Tensor};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";

/// Every learnable tensor of the fusion and scoring stages.
///
/// `mlpN` is paired with `normN` in `Norm(x + MLP_N(x))`:
/// 1 sentence node, 2 action nodes, 3 entity nodes, 4 adjective enhancement,
/// 5 action weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub mlp1: Mlp,
    pub mlp2: Mlp,
    pub mlp3: Mlp,
    pub mlp4: Mlp,
    pub mlp5: Mlp,
    /// 2d -> d -> d
    pub fusion: Mlp,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
    pub norm3: LayerNorm,
    pub norm4: LayerNorm,
    pub norm5: LayerNorm,
    pub temporal: TemporalEncoder,
}

/// Shape description written next to the tensors of a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub d: usize,
    pub heads: usize,
    pub max_frames: usize,
    pub seed: u64,
    pub tensors: Vec<String>,
}

impl ModelParams {
    /// Seeded initialization: linear maps uniform in +-1/sqrt(fan_in),
    /// LayerNorm gain 1 / bias 0, positional table N(0, 0.02^2).
    pub fn init(d: usize, heads: usize, max_frames: usize, seed: u64) -> Result<Self> {
        check_dims(d, heads, max_frames)?;
        let mut rng = SplitMix64::new(seed);
        let mut mlp = || Mlp::init(d, d, d, &mut rng);
        let (mlp1, mlp2, mlp3, mlp4, mlp5) = (mlp(), mlp(), mlp(), mlp(), mlp());
        let fusion = Mlp::init(2 * d, d, d, &mut rng);
        let temporal = TemporalEncoder::init(d, heads, max_frames, &mut rng);
        Ok(Self {
            mlp1,
            mlp2,
            mlp3,
            mlp4,
            mlp5,
            fusion,
            norm1: LayerNorm::new(d),
            norm2: LayerNorm::new(d),
            norm3: LayerNorm::new(d),
            norm4: LayerNorm::new(d),
            norm5: LayerNorm::new(d),
            temporal,
        })
    }

    /// All-zero tensors with the same layout (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.set_zero();
        z
    }

    pub fn d(&self) -> usize {
        self.temporal.d()
    }

    pub fn heads(&self) -> usize {
        self.temporal.heads
    }

    pub fn max_frames(&self) -> usize {
        self.temporal.max_frames()
    }

    /// Write one `<name>.shet` per tensor plus `meta.json`. Values are
    /// narrowed to f32.
    pub fn save(&self, dir: impl AsRef<Path>, seed: u64) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let views = self.views();
        for v in &views {
            let data: Vec<f32> = v.data.iter().map(|&x| x as f32).collect();
            write_tensor(&Tensor::new(v.shape.clone(), data)?, dir.join(format!("{}.shet", v.name)))?;
        }
        let meta = CheckpointMeta {
            format_version: CHECKPOINT_FORMAT_VERSION,
            d: self.d(),
            heads: self.heads(),
            max_frames: self.max_frames(),
            seed,
            tensors: views.iter().map(|v| v.name.clone()).collect(),
        };
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        let path = dir.join(META_FILE);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, CheckpointMeta)> {
        let dir = dir.as_ref();
        let path = dir.join(META_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let meta: CheckpointMeta = serde_json::from_slice(&bytes)?;
        if meta.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported checkpoint format_version {}",
                meta.format_version
            )));
        }
        check_dims(meta.d, meta.heads, meta.max_frames)?;
        let mut params = Self::init(meta.d, meta.heads, meta.max_frames, 0)?;
        for v in params.views_mut() {
            let t = read_tensor(dir.join(format!("{}.shet", v.name)))?;
            if t.shape() != v.shape.as_slice() {
                return Err(Error::DimensionMismatch(format!(
                    "checkpoint tensor {} has shape {:?}, expected {:?}",
                    v.name,
                    t.shape(),
                    v.shape
                )));
            }
            for (dst, &src) in v.data.iter_mut().zip(t.data()) {
                *dst = f64::from(src);
            }
        }
        Ok((params, meta))
    }
}

fn check_dims(d: usize, heads: usize, max_frames: usize) -> Result<()> {
    if d == 0 || heads == 0 || max_frames == 0 {
        return Err(Error::Config("d, heads and max_frames must be positive".into()));
    }
    if !d.is_multiple_of(heads) {
        return Err(Error::Config(format!("d = {d} is not divisible by heads = {heads}")));
    }
    Ok(())
}

impl Parameters for ModelParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        for (name, m) in [
            ("mlp1", &self.mlp1),
            ("mlp2", &self.mlp2),
            ("mlp3", &self.mlp3),
            ("mlp4", &self.mlp4),
            ("mlp5", &self.mlp5),
            ("fusion", &self.fusion),
        ] {
            m.visit(&join(prefix, name), out);
        }
        for (name, n) in [
            ("norm1", &self.norm1),
            ("norm2", &self.norm2),
            ("norm3", &self.norm3),
            ("norm4", &self.norm4),
            ("norm5", &self.norm5),
        ] {
            n.visit(&join(prefix, name), out);
        }
        self.temporal.visit(&join(prefix, "temporal"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>) {
        for (name, m) in [
            ("mlp1", &mut self.mlp1),
            ("mlp2", &mut self.mlp2),
            ("mlp3", &mut self.mlp3),
            ("mlp4", &mut self.mlp4),
            ("mlp5", &mut self.mlp5),
            ("fusion", &mut self.fusion),
        ] {
            m.visit_mut(&join(prefix, name), out);
        }
        for (name, n) in [
            ("norm1", &mut self.norm1),
            ("norm2", &mut self.norm2),
            ("norm3", &mut self.norm3),
            ("norm4", &mut self.norm4),
            ("norm5", &mut self.norm5),
        ] {
            n.visit_mut(&join(prefix, name), out);
        }
        self.temporal.visit_mut(&join(prefix, "temporal"), out);
    }
}
