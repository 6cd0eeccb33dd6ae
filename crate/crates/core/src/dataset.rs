//! Loading manifests into in-memory text and video items.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::syntax::{build_hierarchy, parse_conllu, SyntaxHierarchy};
use crate::tensor::{read_manifest, read_tensor, synth_pairs, FixtureSpec, PairRecord, Tensor};

#[derive(Debug, Clone)]
pub struct TextItem {
    pub id: String,
    pub hierarchy: SyntaxHierarchy,
    /// (N_t + 1) x d, row 0 is CLS.
    pub features: Matrix,
}

#[derive(Debug, Clone)]
pub struct VideoItem {
    pub id: String,
    /// N_v x d
    pub frames: Matrix,
    /// N_v entries of N_p x d
    pub patches: Vec<Matrix>,
}

impl VideoItem {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }
}

/// Texts and videos in manifest order; text `i` matches video `i`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub texts: Vec<TextItem>,
    pub videos: Vec<VideoItem>,
}

fn widen(t: &Tensor, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, t.data().iter().map(|&v| f64::from(v)).collect())
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn d(&self) -> Option<usize> {
        self.texts.first().map(|t| t.features.cols())
    }

    pub fn load(manifest: impl AsRef<Path>) -> Result<Self> {
        let (records, base) = read_manifest(manifest)?;
        Self::from_records(&records, &base)
    }

    pub fn from_records(records: &[PairRecord], base: &Path) -> Result<Self> {
        let mut texts = Vec::with_capacity(records.len());
        let mut videos = Vec::with_capacity(records.len());
        let mut width: Option<usize> = None;
        for r in records {
            let (text, video) = load_pair(r, base)?;
            let d = text.features.cols();
            match width {
                None => width = Some(d),
                Some(w) if w != d => {
                    return Err(Error::DimensionMismatch(format!(
                        "pair {} has d = {d}, earlier pairs have d = {w}",
                        r.pair_id
                    )))
                }
                _ => {}
            }
            texts.push(text);
            videos.push(video);
        }
        Ok(Self { texts, videos })
    }

    /// Synthetic pairs built in memory, identical to loading the files
    /// `gen_fixture` would write for the same spec.
    pub fn synthetic(spec: &FixtureSpec) -> Result<Self> {
        let mut texts = Vec::with_capacity(spec.n_pairs);
        let mut videos = Vec::with_capacity(spec.n_pairs);
        for p in synth_pairs(spec)? {
            let (t, v) = pair_from_parts(&p.id, p.conllu.as_bytes(), &p.text, &p.frames, &p.patches)?;
            texts.push(t);
            videos.push(v);
        }
        Ok(Self { texts, videos })
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            texts: indices.iter().map(|&i| self.texts[i].clone()).collect(),
            videos: indices.iter().map(|&i| self.videos[i].clone()).collect(),
        }
    }
}

fn load_pair(r: &PairRecord, base: &Path) -> Result<(TextItem, VideoItem)> {
    let id = &r.pair_id;
    let conllu_path = base.join(&r.text_conllu_path);
    let conllu = fs::read(&conllu_path).map_err(|e| Error::io(&conllu_path, e))?;
    let text = read_tensor(base.join(&r.text_features_path))?;
    let frames = read_tensor(base.join(&r.frame_cls_path))?;
    let patches = read_tensor(base.join(&r.patch_features_path))?;
    pair_from_parts(id, &conllu, &text, &frames, &patches)
}

/// Assemble one pair from a CoNLL-U caption and its three feature tensors,
/// checking that their shapes agree.
pub fn pair_from_parts(
    id: &str,
    conllu: &[u8],
    text: &Tensor,
    frames: &Tensor,
    patches: &Tensor,
) -> Result<(TextItem, VideoItem)> {
    let hierarchy = build_hierarchy(&parse_conllu(conllu)?);

    let [rows_t, d] = *text.shape() else {
        return Err(Error::DimensionMismatch(format!("pair {id}: text features must be 2-D")));
    };
    let [n_v, d_v] = *frames.shape() else {
        return Err(Error::DimensionMismatch(format!("pair {id}: frame features must be 2-D")));
    };
    let [n_v_p, n_p, d_p] = *patches.shape() else {
        return Err(Error::DimensionMismatch(format!("pair {id}: patch features must be 3-D")));
    };
    if d != d_v || d != d_p {
        return Err(Error::DimensionMismatch(format!(
            "pair {id}: text d = {d}, frame d = {d_v}, patch d = {d_p}"
        )));
    }
    if n_v != n_v_p {
        return Err(Error::DimensionMismatch(format!(
            "pair {id}: {n_v} frames but patches for {n_v_p}"
        )));
    }
    if rows_t < 2 || n_v == 0 || n_p == 0 || d == 0 {
        return Err(Error::DimensionMismatch(format!(
            "pair {id}: need N_t >= 1, N_v >= 1, N_p >= 1, d >= 1"
        )));
    }
    if hierarchy.max_position() > rows_t - 1 {
        return Err(Error::DimensionMismatch(format!(
            "pair {id}: caption references token {} but only {} token features exist",
            hierarchy.max_position(),
            rows_t - 1
        )));
    }

    let patch_data = patches.data();
    let per_frame = n_p * d;
    let patch_mats = (0..n_v)
        .map(|j| {
            Matrix::from_vec(
                n_p,
                d,
                patch_data[j * per_frame..(j + 1) * per_frame]
                    .iter()
                    .map(|&v| f64::from(v))
                    .collect(),
            )
        })
        .collect();

    Ok((
        TextItem {
            id: id.to_string(),
            hierarchy,
            features: widen(text, rows_t, d),
        },
        VideoItem {
            id: id.to_string(),
            frames: widen(frames, n_v, d),
            patches: patch_mats,
        },
    ))
}
