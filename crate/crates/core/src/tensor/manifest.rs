use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One text-video pair. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub pair_id: String,
    pub text_conllu_path: PathBuf,
    /// (N_t + 1) x d, row 0 is the sentence CLS feature.
    pub text_features_path: PathBuf,
    /// N_v x d frame CLS features.
    pub frame_cls_path: PathBuf,
    /// N_v x N_p x d patch features.
    pub patch_features_path: PathBuf,
}

/// Read a manifest and return its records together with the directory the
/// relative paths resolve against.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<(Vec<PairRecord>, PathBuf)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<PairRecord> = serde_json::from_slice(&bytes)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((records, base))
}

pub fn write_manifest(records: &[PairRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(records)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
