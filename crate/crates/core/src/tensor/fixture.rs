//! Deterministic synthetic fixtures: random unit-norm features plus template
//! CoNLL-U captions.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::{write_manifest, write_tensor, PairRecord, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub seed: u64,
    pub n_pairs: usize,
    /// Words per caption.
    pub n_t: usize,
    /// Frames per video.
    pub n_v: usize,
    /// Patches per frame.
    pub n_p: usize,
    pub d: usize,
}

impl FixtureSpec {
    fn validate(&self) -> Result<()> {
        let dims = [
            ("n_pairs", self.n_pairs),
            ("n_t", self.n_t),
            ("n_v", self.n_v),
            ("n_p", self.n_p),
            ("d", self.d),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// (form, upos, head offset within the fragment (0 = fragment root), deprel)
type Word = (&'static str, &'static str, usize, &'static str);

// Fragment heads are 1-based positions inside the fragment; 0 marks its root.
const FRAGMENTS: &[&[Word]] = &[
    &[
        ("a", "DET", 2, "det"),
        ("man", "NOUN", 4, "nsubj"),
        ("is", "AUX", 4, "aux"),
        ("singing", "VERB", 0, "root"),
    ],
    &[("red", "ADJ", 2, "amod"), ("cars", "NOUN", 0, "root")],
    &[
        ("someone", "PRON", 2, "nsubj"),
        ("cooks", "VERB", 0, "root"),
        ("food", "NOUN", 2, "obj"),
    ],
    &[
        ("a", "DET", 3, "det"),
        ("small", "ADJ", 3, "amod"),
        ("dog", "NOUN", 4, "nsubj"),
        ("runs", "VERB", 0, "root"),
    ],
    &[("women", "NOUN", 2, "nsubj"), ("dance", "VERB", 0, "root")],
    &[
        ("the", "DET", 3, "det"),
        ("blue", "ADJ", 3, "amod"),
        ("sky", "NOUN", 0, "root"),
    ],
    &[("talking", "VERB", 0, "root")],
    &[("people", "NOUN", 0, "root")],
    &[(".", "PUNCT", 0, "punct")],
];

/// Build a synthetic caption of exactly `n_t` words by chaining template
/// fragments; later fragment roots attach to the first fragment's root.
pub(crate) fn synth_conllu(rng: &mut SplitMix64, n_t: usize) -> String {
    let mut words: Vec<(Word, usize)> = Vec::with_capacity(n_t);
    let mut first_root = 0usize;
    while words.len() < n_t {
        let remaining = n_t - words.len();
        let fitting: Vec<&[Word]> = FRAGMENTS
            .iter()
            .copied()
            .filter(|f| f.len() <= remaining)
            .collect();
        let frag = fitting[rng.below(fitting.len())];
        let offset = words.len();
        for &w in frag {
            let head = if w.2 == 0 {
                if first_root == 0 {
                    0
                } else {
                    first_root
                }
            } else {
                offset + w.2
            };
            words.push((w, head));
        }
        if first_root == 0 {
            first_root = offset + frag.iter().position(|w| w.2 == 0).unwrap() + 1;
        }
    }

    let mut out = String::new();
    let text: Vec<&str> = words.iter().map(|(w, _)| w.0).collect();
    writeln!(out, "# text = {}", text.join(" ")).unwrap();
    for (i, ((form, upos, _, deprel), head)) in words.iter().enumerate() {
        let deprel = if *head == 0 {
            "root"
        } else if *deprel == "root" {
            if *upos == "PUNCT" {
                "punct"
            } else {
                "conj"
            }
        } else {
            deprel
        };
        writeln!(
            out,
            "{}\t{form}\t{form}\t{upos}\t_\t_\t{head}\t{deprel}\t_\t_",
            i + 1
        )
        .unwrap();
    }
    out.push('\n');
    out
}

/// `rows` unit-norm rows of width `d`, stored f32.
fn unit_rows(rng: &mut SplitMix64, rows: usize, d: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(rows * d);
    let mut row = vec![0f64; d];
    for _ in 0..rows {
        loop {
            for v in row.iter_mut() {
                *v = rng.uniform(-1.0, 1.0);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-6 {
                out.extend(row.iter().map(|v| (v / norm) as f32));
                break;
            }
        }
    }
    out
}

/// One generated pair before it is written anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub id: String,
    pub conllu: String,
    pub text: Tensor,
    pub frames: Tensor,
    pub patches: Tensor,
}

/// Generate `n_pairs` synthetic pairs in memory; a pure function of `spec`.
pub fn synth_pairs(spec: &FixtureSpec) -> Result<Vec<SynthPair>> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    (0..spec.n_pairs)
        .map(|p| {
            let conllu = synth_conllu(&mut rng, spec.n_t);
            let text = Tensor::new(
                vec![spec.n_t + 1, spec.d],
                unit_rows(&mut rng, spec.n_t + 1, spec.d),
            )?;
            let frames = Tensor::new(vec![spec.n_v, spec.d], unit_rows(&mut rng, spec.n_v, spec.d))?;
            let patches = Tensor::new(
                vec![spec.n_v, spec.n_p, spec.d],
                unit_rows(&mut rng, spec.n_v * spec.n_p, spec.d),
            )?;
            Ok(SynthPair {
                id: format!("pair_{p:03}"),
                conllu,
                text,
                frames,
                patches,
            })
        })
        .collect()
}

/// Write `n_pairs` synthetic pairs plus `manifest.json` into `dir`.
///
/// Output is a pure function of `spec`: the same arguments produce
/// byte-identical files.
pub fn gen_fixture(spec: &FixtureSpec, dir: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    let pairs = synth_pairs(spec)?;
    let dir = dir.as_ref();
    let pairs_dir = dir.join("pairs");
    fs::create_dir_all(&pairs_dir).map_err(|e| Error::io(&pairs_dir, e))?;

    let mut records = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let rel = |suffix: &str| PathBuf::from("pairs").join(format!("{}.{suffix}", pair.id));
        let record = PairRecord {
            pair_id: pair.id.clone(),
            text_conllu_path: rel("conllu"),
            text_features_path: rel("text.shet"),
            frame_cls_path: rel("frames.shet"),
            patch_features_path: rel("patches.shet"),
        };
        let conllu_path = dir.join(&record.text_conllu_path);
        fs::write(&conllu_path, &pair.conllu).map_err(|e| Error::io(&conllu_path, e))?;
        write_tensor(&pair.text, dir.join(&record.text_features_path))?;
        write_tensor(&pair.frames, dir.join(&record.frame_cls_path))?;
        write_tensor(&pair.patches, dir.join(&record.patch_features_path))?;
        records.push(record);
    }
    write_manifest(&records, dir.join("manifest.json"))?;
    Ok(records)
}
