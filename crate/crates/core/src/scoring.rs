//! Node-by-node similarity, syntax-derived layer weights, the final pair
//! score, score matrices and dual-softmax post-processing.

use serde::Serialize;

use crate::config::{EmptyLayerPolicy, RunConfig};
use crate::dataset::{TextItem, VideoItem};
use crate::error::{Error, Result};
use crate::fusion::{build_pair_features, FeatureGrads, FusionConfig, NodeFeatures, PairFeatures, VideoHierFeatures};
use crate::nn::layers::{residual_norm, residual_norm_backward, ResidualNormCache};
use crate::nn::linalg::{axpy, dot, softmax, softmax_backward, Matrix};
use crate::nn::ModelParams;
use crate::parallel::ordered_map;
use crate::syntax::SyntaxHierarchy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreConfig {
    pub fusion: FusionConfig,
    pub empty_layer_policy: EmptyLayerPolicy,
}

impl From<&RunConfig> for ScoreConfig {
    fn from(c: &RunConfig) -> Self {
        Self {
            fusion: c.into(),
            empty_layer_policy: c.empty_layer_policy,
        }
    }
}

/// Per-node scores for layers 1..=3.
pub fn node_scores(nf: &NodeFeatures<'_>, vf: &VideoHierFeatures<'_>) -> [Vec<f64>; 3] {
    let rows = |t: &Matrix, v: &Matrix| -> Vec<f64> {
        t.row_iter().zip(v.row_iter()).map(|(a, b)| dot(a, b)).collect()
    };
    [
        vec![dot(nf.sentence, vf.global)],
        rows(nf.actions, vf.actions),
        rows(nf.entities, vf.entities),
    ]
}

/// Action weights from sentence-to-action similarity.
#[derive(Debug, Clone)]
pub struct Layer2Weights {
    /// `Norm(e + MLP5(e))` per action node.
    pub keys: Matrix,
    pub sim: Vec<f64>,
    pub weights: Vec<f64>,
    caches: Vec<ResidualNormCache>,
}

pub fn layer2_weights(sentence: &[f64], actions: &Matrix, params: &ModelParams) -> Result<Layer2Weights> {
    let (n, d) = actions.shape();
    if n == 0 {
        return Err(Error::Schema("action layer is empty".into()));
    }
    let mut keys = Matrix::zeros(n, d);
    let mut caches = Vec::with_capacity(n);
    for i in 0..n {
        let (m, c) = residual_norm(&params.mlp5, &params.norm5, actions.row(i));
        keys.row_mut(i).copy_from_slice(&m);
        caches.push(c);
    }
    let sim: Vec<f64> = keys.row_iter().map(|m| dot(sentence, m)).collect();
    let weights = softmax(&sim);
    Ok(Layer2Weights {
        keys,
        sim,
        weights,
        caches,
    })
}

/// Entity weights combining each noun's parent-action similarity with its
/// own affinity to that action.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer3Weights {
    pub sim: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn layer3_weights(action_keys: &Matrix, entities: &Matrix, h: &SyntaxHierarchy, sim2: &[f64]) -> Layer3Weights {
    let sim: Vec<f64> = (0..entities.rows())
        .map(|i| dot(action_keys.row(h.noun_parent(i)), entities.row(i)))
        .collect();
    if sim.is_empty() {
        return Layer3Weights {
            sim,
            weights: Vec::new(),
        };
    }
    let logits: Vec<f64> = sim
        .iter()
        .enumerate()
        .map(|(i, s)| sim2[h.noun_parent(i)] + s)
        .collect();
    Layer3Weights {
        weights: softmax(&logits),
        sim,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreBreakdown {
    pub node_scores: [Vec<f64>; 3],
    pub sim2: Vec<f64>,
    pub sim3: Vec<f64>,
    pub weights: [Vec<f64>; 3],
    pub layer_scores: [f64; 3],
    pub final_score: f64,
}

/// Weighted layer sums averaged into the pair score.
pub fn final_score(
    node_scores: [Vec<f64>; 3],
    l2: &Layer2Weights,
    l3: &Layer3Weights,
    policy: EmptyLayerPolicy,
) -> ScoreBreakdown {
    let weights = [vec![1.0], l2.weights.clone(), l3.weights.clone()];
    let layer = |k: usize| -> f64 {
        weights[k]
            .iter()
            .zip(&node_scores[k])
            .map(|(w, s)| w * s)
            .sum()
    };
    let layer_scores = [layer(0), layer(1), layer(2)];
    let final_score = match policy {
        EmptyLayerPolicy::Zero => (layer_scores[0] + layer_scores[1] + layer_scores[2]) / 3.0,
        EmptyLayerPolicy::Renormalize => {
            if node_scores[2].is_empty() {
                (layer_scores[0] + layer_scores[1]) / 2.0
            } else {
                (layer_scores[0] + layer_scores[1] + layer_scores[2]) / 3.0
            }
        }
    };
    ScoreBreakdown {
        node_scores,
        sim2: l2.sim.clone(),
        sim3: l3.sim.clone(),
        weights,
        layer_scores,
        final_score,
    }
}

/// A scored pair with everything needed to backpropagate its score.
#[derive(Debug, Clone)]
pub struct PairScore {
    pub features: PairFeatures,
    pub layer2: Layer2Weights,
    pub layer3: Layer3Weights,
    pub breakdown: ScoreBreakdown,
    policy: EmptyLayerPolicy,
}

pub fn score_pair(text: &TextItem, video: &VideoItem, params: &ModelParams, cfg: ScoreConfig) -> Result<PairScore> {
    let features = build_pair_features(text, video, params, cfg.fusion)?;
    let nf = features.node_features();
    let vf = features.video_features();
    let scores = node_scores(&nf, &vf);
    let layer2 = layer2_weights(nf.sentence, nf.actions, params)?;
    let layer3 = layer3_weights(&layer2.keys, nf.entities, &text.hierarchy, &layer2.sim);
    let breakdown = final_score(scores, &layer2, &layer3, cfg.empty_layer_policy);
    if !breakdown.final_score.is_finite() {
        return Err(Error::NonFinite(format!(
            "score for text {} / video {}",
            text.id, video.id
        )));
    }
    Ok(PairScore {
        features,
        layer2,
        layer3,
        breakdown,
        policy: cfg.empty_layer_policy,
    })
}

impl PairScore {
    pub fn score(&self) -> f64 {
        self.breakdown.final_score
    }

    /// Accumulate `dscore * d(score)/d(params)` into `grads`.
    pub fn backward(
        &self,
        text: &TextItem,
        video: &VideoItem,
        params: &ModelParams,
        dscore: f64,
        grads: &mut ModelParams,
    ) {
        let b = &self.breakdown;
        let f = &self.features;
        let h = &text.hierarchy;
        let n_actions = b.node_scores[1].len();
        let n_entities = b.node_scores[2].len();
        let divisor = match self.policy {
            EmptyLayerPolicy::Renormalize if n_entities == 0 => 2.0,
            _ => 3.0,
        };
        let dlayer = dscore / divisor;

        let sentence = &f.global.text;
        let action_text = &f.actions.text;
        let entity_text = &f.entities.text;
        let d = sentence.len();
        let keys = &self.layer2.keys;

        // layer 1
        let mut g_sentence = f.global.video.iter().map(|v| dlayer * v).collect::<Vec<_>>();
        let g_sentence_video: Vec<f64> = sentence.iter().map(|v| dlayer * v).collect();

        // layer 2 node scores and weights
        let mut g_action_text = Matrix::zeros(n_actions, d);
        let mut g_action_video = Matrix::zeros(n_actions, d);
        let w2 = &b.weights[1];
        let dw2: Vec<f64> = b.node_scores[1].iter().map(|s| dlayer * s).collect();
        for i in 0..n_actions {
            let ds = dlayer * w2[i];
            axpy(ds, f.actions.video.row(i), g_action_text.row_mut(i));
            axpy(ds, action_text.row(i), g_action_video.row_mut(i));
        }
        let mut dsim2 = softmax_backward(w2, &dw2);

        // layer 3 node scores and weights
        let mut g_entity_text = Matrix::zeros(n_entities, d);
        let mut g_keys = Matrix::zeros(n_actions, d);
        if n_entities > 0 {
            let w3 = &b.weights[2];
            let dw3: Vec<f64> = b.node_scores[2].iter().map(|s| dlayer * s).collect();
            let dlogits = softmax_backward(w3, &dw3);
            for i in 0..n_entities {
                let p = h.noun_parent(i);
                axpy(dlayer * w3[i], f.entities.video.row(i), g_entity_text.row_mut(i));
                dsim2[p] += dlogits[i];
                // sim3_i = keys[p] . entity_i
                axpy(dlogits[i], entity_text.row(i), g_keys.row_mut(p));
                axpy(dlogits[i], keys.row(p), g_entity_text.row_mut(i));
            }
        }

        // sim2_i = sentence . keys_i
        for i in 0..n_actions {
            axpy(dsim2[i], keys.row(i), &mut g_sentence);
            axpy(dsim2[i], sentence, g_keys.row_mut(i));
        }
        for i in 0..n_actions {
            let dx = residual_norm_backward(
                &params.mlp5,
                &params.norm5,
                &self.layer2.caches[i],
                g_keys.row(i),
                &mut grads.mlp5,
                &mut grads.norm5,
            );
            axpy(1.0, &dx, g_action_text.row_mut(i));
        }

        let upstream = FeatureGrads {
            sentence_text: g_sentence,
            sentence_video: g_sentence_video,
            action_text: g_action_text,
            action_video: g_action_video,
            entity_text: g_entity_text,
        };
        f.backward(params, video, &upstream, grads);
    }
}

/// Full text x video score matrix; every cell is an independent text-guided
/// pair evaluation. Rows are texts, columns videos.
pub fn score_matrix(
    texts: &[TextItem],
    videos: &[VideoItem],
    params: &ModelParams,
    cfg: ScoreConfig,
    threads: usize,
) -> Result<Matrix> {
    let (bt, bv) = (texts.len(), videos.len());
    let cells = ordered_map(threads, bt * bv, |k| {
        score_pair(&texts[k / bv], &videos[k % bv], params, cfg).map(|p| p.score())
    })?;
    Ok(Matrix::from_vec(bt, bv, cells))
}

/// Dual-softmax re-weighted matrices, one per retrieval direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DslScores {
    /// `S_ij * softmax over texts i of (tau * S_.j)`: rank along rows.
    pub t2v: Matrix,
    /// `S_ij * softmax over videos j of (tau * S_i.)`: rank along columns.
    pub v2t: Matrix,
}

pub fn dsl_postprocess(s: &Matrix, tau_dsl: f64) -> Result<DslScores> {
    let (rows, cols) = s.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::DimensionMismatch("dual softmax over an empty matrix".into()));
    }
    let mut t2v = s.clone();
    for j in 0..cols {
        let column: Vec<f64> = (0..rows).map(|i| tau_dsl * s[(i, j)]).collect();
        for (i, p) in softmax(&column).into_iter().enumerate() {
            t2v[(i, j)] *= p;
        }
    }
    let mut v2t = s.clone();
    for i in 0..rows {
        let row: Vec<f64> = s.row(i).iter().map(|v| tau_dsl * v).collect();
        for (j, p) in softmax(&row).into_iter().enumerate() {
            v2t[(i, j)] *= p;
        }
    }
    Ok(DslScores { t2v, v2t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{build_hierarchy, ParsedToken};

    fn tok(index: usize, upos: &str, head: usize) -> ParsedToken {
        ParsedToken {
            index,
            form: format!("w{index}"),
            upos: upos.into(),
            head,
            deprel: "dep".into(),
        }
    }

    fn l2(weights: Vec<f64>) -> Layer2Weights {
        let n = weights.len();
        Layer2Weights {
            keys: Matrix::zeros(n, 1),
            sim: vec![0.0; n],
            weights,
            caches: Vec::new(),
        }
    }

    #[test]
    fn matrix_cells_equal_standalone_pairs() {
        let data = crate::dataset::Dataset::synthetic(&crate::tensor::FixtureSpec {
            seed: 4,
            n_pairs: 3,
            n_t: 6,
            n_v: 3,
            n_p: 4,
            d: 8,
        })
        .unwrap();
        let params = ModelParams::init(8, 8, 4, 4).unwrap();
        let run = RunConfig {
            d: 8,
            max_frames: 4,
            ..RunConfig::default()
        };
        let cfg = ScoreConfig::from(&run);
        for threads in [1, 3] {
            let s = score_matrix(&data.texts, &data.videos, &params, cfg, threads).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let single = score_pair(&data.texts[i], &data.videos[j], &params, cfg).unwrap();
                    assert_eq!(s[(i, j)].to_bits(), single.score().to_bits());
                }
            }
            // text-guided fusion is not symmetric
            assert_ne!(s[(0, 1)], s[(1, 0)]);
        }
        let one = score_matrix(&data.texts[..1], &data.videos[..1], &params, cfg, 1).unwrap();
        assert_eq!(one.shape(), (1, 1));
    }

    #[test]
    fn node_score_unit_and_orthogonal() {
        assert_eq!(dot(&[0.6, 0.8], &[0.6, 0.8]), 1.0);
        assert_eq!(dot(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn single_action_weight_is_one() {
        let params = ModelParams::init(4, 2, 4, 1).unwrap();
        let w = layer2_weights(&[0.1, 0.2, 0.3, 0.4], &Matrix::from_rows(&[vec![1.0, -1.0, 0.5, 0.0]]), &params).unwrap();
        assert_eq!(w.weights, vec![1.0]);
    }

    #[test]
    fn equal_action_similarity_splits_evenly() {
        let params = ModelParams::init(4, 2, 4, 1).unwrap();
        let row = vec![1.0, -1.0, 0.5, 0.0];
        let w = layer2_weights(&[0.1, 0.2, 0.3, 0.4], &Matrix::from_rows(&[row.clone(), row]), &params).unwrap();
        assert_eq!(w.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn layer3_single_and_symmetric() {
        // w1 NOUN, w2 NOUN both under w3 VERB
        let h = build_hierarchy(&[tok(1, "NOUN", 3), tok(2, "NOUN", 3), tok(3, "VERB", 0)]);
        let keys = Matrix::from_rows(&[vec![1.0, 0.0]]);
        let ents = Matrix::from_rows(&[vec![0.3, 5.0], vec![0.3, -2.0]]);
        let w = layer3_weights(&keys, &ents, &h, &[0.7]);
        assert_eq!(w.weights, vec![0.5, 0.5]);
        let h1 = build_hierarchy(&[tok(1, "NOUN", 2), tok(2, "VERB", 0)]);
        let w = layer3_weights(&keys, &Matrix::from_rows(&[vec![0.3, 5.0]]), &h1, &[0.7]);
        assert_eq!(w.weights, vec![1.0]);
    }

    #[test]
    fn constant_node_scores_give_that_constant() {
        let c = 0.37;
        let b = final_score(
            [vec![c], vec![c, c, c], vec![c, c]],
            &l2(softmax(&[0.1, 0.5, -0.2])),
            &Layer3Weights {
                sim: vec![0.0; 2],
                weights: softmax(&[1.0, 2.0]),
            },
            EmptyLayerPolicy::Zero,
        );
        assert!((b.final_score - c).abs() < 1e-15);
    }

    #[test]
    fn empty_noun_layer_under_zero_policy() {
        let c = 0.9;
        let l3 = Layer3Weights {
            sim: vec![],
            weights: vec![],
        };
        let b = final_score([vec![c], vec![c], vec![]], &l2(vec![1.0]), &l3, EmptyLayerPolicy::Zero);
        assert_eq!(b.layer_scores[2], 0.0);
        assert_eq!(b.final_score, (c + c + 0.0) / 3.0);
        let b = final_score([vec![c], vec![c], vec![]], &l2(vec![1.0]), &l3, EmptyLayerPolicy::Renormalize);
        assert_eq!(b.final_score, c);
    }

    #[test]
    fn dsl_singleton_and_uniform() {
        let one = Matrix::from_vec(1, 1, vec![0.42]);
        let out = dsl_postprocess(&one, 100.0).unwrap();
        assert_eq!(out.t2v[(0, 0)], 0.42);
        assert_eq!(out.v2t[(0, 0)], 0.42);

        let uni = Matrix::from_vec(4, 4, vec![0.5; 16]);
        let out = dsl_postprocess(&uni, 100.0).unwrap();
        for v in out.t2v.data().iter().chain(out.v2t.data()) {
            assert!((v - 0.5 / 4.0).abs() < 1e-15);
        }
        assert!(dsl_postprocess(&Matrix::zeros(0, 3), 1.0).is_err());
    }

    #[test]
    fn layer2_weights_monotone_and_shift_invariant() {
        let sim = [0.2, -0.4, 1.1];
        let base = softmax(&sim);
        let bumped = softmax(&[0.2, -0.4 + 0.3, 1.1]);
        assert!(bumped[1] > base[1]);
        assert!(bumped[0] < base[0] && bumped[2] < base[2]);
        let shifted = softmax(&[10.2, 9.6, 11.1]);
        for (a, b) in base.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
