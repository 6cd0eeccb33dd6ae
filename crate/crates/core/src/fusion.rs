//! Text node features and the text-guided three-level video hierarchy.
//!
//! Per text-video pair: sentence, action and entity node features are
//! projected with `Norm(x + MLP(x))`; the sentence node attends over frame
//! CLS features, each action node averages its top-`lambda_frame`
//! temporally encoded frames, and each entity node averages its
//! top-`lambda_patch` patches inside the frames its parent action picked.

use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{TextItem, VideoItem};
use crate::error::{Error, Result};
use crate::nn::attention::{dot_softmax_attend, dot_softmax_attend_backward_query};
use crate::nn::layers::{residual_norm, residual_norm_backward, MlpCache, ResidualNormCache};
use crate::nn::linalg::{axpy, dot, mean_rows, Matrix};
use crate::nn::topk::{selection_margin, top_k_indices};
use crate::nn::transformer::TemporalCache;
use crate::nn::ModelParams;
use crate::syntax::{NodeKind, SyntaxHierarchy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionConfig {
    pub lambda_frame: usize,
    pub lambda_patch: usize,
    /// Use the printed `1 / lambda_patch` factor when averaging an entity's
    /// per-frame features instead of the selected-frame count.
    pub literal_eq17: bool,
}

impl From<&RunConfig> for FusionConfig {
    fn from(c: &RunConfig) -> Self {
        Self {
            lambda_frame: c.lambda_frame,
            lambda_patch: c.lambda_patch,
            literal_eq17: c.literal_eq17,
        }
    }
}

/// Token features picked for each hierarchy node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialFeatures {
    /// CLS row.
    pub sentence: Vec<f64>,
    /// One row per layer-2 node; the [EXIST] node gets the mean word feature.
    pub actions: Matrix,
    pub entities: Matrix,
    pub attributes: Matrix,
}

pub fn init_node_features(h: &SyntaxHierarchy, text: &Matrix) -> Result<InitialFeatures> {
    let (rows, d) = text.shape();
    if rows < 2 {
        return Err(Error::DimensionMismatch(
            "text features need a CLS row and at least one token row".into(),
        ));
    }
    let n_t = rows - 1;
    let pick = |layer: usize| -> Result<Matrix> {
        let nodes = h.layer(layer);
        let mut m = Matrix::zeros(nodes.len(), d);
        for (i, node) in nodes.iter().enumerate() {
            match (node.kind, node.position) {
                (NodeKind::Exist, _) => {
                    let mean = mean_rows((1..=n_t).map(|r| text.row(r)), d);
                    m.row_mut(i).copy_from_slice(&mean);
                }
                (_, Some(p)) if (1..=n_t).contains(&p) => m.row_mut(i).copy_from_slice(text.row(p)),
                (_, p) => {
                    return Err(Error::DimensionMismatch(format!(
                        "token position {p:?} out of range 1..={n_t}"
                    )))
                }
            }
        }
        Ok(m)
    };
    Ok(InitialFeatures {
        sentence: text.row(0).to_vec(),
        actions: pick(2)?,
        entities: pick(3)?,
        attributes: pick(4)?,
    })
}

#[derive(Debug, Clone)]
struct AdjectiveAttention {
    keys: Matrix,
    weights: Vec<f64>,
    fusion_cache: MlpCache,
}

/// Entity nodes after adjective enhancement.
#[derive(Debug, Clone)]
pub struct EnhancedEntities {
    /// `Norm(f + MLP4(f))` per noun.
    pub projected: Matrix,
    /// Softmax weights over each noun's adjectives (empty when it has none).
    pub adjective_weights: Vec<Vec<f64>>,
    /// Enhanced noun features fed to the entity stage.
    pub enhanced: Matrix,
    proj_caches: Vec<ResidualNormCache>,
    attention: Vec<Option<AdjectiveAttention>>,
}

pub fn enhance_nouns(
    init: &InitialFeatures,
    h: &SyntaxHierarchy,
    params: &ModelParams,
) -> Result<EnhancedEntities> {
    let (n, d) = init.entities.shape();
    let mut projected = Matrix::zeros(n, d);
    let mut enhanced = Matrix::zeros(n, d);
    let mut proj_caches = Vec::with_capacity(n);
    let mut attention = Vec::with_capacity(n);
    let mut adjective_weights = Vec::with_capacity(n);
    for i in 0..n {
        let (e, cache) = residual_norm(&params.mlp4, &params.norm4, init.entities.row(i));
        let children = h.noun_adjectives(i);
        if children.is_empty() {
            enhanced.row_mut(i).copy_from_slice(&e);
            attention.push(None);
            adjective_weights.push(Vec::new());
        } else {
            let keys = Matrix::from_rows(
                &children
                    .iter()
                    .map(|&c| init.attributes.row(c).to_vec())
                    .collect::<Vec<_>>(),
            );
            let att = dot_softmax_attend(&e, &keys, &keys)?;
            let joined: Vec<f64> = e.iter().chain(&att.pooled).copied().collect();
            let (fused, fusion_cache) = params.fusion.forward(&joined);
            let out: Vec<f64> = e.iter().zip(&fused).map(|(a, b)| a + b).collect();
            enhanced.row_mut(i).copy_from_slice(&out);
            adjective_weights.push(att.weights.clone());
            attention.push(Some(AdjectiveAttention {
                keys,
                weights: att.weights,
                fusion_cache,
            }));
        }
        projected.row_mut(i).copy_from_slice(&e);
        proj_caches.push(cache);
    }
    Ok(EnhancedEntities {
        projected,
        adjective_weights,
        enhanced,
        proj_caches,
        attention,
    })
}

impl EnhancedEntities {
    fn backward(&self, params: &ModelParams, d_enhanced: &Matrix, grads: &mut ModelParams) {
        let d = self.projected.cols();
        for (i, cache) in self.proj_caches.iter().enumerate() {
            let dout = d_enhanced.row(i);
            let mut de = dout.to_vec();
            if let Some(att) = &self.attention[i] {
                let djoined = params.fusion.backward(&att.fusion_cache, dout, &mut grads.fusion);
                axpy(1.0, &djoined[..d], &mut de);
                let dq = dot_softmax_attend_backward_query(&att.keys, &att.keys, &att.weights, &djoined[d..]);
                axpy(1.0, &dq, &mut de);
            }
            // input is a constant token feature; only parameter grads matter
            residual_norm_backward(
                &params.mlp4,
                &params.norm4,
                cache,
                &de,
                &mut grads.mlp4,
                &mut grads.norm4,
            );
        }
    }
}

/// Sentence-level fusion: attention of the projected sentence node over frames.
#[derive(Debug, Clone)]
pub struct GlobalFusion {
    pub text: Vec<f64>,
    pub frame_weights: Vec<f64>,
    pub video: Vec<f64>,
    proj_cache: ResidualNormCache,
}

pub fn fuse_global(sentence: &[f64], frames: &Matrix, params: &ModelParams) -> Result<GlobalFusion> {
    let (text, proj_cache) = residual_norm(&params.mlp1, &params.norm1, sentence);
    let att = dot_softmax_attend(&text, frames, frames)?;
    Ok(GlobalFusion {
        text,
        frame_weights: att.weights,
        video: att.pooled,
        proj_cache,
    })
}

impl GlobalFusion {
    fn backward(
        &self,
        params: &ModelParams,
        frames: &Matrix,
        d_text: &[f64],
        d_video: &[f64],
        grads: &mut ModelParams,
    ) {
        let mut dq = dot_softmax_attend_backward_query(frames, frames, &self.frame_weights, d_video);
        axpy(1.0, d_text, &mut dq);
        residual_norm_backward(
            &params.mlp1,
            &params.norm1,
            &self.proj_cache,
            &dq,
            &mut grads.mlp1,
            &mut grads.norm1,
        );
    }
}

/// Action-level fusion over temporally encoded frames.
#[derive(Debug, Clone)]
pub struct ActionFusion {
    pub text: Matrix,
    /// Temporal encoder output, N_v x d.
    pub temporal: Matrix,
    /// Selected frame indices per action node, ascending.
    pub selected_frames: Vec<Vec<usize>>,
    pub video: Matrix,
    /// Score gap at each selection boundary (`None` when every frame is taken).
    pub margins: Vec<Option<f64>>,
    proj_caches: Vec<ResidualNormCache>,
    temporal_cache: TemporalCache,
}

pub fn fuse_actions(
    actions: &Matrix,
    frames: &Matrix,
    params: &ModelParams,
    lambda_frame: usize,
) -> Result<ActionFusion> {
    if lambda_frame == 0 {
        return Err(Error::Config("lambda_frame must be >= 1".into()));
    }
    let (temporal, temporal_cache) = params.temporal.forward(frames)?;
    let (n, d) = actions.shape();
    let mut text = Matrix::zeros(n, d);
    let mut video = Matrix::zeros(n, d);
    let mut selected_frames = Vec::with_capacity(n);
    let mut margins = Vec::with_capacity(n);
    let mut proj_caches = Vec::with_capacity(n);
    for i in 0..n {
        let (e, cache) = residual_norm(&params.mlp2, &params.norm2, actions.row(i));
        let scores: Vec<f64> = temporal.row_iter().map(|g| dot(&e, g)).collect();
        let picked = top_k_indices(&scores, lambda_frame)?;
        let pooled = mean_rows(picked.iter().map(|&j| temporal.row(j)), d);
        margins.push(selection_margin(&scores, &picked));
        text.row_mut(i).copy_from_slice(&e);
        video.row_mut(i).copy_from_slice(&pooled);
        selected_frames.push(picked);
        proj_caches.push(cache);
    }
    Ok(ActionFusion {
        text,
        temporal,
        selected_frames,
        video,
        margins,
        proj_caches,
        temporal_cache,
    })
}

impl ActionFusion {
    fn backward(&self, params: &ModelParams, d_text: &Matrix, d_video: &Matrix, grads: &mut ModelParams) {
        let mut d_temporal = Matrix::zeros(self.temporal.rows(), self.temporal.cols());
        for (i, picked) in self.selected_frames.iter().enumerate() {
            let share = 1.0 / picked.len() as f64;
            for &j in picked {
                axpy(share, d_video.row(i), d_temporal.row_mut(j));
            }
            residual_norm_backward(
                &params.mlp2,
                &params.norm2,
                &self.proj_caches[i],
                d_text.row(i),
                &mut grads.mlp2,
                &mut grads.norm2,
            );
        }
        params
            .temporal
            .backward(&self.temporal_cache, &d_temporal, &mut grads.temporal);
    }
}

/// Entity-level fusion over patches of the parent action's frames.
#[derive(Debug, Clone)]
pub struct EntityFusion {
    pub text: Matrix,
    /// Per noun, per parent-selected frame (in ascending frame order): the
    /// picked patch indices.
    pub selected_patches: Vec<Vec<Vec<usize>>>,
    /// Per noun, the pooled patch feature of each parent-selected frame.
    pub per_frame: Vec<Matrix>,
    pub video: Matrix,
    pub margins: Vec<Option<f64>>,
    proj_caches: Vec<ResidualNormCache>,
}

pub fn fuse_entities(
    enhanced: &Matrix,
    patches: &[Matrix],
    h: &SyntaxHierarchy,
    selected_frames: &[Vec<usize>],
    params: &ModelParams,
    lambda_patch: usize,
    literal_eq17: bool,
) -> Result<EntityFusion> {
    if lambda_patch == 0 {
        return Err(Error::Config("lambda_patch must be >= 1".into()));
    }
    let (n, d) = enhanced.shape();
    let mut text = Matrix::zeros(n, d);
    let mut video = Matrix::zeros(n, d);
    let mut selected_patches = Vec::with_capacity(n);
    let mut per_frame = Vec::with_capacity(n);
    let mut margins = Vec::new();
    let mut proj_caches = Vec::with_capacity(n);
    for i in 0..n {
        let (e, cache) = residual_norm(&params.mlp3, &params.norm3, enhanced.row(i));
        let frames = &selected_frames[h.noun_parent(i)];
        let mut picks = Vec::with_capacity(frames.len());
        let mut pooled = Matrix::zeros(frames.len(), d);
        for (slot, &j) in frames.iter().enumerate() {
            let grid = &patches[j];
            let scores: Vec<f64> = grid.row_iter().map(|p| dot(&e, p)).collect();
            let picked = top_k_indices(&scores, lambda_patch)?;
            margins.push(selection_margin(&scores, &picked));
            let mean = mean_rows(picked.iter().map(|&x| grid.row(x)), d);
            pooled.row_mut(slot).copy_from_slice(&mean);
            picks.push(picked);
        }
        let divisor = if literal_eq17 {
            lambda_patch as f64
        } else {
            frames.len() as f64
        };
        let mut v = vec![0.0; d];
        for r in pooled.row_iter() {
            axpy(1.0, r, &mut v);
        }
        v.iter_mut().for_each(|x| *x /= divisor);
        text.row_mut(i).copy_from_slice(&e);
        video.row_mut(i).copy_from_slice(&v);
        selected_patches.push(picks);
        per_frame.push(pooled);
        proj_caches.push(cache);
    }
    Ok(EntityFusion {
        text,
        selected_patches,
        per_frame,
        video,
        margins,
        proj_caches,
    })
}

impl EntityFusion {
    /// Returns the gradient w.r.t. the enhanced noun features. The pooled
    /// patch features are constants (hard selection over fixed inputs).
    fn backward(&self, params: &ModelParams, d_text: &Matrix, grads: &mut ModelParams) -> Matrix {
        let mut d_enhanced = Matrix::zeros(d_text.rows(), d_text.cols());
        for (i, cache) in self.proj_caches.iter().enumerate() {
            let dx = residual_norm_backward(
                &params.mlp3,
                &params.norm3,
                cache,
                d_text.row(i),
                &mut grads.mlp3,
                &mut grads.norm3,
            );
            d_enhanced.row_mut(i).copy_from_slice(&dx);
        }
        d_enhanced
    }
}

/// Text side of one pair: projected node features per layer.
#[derive(Debug, Clone, Copy)]
pub struct NodeFeatures<'a> {
    pub initial: &'a InitialFeatures,
    pub sentence: &'a [f64],
    pub actions: &'a Matrix,
    pub entities_projected: &'a Matrix,
    pub entities_enhanced: &'a Matrix,
    pub entities: &'a Matrix,
}

/// Video side of one pair, aligned node for node with [`NodeFeatures`].
#[derive(Debug, Clone, Copy)]
pub struct VideoHierFeatures<'a> {
    pub frame_weights: &'a [f64],
    pub global: &'a [f64],
    pub temporal: &'a Matrix,
    pub selected_frames: &'a [Vec<usize>],
    pub actions: &'a Matrix,
    pub selected_patches: &'a [Vec<Vec<usize>>],
    pub entities: &'a Matrix,
}

/// Everything computed for one text-video pair, with backward caches.
#[derive(Debug, Clone)]
pub struct PairFeatures {
    pub initial: InitialFeatures,
    pub enhancement: EnhancedEntities,
    pub global: GlobalFusion,
    pub actions: ActionFusion,
    pub entities: EntityFusion,
}

/// Upstream gradients on the features consumed by the scorer.
#[derive(Debug, Clone)]
pub(crate) struct FeatureGrads {
    pub sentence_text: Vec<f64>,
    pub sentence_video: Vec<f64>,
    pub action_text: Matrix,
    pub action_video: Matrix,
    pub entity_text: Matrix,
}

pub fn build_pair_features(
    text: &TextItem,
    video: &VideoItem,
    params: &ModelParams,
    cfg: FusionConfig,
) -> Result<PairFeatures> {
    let d = params.d();
    if text.features.cols() != d || video.frames.cols() != d {
        return Err(Error::DimensionMismatch(format!(
            "model d = {d}, text d = {}, video d = {}",
            text.features.cols(),
            video.frames.cols()
        )));
    }
    if video.frames.rows() == 0 || video.patches.len() != video.frames.rows() {
        return Err(Error::DimensionMismatch(format!(
            "video {} needs one patch grid per frame",
            video.id
        )));
    }
    let h = &text.hierarchy;
    let initial = init_node_features(h, &text.features)?;
    let enhancement = enhance_nouns(&initial, h, params)?;
    let global = fuse_global(&initial.sentence, &video.frames, params)?;
    let actions = fuse_actions(&initial.actions, &video.frames, params, cfg.lambda_frame)?;
    let entities = fuse_entities(
        &enhancement.enhanced,
        &video.patches,
        h,
        &actions.selected_frames,
        params,
        cfg.lambda_patch,
        cfg.literal_eq17,
    )?;
    Ok(PairFeatures {
        initial,
        enhancement,
        global,
        actions,
        entities,
    })
}

impl PairFeatures {
    pub fn node_features(&self) -> NodeFeatures<'_> {
        NodeFeatures {
            initial: &self.initial,
            sentence: &self.global.text,
            actions: &self.actions.text,
            entities_projected: &self.enhancement.projected,
            entities_enhanced: &self.enhancement.enhanced,
            entities: &self.entities.text,
        }
    }

    pub fn video_features(&self) -> VideoHierFeatures<'_> {
        VideoHierFeatures {
            frame_weights: &self.global.frame_weights,
            global: &self.global.video,
            temporal: &self.actions.temporal,
            selected_frames: &self.actions.selected_frames,
            actions: &self.actions.video,
            selected_patches: &self.entities.selected_patches,
            entities: &self.entities.video,
        }
    }

    /// Smallest score gap at any top-k boundary; `None` if no selection
    /// actually discarded anything.
    pub fn min_selection_margin(&self) -> Option<f64> {
        self.actions
            .margins
            .iter()
            .chain(&self.entities.margins)
            .flatten()
            .copied()
            .reduce(f64::min)
    }

    pub(crate) fn backward(
        &self,
        params: &ModelParams,
        video: &VideoItem,
        upstream: &FeatureGrads,
        grads: &mut ModelParams,
    ) {
        self.global.backward(
            params,
            &video.frames,
            &upstream.sentence_text,
            &upstream.sentence_video,
            grads,
        );
        self.actions
            .backward(params, &upstream.action_text, &upstream.action_video, grads);
        let d_enhanced = self.entities.backward(params, &upstream.entity_text, grads);
        self.enhancement.backward(params, &d_enhanced, grads);
    }
}
