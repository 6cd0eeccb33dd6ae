//! Single post-norm transformer encoder layer used for temporal fusion of
//! frame features, with learned positional embeddings.

use serde::{Deserialize, Serialize};

use super::layers::{LayerNorm, LayerNormCache, Mlp, MlpCache};
use super::linalg::{axpy, dot, softmax, softmax_backward, Matrix};
use super::params::{join, ParamView, ParamViewMut, Parameters};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalEncoder {
    pub heads: usize,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ffn: Mlp,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    /// max_frames x d
    pub pos_emb: Matrix,
}

#[derive(Debug, Clone)]
pub struct TemporalCache {
    x0: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// per head, n x n row-stochastic
    attn: Vec<Matrix>,
    ctx: Matrix,
    ln1: Vec<LayerNormCache>,
    x1: Matrix,
    ffn: Vec<MlpCache>,
    ln2: Vec<LayerNormCache>,
}

impl TemporalCache {
    pub fn attention(&self, head: usize) -> &Matrix {
        &self.attn[head]
    }
}

fn project(w: &Matrix, x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), w.rows());
    for i in 0..x.rows() {
        let r = w.matvec(x.row(i));
        out.row_mut(i).copy_from_slice(&r);
    }
    out
}

impl TemporalEncoder {
    pub fn zeros(d: usize, heads: usize, max_frames: usize) -> Self {
        Self {
            heads,
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            ffn: Mlp::zeros(d, 4 * d, d),
            ln1: LayerNorm::new(d),
            ln2: LayerNorm::new(d),
            pos_emb: Matrix::zeros(max_frames, d),
        }
    }

    pub fn init(d: usize, heads: usize, max_frames: usize, rng: &mut SplitMix64) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let mut square = || {
            Matrix::from_vec(d, d, (0..d * d).map(|_| rng.uniform(-bound, bound)).collect())
        };
        let (wq, wk, wv, wo) = (square(), square(), square(), square());
        let ffn = Mlp::init(d, 4 * d, d, rng);
        let pos_emb = Matrix::from_vec(
            max_frames,
            d,
            (0..max_frames * d).map(|_| 0.02 * rng.normal()).collect(),
        );
        Self {
            heads,
            wq,
            wk,
            wv,
            wo,
            ffn,
            ln1: LayerNorm::new(d),
            ln2: LayerNorm::new(d),
            pos_emb,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.d(), self.heads, self.max_frames());
        z.ln1 = self.ln1.zeros_like();
        z.ln2 = self.ln2.zeros_like();
        z
    }

    pub fn d(&self) -> usize {
        self.wq.rows()
    }

    pub fn max_frames(&self) -> usize {
        self.pos_emb.rows()
    }

    fn head_dim(&self) -> usize {
        self.d() / self.heads
    }

    pub fn forward(&self, frames: &Matrix) -> Result<(Matrix, TemporalCache)> {
        let (n, d) = frames.shape();
        if n > self.max_frames() {
            return Err(Error::DimensionMismatch(format!(
                "{n} frames exceed the positional table of {}",
                self.max_frames()
            )));
        }
        if d != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "frame width {d} but encoder width {}",
                self.d()
            )));
        }
        let mut x0 = frames.clone();
        for i in 0..n {
            axpy(1.0, self.pos_emb.row(i), x0.row_mut(i));
        }
        let q = project(&self.wq, &x0);
        let k = project(&self.wk, &x0);
        let v = project(&self.wv, &x0);

        let hd = self.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut ctx = Matrix::zeros(n, d);
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * hd..(h + 1) * hd;
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                let logits: Vec<f64> = (0..n)
                    .map(|j| scale * dot(&q.row(i)[cols.clone()], &k.row(j)[cols.clone()]))
                    .collect();
                let p = softmax(&logits);
                a.row_mut(i).copy_from_slice(&p);
                for j in 0..n {
                    axpy(p[j], &v.row(j)[cols.clone()], &mut ctx.row_mut(i)[cols.clone()]);
                }
            }
            attn.push(a);
        }

        let mut x1 = Matrix::zeros(n, d);
        let mut y = Matrix::zeros(n, d);
        let mut ln1 = Vec::with_capacity(n);
        let mut ffn = Vec::with_capacity(n);
        let mut ln2 = Vec::with_capacity(n);
        for i in 0..n {
            let mut u = self.wo.matvec(ctx.row(i));
            axpy(1.0, x0.row(i), &mut u);
            let (r1, c1) = self.ln1.forward(&u);
            let (f, cf) = self.ffn.forward(&r1);
            let z: Vec<f64> = r1.iter().zip(&f).map(|(a, b)| a + b).collect();
            let (r2, c2) = self.ln2.forward(&z);
            x1.row_mut(i).copy_from_slice(&r1);
            y.row_mut(i).copy_from_slice(&r2);
            ln1.push(c1);
            ffn.push(cf);
            ln2.push(c2);
        }
        Ok((
            y,
            TemporalCache {
                x0,
                q,
                k,
                v,
                attn,
                ctx,
                ln1,
                x1,
                ffn,
                ln2,
            },
        ))
    }

    /// Accumulate parameter gradients for upstream `dy`; returns the
    /// gradient w.r.t. the input frames.
    pub fn backward(&self, cache: &TemporalCache, dy: &Matrix, grad: &mut Self) -> Matrix {
        let (n, d) = dy.shape();
        let hd = self.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        let mut du = Matrix::zeros(n, d);
        for i in 0..n {
            let dz = self.ln2.backward(&cache.ln2[i], dy.row(i), &mut grad.ln2);
            let mut dx1 = self.ffn.backward(&cache.ffn[i], &dz, &mut grad.ffn);
            axpy(1.0, &dz, &mut dx1);
            let dui = self.ln1.backward(&cache.ln1[i], &dx1, &mut grad.ln1);
            du.row_mut(i).copy_from_slice(&dui);
        }
        debug_assert_eq!(cache.x1.rows(), n);

        // residual path into x0, attention path through wo
        let mut dx0 = du.clone();
        let mut dctx = Matrix::zeros(n, d);
        for i in 0..n {
            grad.wo.add_outer(1.0, du.row(i), cache.ctx.row(i));
            let r = self.wo.matvec_t(du.row(i));
            dctx.row_mut(i).copy_from_slice(&r);
        }

        let mut dq = Matrix::zeros(n, d);
        let mut dk = Matrix::zeros(n, d);
        let mut dv = Matrix::zeros(n, d);
        for (h, a) in cache.attn.iter().enumerate() {
            let cols = h * hd..(h + 1) * hd;
            for i in 0..n {
                let dci = &dctx.row(i)[cols.clone()];
                let da: Vec<f64> = (0..n).map(|j| dot(dci, &cache.v.row(j)[cols.clone()])).collect();
                for j in 0..n {
                    axpy(a[(i, j)], dci, &mut dv.row_mut(j)[cols.clone()]);
                }
                let ds = softmax_backward(a.row(i), &da);
                for j in 0..n {
                    let g = scale * ds[j];
                    axpy(g, &cache.k.row(j)[cols.clone()], &mut dq.row_mut(i)[cols.clone()]);
                    axpy(g, &cache.q.row(i)[cols.clone()], &mut dk.row_mut(j)[cols.clone()]);
                }
            }
        }

        for i in 0..n {
            let x = cache.x0.row(i);
            grad.wq.add_outer(1.0, dq.row(i), x);
            grad.wk.add_outer(1.0, dk.row(i), x);
            grad.wv.add_outer(1.0, dv.row(i), x);
            let mut back = self.wq.matvec_t(dq.row(i));
            axpy(1.0, &self.wk.matvec_t(dk.row(i)), &mut back);
            axpy(1.0, &self.wv.matvec_t(dv.row(i)), &mut back);
            axpy(1.0, &back, dx0.row_mut(i));
        }
        for i in 0..n {
            axpy(1.0, dx0.row(i), grad.pos_emb.row_mut(i));
        }
        dx0
    }
}

impl Parameters for TemporalEncoder {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        for (name, m) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("wo", &self.wo)] {
            out.push(ParamView {
                name: join(prefix, name),
                shape: vec![m.rows(), m.cols()],
                data: m.data(),
            });
        }
        self.ffn.visit(&join(prefix, "ffn"), out);
        self.ln1.visit(&join(prefix, "ln1"), out);
        self.ln2.visit(&join(prefix, "ln2"), out);
        out.push(ParamView {
            name: join(prefix, "pos_emb"),
            shape: vec![self.pos_emb.rows(), self.pos_emb.cols()],
            data: self.pos_emb.data(),
        });
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>) {
        for (name, m) in [
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
            ("wo", &mut self.wo),
        ] {
            let shape = vec![m.rows(), m.cols()];
            out.push(ParamViewMut {
                name: join(prefix, name),
                shape,
                data: m.data_mut(),
            });
        }
        self.ffn.visit_mut(&join(prefix, "ffn"), out);
        self.ln1.visit_mut(&join(prefix, "ln1"), out);
        self.ln2.visit_mut(&join(prefix, "ln2"), out);
        let shape = vec![self.pos_emb.rows(), self.pos_emb.cols()];
        out.push(ParamViewMut {
            name: join(prefix, "pos_emb"),
            shape,
            data: self.pos_emb.data_mut(),
        });
    }
}
