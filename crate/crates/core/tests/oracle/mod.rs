//! Straight-line reference implementations used by the acceptance suite.
//! Plain nested `Vec`s and explicit loops, deliberately sharing no code
//! with the library's numerics.

#![allow(clippy::needless_range_loop)]

#![allow(dead_code)]

use she_core::nn::{LayerNorm, Matrix, Mlp, TemporalEncoder};

pub type Vector = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

pub fn softmax(x: &[f64]) -> Vector {
    let mut m = f64::NEG_INFINITY;
    for &v in x {
        if v > m {
            m = v;
        }
    }
    let e: Vector = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

pub fn layer_norm(x: &[f64], ln: &LayerNorm) -> Vector {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = (var + 1e-5).sqrt();
    (0..x.len())
        .map(|c| (x[c] - mean) / denom * ln.gain[c] + ln.bias[c])
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Vector {
    (0..w.rows())
        .map(|r| {
            let mut s = b[r];
            for c in 0..w.cols() {
                s += w[(r, c)] * x[c];
            }
            s
        })
        .collect()
}

pub fn mlp(m: &Mlp, x: &[f64]) -> Vector {
    let h: Vector = affine(&m.fc1.weight, &m.fc1.bias, x).into_iter().map(gelu).collect();
    affine(&m.fc2.weight, &m.fc2.bias, &h)
}

/// `LN(x + MLP(x))`
pub fn project(m: &Mlp, ln: &LayerNorm, x: &[f64]) -> Vector {
    let y = mlp(m, x);
    let z: Vector = x.iter().zip(&y).map(|(a, b)| a + b).collect();
    layer_norm(&z, ln)
}

pub fn attend(q: &[f64], rows: &[Vector]) -> (Vector, Vector) {
    let logits: Vector = rows.iter().map(|r| dot(q, r)).collect();
    let w = softmax(&logits);
    let mut out = vec![0.0; q.len()];
    for (j, r) in rows.iter().enumerate() {
        for c in 0..out.len() {
            out[c] += w[j] * r[c];
        }
    }
    (w, out)
}

/// Indices of the k largest scores by full sort (ties to the lower index),
/// returned ascending.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k.min(scores.len()));
    idx.sort();
    idx
}

pub fn mean(rows: &[&Vector]) -> Vector {
    let mut out = vec![0.0; rows[0].len()];
    for r in rows {
        for c in 0..out.len() {
            out[c] += r[c];
        }
    }
    out.iter().map(|v| v / rows.len() as f64).collect()
}

pub fn rows(m: &Matrix) -> Vec<Vector> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// One post-norm encoder layer over `frames + pos_emb`.
pub fn transformer(enc: &TemporalEncoder, frames: &[Vector]) -> Vec<Vector> {
    let n = frames.len();
    let d = frames[0].len();
    let hd = d / enc.heads;
    let x: Vec<Vector> = (0..n)
        .map(|i| (0..d).map(|c| frames[i][c] + enc.pos_emb[(i, c)]).collect())
        .collect();
    let zero = vec![0.0; d];
    let q: Vec<Vector> = x.iter().map(|r| affine(&enc.wq, &zero, r)).collect();
    let k: Vec<Vector> = x.iter().map(|r| affine(&enc.wk, &zero, r)).collect();
    let v: Vec<Vector> = x.iter().map(|r| affine(&enc.wv, &zero, r)).collect();
    let mut ctx = vec![vec![0.0; d]; n];
    for h in 0..enc.heads {
        let lo = h * hd;
        let hi = lo + hd;
        for i in 0..n {
            let logits: Vector = (0..n)
                .map(|j| dot(&q[i][lo..hi], &k[j][lo..hi]) / (hd as f64).sqrt())
                .collect();
            let a = softmax(&logits);
            for j in 0..n {
                for c in lo..hi {
                    ctx[i][c] += a[j] * v[j][c];
                }
            }
        }
    }
    (0..n)
        .map(|i| {
            let o = affine(&enc.wo, &zero, &ctx[i]);
            let u: Vector = (0..d).map(|c| x[i][c] + o[c]).collect();
            let r1 = layer_norm(&u, &enc.ln1);
            let f = mlp(&enc.ffn, &r1);
            let z: Vector = (0..d).map(|c| r1[c] + f[c]).collect();
            layer_norm(&z, &enc.ln2)
        })
        .collect()
}

pub fn cross_entropy_loss(s: &[Vector], tau: f64) -> f64 {
    let b = s.len();
    let mut t2v = 0.0;
    let mut v2t = 0.0;
    for i in 0..b {
        let row: Vector = (0..b).map(|j| tau * s[i][j]).collect();
        t2v -= softmax(&row)[i].ln();
        let col: Vector = (0..b).map(|j| tau * s[j][i]).collect();
        v2t -= softmax(&col)[i].ln();
    }
    (t2v / b as f64 + v2t / b as f64) / 2.0
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
