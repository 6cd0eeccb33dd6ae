use crate::error::{Error, Result};
use crate::nn::linalg::{log_sum_exp, softmax, Matrix};

/// Row-wise cross-entropy of `tau * S` against the diagonal:
/// `-(1/B) sum_i log softmax(tau S_i.)_i`, with its gradient in `S`.
pub fn row_cross_entropy(s: &Matrix, tau: f64) -> Result<(f64, Matrix)> {
    let b = check_square(s)?;
    let mut grad = Matrix::zeros(b, b);
    let mut loss = 0.0;
    for i in 0..b {
        let logits: Vec<f64> = s.row(i).iter().map(|v| tau * v).collect();
        loss += log_sum_exp(&logits) - logits[i];
        let p = softmax(&logits);
        let g = grad.row_mut(i);
        for j in 0..b {
            let target = if i == j { 1.0 } else { 0.0 };
            g[j] = tau * (p[j] - target) / b as f64;
        }
    }
    Ok((loss / b as f64, grad))
}

/// Symmetric contrastive loss, the mean of text-to-video (rows) and
/// video-to-text (columns) cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricLoss {
    pub loss: f64,
    pub t2v: f64,
    pub v2t: f64,
    /// dL/dS
    pub grad: Matrix,
}

pub fn symmetric_ce_loss(s: &Matrix, tau: f64) -> Result<SymmetricLoss> {
    let (t2v, g_rows) = row_cross_entropy(s, tau)?;
    let (v2t, g_cols) = row_cross_entropy(&transpose(s), tau)?;
    let g_cols = transpose(&g_cols);
    let b = s.rows();
    let mut grad = Matrix::zeros(b, b);
    for (k, g) in grad.data_mut().iter_mut().enumerate() {
        *g = 0.5 * (g_rows.data()[k] + g_cols.data()[k]);
    }
    Ok(SymmetricLoss {
        loss: 0.5 * (t2v + v2t),
        t2v,
        v2t,
        grad,
    })
}

pub(crate) fn transpose(m: &Matrix) -> Matrix {
    let (r, c) = m.shape();
    let mut t = Matrix::zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            t[(j, i)] = m[(i, j)];
        }
    }
    t
}

fn check_square(s: &Matrix) -> Result<usize> {
    let (r, c) = s.shape();
    if r != c || r == 0 {
        return Err(Error::DimensionMismatch(format!(
            "contrastive loss needs a non-empty square score matrix, got {r}x{c}"
        )));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn random(b: usize, seed: u64) -> Matrix {
        let mut rng = SplitMix64::new(seed);
        Matrix::from_vec(b, b, (0..b * b).map(|_| rng.uniform(-1.0, 1.0)).collect())
    }

    #[test]
    fn uniform_scores_give_log_b() {
        for b in [2, 4, 8] {
            let out = symmetric_ce_loss(&Matrix::from_vec(b, b, vec![0.3; b * b]), 4.0).unwrap();
            assert!((out.loss - (b as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_identity_goes_to_zero() {
        let mut s = Matrix::identity(4);
        s.data_mut().iter_mut().for_each(|v| *v *= 50.0);
        let out = symmetric_ce_loss(&s, 4.0).unwrap();
        assert!(out.loss < 1e-80);
    }

    #[test]
    fn non_square_rejected() {
        assert!(symmetric_ce_loss(&Matrix::zeros(2, 3), 4.0).is_err());
    }

    #[test]
    fn matches_finite_differences() {
        let s = random(4, 7);
        let out = symmetric_ce_loss(&s, 4.0).unwrap();
        let h = 1e-5;
        for k in 0..16 {
            let mut p = s.clone();
            p.data_mut()[k] += h;
            let mut m = s.clone();
            m.data_mut()[k] -= h;
            let num = (symmetric_ce_loss(&p, 4.0).unwrap().loss - symmetric_ce_loss(&m, 4.0).unwrap().loss) / (2.0 * h);
            let a = out.grad.data()[k];
            assert!((a - num).abs() / a.abs().max(num.abs()).max(1e-6) < 1e-6, "{k}: {a} vs {num}");
        }
    }

    proptest! {
        #[test]
        fn directional_gradients_balance(b in 2usize..9, seed in any::<u64>(), tau in 0.5f64..8.0) {
            let s = random(b, seed);
            let (_, g) = row_cross_entropy(&s, tau).unwrap();
            for i in 0..b {
                prop_assert!(g.row(i).iter().sum::<f64>().abs() < 1e-10);
            }
            let out = symmetric_ce_loss(&s, tau).unwrap();
            prop_assert!(out.loss >= 0.0);
            prop_assert!(out.grad.data().iter().sum::<f64>().abs() < 1e-10);
        }
    }
}
