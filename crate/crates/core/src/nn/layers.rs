use serde::{Deserialize, Serialize};

use super::linalg::{axpy, Matrix};
use super::params::{join, ParamView, ParamViewMut, Parameters};
use crate::rng::SplitMix64;

pub const LAYER_NORM_EPS: f64 = 1e-5;

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
// 1 / sqrt(2 pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Layer normalization with population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Vec<f64>,
    inv_std: f64,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        Self {
            gain: vec![1.0; d],
            bias: vec![0.0; d],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gain: vec![0.0; self.gain.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, LayerNormCache) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
        let y = xhat
            .iter()
            .zip(self.gain.iter().zip(&self.bias))
            .map(|(h, (g, b))| h * g + b)
            .collect();
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &[f64], grad: &mut Self) -> Vec<f64> {
        let n = dy.len() as f64;
        let mut dxhat = Vec::with_capacity(dy.len());
        for i in 0..dy.len() {
            grad.gain[i] += dy[i] * cache.xhat[i];
            grad.bias[i] += dy[i];
            dxhat.push(dy[i] * self.gain[i]);
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / n;
        let mean_dxhat_xhat = dxhat.iter().zip(&cache.xhat).map(|(a, b)| a * b).sum::<f64>() / n;
        dxhat
            .iter()
            .zip(&cache.xhat)
            .map(|(g, h)| cache.inv_std * (g - mean_dxhat - h * mean_dxhat_xhat))
            .collect()
    }
}

impl Parameters for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        out.push(ParamView {
            name: join(prefix, "gain"),
            shape: vec![self.gain.len()],
            data: &self.gain,
        });
        out.push(ParamView {
            name: join(prefix, "bias"),
            shape: vec![self.bias.len()],
            data: &self.bias,
        });
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>) {
        let n = self.gain.len();
        out.push(ParamViewMut {
            name: join(prefix, "gain"),
            shape: vec![n],
            data: &mut self.gain,
        });
        out.push(ParamViewMut {
            name: join(prefix, "bias"),
            shape: vec![n],
            data: &mut self.bias,
        });
    }
}

/// Affine map `W x + b` with `W` stored out x in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Weights and biases uniform in +-1/sqrt(fan_in).
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut SplitMix64) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut l = Self::zeros(out_dim, in_dim);
        l.weight
            .data_mut()
            .iter_mut()
            .for_each(|w| *w = rng.uniform(-bound, bound));
        l.bias.iter_mut().for_each(|b| *b = rng.uniform(-bound, bound));
        l
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.rows(), self.weight.cols())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        axpy(1.0, &self.bias, &mut y);
        y
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Self) -> Vec<f64> {
        grad.weight.add_outer(1.0, dy, x);
        axpy(1.0, dy, &mut grad.bias);
        self.weight.matvec_t(dy)
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        out.push(ParamView {
            name: join(prefix, "weight"),
            shape: vec![self.weight.rows(), self.weight.cols()],
            data: self.weight.data(),
        });
        out.push(ParamView {
            name: join(prefix, "bias"),
            shape: vec![self.bias.len()],
            data: &self.bias,
        });
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>) {
        let shape = vec![self.weight.rows(), self.weight.cols()];
        out.push(ParamViewMut {
            name: join(prefix, "weight"),
            shape,
            data: self.weight.data_mut(),
        });
        let n = self.bias.len();
        out.push(ParamViewMut {
            name: join(prefix, "bias"),
            shape: vec![n],
            data: &mut self.bias,
        });
    }
}

/// Two-layer perceptron `fc2(gelu(fc1(x)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

impl Mlp {
    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Self {
            fc1: Linear::zeros(hidden, in_dim),
            fc2: Linear::zeros(out_dim, hidden),
        }
    }

    pub fn init(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut SplitMix64) -> Self {
        Self {
            fc1: Linear::init(hidden, in_dim, rng),
            fc2: Linear::init(out_dim, hidden, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let pre = self.fc1.forward(x);
        let act: Vec<f64> = pre.iter().map(|&v| gelu(v)).collect();
        let y = self.fc2.forward(&act);
        (
            y,
            MlpCache {
                x: x.to_vec(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&self, cache: &MlpCache, dy: &[f64], grad: &mut Self) -> Vec<f64> {
        let dact = self.fc2.backward(&cache.act, dy, &mut grad.fc2);
        let dpre: Vec<f64> = dact
            .iter()
            .zip(&cache.pre)
            .map(|(g, &p)| g * gelu_grad(p))
            .collect();
        self.fc1.backward(&cache.x, &dpre, &mut grad.fc1)
    }
}

impl Parameters for Mlp {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        self.fc1.visit(&join(prefix, "fc1"), out);
        self.fc2.visit(&join(prefix, "fc2"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>) {
        self.fc1.visit_mut(&join(prefix, "fc1"), out);
        self.fc2.visit_mut(&join(prefix, "fc2"), out);
    }
}

#[derive(Debug, Clone)]
pub struct ResidualNormCache {
    mlp: MlpCache,
    norm: LayerNormCache,
}

/// `Norm(x + MLP(x))`, the projection used at every text node site.
pub fn residual_norm(mlp: &Mlp, norm: &LayerNorm, x: &[f64]) -> (Vec<f64>, ResidualNormCache) {
    let (h, mlp_cache) = mlp.forward(x);
    let u: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
    let (y, norm_cache) = norm.forward(&u);
    (
        y,
        ResidualNormCache {
            mlp: mlp_cache,
            norm: norm_cache,
        },
    )
}

pub fn residual_norm_backward(
    mlp: &Mlp,
    norm: &LayerNorm,
    cache: &ResidualNormCache,
    dy: &[f64],
    mlp_grad: &mut Mlp,
    norm_grad: &mut LayerNorm,
) -> Vec<f64> {
    let du = norm.backward(&cache.norm, dy, norm_grad);
    let mut dx = mlp.backward(&cache.mlp, &du, mlp_grad);
    axpy(1.0, &du, &mut dx);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::linalg::dot;

    fn seeded(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect()
    }

    #[test]
    fn layer_norm_constant_input_is_zero() {
        let ln = LayerNorm::new(5);
        let (y, _) = ln.forward(&[3.0; 5]);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_unit_variance_symmetry() {
        let ln = LayerNorm::new(2);
        let (y, _) = ln.forward(&[1.0, -1.0]);
        // eps = 1e-5 shifts the result by ~5e-6
        assert!((y[0] - 1.0).abs() < 1e-5 && (y[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn layer_norm_matches_formula() {
        let x = seeded(8, 1);
        let mut ln = LayerNorm::new(8);
        ln.gain = seeded(8, 2);
        ln.bias = seeded(8, 3);
        let (y, _) = ln.forward(&x);
        // straight formula, separate passes
        let mean: f64 = x.iter().sum::<f64>() / 8.0;
        let mut var = 0.0;
        for v in &x {
            var += (v - mean).powi(2);
        }
        var /= 8.0;
        for i in 0..8 {
            let want = (x[i] - mean) / (var + 1e-5).sqrt() * ln.gain[i] + ln.bias[i];
            assert!((y[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_zero_params_give_zero() {
        let mlp = Mlp::zeros(4, 4, 4);
        let (y, _) = mlp.forward(&[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(y, vec![0.0; 4]);
    }

    #[test]
    fn mlp_identity_weights_large_inputs() {
        let mut mlp = Mlp::zeros(3, 3, 3);
        mlp.fc1.weight = Matrix::identity(3);
        mlp.fc2.weight = Matrix::identity(3);
        let x = [3.0, 5.0, 9.0];
        let (y, _) = mlp.forward(&x);
        for (a, b) in y.iter().zip(&x) {
            // gelu(3) = 3 * Phi(3) ~ 3 - 0.004
            assert!((a - b).abs() < 5e-3);
        }
    }

    #[test]
    fn mlp_matches_matrix_oracle() {
        let mut rng = SplitMix64::new(9);
        let mlp = Mlp::init(6, 6, 6, &mut rng);
        let x = seeded(6, 10);
        let (y, _) = mlp.forward(&x);
        let w1 = &mlp.fc1.weight;
        let w2 = &mlp.fc2.weight;
        let mut h = [0.0; 6];
        for i in 0..6 {
            let mut s = mlp.fc1.bias[i];
            for j in 0..6 {
                s += w1[(i, j)] * x[j];
            }
            h[i] = 0.5 * s * (1.0 + libm::erf(s / 2f64.sqrt()));
        }
        for i in 0..6 {
            let want = mlp.fc2.bias[i] + dot(w2.row(i), &h);
            assert!((y[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_shape_2d_to_d() {
        let mut rng = SplitMix64::new(4);
        let fusion = Mlp::init(8, 4, 4, &mut rng);
        let (y, _) = fusion.forward(&seeded(8, 5));
        assert_eq!(y.len(), 4);
        let zero = Mlp::zeros(8, 4, 4);
        assert_eq!(zero.forward(&seeded(8, 5)).0, vec![0.0; 4]);
    }

    fn check_grad<F>(f: F, x: &[f64], analytic: &[f64])
    where
        F: Fn(&[f64]) -> f64,
    {
        let h = 1e-5;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let num = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!(
                (num - analytic[i]).abs() < 1e-7 * (1.0 + num.abs()),
                "coord {i}: numeric {num} analytic {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn gelu_grad_matches_differences() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.2] {
            let h = 1e-6;
            let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((num - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn residual_norm_input_gradient() {
        let mut rng = SplitMix64::new(21);
        let mlp = Mlp::init(5, 5, 5, &mut rng);
        let mut ln = LayerNorm::new(5);
        ln.gain = seeded(5, 22);
        let probe = seeded(5, 23);
        let x = seeded(5, 24);
        let f = |x: &[f64]| dot(&residual_norm(&mlp, &ln, x).0, &probe);
        let (_, cache) = residual_norm(&mlp, &ln, &x);
        let mut gm = mlp.zeros_like();
        let mut gn = ln.zeros_like();
        let dx = residual_norm_backward(&mlp, &ln, &cache, &probe, &mut gm, &mut gn);
        check_grad(f, &x, &dx);
    }
}
