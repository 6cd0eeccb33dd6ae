use crate::config::AdamConfig;
use crate::nn::params::Parameters;

/// Adam with bias correction over any parameter bundle.
#[derive(Debug, Clone)]
pub struct Adam<P> {
    cfg: AdamConfig,
    lr: f64,
    t: u64,
    m: P,
    v: P,
}

impl<P: Parameters + Clone> Adam<P> {
    pub fn new(params: &P, lr: f64, cfg: AdamConfig) -> Self {
        let mut m = params.clone();
        m.set_zero();
        Self {
            cfg,
            lr,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut P, grads: &P) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let g = grads.views();
        let ms = self.m.views_mut();
        let vs = self.v.views_mut();
        for (((p, g), m), v) in params.views_mut().into_iter().zip(g).zip(ms).zip(vs) {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = beta1 * m.data[k] + (1.0 - beta1) * gk;
                v.data[k] = beta2 * v.data[k] + (1.0 - beta2) * gk * gk;
                let mhat = m.data[k] / c1;
                let vhat = v.data[k] / c2;
                p.data[k] -= self.lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Linear;
    use crate::rng::SplitMix64;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut rng = SplitMix64::new(3);
        let mut p = Linear::init(2, 3, &mut rng);
        let before = p.flatten();
        let mut g = p.zeros_like();
        g.weight.data_mut().copy_from_slice(&[1.0, -2.0, 0.5, 3.0, -0.1, 4.0]);
        g.bias = vec![-1.0, 2.0];
        let mut opt = Adam::new(&p, 0.01, AdamConfig::default());
        opt.step(&mut p, &g);
        for ((a, b), gk) in p.flatten().iter().zip(&before).zip(g.flatten()) {
            // |mhat| / sqrt(vhat) == 1 after one step
            let want = b - 0.01 * gk.signum() * gk.abs() / (gk.abs() + 1e-8);
            assert!((a - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut rng = SplitMix64::new(4);
        let mut p = Linear::init(3, 3, &mut rng);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.bias = vec![1.0, 2.0, 3.0];
        let mut opt = Adam::new(&p, 0.0, AdamConfig::default());
        for _ in 0..10 {
            opt.step(&mut p, &g);
        }
        assert_eq!(p, before);
    }
}
