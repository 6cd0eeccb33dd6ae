//! Central finite-difference verification of analytic gradients.

use super::params::Parameters;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Magnitudes below this are compared in absolute rather than relative terms.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Check at most this many coordinates per tensor (sampled with `seed`);
    /// `None` checks all of them.
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-4,
            max_coords_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
}

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`, exactly 0 when both are 0.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compare `analytic` (same layout as `params`) against central differences
/// of `loss` around `params`.
pub fn grad_check<P, F>(
    params: &P,
    analytic: &P,
    loss: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    F: Fn(&P) -> Result<f64>,
{
    if !analytic.all_finite() {
        return Err(Error::NonFinite("analytic gradient".into()));
    }
    let grads: Vec<(String, Vec<f64>)> = analytic
        .views()
        .into_iter()
        .map(|v| (v.name, v.data.to_vec()))
        .collect();
    let mut rng = SplitMix64::new(opts.seed);
    let mut work = params.clone();
    let mut tensors = Vec::with_capacity(grads.len());

    for (t, (name, grad)) in grads.iter().enumerate() {
        let mut coords: Vec<usize> = (0..grad.len()).collect();
        if let Some(limit) = opts.max_coords_per_tensor {
            rng.shuffle(&mut coords);
            coords.truncate(limit);
            coords.sort_unstable();
        }
        let mut check = TensorCheck {
            name: name.clone(),
            checked: coords.len(),
            max_abs_err: 0.0,
            max_rel_err: 0.0,
        };
        for &c in &coords {
            let original = work.views()[t].data[c];
            work.views_mut()[t].data[c] = original + opts.h;
            let plus = loss(&work)?;
            work.views_mut()[t].data[c] = original - opts.h;
            let minus = loss(&work)?;
            work.views_mut()[t].data[c] = original;
            let numeric = (plus - minus) / (2.0 * opts.h);
            if !numeric.is_finite() {
                return Err(Error::NonFinite(format!("finite difference for {name}[{c}]")));
            }
            check.max_abs_err = check.max_abs_err.max((grad[c] - numeric).abs());
            check.max_rel_err = check.max_rel_err.max(relative_error(grad[c], numeric));
        }
        tensors.push(check);
    }
    let max_rel_err = tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport { tensors, max_rel_err })
}
