use super::linalg::{axpy, dot, softmax, softmax_backward, Matrix};
use crate::error::{Error, Result};

/// Result of pooling `values` with softmax weights over raw query-key
/// inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct Attended {
    pub weights: Vec<f64>,
    pub pooled: Vec<f64>,
}

/// Unscaled, projection-free inner-product attention: weights are
/// `softmax_j(query . keys_j)`, output is `sum_j weights_j * values_j`.
pub fn dot_softmax_attend(query: &[f64], keys: &Matrix, values: &Matrix) -> Result<Attended> {
    if keys.rows() == 0 {
        return Err(Error::DimensionMismatch("attention over an empty key list".into()));
    }
    if keys.rows() != values.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} keys but {} values",
            keys.rows(),
            values.rows()
        )));
    }
    let logits: Vec<f64> = keys.row_iter().map(|k| dot(query, k)).collect();
    let weights = softmax(&logits);
    let mut pooled = vec![0.0; values.cols()];
    for (w, v) in weights.iter().zip(values.row_iter()) {
        axpy(*w, v, &mut pooled);
    }
    Ok(Attended { weights, pooled })
}

/// Gradient of the pooled output w.r.t. the query only (keys and values
/// are constants at every call site).
pub fn dot_softmax_attend_backward_query(
    keys: &Matrix,
    values: &Matrix,
    weights: &[f64],
    dpooled: &[f64],
) -> Vec<f64> {
    let dw: Vec<f64> = values.row_iter().map(|v| dot(dpooled, v)).collect();
    let dlogits = softmax_backward(weights, &dw);
    keys.matvec_t(&dlogits)
}
