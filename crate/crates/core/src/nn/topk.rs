use crate::error::{Error, Result};

/// Indices of the `k` largest scores, returned in ascending index order.
///
/// Ties prefer the lower index. `k` larger than the input selects everything.
pub fn top_k_indices(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(Error::DimensionMismatch("top-k over empty scores".into()));
    }
    if k == 0 {
        return Err(Error::Config("top-k needs k >= 1".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

/// Gap between the weakest selected score and the strongest rejected one.
/// `None` when every item is selected.
pub fn selection_margin(scores: &[f64], selected: &[usize]) -> Option<f64> {
    if selected.len() >= scores.len() {
        return None;
    }
    let mut taken = vec![false; scores.len()];
    selected.iter().for_each(|&i| taken[i] = true);
    let weakest = selected.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
    let strongest = (0..scores.len())
        .filter(|&i| !taken[i])
        .map(|i| scores[i])
        .fold(f64::NEG_INFINITY, f64::max);
    Some(weakest - strongest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force: rank every index by how many items beat it.
    fn oracle(scores: &[f64], k: usize) -> Vec<usize> {
        let n = scores.len();
        let mut out: Vec<usize> = (0..n)
            .filter(|&i| {
                let beaten_by = (0..n)
                    .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                    .count();
                beaten_by < k
            })
            .collect();
        out.sort_unstable();
        out
    }

    #[test]
    fn inspection_case() {
        assert_eq!(top_k_indices(&[0.9, 0.1, 0.5, 0.7], 2).unwrap(), vec![0, 3]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(top_k_indices(&[0.5, 0.5, 0.5], 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn k_larger_than_n_selects_all() {
        assert_eq!(top_k_indices(&[1.0, 2.0], 5).unwrap(), vec![0, 1]);
    }

    #[test]
    fn errors() {
        assert!(top_k_indices(&[], 1).is_err());
        assert!(top_k_indices(&[1.0], 0).is_err());
    }

    #[test]
    fn thousand_scores_against_sort() {
        let mut rng = crate::rng::SplitMix64::new(77);
        let scores: Vec<f64> = (0..1000).map(|_| rng.next_f64()).collect();
        assert_eq!(top_k_indices(&scores, 7).unwrap(), oracle(&scores, 7));
    }

    #[test]
    fn margin() {
        assert_eq!(selection_margin(&[0.9, 0.1, 0.5, 0.7], &[0, 3]), Some(0.7 - 0.5));
        assert_eq!(selection_margin(&[0.9], &[0]), None);
    }

    proptest! {
        #[test]
        fn agrees_with_oracle(
            scores in prop::collection::vec(prop_oneof![-3i32..3, -3i32..3].prop_map(|v| v as f64 * 0.5), 1..40),
            k in 1usize..10,
        ) {
            prop_assert_eq!(top_k_indices(&scores, k).unwrap(), oracle(&scores, k));
        }
    }
}
