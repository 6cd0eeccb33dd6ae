use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Each text (row) queries all videos.
    TextToVideo,
    /// Each video (column) queries all texts.
    VideoToText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    /// Median rank; the lower middle value for an even query count.
    pub mdr: usize,
    pub meanr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub t2v: RetrievalMetrics,
    pub v2t: RetrievalMetrics,
    pub rsum: f64,
}

/// Rank of the true item for every query: 1 + the number of candidates
/// scoring strictly higher. Query `q` matches candidate `q`.
pub fn ranks(s: &Matrix, direction: Direction) -> Result<Vec<usize>> {
    let (rows, cols) = s.shape();
    let (queries, candidates) = match direction {
        Direction::TextToVideo => (rows, cols),
        Direction::VideoToText => (cols, rows),
    };
    if queries == 0 || queries > candidates {
        return Err(Error::DimensionMismatch(format!(
            "{rows}x{cols} score matrix has no ground-truth diagonal for every query"
        )));
    }
    let at = |q: usize, c: usize| match direction {
        Direction::TextToVideo => s[(q, c)],
        Direction::VideoToText => s[(c, q)],
    };
    Ok((0..queries)
        .map(|q| {
            let truth = at(q, q);
            1 + (0..candidates).filter(|&c| at(q, c) > truth).count()
        })
        .collect())
}

pub fn metrics_from_ranks(ranks: &[usize]) -> RetrievalMetrics {
    let n = ranks.len() as f64;
    let recall = |k: usize| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    RetrievalMetrics {
        r1: recall(1),
        r5: recall(5),
        r10: recall(10),
        mdr: sorted[(sorted.len() - 1) / 2],
        meanr: ranks.iter().sum::<usize>() as f64 / n,
    }
}

pub fn compute_metrics(s: &Matrix, direction: Direction) -> Result<RetrievalMetrics> {
    Ok(metrics_from_ranks(&ranks(s, direction)?))
}

pub fn retrieval_report(s: &Matrix) -> Result<RetrievalReport> {
    if s.rows() != s.cols() {
        return Err(Error::DimensionMismatch(format!(
            "Rsum needs a square score matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    let t2v = compute_metrics(s, Direction::TextToVideo)?;
    let v2t = compute_metrics(s, Direction::VideoToText)?;
    let rsum = t2v.r1 + t2v.r5 + t2v.r10 + v2t.r1 + v2t.r5 + v2t.r10;
    Ok(RetrievalReport { t2v, v2t, rsum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn random(n: usize, seed: u64) -> Matrix {
        let mut rng = SplitMix64::new(seed);
        Matrix::from_vec(n, n, (0..n * n).map(|_| rng.next_f64()).collect())
    }

    #[test]
    fn identity_dominant() {
        let mut s = random(6, 1);
        for i in 0..6 {
            s[(i, i)] = 2.0;
        }
        let r = retrieval_report(&s).unwrap();
        assert_eq!(r.t2v, RetrievalMetrics { r1: 100.0, r5: 100.0, r10: 100.0, mdr: 1, meanr: 1.0 });
        assert_eq!(r.rsum, 600.0);
    }

    #[test]
    fn anti_diagonal_4x4() {
        // n = 4: the anti-diagonal never meets the diagonal
        let mut s = Matrix::zeros(4, 4);
        for i in 0..4 {
            s[(i, 3 - i)] = 1.0;
        }
        let m = compute_metrics(&s, Direction::TextToVideo).unwrap();
        assert_eq!(ranks(&s, Direction::TextToVideo).unwrap(), vec![2, 2, 2, 2]);
        assert_eq!(m.r1, 0.0);
        assert_eq!(m.r5, 100.0);

        // odd size: the middle query coincides with the diagonal
        let mut s = Matrix::zeros(5, 5);
        for i in 0..5 {
            s[(i, 4 - i)] = 1.0;
        }
        assert_eq!(ranks(&s, Direction::TextToVideo).unwrap(), vec![2, 2, 1, 2, 2]);
        assert_eq!(compute_metrics(&s, Direction::TextToVideo).unwrap().r1, 20.0);
    }

    #[test]
    fn even_count_median_takes_lower_middle() {
        let m = metrics_from_ranks(&[4, 1, 3, 2]);
        assert_eq!(m.mdr, 2);
        assert_eq!(m.meanr, 2.5);
    }

    #[test]
    fn ties_favor_the_true_item() {
        let s = Matrix::from_vec(2, 2, vec![0.5; 4]);
        assert_eq!(ranks(&s, Direction::TextToVideo).unwrap(), vec![1, 1]);
    }

    #[test]
    fn rsum_needs_square() {
        assert!(retrieval_report(&Matrix::zeros(2, 3)).is_err());
        assert!(compute_metrics(&Matrix::zeros(2, 3), Direction::TextToVideo).is_ok());
        assert!(compute_metrics(&Matrix::zeros(2, 3), Direction::VideoToText).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_joint_permutation(n in 2usize..20, seed in any::<u64>()) {
            let s = random(n, seed);
            let mut perm: Vec<usize> = (0..n).collect();
            SplitMix64::new(seed ^ 1).shuffle(&mut perm);
            // text i keeps its video, both now at position perm[i]
            let mut p = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    p[(perm[i], perm[j])] = s[(i, j)];
                }
            }
            let a = retrieval_report(&s).unwrap();
            let b = retrieval_report(&p).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn recall_is_monotone(n in 1usize..30, seed in any::<u64>()) {
            let m = compute_metrics(&random(n, seed), Direction::VideoToText).unwrap();
            prop_assert!(0.0 <= m.r1 && m.r1 <= m.r5 && m.r5 <= m.r10 && m.r10 <= 100.0);
            prop_assert!(m.mdr >= 1 && m.meanr >= 1.0);
        }
    }
}
