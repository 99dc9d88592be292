//! Full-decomposition PMOP.
//!
//! With the block potential chosen as the size-normalized sum of member
//! potentials, the stage normalizer over all `2^{N_k}-1` candidate blocks
//! collapses to a constant times the remainder sum, so a query's
//! log-likelihood and gradient come out of one backward pass: O(N) score
//! lookups for the value, O(N*F) for the gradient. The quadratic-time
//! recompute-from-scratch variants are kept as references.
//!
//! The training objective drops the additive `log(C_k |X_k|)` constant per
//! stage, which carries no gradient; [`fd_loglik_exact`] restores it so the
//! exact normalized probability can be compared against enumeration.

use crate::data::{OrderedPartition, QueryGroup};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::oracle::log_constant_c;
use crate::scoring::{log_sum_exp, ExpSum, ScoreCache};

fn check_partition<T: Real>(group: &QueryGroup<T>, part: &OrderedPartition) -> Result<()> {
    if part.len() != group.len() {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} documents, query {} has {}",
            part.len(),
            group.query_id,
            group.len()
        )));
    }
    Ok(())
}

/// Backward auxiliary arrays over stages k = K..1.
///
/// Row k describes the remainder set R_k (documents not placed before stage
/// k): `log_sums[k]` is the log of the summed potentials over R_k, and
/// `feature_sums[k]` holds `sum exp(f - shifts[k]) * x` so that dividing by
/// `weights[k]` gives the softmax-weighted feature mean of R_k. Rows use a
/// per-stage shift rather than the query-wide one so late stages whose
/// scores sit far below the query maximum keep full precision.
#[derive(Debug, Clone)]
pub struct StageAccumulators<T> {
    pub log_sums: Vec<T>,
    pub shifts: Vec<T>,
    pub weights: Vec<T>,
    pub feature_sums: Vec<Vec<T>>,
}

/// Builds the backward arrays. O(N*F).
pub fn stage_accumulators<T: Real>(
    group: &QueryGroup<T>,
    part: &OrderedPartition,
    w: &[T],
) -> Result<StageAccumulators<T>> {
    check_partition(group, part)?;
    let cache = ScoreCache::compute_slice(group, w)?;
    let k = part.block_count();
    let f = w.len();

    let mut log_sums = vec![T::zero(); k];
    let mut shifts = vec![T::zero(); k];
    let mut weights = vec![T::zero(); k];
    let mut feature_sums = vec![Vec::new(); k];

    let mut remainder = ExpSum::new(f);
    for kk in (0..k).rev() {
        for &i in &part.blocks()[kk] {
            remainder.add(cache.scores[i], &group.docs[i]);
        }
        log_sums[kk] = remainder.log_sum();
        shifts[kk] = remainder.shift();
        weights[kk] = remainder.weight();
        feature_sums[kk] = remainder.features().to_vec();
    }
    Ok(StageAccumulators {
        log_sums,
        shifts,
        weights,
        feature_sums,
    })
}

/// Per-query log-likelihood without the parameter-free constant:
/// `sum_k [ log sum_{x in X_k} phi(x) - log sum_{x in R_k} phi(x) ]`.
pub fn fd_loglik<T: Real>(group: &QueryGroup<T>, part: &OrderedPartition, w: &[T]) -> Result<T> {
    check_partition(group, part)?;
    let cache = ScoreCache::compute_slice(group, w)?;

    let mut loglik = T::zero();
    let mut remainder = ExpSum::new(0);
    for block in part.blocks().iter().rev() {
        let mut block_sum = ExpSum::new(0);
        for &i in block {
            block_sum.add_scalar(cache.scores[i]);
            remainder.add_scalar(cache.scores[i]);
        }
        loglik += block_sum.log_sum() - remainder.log_sum();
    }
    Ok(loglik)
}

/// Exact log-probability of the partition, restoring the per-stage constant
/// `log C_k + log |X_k|` with `C_k = (2^{N_k}-1)/N_k`. Used by the
/// enumeration oracle; the constant has no gradient so training never pays
/// for it.
pub fn fd_loglik_exact<T: Real>(
    group: &QueryGroup<T>,
    part: &OrderedPartition,
    w: &[T],
) -> Result<T> {
    let mut loglik = fd_loglik(group, part, w)?;
    let mut remaining = 0u64;
    for block in part.blocks().iter().rev() {
        remaining += block.len() as u64;
        loglik -= T::cast(log_constant_c(remaining)?);
        loglik -= T::cast_usize(block.len()).ln();
    }
    Ok(loglik)
}

/// Gradient of [`fd_loglik`] with respect to `w`:
/// `sum_k [ softmax-mean of X_k - softmax-mean of R_k ]`, one backward pass,
/// O(N*F).
pub fn fd_gradient<T: Real>(
    group: &QueryGroup<T>,
    part: &OrderedPartition,
    w: &[T],
) -> Result<Vec<T>> {
    check_partition(group, part)?;
    let cache = ScoreCache::compute_slice(group, w)?;
    let f = w.len();

    let mut grad = vec![T::zero(); f];
    let mut remainder = ExpSum::new(f);
    for block in part.blocks().iter().rev() {
        let mut block_sum = ExpSum::new(f);
        for &i in block {
            block_sum.add(cache.scores[i], &group.docs[i]);
            remainder.add(cache.scores[i], &group.docs[i]);
        }
        block_sum.accumulate_mean(T::one(), &mut grad);
        remainder.accumulate_mean(-T::one(), &mut grad);
    }
    Ok(grad)
}

/// Reference log-likelihood recomputing each remainder sum from scratch,
/// O(N^2). Kept for cross-checking the backward pass.
pub fn fd_loglik_naive<T: Real>(
    group: &QueryGroup<T>,
    part: &OrderedPartition,
    w: &[T],
) -> Result<T> {
    check_partition(group, part)?;
    let cache = ScoreCache::compute_slice(group, w)?;
    let blocks = part.blocks();

    let mut loglik = T::zero();
    for k in 0..blocks.len() {
        let block_scores: Vec<T> = blocks[k].iter().map(|&i| cache.scores[i]).collect();
        let remainder_scores: Vec<T> = blocks[k..]
            .iter()
            .flatten()
            .map(|&i| cache.scores[i])
            .collect();
        loglik += log_sum_exp(&block_scores)? - log_sum_exp(&remainder_scores)?;
    }
    Ok(loglik)
}

/// Reference gradient, O(N^2 * F).
pub fn fd_gradient_naive<T: Real>(
    group: &QueryGroup<T>,
    part: &OrderedPartition,
    w: &[T],
) -> Result<Vec<T>> {
    check_partition(group, part)?;
    let cache = ScoreCache::compute_slice(group, w)?;
    let blocks = part.blocks();
    let f = w.len();

    let mut grad = vec![T::zero(); f];
    for k in 0..blocks.len() {
        let mut block_sum = ExpSum::new(f);
        for &i in &blocks[k] {
            block_sum.add(cache.scores[i], &group.docs[i]);
        }
        let mut remainder = ExpSum::new(f);
        for &i in blocks[k..].iter().flatten() {
            remainder.add(cache.scores[i], &group.docs[i]);
        }
        block_sum.accumulate_mean(T::one(), &mut grad);
        remainder.accumulate_mean(-T::one(), &mut grad);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{partition_by_labels, FeatureVector, QueryGroup};
    use crate::scoring::log_add_exp;
    use crate::synthetic::{random_group, random_weights};

    fn scored_group(scores: &[f64], labels: &[u32]) -> (QueryGroup<f64>, Vec<f64>) {
        let docs = scores.iter().map(|&s| FeatureVector(vec![s])).collect();
        let g = QueryGroup::new("q", docs, labels.to_vec()).unwrap();
        (g, vec![1.0])
    }

    #[test]
    fn all_tied_query_has_zero_loglik_and_gradient() {
        let (g, w) = scored_group(&[0.3, -1.0, 2.0], &[1, 1, 1]);
        let p = partition_by_labels(&g);
        assert_eq!(fd_loglik(&g, &p, &w).unwrap(), 0.0);
        let grad = fd_gradient(&g, &p, &w).unwrap();
        assert!(grad.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn symmetric_two_doc_query() {
        let (g, w) = scored_group(&[0.0, 0.0], &[1, 0]);
        let p = partition_by_labels(&g);
        assert!((fd_loglik(&g, &p, &w).unwrap() - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_three_doc_query() {
        // phi = [2, 1, 1], blocks [{0,1},{2}]: stage 1 = (2+1)/(2+1+1), stage 2 = 1
        let (g, w) = scored_group(&[2.0f64.ln(), 0.0, 0.0], &[1, 1, 0]);
        let p = partition_by_labels(&g);
        assert!((fd_loglik(&g, &p, &w).unwrap() - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exact_loglik_restores_constants() {
        // single block of two equal potentials: p = 1/3
        let (g, w) = scored_group(&[0.7, 0.7], &[2, 2]);
        let p = partition_by_labels(&g);
        assert!((fd_loglik_exact(&g, &p, &w).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-12);

        // singletons with phi = [2, 1]: 2/4.5 at stage 1, then 1 => 4/9
        let (g, w) = scored_group(&[2.0f64.ln(), 0.0], &[1, 0]);
        let p = partition_by_labels(&g);
        assert!((fd_loglik_exact(&g, &p, &w).unwrap() - (4.0f64 / 9.0).ln()).abs() < 1e-12);

        // one document: single outcome, probability 1
        let (g, w) = scored_group(&[1.3], &[0]);
        let p = partition_by_labels(&g);
        assert!(fd_loglik_exact(&g, &p, &w).unwrap().abs() < 1e-15);
    }

    #[test]
    fn uniform_weights_give_plain_means_for_singleton_blocks() {
        // w = 0: softmax degenerates to uniform, grad = sum_k [x_(k) - mean(R_k)]
        let docs = vec![
            FeatureVector(vec![1.0, 0.0]),
            FeatureVector(vec![0.0, 2.0]),
            FeatureVector(vec![3.0, 1.0]),
        ];
        let g = QueryGroup::<f64>::new("q", docs, vec![2, 1, 0]).unwrap();
        let p = partition_by_labels(&g);
        let grad = fd_gradient(&g, &p, &[0.0, 0.0]).unwrap();
        let expect = [
            (1.0 - (1.0 + 0.0 + 3.0) / 3.0) + (0.0 - (0.0 + 3.0) / 2.0),
            (0.0 - (0.0 + 2.0 + 1.0) / 3.0) + (2.0 - (2.0 + 1.0) / 2.0),
        ];
        for (a, b) in grad.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dp_matches_naive_on_random_instances() {
        for seed in 0..20u64 {
            let g = random_group::<f64>(seed, 50, 10, 4);
            let w = random_weights::<f64>(seed ^ 0xABCD, 10);
            let p = partition_by_labels(&g);
            let a = fd_loglik(&g, &p, &w).unwrap();
            let b = fd_loglik_naive(&g, &p, &w).unwrap();
            assert!((a - b).abs() < 1e-10, "loglik mismatch {a} vs {b}");
            let ga = fd_gradient(&g, &p, &w).unwrap();
            let gb = fd_gradient_naive(&g, &p, &w).unwrap();
            for (x, y) in ga.iter().zip(gb.iter()) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = random_group::<f64>(11, 4, 3, 3);
        let w = random_weights::<f64>(5, 3);
        let p = partition_by_labels(&g);
        let grad = fd_gradient(&g, &p, &w).unwrap();
        let h = 1e-5;
        for i in 0..w.len() {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let fd =
                (fd_loglik(&g, &p, &wp).unwrap() - fd_loglik(&g, &p, &wm).unwrap()) / (2.0 * h);
            let denom = grad[i].abs().max(fd.abs()).max(1e-8);
            assert!((grad[i] - fd).abs() / denom < 1e-6);
        }
    }

    #[test]
    fn accumulator_recurrence_and_monotonicity() {
        let g = random_group::<f64>(3, 12, 4, 4);
        let w = random_weights::<f64>(4, 4);
        let p = partition_by_labels(&g);
        let acc = stage_accumulators(&g, &p, &w).unwrap();
        let cache = ScoreCache::compute_slice(&g, &w).unwrap();
        let k = p.block_count();
        for kk in 0..k - 1 {
            // a_k = a_{k+1} + sum_{x in X_k} phi(x)
            let block_scores: Vec<f64> = p.blocks()[kk].iter().map(|&i| cache.scores[i]).collect();
            let rebuilt = log_add_exp(acc.log_sums[kk + 1], log_sum_exp(&block_scores).unwrap());
            assert!((acc.log_sums[kk] - rebuilt).abs() < 1e-10);
            // remainder sets shrink
            assert!(acc.log_sums[kk] >= acc.log_sums[kk + 1]);
        }
        // row shape
        assert_eq!(acc.feature_sums.len(), k);
        assert!(acc.feature_sums.iter().all(|r| r.len() == w.len()));
    }

    #[test]
    fn loglik_is_invariant_to_score_shifts() {
        // adding a constant to every score leaves every stage probability
        // unchanged, so the log-likelihood is shift-invariant
        let scores = [0.4, -1.1, 0.9, 0.0, 2.2];
        let labels = [2, 0, 1, 1, 2];
        for c in [-50.0, -1.0, 3.5, 120.0] {
            let (g, w) = scored_group(&scores, &labels);
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            let (gs, _) = scored_group(&shifted, &labels);
            let p = partition_by_labels(&g);
            let a = fd_loglik(&g, &p, &w).unwrap();
            let b = fd_loglik(&gs, &p, &w).unwrap();
            assert!((a - b).abs() < 1e-12, "shift {c}: {a} vs {b}");
            let ga = fd_gradient(&g, &p, &w).unwrap();
            let gb = fd_gradient(&gs, &p, &w).unwrap();
            // the single feature is the score itself, so gradients also agree
            assert!((ga[0] - gb[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_probabilities_sum_to_one_over_the_enumeration() {
        use crate::oracle::enumerate_ordered_partitions;
        for seed in [1u64, 2, 3] {
            for n in 2..=5usize {
                let g = random_group::<f64>(seed ^ (n as u64) << 4, n, 3, 4);
                let w = random_weights::<f64>(seed ^ 0xF00D, 3);
                let total: f64 = enumerate_ordered_partitions(n)
                    .unwrap()
                    .map(|part| fd_loglik_exact(&g, &part, &w).unwrap().exp())
                    .sum();
                assert!(
                    (total - 1.0).abs() < 1e-9,
                    "sum {total} at n={n} seed={seed}"
                );
            }
        }
    }

    #[test]
    fn extreme_score_spread_stays_finite() {
        let (g, w) = scored_group(&[0.0, -800.0], &[1, 0]);
        let p = partition_by_labels(&g);
        let ll = fd_loglik(&g, &p, &w).unwrap();
        assert!(ll.is_finite());
        // stage 2 is a sure pick; stage 1 probability ~ 1
        assert!(ll.abs() < 1e-12);
        let grad = fd_gradient(&g, &p, &w).unwrap();
        assert!(grad.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn f32_agrees_with_f64_at_reduced_precision() {
        let g64 = random_group::<f64>(21, 8, 3, 4);
        let w64 = random_weights::<f64>(22, 3);
        let g32 = QueryGroup::<f32>::new(
            g64.query_id.clone(),
            g64.docs
                .iter()
                .map(|d| FeatureVector(d.iter().map(|&v| v as f32).collect()))
                .collect(),
            g64.labels.clone(),
        )
        .unwrap();
        let w32: Vec<f32> = w64.iter().map(|&v| v as f32).collect();
        let p = partition_by_labels(&g64);
        let a = fd_loglik(&g64, &p, &w64).unwrap();
        let b = fd_loglik(&g32, &p, &w32).unwrap() as f64;
        assert!((a - b).abs() < 1e-4);
    }
}
