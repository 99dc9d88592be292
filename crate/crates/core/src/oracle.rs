//! Exact combinatorial references: Stirling/Fubini counting, exhaustive
//! enumeration of ordered partitions, the closed-form stage constant, and
//! brute-force model distributions.
//!
//! Everything here is deliberately computed the slow, obvious way (exact
//! big-integer counting, per-stage sums from scratch) so it can serve as an
//! independent check on the dynamic-programming and sampling paths.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::data::{FeatureVector, OrderedPartition, QueryGroup};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::labeled_rng;
use crate::scoring::{log_sum_exp, ScoreCache};

/// Largest `n` accepted by [`enumerate_ordered_partitions`]; Fubini(8) =
/// 545,835 outcomes is still tractable, beyond that is not.
pub const MAX_ENUMERATION_N: usize = 8;

/// Stirling number of the second kind via the recurrence
/// `S(n,k) = k*S(n-1,k) + S(n-1,k-1)`, exact.
pub fn stirling2(n: u64, k: u64) -> Result<BigUint> {
    if k > n {
        return Err(Error::InvalidInput(format!(
            "stirling2: k={k} exceeds n={n}"
        )));
    }
    Ok(stirling_row(n)[k as usize].clone())
}

/// Row `S(n, 0..=n)` of the Stirling triangle.
fn stirling_row(n: u64) -> Vec<BigUint> {
    let n = n as usize;
    let mut row = vec![BigUint::zero(); n + 1];
    row[0] = BigUint::one();
    for i in 1..=n {
        for j in (1..=i).rev() {
            let v = BigUint::from(j as u64) * &row[j] + &row[j - 1];
            row[j] = v;
        }
        row[0] = BigUint::zero();
    }
    row
}

/// Number of ordered partitions of an n-set: `sum_k S(n,k) * k!`, exact.
pub fn fubini(n: u64) -> Result<BigUint> {
    if n < 1 {
        return Err(Error::InvalidInput("fubini requires n >= 1".into()));
    }
    let row = stirling_row(n);
    let mut total = BigUint::zero();
    let mut factorial = BigUint::one();
    for (k, s) in row.iter().enumerate().skip(1) {
        factorial *= BigUint::from(k as u64);
        total += s * &factorial;
    }
    Ok(total)
}

/// Lazy enumeration of every ordered partition of `{0..n-1}`, exactly once,
/// in the pinned order: block count ascending, then lexicographic on the
/// canonical block sequences.
pub struct OrderedPartitionEnumeration {
    n: usize,
    next_block_count: usize,
    batch: std::vec::IntoIter<OrderedPartition>,
}

impl Iterator for OrderedPartitionEnumeration {
    type Item = OrderedPartition;

    fn next(&mut self) -> Option<OrderedPartition> {
        loop {
            if let Some(p) = self.batch.next() {
                return Some(p);
            }
            if self.next_block_count > self.n {
                return None;
            }
            self.batch = partitions_with_block_count(self.n, self.next_block_count).into_iter();
            self.next_block_count += 1;
        }
    }
}

pub fn enumerate_ordered_partitions(n: usize) -> Result<OrderedPartitionEnumeration> {
    if n < 1 {
        return Err(Error::InvalidInput("enumeration requires n >= 1".into()));
    }
    if n > MAX_ENUMERATION_N {
        return Err(Error::InvalidInput(format!(
            "enumeration limited to n <= {MAX_ENUMERATION_N}, got {n}"
        )));
    }
    Ok(OrderedPartitionEnumeration {
        n,
        next_block_count: 1,
        batch: Vec::new().into_iter(),
    })
}

/// All ordered partitions with exactly `k` blocks, i.e. surjections of the
/// n elements onto block ids 0..k-1, sorted into the pinned order.
fn partitions_with_block_count(n: usize, k: usize) -> Vec<OrderedPartition> {
    let mut out = Vec::new();
    let mut assign = vec![0usize; n];
    let full: u16 = (1u16 << k) - 1;
    'outer: loop {
        let mut mask = 0u16;
        for &a in &assign {
            mask |= 1 << a;
        }
        if mask == full {
            let mut blocks = vec![Vec::new(); k];
            for (i, &a) in assign.iter().enumerate() {
                blocks[a].push(i);
            }
            out.push(
                OrderedPartition::from_blocks(blocks).expect("surjection yields valid blocks"),
            );
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            assign[pos] += 1;
            if assign[pos] < k {
                break;
            }
            assign[pos] = 0;
        }
    }
    out.sort();
    out
}

/// The stage constant `C = (2^n - 1)/n` in the linear domain; exact for
/// small n, via the stable log form for large n.
pub fn constant_c(n_k: u64) -> Result<f64> {
    if n_k < 1 {
        return Err(Error::InvalidInput("constant_c requires n >= 1".into()));
    }
    if n_k <= 63 {
        Ok(((1u64 << n_k) - 1) as f64 / n_k as f64)
    } else {
        Ok(log_constant_c(n_k)?.exp())
    }
}

/// `log C = n*ln 2 + ln(1 - 2^-n) - ln n`, finite for any n where the naive
/// `2^n` would overflow.
pub fn log_constant_c(n_k: u64) -> Result<f64> {
    if n_k < 1 {
        return Err(Error::InvalidInput("constant_c requires n >= 1".into()));
    }
    let n = n_k as f64;
    let ln2 = std::f64::consts::LN_2;
    Ok(n * ln2 + (-(-(n * ln2)).exp()).ln_1p() - n.ln())
}

/// Which block potential the brute-force distribution uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    /// Size-normalized sum of exponentiated scores.
    FullDecomposition,
    /// Exponential of the mean score.
    General,
}

/// Brute-force probability of every ordered partition of the group's
/// documents under the chosen potential. Requires N <= 6.
pub fn exact_model_distribution<T: Real>(
    group: &QueryGroup<T>,
    w: &[T],
    kind: PotentialKind,
) -> Result<BTreeMap<OrderedPartition, T>> {
    let n = group.len();
    if n > 6 {
        return Err(Error::InvalidInput(format!(
            "exact distribution limited to N <= 6, query {} has {n}",
            group.query_id
        )));
    }
    let cache = ScoreCache::compute_slice(group, w)?;
    let mut out = BTreeMap::new();
    for part in enumerate_ordered_partitions(n)? {
        let logp = exact_partition_log_prob(&cache.scores, &part, kind)?;
        out.insert(part, logp.exp());
    }
    Ok(out)
}

/// Stage-by-stage log-probability computed from scratch.
fn exact_partition_log_prob<T: Real>(
    scores: &[T],
    part: &OrderedPartition,
    kind: PotentialKind,
) -> Result<T> {
    let blocks = part.blocks();
    let mut logp = T::zero();
    for k in 0..blocks.len() {
        let remainder: Vec<usize> = blocks[k..].iter().flatten().copied().collect();
        match kind {
            PotentialKind::FullDecomposition => {
                let block_scores: Vec<T> = blocks[k].iter().map(|&i| scores[i]).collect();
                let rem_scores: Vec<T> = remainder.iter().map(|&i| scores[i]).collect();
                logp += log_sum_exp(&block_scores)? - T::cast_usize(blocks[k].len()).ln();
                logp -= T::cast(log_constant_c(remainder.len() as u64)?);
                logp -= log_sum_exp(&rem_scores)?;
            }
            PotentialKind::General => {
                logp += mean_score(scores, &blocks[k]);
                let mut subset_logphis = Vec::new();
                for mask in 1u32..(1u32 << remainder.len()) {
                    let subset: Vec<usize> = remainder
                        .iter()
                        .enumerate()
                        .filter(|(pos, _)| mask & (1 << pos) != 0)
                        .map(|(_, &i)| i)
                        .collect();
                    subset_logphis.push(mean_score(scores, &subset));
                }
                logp -= log_sum_exp(&subset_logphis)?;
            }
        }
    }
    Ok(logp)
}

fn mean_score<T: Real>(scores: &[T], idx: &[usize]) -> T {
    let sum: T = idx.iter().map(|&i| scores[i]).sum();
    sum / T::cast_usize(idx.len())
}

/// Builds a seeded random instance and returns the probability sums over all
/// ordered partitions for both potentials. Both should be 1 up to
/// enumeration round-off.
pub fn normalization_check(n: usize, seed: u64) -> Result<(f64, f64)> {
    use rand::Rng;
    if !(1..=6).contains(&n) {
        return Err(Error::InvalidInput(
            "normalization check requires 1 <= n <= 6".into(),
        ));
    }
    let feature_count = 3;
    let mut rng = labeled_rng(seed, "normalize-check");
    let docs = (0..n)
        .map(|_| {
            FeatureVector(
                (0..feature_count)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            )
        })
        .collect();
    let group = QueryGroup::<f64>::new("check", docs, vec![0; n])?;
    let w: Vec<f64> = (0..feature_count)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();

    let fd: f64 = exact_model_distribution(&group, &w, PotentialKind::FullDecomposition)?
        .values()
        .sum();
    let general: f64 = exact_model_distribution(&group, &w, PotentialKind::General)?
        .values()
        .sum();
    Ok((fd, general))
}
