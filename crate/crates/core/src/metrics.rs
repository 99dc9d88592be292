//! Ranking quality metrics: NDCG@T and ERR, per query and averaged over a
//! dataset.

use std::fmt;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::scoring::score;

/// A predicted ordering (document indices, best first) together with the
/// per-document relevance grades.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    order: Vec<usize>,
    labels: Vec<u32>,
}

impl RankedList {
    /// `order` must be a permutation of `0..labels.len()`.
    pub fn new(order: Vec<usize>, labels: Vec<u32>) -> Result<Self> {
        if order.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "order has {} entries, labels {}",
                order.len(),
                labels.len()
            )));
        }
        let mut seen = vec![false; labels.len()];
        for &i in &order {
            if i >= labels.len() || seen[i] {
                return Err(Error::InvalidInput("order is not a permutation".into()));
            }
            seen[i] = true;
        }
        Ok(RankedList { order, labels })
    }

    /// Ranks by score descending; equal scores keep ascending document
    /// index, so the ranking is a deterministic function of the scores.
    pub fn from_scores<T: Real>(scores: &[T], labels: &[u32]) -> Self {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        RankedList {
            order,
            labels: labels.to_vec(),
        }
    }

    /// Grade of the document at rank position `i` (0-based).
    fn grade_at(&self, i: usize) -> u32 {
        self.labels[self.order[i]]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

fn gain(r: u32) -> f64 {
    2f64.powi(r as i32) - 1.0
}

fn dcg_prefix(grades: impl Iterator<Item = u32>, t: usize) -> f64 {
    grades
        .take(t)
        .enumerate()
        .map(|(i, r)| gain(r) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@T: DCG of the predicted prefix over the DCG of the ideal
/// (label-descending) prefix. Defined as 1 when the ideal DCG is zero (all
/// labels zero): any order is correct.
pub fn ndcg_at<T: Real>(list: &RankedList, t: usize) -> T {
    assert!(t >= 1, "ndcg truncation must be >= 1");
    let dcg = dcg_prefix((0..list.len()).map(|i| list.grade_at(i)), t);
    let mut ideal = list.labels.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let norm = dcg_prefix(ideal.into_iter(), t);
    if norm == 0.0 {
        T::one()
    } else {
        T::cast(dcg / norm)
    }
}

/// Expected reciprocal rank with satisfaction probability
/// `V(r) = (2^r - 1) / 2^max_grade`.
pub fn err_with_max_grade<T: Real>(list: &RankedList, max_grade: u32) -> T {
    let denom = 2f64.powi(max_grade as i32);
    let mut continue_prob = 1.0f64;
    let mut total = 0.0f64;
    for i in 0..list.len() {
        let v = gain(list.grade_at(i)) / denom;
        total += continue_prob * v / (i + 1) as f64;
        continue_prob *= 1.0 - v;
    }
    T::cast(total)
}

/// ERR on the standard five-grade scale (max grade 4, denominator 16).
pub fn err<T: Real>(list: &RankedList) -> T {
    err_with_max_grade(list, 4)
}

/// Mean metrics over the test queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T> {
    pub query_count: usize,
    pub mean_err: T,
    /// `(T, mean NDCG@T)` per requested truncation.
    pub mean_ndcg: Vec<(usize, T)>,
}

impl<T: Real> EvalReport<T> {
    /// Machine-readable `key=value` lines.
    pub fn key_value_lines(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("queries={}\n", self.query_count));
        out.push_str(&format!("err={}\n", self.mean_err));
        for (t, v) in &self.mean_ndcg {
            out.push_str(&format!("ndcg@{t}={v}\n"));
        }
        out
    }
}

impl<T: Real> fmt::Display for EvalReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.key_value_lines())
    }
}

/// Scores every query with `w`, ranks with the deterministic tie-break, and
/// averages ERR and NDCG@T over queries. The ERR grade base is the larger
/// of the standard 4 and the dataset's own maximum grade.
pub fn evaluate<T: Real>(ds: &Dataset<T>, w: &[T], ts: &[usize]) -> Result<EvalReport<T>> {
    if ds.is_empty() {
        return Err(Error::InvalidInput(
            "cannot evaluate an empty dataset".into(),
        ));
    }
    let max_grade = ds.max_label().max(4);
    let mut err_sum = T::zero();
    let mut ndcg_sums = vec![T::zero(); ts.len()];
    for group in &ds.groups {
        let mut scores = Vec::with_capacity(group.len());
        for d in &group.docs {
            scores.push(score(d, w)?);
        }
        let list = RankedList::from_scores(&scores, &group.labels);
        err_sum += err_with_max_grade(&list, max_grade);
        for (slot, &t) in ndcg_sums.iter_mut().zip(ts.iter()) {
            *slot += ndcg_at(&list, t);
        }
    }
    let n = T::cast_usize(ds.len());
    Ok(EvalReport {
        query_count: ds.len(),
        mean_err: err_sum / n,
        mean_ndcg: ts
            .iter()
            .copied()
            .zip(ndcg_sums.into_iter().map(|s| s / n))
            .collect(),
    })
}
