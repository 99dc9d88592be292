//! Comparison losses: ListMLE (Plackett-Luce), the three pairwise losses,
//! and the Rao-Kupper and Davidson paired tie models.
//!
//! Pairwise losses skip tied pairs; tie models score every pair, tied or
//! not. Pairwise-family gradients are accumulated as per-document
//! coefficients first and multiplied through the feature matrix once, so
//! the cost is O(N^2 + N*F) rather than O(N^2 * F).

use crate::data::QueryGroup;
use crate::error::Result;
use crate::num::Real;
use crate::scoring::{ExpSum, ScoreCache};

/// Tie-model parameters in their unconstrained form: Rao-Kupper's
/// `theta = 1 + exp(alpha)` keeps theta > 1, Davidson's `nu = exp(beta)`
/// keeps nu > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieParams<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> Default for TieParams<T> {
    fn default() -> Self {
        TieParams {
            alpha: T::zero(),
            beta: T::zero(),
        }
    }
}

/// Gradient of a tie-model log-likelihood: the weight part plus the single
/// tie parameter (alpha or beta).
#[derive(Debug, Clone, PartialEq)]
pub struct TieGradient<T> {
    pub weights: Vec<T>,
    pub tie: T,
}

/// Documents sorted by label descending, ties broken by ascending original
/// index (stable sort).
fn listmle_order<T: Real>(group: &QueryGroup<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..group.len()).collect();
    order.sort_by(|&a, &b| group.labels[b].cmp(&group.labels[a]));
    order
}

/// Plackett-Luce log-likelihood of the label-sorted permutation:
/// `sum_i [ f(x_pi_i) - log sum_{j >= i} exp f(x_pi_j) ]`.
pub fn listmle_loglik<T: Real>(group: &QueryGroup<T>, w: &[T]) -> Result<T> {
    let cache = ScoreCache::compute_slice(group, w)?;
    let order = listmle_order(group);
    let mut suffix = ExpSum::new(0);
    let mut loglik = T::zero();
    for &i in order.iter().rev() {
        suffix.add_scalar(cache.scores[i]);
        loglik += cache.scores[i] - suffix.log_sum();
    }
    Ok(loglik)
}

/// Gradient of [`listmle_loglik`], one backward suffix pass, O(N*F).
pub fn listmle_gradient<T: Real>(group: &QueryGroup<T>, w: &[T]) -> Result<Vec<T>> {
    let cache = ScoreCache::compute_slice(group, w)?;
    let order = listmle_order(group);
    let f = w.len();
    let mut suffix = ExpSum::new(f);
    let mut grad = vec![T::zero(); f];
    for &i in order.iter().rev() {
        suffix.add(cache.scores[i], &group.docs[i]);
        for (g, &x) in grad.iter_mut().zip(group.docs[i].iter()) {
            *g += x;
        }
        suffix.accumulate_mean(-T::one(), &mut grad);
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairwiseKind {
    /// `log(1 + exp(-delta))`, RankNet.
    Logistic,
    /// `max{0, 1 - delta}`, ranking SVM.
    Hinge,
    /// `(1 - delta)^2`, rank regression.
    Quadratic,
}

fn pair_loss<T: Real>(kind: PairwiseKind, delta: T) -> T {
    match kind {
        PairwiseKind::Logistic => {
            // log(1 + e^-d) = max(0, -d) + log1p(e^-|d|)
            T::zero().max(-delta) + (-delta.abs()).exp().ln_1p()
        }
        PairwiseKind::Hinge => T::zero().max(T::one() - delta),
        PairwiseKind::Quadratic => (T::one() - delta) * (T::one() - delta),
    }
}

fn pair_loss_slope<T: Real>(kind: PairwiseKind, delta: T) -> T {
    match kind {
        PairwiseKind::Logistic => {
            // -sigmoid(-d), computed on the non-overflowing side
            if delta >= T::zero() {
                let e = (-delta).exp();
                -e / (T::one() + e)
            } else {
                -T::one() / (T::one() + delta.exp())
            }
        }
        PairwiseKind::Hinge => {
            if delta < T::one() {
                -T::one()
            } else {
                T::zero()
            }
        }
        PairwiseKind::Quadratic => -T::cast(2.0) * (T::one() - delta),
    }
}

/// Sum over strictly ordered pairs (higher label preferred) of the chosen
/// loss on the score difference; tied pairs are ignored.
pub fn pairwise_loss<T: Real>(group: &QueryGroup<T>, w: &[T], kind: PairwiseKind) -> Result<T> {
    let cache = ScoreCache::compute_slice(group, w)?;
    let n = group.len();
    let mut total = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            if group.labels[i] == group.labels[j] {
                continue;
            }
            let (hi, lo) = if group.labels[i] > group.labels[j] {
                (i, j)
            } else {
                (j, i)
            };
            total += pair_loss(kind, cache.scores[hi] - cache.scores[lo]);
        }
    }
    Ok(total)
}

/// Gradient of [`pairwise_loss`] with respect to `w`.
pub fn pairwise_gradient<T: Real>(
    group: &QueryGroup<T>,
    w: &[T],
    kind: PairwiseKind,
) -> Result<Vec<T>> {
    let cache = ScoreCache::compute_slice(group, w)?;
    let n = group.len();
    let mut coeff = vec![T::zero(); n];
    for i in 0..n {
        for j in i + 1..n {
            if group.labels[i] == group.labels[j] {
                continue;
            }
            let (hi, lo) = if group.labels[i] > group.labels[j] {
                (i, j)
            } else {
                (j, i)
            };
            let slope = pair_loss_slope(kind, cache.scores[hi] - cache.scores[lo]);
            coeff[hi] += slope;
            coeff[lo] -= slope;
        }
    }
    let mut grad = vec![T::zero(); w.len()];
    for (i, &c) in coeff.iter().enumerate() {
        if c != T::zero() {
            for (g, &x) in grad.iter_mut().zip(group.docs[i].iter()) {
                *g += c * x;
            }
        }
    }
    Ok(grad)
}

/// `P(i beats j)` under Bradley-Terry with exponential-score worths, the
/// common limit of both tie models as their tie mass vanishes.
pub fn bradley_terry_prob<T: Real>(f_i: T, f_j: T) -> T {
    T::one() / (T::one() + (f_j - f_i).exp())
}

/// `log(theta^2 - 1)` for `theta = 1 + exp(alpha)`, stable on both sides.
fn log_theta_sq_minus_one<T: Real>(alpha: T) -> T {
    let two = T::cast(2.0);
    if alpha > T::zero() {
        two * alpha + (two * (-alpha).exp()).ln_1p()
    } else {
        alpha + (two + alpha.exp()).ln()
    }
}

/// Rao-Kupper probability masses `[P(i>j), P(i<j), P(i~j)]`,
/// `theta = 1 + exp(alpha)`; summing to 1 identically.
pub fn rao_kupper_masses<T: Real>(f_i: T, f_j: T, alpha: T) -> [T; 3] {
    let m = f_i.max(f_j);
    let u = (f_i - m).exp();
    let v = (f_j - m).exp();
    let theta = T::one() + alpha.exp();
    let d1 = u + theta * v;
    let d2 = theta * u + v;
    let tie = (theta * theta - T::one()) * u * v / (d1 * d2);
    [u / d1, v / d2, tie]
}

/// Davidson probability masses `[P(i>j), P(i<j), P(i~j)]`, `nu = exp(beta)`.
pub fn davidson_masses<T: Real>(f_i: T, f_j: T, beta: T) -> [T; 3] {
    let m = f_i.max(f_j);
    let u = (f_i - m).exp();
    let v = (f_j - m).exp();
    let half = T::cast(0.5);
    let s = (half * (f_i - m) + half * (f_j - m)).exp(); // sqrt(u v) without underflow
    let nu = beta.exp();
    let d = u + v + nu * s;
    [u / d, v / d, nu * s / d]
}

/// Rao-Kupper log-likelihood over all document pairs (tied pairs included),
/// with per-pair max-shift.
pub fn rao_kupper_loglik<T: Real>(
    group: &QueryGroup<T>,
    w: &[T],
    params: &TieParams<T>,
) -> Result<T> {
    let cache = ScoreCache::compute_slice(group, w)?;
    let theta = T::one() + params.alpha.exp();
    let n = group.len();
    let mut loglik = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let (f_i, f_j) = (cache.scores[i], cache.scores[j]);
            let m = f_i.max(f_j);
            let u = (f_i - m).exp();
            let v = (f_j - m).exp();
            let ln_d1 = (u + theta * v).ln();
            let ln_d2 = (theta * u + v).ln();
            loglik += if group.labels[i] > group.labels[j] {
                (f_i - m) - ln_d1
            } else if group.labels[i] < group.labels[j] {
                (f_j - m) - ln_d2
            } else {
                log_theta_sq_minus_one(params.alpha) + (f_i - m) + (f_j - m) - ln_d1 - ln_d2
            };
        }
    }
    Ok(loglik)
}

/// Gradient of [`rao_kupper_loglik`] in `(w, alpha)`.
pub fn rao_kupper_gradient<T: Real>(
    group: &QueryGroup<T>,
    w: &[T],
    params: &TieParams<T>,
) -> Result<TieGradient<T>> {
    let cache = ScoreCache::compute_slice(group, w)?;
    let e_alpha = params.alpha.exp();
    let theta = T::one() + e_alpha;
    let n = group.len();
    let mut coeff = vec![T::zero(); n];
    let mut tie_grad = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let (f_i, f_j) = (cache.scores[i], cache.scores[j]);
            let m = f_i.max(f_j);
            let u = (f_i - m).exp();
            let v = (f_j - m).exp();
            let d1 = u + theta * v;
            let d2 = theta * u + v;
            // four conditional masses sharing the two denominators
            let p_i = u / d1;
            let p_j_star = v / d1;
            let p_i_star = u / d2;
            let p_j = v / d2;
            if group.labels[i] > group.labels[j] {
                coeff[i] += T::one() - p_i;
                coeff[j] -= theta * p_j_star;
                tie_grad -= e_alpha * p_j_star;
            } else if group.labels[i] < group.labels[j] {
                coeff[j] += T::one() - p_j;
                coeff[i] -= theta * p_i_star;
                tie_grad -= e_alpha * p_i_star;
            } else {
                coeff[i] += T::one() - p_i - theta * p_i_star;
                coeff[j] += T::one() - p_j - theta * p_j_star;
                // e^a * 2 theta / (theta^2 - 1) simplifies to 2 theta / (e^a + 2)
                tie_grad += T::cast(2.0) * theta / (e_alpha + T::cast(2.0))
                    - e_alpha * (p_i_star + p_j_star);
            }
        }
    }
    let mut weights = vec![T::zero(); w.len()];
    for (i, &c) in coeff.iter().enumerate() {
        if c != T::zero() {
            for (g, &x) in weights.iter_mut().zip(group.docs[i].iter()) {
                *g += c * x;
            }
        }
    }
    Ok(TieGradient {
        weights,
        tie: tie_grad,
    })
}

/// Davidson log-likelihood over all document pairs.
pub fn davidson_loglik<T: Real>(
    group: &QueryGroup<T>,
    w: &[T],
    params: &TieParams<T>,
) -> Result<T> {
    let cache = ScoreCache::compute_slice(group, w)?;
    let nu = params.beta.exp();
    let half = T::cast(0.5);
    let n = group.len();
    let mut loglik = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let (f_i, f_j) = (cache.scores[i], cache.scores[j]);
            let m = f_i.max(f_j);
            let u = (f_i - m).exp();
            let v = (f_j - m).exp();
            let s = (half * (f_i - m) + half * (f_j - m)).exp();
            let ln_d = (u + v + nu * s).ln();
            loglik += if group.labels[i] > group.labels[j] {
                (f_i - m) - ln_d
            } else if group.labels[i] < group.labels[j] {
                (f_j - m) - ln_d
            } else {
                params.beta + half * (f_i - m) + half * (f_j - m) - ln_d
            };
        }
    }
    Ok(loglik)
}

/// Gradient of [`davidson_loglik`] in `(w, beta)`.
pub fn davidson_gradient<T: Real>(
    group: &QueryGroup<T>,
    w: &[T],
    params: &TieParams<T>,
) -> Result<TieGradient<T>> {
    let cache = ScoreCache::compute_slice(group, w)?;
    let nu = params.beta.exp();
    let half = T::cast(0.5);
    let n = group.len();
    let mut coeff = vec![T::zero(); n];
    let mut tie_grad = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let (f_i, f_j) = (cache.scores[i], cache.scores[j]);
            let m = f_i.max(f_j);
            let u = (f_i - m).exp();
            let v = (f_j - m).exp();
            let s = (half * (f_i - m) + half * (f_j - m)).exp();
            let d = u + v + nu * s;
            let p_i = u / d;
            let p_j = v / d;
            let p_ij = nu * s / d;
            if group.labels[i] > group.labels[j] {
                coeff[i] += T::one() - p_i - half * p_ij;
                coeff[j] -= p_j + half * p_ij;
                tie_grad -= p_ij;
            } else if group.labels[i] < group.labels[j] {
                coeff[j] += T::one() - p_j - half * p_ij;
                coeff[i] -= p_i + half * p_ij;
                tie_grad -= p_ij;
            } else {
                coeff[i] += half - p_i - half * p_ij;
                coeff[j] += half - p_j - half * p_ij;
                tie_grad += T::one() - p_ij;
            }
        }
    }
    let mut weights = vec![T::zero(); w.len()];
    for (i, &c) in coeff.iter().enumerate() {
        if c != T::zero() {
            for (g, &x) in weights.iter_mut().zip(group.docs[i].iter()) {
                *g += c * x;
            }
        }
    }
    Ok(TieGradient {
        weights,
        tie: tie_grad,
    })
}
