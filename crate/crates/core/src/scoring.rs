//! Linear scoring and numerically stable softmax utilities.
//!
//! Individual potentials are exponential in the score, `phi(x) = exp{f(x,w)}`.
//! Nothing in this crate exponentiates a raw score: every sum of potentials
//! goes through a max-shift, either via [`log_sum_exp`] or the streaming
//! [`ExpSum`] accumulator, so scores far beyond +-709 stay representable.

use crate::data::{QueryGroup, WeightVector};
use crate::error::{Error, Result};
use crate::num::Real;

/// Dot product `w . x`; the scoring function.
pub fn score<T: Real>(x: &[T], w: &[T]) -> Result<T> {
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "feature vector has {} entries, weight vector has {}",
            x.len(),
            w.len()
        )));
    }
    Ok(dot(x, w))
}

/// Log of the per-object potential `phi(x) = exp{f(x,w)}`, i.e. the score
/// itself. Callers exponentiate only after subtracting a shift.
pub fn log_potential<T: Real>(x: &[T], w: &[T]) -> Result<T> {
    score(x, w)
}

pub(crate) fn dot<T: Real>(x: &[T], w: &[T]) -> T {
    x.iter().zip(w.iter()).map(|(&a, &b)| a * b).sum()
}

/// `log sum_i exp(v_i)` via max-shift. Errors on empty input.
pub fn log_sum_exp<T: Real>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::InvalidInput("log_sum_exp of empty sequence".into()));
    }
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if max.is_infinite() {
        return Ok(max);
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Stable `log(exp(a) + exp(b))`.
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi.is_infinite() && hi < T::zero() {
        return hi; // both -inf
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Per-query score cache: all document scores plus the max-score shift used
/// when potentials are exponentiated.
#[derive(Debug, Clone)]
pub struct ScoreCache<T> {
    pub scores: Vec<T>,
    pub shift: T,
}

impl<T: Real> ScoreCache<T> {
    pub fn compute(group: &QueryGroup<T>, w: &WeightVector<T>) -> Result<Self> {
        Self::compute_slice(group, w)
    }

    pub fn compute_slice(group: &QueryGroup<T>, w: &[T]) -> Result<Self> {
        let mut scores = Vec::with_capacity(group.len());
        for d in &group.docs {
            scores.push(score(d, w)?);
        }
        let shift = scores.iter().copied().fold(T::neg_infinity(), T::max);
        Ok(ScoreCache { scores, shift })
    }

    /// `exp(f_i - shift)`, always in (0, 1].
    pub fn shifted_exp(&self, i: usize) -> T {
        (self.scores[i] - self.shift).exp()
    }
}

/// Streaming accumulator for `sum exp(s_i)` and `sum exp(s_i) * x_i`,
/// rescaling on the fly so the running terms stay relative to the largest
/// score seen so far. Feature length 0 gives a scalar-only accumulator.
#[derive(Debug, Clone)]
pub(crate) struct ExpSum<T> {
    shift: T,
    weight: T,
    features: Vec<T>,
}

impl<T: Real> ExpSum<T> {
    pub fn new(feature_len: usize) -> Self {
        ExpSum {
            shift: T::neg_infinity(),
            weight: T::zero(),
            features: vec![T::zero(); feature_len],
        }
    }

    pub fn add(&mut self, s: T, x: &[T]) {
        if s > self.shift {
            let scale = (self.shift - s).exp(); // 0 when shift is -inf
            self.weight *= scale;
            for v in &mut self.features {
                *v *= scale;
            }
            self.shift = s;
        }
        let w = (s - self.shift).exp();
        self.weight += w;
        for (v, &xi) in self.features.iter_mut().zip(x.iter()) {
            *v += w * xi;
        }
    }

    pub fn add_scalar(&mut self, s: T) {
        self.add(s, &[]);
    }

    /// `log sum exp(s_i)`; -inf when empty.
    pub fn log_sum(&self) -> T {
        self.shift + self.weight.ln()
    }

    /// Adds `sign * softmax-weighted mean` of the accumulated features into `out`.
    pub fn accumulate_mean(&self, sign: T, out: &mut [T]) {
        for (o, &v) in out.iter_mut().zip(self.features.iter()) {
            *o += sign * (v / self.weight);
        }
    }

    pub fn shift(&self) -> T {
        self.shift
    }

    pub fn weight(&self) -> T {
        self.weight
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }
}
