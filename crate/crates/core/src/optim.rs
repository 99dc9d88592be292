//! Training drivers: batch L-BFGS for the deterministic losses, stochastic
//! gradient ascent with contrastive-divergence estimates for the general
//! PMOP, and a finite-difference gradient checker.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{partition_by_labels, Dataset, QueryGroup, WeightVector};
use crate::error::{Error, Result};
use crate::loss::LossModel;
use crate::num::Real;
use crate::pmop_general::{
    cd_gradient_estimate, exact_general_gradient, exact_general_loglik, CdConfig, CdEstimate,
};
use crate::rng::labeled_rng;
use crate::scoring::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Lbfgs,
    Sgd,
}

#[derive(Debug, Clone)]
pub struct TrainConfig<T> {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub rel_tol: T,
    pub learning_rate: T,
    pub lbfgs_memory: usize,
    pub l2_lambda: T,
    pub seed: u64,
    pub threads: usize,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Lbfgs,
            max_iters: 100,
            rel_tol: T::cast(1e-5),
            learning_rate: T::cast(0.1),
            lbfgs_memory: 10,
            l2_lambda: T::zero(),
            seed: 42,
            threads: 1,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    /// Stochastic-ascent defaults: fixed learning rate 0.1, 1000 epochs.
    pub fn sgd() -> Self {
        TrainConfig {
            algorithm: Algorithm::Sgd,
            max_iters: 1000,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if self.rel_tol <= T::zero() || self.rel_tol.is_nan() {
            return Err(Error::InvalidInput("rel_tol must be > 0".into()));
        }
        // learning_rate 0 is a legal no-op for SGD; negative rates are not
        if self.learning_rate < T::zero() || !self.learning_rate.is_finite() {
            return Err(Error::InvalidInput(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if self.l2_lambda < T::zero() {
            return Err(Error::InvalidInput("l2_lambda must be >= 0".into()));
        }
        if self.lbfgs_memory < 1 {
            return Err(Error::InvalidInput("lbfgs_memory must be >= 1".into()));
        }
        if self.threads < 1 {
            return Err(Error::InvalidInput("threads must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub final_weights: WeightVector<T>,
    /// Trailing tie parameter (alpha or beta) when the loss has one.
    pub tie_param: Option<T>,
    /// Objective value after each iteration (epoch for SGD); length equals
    /// `iterations_run`.
    pub objective_trace: Vec<T>,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
}

/// Total objective (to maximize) and gradient over the dataset:
/// `sum_q loss(q) - l2 * |w|^2`. Non-finite per-query values are reported
/// with the offending query id.
fn batch_objective<T: Real>(
    ds: &Dataset<T>,
    loss: &dyn LossModel<T>,
    params: &[T],
    l2: T,
    weight_len: usize,
    parallel: bool,
) -> Result<(T, Vec<T>)> {
    let plen = params.len();
    let eval_one = |acc: Result<(T, Vec<T>)>, group: &QueryGroup<T>| -> Result<(T, Vec<T>)> {
        let (obj, mut grad) = acc?;
        let v = loss.eval(group, params, &mut grad)?;
        if !v.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite objective or gradient at query {}",
                group.query_id
            )));
        }
        Ok((obj + v, grad))
    };

    let zero = || Ok((T::zero(), vec![T::zero(); plen]));
    let (mut obj, mut grad) = if parallel {
        ds.groups
            .par_iter()
            .fold(zero, &eval_one)
            .reduce(zero, |a, b| {
                let (oa, ga) = a?;
                let (ob, mut gb) = b?;
                for (x, &y) in gb.iter_mut().zip(ga.iter()) {
                    *x += y;
                }
                Ok((oa + ob, gb))
            })?
    } else {
        let mut acc = zero();
        for g in &ds.groups {
            acc = Ok(eval_one(acc, g)?);
        }
        acc?
    };

    if l2 > T::zero() {
        for i in 0..weight_len {
            obj -= l2 * params[i] * params[i];
            grad[i] -= T::cast(2.0) * l2 * params[i];
        }
    }
    Ok((obj, grad))
}

/// L-BFGS two-loop recursion: approximates `H^{-1} q`.
fn two_loop<T: Real>(q_in: &[T], history: &VecDeque<(Vec<T>, Vec<T>, T)>) -> Vec<T> {
    let mut q = q_in.to_vec();
    if history.is_empty() {
        return q;
    }
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = *rho * dot(s, &q);
        for (qi, &yi) in q.iter_mut().zip(y.iter()) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let (s_last, y_last, _) = history.back().expect("non-empty history");
    let gamma = dot(s_last, y_last) / dot(y_last, y_last);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for ((s, y, rho), &a) in history.iter().zip(alphas.iter().rev()) {
        let b = *rho * dot(y, &q);
        for (qi, &si) in q.iter_mut().zip(s.iter()) {
            *qi += (a - b) * si;
        }
    }
    q
}

/// Minimizes `eval` from `x0` with backtracking Armijo line search. Returns
/// the final point, the per-iteration trace of minimized values, and the
/// stop reason.
fn lbfgs_minimize<T, F>(
    mut eval: F,
    x0: Vec<T>,
    memory: usize,
    max_iters: usize,
    rel_tol: T,
) -> Result<(Vec<T>, Vec<T>, StopReason)>
where
    T: Real,
    F: FnMut(&[T]) -> Result<(T, Vec<T>)>,
{
    let c1 = T::cast(1e-4);
    let mut x = x0;
    let (mut fx, mut gx) = eval(&x)?;
    let mut history: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(memory);
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxIters;

    for _ in 0..max_iters {
        let mut d = two_loop(&gx, &history);
        if dot(&d, &gx) <= T::zero() {
            // not a descent direction for -d; fall back to steepest descent
            d = gx.clone();
        }
        let dir_deriv = -dot(&d, &gx); // derivative along the step p = -d

        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<T> = x
                .iter()
                .zip(d.iter())
                .map(|(&xi, &di)| xi - t * di)
                .collect();
            match eval(&xn) {
                Ok((f_new, g_new)) if f_new.is_finite() => {
                    if f_new <= fx + c1 * t * dir_deriv {
                        accepted = Some((xn, f_new, g_new));
                        break;
                    }
                }
                // an overlong trial step can overflow the objective; that
                // only means the step was too big
                Ok(_) | Err(Error::Numeric(_)) => {}
                Err(e) => return Err(e),
            }
            t *= T::cast(0.5);
        }

        match accepted {
            None => {
                trace.push(fx);
                stop = StopReason::Converged;
                break;
            }
            Some((xn, f_new, g_new)) => {
                let s: Vec<T> = xn.iter().zip(x.iter()).map(|(&a, &b)| a - b).collect();
                let y: Vec<T> = g_new.iter().zip(gx.iter()).map(|(&a, &b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > T::cast(1e-12) * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if history.len() == memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, T::one() / sy));
                }
                let improvement = fx - f_new;
                let rel = improvement.abs() / fx.abs().max(T::cast(1e-12));
                x = xn;
                fx = f_new;
                gx = g_new;
                trace.push(fx);
                if rel < rel_tol {
                    stop = StopReason::Converged;
                    break;
                }
            }
        }
    }
    Ok((x, trace, stop))
}

/// Batch training from zero initial parameters.
pub fn train_batch<T: Real>(
    ds: &Dataset<T>,
    loss: &dyn LossModel<T>,
    cfg: &TrainConfig<T>,
) -> Result<TrainReport<T>> {
    let init = vec![T::zero(); loss.param_len(ds.feature_count)];
    train_batch_from(ds, loss, cfg, &init)
}

/// Batch training from explicit initial parameters (`weights ++ tie`).
pub fn train_batch_from<T: Real>(
    ds: &Dataset<T>,
    loss: &dyn LossModel<T>,
    cfg: &TrainConfig<T>,
    init: &[T],
) -> Result<TrainReport<T>> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::InvalidInput(
            "cannot train on an empty dataset".into(),
        ));
    }
    let plen = loss.param_len(ds.feature_count);
    let wlen = loss.weight_len(ds.feature_count);
    if init.len() != plen {
        return Err(Error::DimensionMismatch(format!(
            "initial parameter vector has {} entries, loss {} needs {plen}",
            init.len(),
            loss.name()
        )));
    }

    let parallel = cfg.threads > 1;
    let objective = |params: &[T]| -> Result<(T, Vec<T>)> {
        let (obj, grad) = batch_objective(ds, loss, params, cfg.l2_lambda, wlen, parallel)?;
        Ok((-obj, grad.into_iter().map(|g| -g).collect()))
    };

    let run = || {
        lbfgs_minimize(
            objective,
            init.to_vec(),
            cfg.lbfgs_memory,
            cfg.max_iters,
            cfg.rel_tol,
        )
    };
    let (x, trace_min, stop) = if parallel {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(run)?
    } else {
        run()?
    };

    let objective_trace: Vec<T> = trace_min.into_iter().map(|v| -v).collect();
    let iterations_run = objective_trace.len();
    let tie_param = (plen > wlen).then(|| x[wlen]);
    Ok(TrainReport {
        final_weights: WeightVector(x[..wlen].to_vec()),
        tie_param,
        objective_trace,
        iterations_run,
        stop_reason: stop,
    })
}

/// Gradient source for [`train_stochastic`].
pub enum GeneralGradient {
    /// Enumeration-exact gradient; tiny queries only.
    Exact,
    /// Contrastive-divergence estimate from a short chain.
    Cd(CdConfig),
}

/// Stochastic gradient ascent for the general PMOP: per-query updates, a
/// fresh seeded shuffle each epoch, exactly `max_iters` epochs (the exact
/// objective is not computable, so there is no convergence test). The trace
/// holds a per-epoch Monte-Carlo objective proxy.
pub fn train_stochastic<T: Real>(
    ds: &Dataset<T>,
    mode: &GeneralGradient,
    cfg: &TrainConfig<T>,
) -> Result<TrainReport<T>> {
    cfg.validate()?;
    if cfg.algorithm != Algorithm::Sgd {
        return Err(Error::InvalidInput(
            "train_stochastic requires algorithm = sgd".into(),
        ));
    }
    if ds.is_empty() {
        return Err(Error::InvalidInput(
            "cannot train on an empty dataset".into(),
        ));
    }
    let f = ds.feature_count;
    let mut w = vec![T::zero(); f];
    let mut trace = Vec::with_capacity(cfg.max_iters);
    // spread the batch L2 penalty across the per-query updates
    let reg = T::cast(2.0) * cfg.l2_lambda / T::cast_usize(ds.len());

    for epoch in 1..=cfg.max_iters {
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.shuffle(&mut labeled_rng(cfg.seed, &format!("epoch-order-{epoch}")));

        let mut proxy = T::zero();
        for qi in order {
            let group = &ds.groups[qi];
            let part = partition_by_labels(group);
            let est: CdEstimate<T> = match mode {
                GeneralGradient::Exact => CdEstimate {
                    gradient: exact_general_gradient(group, &part, &w)?,
                    loglik_proxy: exact_general_loglik(group, &part, &w)?,
                },
                GeneralGradient::Cd(cd) => {
                    cd_gradient_estimate(group, &part, &w, cd, cfg.seed, epoch as u64)?
                }
            };
            for (wi, &gi) in w.iter_mut().zip(est.gradient.iter()) {
                *wi += cfg.learning_rate * (gi - reg * *wi);
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite update at query {}",
                    group.query_id
                )));
            }
            proxy += est.loglik_proxy;
        }
        trace.push(proxy);
    }
    Ok(TrainReport {
        final_weights: WeightVector(w),
        tie_param: None,
        iterations_run: trace.len(),
        objective_trace: trace,
        stop_reason: StopReason::MaxIters,
    })
}

/// Central-finite-difference check of a loss gradient on one query. Returns
/// the max over coordinates of the relative error, falling back to absolute
/// error below 1e-8 magnitude.
pub fn check_gradient<T: Real>(
    loss: &dyn LossModel<T>,
    group: &QueryGroup<T>,
    params: &[T],
    step: T,
) -> Result<T> {
    if step <= T::zero() || step.is_nan() {
        return Err(Error::InvalidInput("step must be > 0".into()));
    }
    let plen = params.len();
    let mut analytic = vec![T::zero(); plen];
    loss.eval(group, params, &mut analytic)?;

    let mut scratch = vec![T::zero(); plen];
    let mut worst = T::zero();
    for i in 0..plen {
        let mut p = params.to_vec();
        p[i] = params[i] + step;
        scratch.iter_mut().for_each(|v| *v = T::zero());
        let up = loss.eval(group, &p, &mut scratch)?;
        p[i] = params[i] - step;
        scratch.iter_mut().for_each(|v| *v = T::zero());
        let down = loss.eval(group, &p, &mut scratch)?;
        let fd = (up - down) / (T::cast(2.0) * step);
        let diff = (fd - analytic[i]).abs();
        let denom = fd.abs().max(analytic[i].abs());
        let err = if denom < T::cast(1e-8) {
            diff
        } else {
            diff / denom
        };
        worst = worst.max(err);
    }
    Ok(worst)
}
