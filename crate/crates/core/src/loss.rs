//! The per-query loss interface shared by the batch trainer.
//!
//! A [`LossModel`] exposes one query's objective contribution (a
//! log-likelihood, or a negated loss so that "maximize" is always the right
//! direction) and accumulates its gradient with respect to the parameter
//! vector. Tie models carry one extra trailing parameter after the weights.

use crate::baselines::{
    davidson_gradient, davidson_loglik, listmle_gradient, listmle_loglik, pairwise_gradient,
    pairwise_loss, rao_kupper_gradient, rao_kupper_loglik, PairwiseKind, TieParams,
};
use crate::data::{partition_by_labels, QueryGroup};
use crate::error::Result;
use crate::num::Real;
use crate::pmop_fd::{fd_gradient, fd_loglik};
use crate::pmop_general::{exact_general_gradient, exact_general_loglik};

pub trait LossModel<T: Real>: Sync {
    fn name(&self) -> &'static str;

    /// Total trainable parameter count for a dataset with `feature_count`
    /// features.
    fn param_len(&self, feature_count: usize) -> usize {
        feature_count
    }

    /// How many leading parameters are document weights; the L2 penalty
    /// applies to these only.
    fn weight_len(&self, feature_count: usize) -> usize {
        feature_count
    }

    /// Objective contribution of one query; the gradient is *added* into
    /// `grad` so drivers can accumulate across queries in one buffer.
    fn eval(&self, group: &QueryGroup<T>, params: &[T], grad: &mut [T]) -> Result<T>;
}

fn add_into<T: Real>(grad: &mut [T], delta: &[T]) {
    for (g, &d) in grad.iter_mut().zip(delta.iter()) {
        *g += d;
    }
}

/// Full-decomposition PMOP log-likelihood.
pub struct FdLoss;

impl<T: Real> LossModel<T> for FdLoss {
    fn name(&self) -> &'static str {
        "pmop-fd"
    }

    fn eval(&self, group: &QueryGroup<T>, params: &[T], grad: &mut [T]) -> Result<T> {
        let part = partition_by_labels(group);
        add_into(grad, &fd_gradient(group, &part, params)?);
        fd_loglik(group, &part, params)
    }
}

/// Plackett-Luce over the label-sorted permutation.
pub struct ListMleLoss;

impl<T: Real> LossModel<T> for ListMleLoss {
    fn name(&self) -> &'static str {
        "listmle"
    }

    fn eval(&self, group: &QueryGroup<T>, params: &[T], grad: &mut [T]) -> Result<T> {
        add_into(grad, &listmle_gradient(group, params)?);
        listmle_loglik(group, params)
    }
}

/// Pairwise loss, reported negated so the trainer still maximizes.
pub struct PairwiseLoss(pub PairwiseKind);

impl<T: Real> LossModel<T> for PairwiseLoss {
    fn name(&self) -> &'static str {
        match self.0 {
            PairwiseKind::Logistic => "ranknet",
            PairwiseKind::Hinge => "ranksvm",
            PairwiseKind::Quadratic => "rankreg",
        }
    }

    fn eval(&self, group: &QueryGroup<T>, params: &[T], grad: &mut [T]) -> Result<T> {
        let g = pairwise_gradient(group, params, self.0)?;
        for (acc, &d) in grad.iter_mut().zip(g.iter()) {
            *acc -= d;
        }
        Ok(-pairwise_loss(group, params, self.0)?)
    }
}

/// Rao-Kupper tie model; parameters are `[w.., alpha]`.
pub struct RaoKupperLoss;

impl<T: Real> LossModel<T> for RaoKupperLoss {
    fn name(&self) -> &'static str {
        "ties-rk"
    }

    fn param_len(&self, feature_count: usize) -> usize {
        feature_count + 1
    }

    fn weight_len(&self, feature_count: usize) -> usize {
        feature_count
    }

    fn eval(&self, group: &QueryGroup<T>, params: &[T], grad: &mut [T]) -> Result<T> {
        let (w, alpha) = params.split_at(params.len() - 1);
        let tie = TieParams {
            alpha: alpha[0],
            beta: T::zero(),
        };
        let g = rao_kupper_gradient(group, w, &tie)?;
        add_into(&mut grad[..w.len()], &g.weights);
        grad[w.len()] += g.tie;
        rao_kupper_loglik(group, w, &tie)
    }
}

/// Davidson tie model; parameters are `[w.., beta]`.
pub struct DavidsonLoss;

impl<T: Real> LossModel<T> for DavidsonLoss {
    fn name(&self) -> &'static str {
        "ties-d"
    }

    fn param_len(&self, feature_count: usize) -> usize {
        feature_count + 1
    }

    fn weight_len(&self, feature_count: usize) -> usize {
        feature_count
    }

    fn eval(&self, group: &QueryGroup<T>, params: &[T], grad: &mut [T]) -> Result<T> {
        let (w, beta) = params.split_at(params.len() - 1);
        let tie = TieParams {
            alpha: T::zero(),
            beta: beta[0],
        };
        let g = davidson_gradient(group, w, &tie)?;
        add_into(&mut grad[..w.len()], &g.weights);
        grad[w.len()] += g.tie;
        davidson_loglik(group, w, &tie)
    }
}

/// Exact general-potential PMOP by stage enumeration. Only viable on tiny
/// queries; exists to cross-check the stochastic trainer.
pub struct ExactGeneralLoss;

impl<T: Real> LossModel<T> for ExactGeneralLoss {
    fn name(&self) -> &'static str {
        "pmop-general-exact"
    }

    fn eval(&self, group: &QueryGroup<T>, params: &[T], grad: &mut [T]) -> Result<T> {
        let part = partition_by_labels(group);
        add_into(grad, &exact_general_gradient(group, &part, params)?);
        exact_general_loglik(group, &part, params)
    }
}
