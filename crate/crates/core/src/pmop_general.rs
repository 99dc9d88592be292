//! General-state PMOP: exponential-of-mean block potential, exact local
//! distributions for small remainder sets, Gibbs and Metropolis-Hastings
//! chains over stage subsets, and contrastive-divergence gradient estimates.
//!
//! The stage normalizer runs over all `2^{N_k}-1` non-empty subsets of the
//! remainder, so exact quantities are only available by enumeration at small
//! N; training uses short chains started from the observed block.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{OrderedPartition, QueryGroup};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::chain_rng;
use crate::scoring::{log_sum_exp, ScoreCache};

/// Log block potential: the mean score over the block, `log Phi(S) =
/// (1/|S|) sum_{x in S} f(x,w)`. Singleton blocks reduce to the
/// Plackett-Luce stage weight.
pub fn block_log_potential<T: Real>(block: &[usize], scores: &[T]) -> Result<T> {
    if block.is_empty() {
        return Err(Error::InvalidInput("block potential of empty block".into()));
    }
    let sum: T = block.iter().map(|&i| scores[i]).sum();
    Ok(sum / T::cast_usize(block.len()))
}

const MAX_EXACT_REMAINDER: usize = 20;

/// Log of the stage normalizer: log-sum-exp of `log Phi(S)` over every
/// non-empty subset of the remainder.
fn stage_log_normalizer<T: Real>(remainder: &[usize], scores: &[T]) -> Result<T> {
    if remainder.is_empty() {
        return Err(Error::InvalidInput("empty remainder set".into()));
    }
    if remainder.len() > MAX_EXACT_REMAINDER {
        return Err(Error::InvalidInput(format!(
            "exact stage enumeration limited to {MAX_EXACT_REMAINDER} objects, got {}",
            remainder.len()
        )));
    }
    let n = remainder.len();
    let mut log_phis = Vec::with_capacity((1usize << n) - 1);
    for mask in 1u32..(1u32 << n) {
        let mut sum = T::zero();
        let mut count = 0usize;
        for (pos, &i) in remainder.iter().enumerate() {
            if mask & (1 << pos) != 0 {
                sum += scores[i];
                count += 1;
            }
        }
        log_phis.push(sum / T::cast_usize(count));
    }
    log_sum_exp(&log_phis)
}

/// Exact stage distribution `p(S) = Phi(S) / sum Phi(S')` over every
/// non-empty subset of the remainder, keyed by sorted document indices.
pub fn exact_stage_distribution<T: Real>(
    remainder: &[usize],
    scores: &[T],
) -> Result<BTreeMap<Vec<usize>, T>> {
    let normalizer = stage_log_normalizer(remainder, scores)?;
    let n = remainder.len();
    let mut out = BTreeMap::new();
    for mask in 1u32..(1u32 << n) {
        let subset: Vec<usize> = remainder
            .iter()
            .enumerate()
            .filter(|(pos, _)| mask & (1 << pos) != 0)
            .map(|(_, &i)| i)
            .collect();
        let logphi = block_log_potential(&subset, scores)?;
        out.insert(subset, (logphi - normalizer).exp());
    }
    Ok(out)
}

/// One MCMC chain over the non-empty subsets of a stage's remainder set.
///
/// The random stream lives inside the state so a chain is fully determined
/// by its construction key; see [`ChainState::for_stage`].
#[derive(Debug, Clone)]
pub struct ChainState {
    remainder: Vec<usize>,
    members: Vec<bool>,
    rng: ChaCha8Rng,
}

impl ChainState {
    /// `remainder` is sorted and deduplicated; the initial block must be a
    /// non-empty subset of it.
    pub fn new(
        mut remainder: Vec<usize>,
        initial_block: &[usize],
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        remainder.sort_unstable();
        remainder.dedup();
        if initial_block.is_empty() {
            return Err(Error::InvalidInput("initial block is empty".into()));
        }
        let mut members = vec![false; remainder.len()];
        for &i in initial_block {
            match remainder.binary_search(&i) {
                Ok(pos) => members[pos] = true,
                Err(_) => {
                    return Err(Error::InvalidInput(format!(
                        "initial block contains {i}, not in the remainder set"
                    )))
                }
            }
        }
        Ok(ChainState {
            remainder,
            members,
            rng,
        })
    }

    /// Chain keyed by `(seed, query_id, stage, epoch)`, started from the
    /// observed block.
    pub fn for_stage(
        remainder: Vec<usize>,
        observed_block: &[usize],
        seed: u64,
        query_id: &str,
        stage: u64,
        epoch: u64,
    ) -> Result<Self> {
        Self::new(
            remainder,
            observed_block,
            chain_rng(seed, query_id, stage, epoch),
        )
    }

    /// Current block as sorted document indices.
    pub fn block(&self) -> Vec<usize> {
        self.remainder
            .iter()
            .zip(self.members.iter())
            .filter(|(_, &m)| m)
            .map(|(&i, _)| i)
            .collect()
    }

    pub fn block_size(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn remainder(&self) -> &[usize] {
        &self.remainder
    }
}

/// One full Gibbs sweep: each remaining object, in ascending document
/// order, resamples its membership with probability
/// `Phi(X+x) / (Phi(X+x) + Phi(X-x))`. A flip that would empty the block is
/// rejected, which is exactly the single-site conditional of the target
/// restricted to non-empty subsets.
pub fn gibbs_step<T: Real>(state: &mut ChainState, scores: &[T]) {
    let mut sum: T = state
        .remainder
        .iter()
        .zip(state.members.iter())
        .filter(|(_, &m)| m)
        .map(|(&i, _)| scores[i])
        .sum();
    let mut count = state.block_size();

    for pos in 0..state.remainder.len() {
        let s = scores[state.remainder[pos]];
        let member = state.members[pos];
        let (sum_in, count_in) = if member {
            (sum, count)
        } else {
            (sum + s, count + 1)
        };
        let (sum_out, count_out) = if member {
            (sum - s, count - 1)
        } else {
            (sum, count)
        };

        let include = if count_out == 0 {
            true
        } else {
            let diff = sum_in / T::cast_usize(count_in) - sum_out / T::cast_usize(count_out);
            let p_include = T::one() / (T::one() + (-diff).exp());
            let u: f64 = state.rng.gen();
            u < p_include.to_f64().unwrap_or(0.0)
        };
        state.members[pos] = include;
        if include {
            sum = sum_in;
            count = count_in;
        } else {
            sum = sum_out;
            count = count_out;
        }
    }
}

/// Acceptance rule for [`mh_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MhAcceptance {
    /// `min{1, Phi(S)/Phi(X)}`, ignoring that the uniform-size-then-subset
    /// proposal is not symmetric across subset sizes. The stationary
    /// distribution need not match the exact stage distribution.
    Verbatim,
    /// Multiplies in the proposal-density ratio `binom(N,|S|)/binom(N,|X|)`,
    /// making the exact stage distribution stationary.
    ProposalCorrected,
}

fn ln_binomial(n: usize, m: usize) -> f64 {
    let m = m.min(n - m);
    let mut acc = 0.0f64;
    for i in 1..=m {
        acc += ((n - m + i) as f64 / i as f64).ln();
    }
    acc
}

/// One Metropolis-Hastings step: draw a size m uniform on `1..=N_k`, then a
/// uniform m-subset of the remainder, and accept per `rule`. The state is
/// unchanged on rejection.
pub fn mh_step<T: Real>(state: &mut ChainState, scores: &[T], rule: MhAcceptance) {
    let n = state.remainder.len();
    let m = state.rng.gen_range(1..=n);
    let chosen = rand::seq::index::sample(&mut state.rng, n, m);
    let mut proposed = vec![false; n];
    for pos in chosen {
        proposed[pos] = true;
    }

    let mean = |members: &[bool]| -> T {
        let mut sum = T::zero();
        let mut count = 0usize;
        for (pos, &m) in members.iter().enumerate() {
            if m {
                sum += scores[state.remainder[pos]];
                count += 1;
            }
        }
        sum / T::cast_usize(count)
    };

    let current_size = state.block_size();
    let mut log_ratio = (mean(&proposed) - mean(&state.members))
        .to_f64()
        .unwrap_or(0.0);
    if rule == MhAcceptance::ProposalCorrected {
        log_ratio += ln_binomial(n, m) - ln_binomial(n, current_size);
    }

    let accept = log_ratio >= 0.0 || state.rng.gen::<f64>() < log_ratio.exp();
    if accept {
        state.members = proposed;
    }
}

/// Which chain drives contrastive-divergence training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Gibbs,
    MetropolisHastings(MhAcceptance),
}

/// Contrastive-divergence settings. `mcmc_steps` chain steps are taken
/// before each of the `n_samples` recorded blocks; CD-1 is
/// `mcmc_steps = 1, n_samples = 1`.
#[derive(Debug, Clone, Copy)]
pub struct CdConfig {
    pub sampler: SamplerKind,
    pub mcmc_steps: usize,
    pub n_samples: usize,
}

impl Default for CdConfig {
    fn default() -> Self {
        CdConfig {
            sampler: SamplerKind::Gibbs,
            mcmc_steps: 1,
            n_samples: 1,
        }
    }
}

/// A stochastic gradient estimate plus the matching Monte-Carlo objective
/// proxy `sum_k [ log Phi(X_k) - mean_l log Phi(S_l) ]`.
#[derive(Debug, Clone)]
pub struct CdEstimate<T> {
    pub gradient: Vec<T>,
    pub loglik_proxy: T,
}

fn accumulate_block_centre<T: Real>(
    group: &QueryGroup<T>,
    block: &[usize],
    scale: T,
    out: &mut [T],
) {
    let inv = scale / T::cast_usize(block.len());
    for &i in block {
        for (o, &x) in out.iter_mut().zip(group.docs[i].iter()) {
            *o += inv * x;
        }
    }
}

/// Per-query CD gradient: for each stage the chain starts at the observed
/// block X_k, and the estimate is `sum_k ( centre(X_k) - mean of sampled
/// centres )`. Stages whose remainder has a single object admit only one
/// subset and contribute nothing.
pub fn cd_gradient_estimate<T: Real>(
    group: &QueryGroup<T>,
    part: &OrderedPartition,
    w: &[T],
    cfg: &CdConfig,
    seed: u64,
    epoch: u64,
) -> Result<CdEstimate<T>> {
    if cfg.mcmc_steps < 1 {
        return Err(Error::InvalidInput("cd requires mcmc_steps >= 1".into()));
    }
    if cfg.n_samples < 1 {
        return Err(Error::InvalidInput("cd requires n_samples >= 1".into()));
    }
    if part.len() != group.len() {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} documents, query {} has {}",
            part.len(),
            group.query_id,
            group.len()
        )));
    }
    let cache = ScoreCache::compute_slice(group, w)?;
    let blocks = part.blocks();
    let f = w.len();

    let mut gradient = vec![T::zero(); f];
    let mut proxy = T::zero();
    let inv_n = T::one() / T::cast_usize(cfg.n_samples);

    for (k, observed) in blocks.iter().enumerate() {
        let remainder: Vec<usize> = blocks[k..].iter().flatten().copied().collect();
        if remainder.len() <= 1 {
            continue;
        }
        let mut state =
            ChainState::for_stage(remainder, observed, seed, &group.query_id, k as u64, epoch)?;

        accumulate_block_centre(group, observed, T::one(), &mut gradient);
        proxy += block_log_potential(observed, &cache.scores)?;

        for _ in 0..cfg.n_samples {
            for _ in 0..cfg.mcmc_steps {
                match cfg.sampler {
                    SamplerKind::Gibbs => gibbs_step(&mut state, &cache.scores),
                    SamplerKind::MetropolisHastings(rule) => {
                        mh_step(&mut state, &cache.scores, rule)
                    }
                }
            }
            let sample = state.block();
            accumulate_block_centre(group, &sample, -inv_n, &mut gradient);
            proxy -= inv_n * block_log_potential(&sample, &cache.scores)?;
        }
    }
    Ok(CdEstimate {
        gradient,
        loglik_proxy: proxy,
    })
}

const MAX_EXACT_QUERY: usize = 12;

/// Exact log-likelihood under the general potential, by stage enumeration.
pub fn exact_general_loglik<T: Real>(
    group: &QueryGroup<T>,
    part: &OrderedPartition,
    w: &[T],
) -> Result<T> {
    if group.len() > MAX_EXACT_REMAINDER {
        return Err(Error::InvalidInput(format!(
            "exact general log-likelihood limited to N <= {MAX_EXACT_REMAINDER}"
        )));
    }
    let cache = ScoreCache::compute_slice(group, w)?;
    let blocks = part.blocks();
    let mut loglik = T::zero();
    for k in 0..blocks.len() {
        let remainder: Vec<usize> = blocks[k..].iter().flatten().copied().collect();
        loglik += block_log_potential(&blocks[k], &cache.scores)?;
        loglik -= stage_log_normalizer(&remainder, &cache.scores)?;
    }
    Ok(loglik)
}

/// Exact gradient under the general potential:
/// `sum_k [ centre(X_k) - E_{S ~ p_k} centre(S) ]` with the expectation from
/// [`exact_stage_distribution`]. Enumeration-bound, N <= 12.
pub fn exact_general_gradient<T: Real>(
    group: &QueryGroup<T>,
    part: &OrderedPartition,
    w: &[T],
) -> Result<Vec<T>> {
    if group.len() > MAX_EXACT_QUERY {
        return Err(Error::InvalidInput(format!(
            "exact general gradient limited to N <= {MAX_EXACT_QUERY}, query {} has {}",
            group.query_id,
            group.len()
        )));
    }
    let cache = ScoreCache::compute_slice(group, w)?;
    let blocks = part.blocks();
    let f = w.len();
    let mut grad = vec![T::zero(); f];
    for (k, block) in blocks.iter().enumerate() {
        let remainder: Vec<usize> = blocks[k..].iter().flatten().copied().collect();
        accumulate_block_centre(group, block, T::one(), &mut grad);
        for (subset, p) in exact_stage_distribution(&remainder, &cache.scores)? {
            accumulate_block_centre(group, &subset, -p, &mut grad);
        }
    }
    Ok(grad)
}
