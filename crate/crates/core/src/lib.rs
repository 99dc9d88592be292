//! Probabilistic models over ordered partitions (PMOP) for learning to rank
//! with tied relevance labels.
//!
//! A query's documents, grouped by relevance grade, form an *ordered
//! partition*: disjoint non-empty blocks ranked best-first. PMOP places a
//! stagewise choice distribution over these partitions, generalizing
//! Plackett-Luce from single items to whole blocks.
//!
//! Module map:
//!
//! - [`data`]: query groups, ordered partitions, datasets.
//! - [`scoring`]: linear scoring and log-sum-exp utilities.
//! - [`pmop_fd`]: full-decomposition PMOP, linear-time likelihood/gradient.
//! - [`pmop_general`]: general block potential, Gibbs/Metropolis-Hastings
//!   samplers, contrastive-divergence gradients.
//! - [`baselines`]: ListMLE, pairwise losses, Rao-Kupper and Davidson tie
//!   models.
//! - [`loss`]: the [`loss::LossModel`] interface shared by the trainers.
//! - [`optim`]: L-BFGS batch training and stochastic gradient ascent.
//! - [`metrics`]: NDCG@T and ERR evaluation.
//! - [`dataio`]: LETOR-format parsing, feature normalization, second-order
//!   feature selection, query splits.
//! - [`oracle`]: exact combinatorial references (Stirling/Fubini counting,
//!   exhaustive enumeration, exact model distributions).
//!
//! All model math is generic over the scalar type via [`Real`]; `f64` is the
//! default used by the CLI and the concrete aliases below.

pub mod baselines;
pub mod data;
pub mod dataio;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod num;
pub mod optim;
pub mod oracle;
pub mod pmop_fd;
pub mod pmop_general;
pub mod rng;
pub mod scoring;
pub mod synthetic;

pub use error::{Error, Result};
pub use num::Real;

pub type FeatureVector64 = data::FeatureVector<f64>;
pub type QueryGroup64 = data::QueryGroup<f64>;
pub type WeightVector64 = data::WeightVector<f64>;
pub type Dataset64 = data::Dataset<f64>;

pub type FeatureVector32 = data::FeatureVector<f32>;
pub type QueryGroup32 = data::QueryGroup<f32>;
pub type WeightVector32 = data::WeightVector<f32>;
pub type Dataset32 = data::Dataset<f32>;
