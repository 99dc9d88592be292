//! Seeded synthetic instances for tests, benchmarks and sampler diagnostics.

use rand::Rng;

use crate::data::{Dataset, FeatureVector, QueryGroup};
use crate::num::Real;
use crate::rng::labeled_rng;

/// Query group with `n` documents, `f` uniform(-2,2) features and uniform
/// labels in `0..=max_label`.
pub fn random_group<T: Real>(seed: u64, n: usize, f: usize, max_label: u32) -> QueryGroup<T> {
    let mut rng = labeled_rng(seed, "random-group");
    let docs = (0..n)
        .map(|_| FeatureVector((0..f).map(|_| T::cast(rng.gen_range(-2.0..2.0))).collect()))
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(0..=max_label)).collect();
    QueryGroup::new(format!("syn-{seed}"), docs, labels).expect("synthetic group is valid")
}

/// Uniform(-1,1) weight vector.
pub fn random_weights<T: Real>(seed: u64, f: usize) -> Vec<T> {
    let mut rng = labeled_rng(seed, "random-weights");
    (0..f).map(|_| T::cast(rng.gen_range(-1.0..1.0))).collect()
}

/// Dataset whose labels come from binning a planted linear score plus noise:
/// each query draws `n` uniform(-1,1) feature vectors, scores them with a
/// fixed planted weight vector, adds `noise` times a uniform(-1,1) draw, and
/// grades documents 0..=4 by within-query score quintile. Recoverable by any
/// sane ranker, never perfectly separable when `noise > 0`.
pub fn planted_dataset<T: Real>(
    seed: u64,
    queries: usize,
    n: usize,
    f: usize,
    noise: f64,
) -> Dataset<T> {
    let mut rng = labeled_rng(seed, "planted-dataset");
    let planted: Vec<f64> = (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut groups = Vec::with_capacity(queries);
    for q in 0..queries {
        let mut docs = Vec::with_capacity(n);
        let mut noisy = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s: f64 = x.iter().zip(planted.iter()).map(|(a, b)| a * b).sum();
            noisy.push(s + noise * rng.gen_range(-1.0..1.0));
            docs.push(FeatureVector(x.iter().map(|&v| T::cast(v)).collect()));
        }
        // grade by within-query quintile of the noisy planted score
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| noisy[a].partial_cmp(&noisy[b]).unwrap());
        let mut labels = vec![0u32; n];
        for (rank, &i) in order.iter().enumerate() {
            labels[i] = (rank * 5 / n) as u32;
        }
        groups.push(QueryGroup::new(format!("planted-{q}"), docs, labels).expect("valid group"));
    }
    Dataset::new(f, groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_dataset_has_all_grades() {
        let ds: Dataset<f64> = planted_dataset(1, 5, 20, 10, 0.1);
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.max_label(), 4);
        for g in &ds.groups {
            assert_eq!(g.len(), 20);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a: QueryGroup<f64> = random_group(3, 6, 2, 4);
        let b: QueryGroup<f64> = random_group(3, 6, 2, 4);
        assert_eq!(a, b);
    }
}
