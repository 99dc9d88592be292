//! Shared domain types: feature vectors, labelled query groups, ordered
//! partitions, weight vectors, datasets.
//!
//! Everything here is immutable after construction and safe to share across
//! worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::num::Real;

/// Dense per-document feature vector of length F.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T>(pub Vec<T>);

impl<T> Deref for FeatureVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> From<Vec<T>> for FeatureVector<T> {
    fn from(values: Vec<T>) -> Self {
        FeatureVector(values)
    }
}

/// The shared trainable parameter vector, length F.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T>(pub Vec<T>);

impl<T> Deref for WeightVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T: Real> WeightVector<T> {
    pub fn zeros(len: usize) -> Self {
        WeightVector(vec![T::zero(); len])
    }
}

/// One query's documents with integer relevance grades in `{0..M}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup<T> {
    pub query_id: String,
    pub docs: Vec<FeatureVector<T>>,
    pub labels: Vec<u32>,
}

impl<T: Real> QueryGroup<T> {
    /// Builds a group, rejecting empty groups, length mismatches and
    /// non-finite feature values.
    pub fn new(
        query_id: impl Into<String>,
        docs: Vec<FeatureVector<T>>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        let query_id = query_id.into();
        if docs.is_empty() {
            return Err(Error::InvalidInput(format!(
                "query {query_id}: empty group"
            )));
        }
        if docs.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "query {query_id}: {} docs but {} labels",
                docs.len(),
                labels.len()
            )));
        }
        for (i, d) in docs.iter().enumerate() {
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "query {query_id}: non-finite feature value in document {i}"
                )));
            }
        }
        Ok(QueryGroup {
            query_id,
            docs,
            labels,
        })
    }

    /// Number of documents N_q.
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Blocks of document indices ordered best-first; within a block the indices
/// are sorted ascending so equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrderedPartition {
    blocks: Vec<Vec<usize>>,
}

impl OrderedPartition {
    /// Validates and canonicalizes raw blocks: non-empty, pairwise disjoint,
    /// covering `{0..n-1}` for some n.
    pub fn from_blocks(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("partition has no blocks".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut total = 0usize;
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::InvalidInput("partition has an empty block".into()));
            }
            b.sort_unstable();
            total += b.len();
            for &i in b.iter() {
                if !seen.insert(i) {
                    return Err(Error::InvalidInput(format!(
                        "index {i} appears in two blocks"
                    )));
                }
            }
        }
        let max = *seen.iter().next_back().unwrap();
        if max + 1 != total {
            return Err(Error::InvalidInput(format!(
                "blocks cover {total} indices but the largest is {max}"
            )));
        }
        Ok(OrderedPartition { blocks })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of blocks K.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Total number of documents covered.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

impl fmt::Display for OrderedPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first_block = true;
        for b in &self.blocks {
            if !first_block {
                write!(f, " > ")?;
            }
            first_block = false;
            write!(f, "{{")?;
            for (i, idx) in b.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{idx}")?;
            }
            write!(f, "}}")?;
        }
        Ok(())
    }
}

/// Groups a query's documents by distinct label, best first. Gaps in the
/// label scale produce no empty blocks, so K is the number of distinct
/// labels present, not M+1.
pub fn partition_by_labels<T: Real>(group: &QueryGroup<T>) -> OrderedPartition {
    let mut by_label: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in group.labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    let blocks = by_label.into_values().rev().collect();
    OrderedPartition { blocks }
}

/// A feature-count plus query groups; every document vector must have the
/// declared length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub feature_count: usize,
    pub groups: Vec<QueryGroup<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(feature_count: usize, groups: Vec<QueryGroup<T>>) -> Self {
        Dataset {
            feature_count,
            groups,
        }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Largest relevance grade present, or 0 for an empty dataset.
    pub fn max_label(&self) -> u32 {
        self.groups
            .iter()
            .flat_map(|g| g.labels.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// A single invariant violation found by [`validate_dataset`]. Violations
/// are data, not failures.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub query_id: String,
    pub description: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "query {}: {}", self.query_id, self.description)
    }
}

/// Reports every invariant violation in the dataset; empty iff valid.
pub fn validate_dataset<T: Real>(ds: &Dataset<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    for g in &ds.groups {
        if g.docs.is_empty() {
            out.push(Violation {
                query_id: g.query_id.clone(),
                description: "empty group".into(),
            });
            continue;
        }
        if g.docs.len() != g.labels.len() {
            out.push(Violation {
                query_id: g.query_id.clone(),
                description: format!("{} docs but {} labels", g.docs.len(), g.labels.len()),
            });
        }
        for (i, d) in g.docs.iter().enumerate() {
            if d.len() != ds.feature_count {
                out.push(Violation {
                    query_id: g.query_id.clone(),
                    description: format!(
                        "document {i} has {} features, dataset declares {}",
                        d.len(),
                        ds.feature_count
                    ),
                });
            }
            if d.iter().any(|v| !v.is_finite()) {
                out.push(Violation {
                    query_id: g.query_id.clone(),
                    description: format!("document {i} has a non-finite feature value"),
                });
            }
        }
    }
    out
}
