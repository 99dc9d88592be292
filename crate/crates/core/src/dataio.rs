//! LETOR/SVMLight-with-qid ingestion and the feature pipeline: z-score
//! normalization, correlation-selected second-order features, query-level
//! splits, and the versioned pipeline file.
//!
//! Input lines look like `2 qid:7 1:0.5 3:-1 # comment`. Feature indices
//! are 1-based and sparse; documents are densified to the largest index
//! seen anywhere in the file and grouped by qid in order of first
//! appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::data::{Dataset, FeatureVector, QueryGroup};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::labeled_rng;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the LETOR text format from any reader.
pub fn parse_letor<T: Real, R: BufRead>(reader: R) -> Result<Dataset<T>> {
    struct RawDoc {
        label: u32,
        features: Vec<(usize, f64)>,
    }
    let mut qid_index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(String, Vec<RawDoc>)> = Vec::new();
    let mut max_feature = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens
            .next()
            .ok_or_else(|| parse_err(lineno, "missing label"))?;
        let label: u32 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("non-integer label `{label_tok}`")))?;
        let qid_tok = tokens
            .next()
            .ok_or_else(|| parse_err(lineno, "missing qid field"))?;
        let qid = qid_tok
            .strip_prefix("qid:")
            .filter(|q| !q.is_empty())
            .ok_or_else(|| parse_err(lineno, format!("expected qid:<id>, got `{qid_tok}`")))?;

        let mut features = Vec::new();
        for tok in tokens {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("malformed feature `{tok}`")))?;
            let idx: usize = idx_s
                .parse()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| parse_err(lineno, format!("bad feature index `{idx_s}`")))?;
            let val: f64 = val_s
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature value `{val_s}`")))?;
            if !val.is_finite() {
                return Err(parse_err(
                    lineno,
                    format!("non-finite feature value `{val_s}`"),
                ));
            }
            if features.iter().any(|&(i, _)| i == idx) {
                return Err(parse_err(lineno, format!("duplicate feature index {idx}")));
            }
            max_feature = max_feature.max(idx);
            features.push((idx, val));
        }

        let slot = *qid_index.entry(qid.to_string()).or_insert_with(|| {
            groups.push((qid.to_string(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(RawDoc { label, features });
    }

    if groups.is_empty() {
        return Err(Error::InvalidInput("no documents".into()));
    }

    let mut out = Vec::with_capacity(groups.len());
    for (qid, raw_docs) in groups {
        let mut docs = Vec::with_capacity(raw_docs.len());
        let mut labels = Vec::with_capacity(raw_docs.len());
        for raw in raw_docs {
            let mut dense = vec![T::zero(); max_feature];
            for (idx, val) in raw.features {
                dense[idx - 1] = T::cast(val);
            }
            docs.push(FeatureVector(dense));
            labels.push(raw.label);
        }
        out.push(QueryGroup::new(qid, docs, labels)?);
    }
    Ok(Dataset::new(max_feature, out))
}

pub fn parse_letor_file<T: Real>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let file = File::open(path.as_ref())?;
    parse_letor(BufReader::new(file))
}

/// Writes the dataset back out densely (every index from 1 to F), so a
/// parse of the output reproduces the dataset exactly.
pub fn write_letor<T: Real, W: Write>(ds: &Dataset<T>, writer: &mut W) -> Result<()> {
    for group in &ds.groups {
        for (doc, label) in group.docs.iter().zip(group.labels.iter()) {
            write!(writer, "{label} qid:{}", group.query_id)?;
            for (i, v) in doc.iter().enumerate() {
                write!(writer, " {}:{v}", i + 1)?;
            }
            writeln!(writer)?;
        }
    }
    Ok(())
}

pub fn write_letor_file<T: Real>(ds: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_letor(ds, &mut w)
}

/// Everything fitted on the training split: first-order z-score statistics,
/// the selected second-order pairs, and the z-score statistics of the
/// selected products.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePipeline<T> {
    pub first_means: Vec<T>,
    pub first_stds: Vec<T>,
    pub selected_pairs: Vec<(usize, usize)>,
    pub pair_means: Vec<T>,
    pub pair_stds: Vec<T>,
    pub corr_threshold: T,
}

pub const DEFAULT_CORR_THRESHOLD: f64 = 0.15;

/// Features with population standard deviation below this are treated as
/// constant and mapped to zero.
const STD_FLOOR: f64 = 1e-12;

impl<T: Real> FeaturePipeline<T> {
    pub fn feature_count(&self) -> usize {
        self.first_means.len()
    }

    /// First-order features plus selected products.
    pub fn expanded_feature_count(&self) -> usize {
        self.first_means.len() + self.selected_pairs.len()
    }
}

fn column_stats<T: Real>(ds: &Dataset<T>, column: impl Fn(&[T]) -> T) -> (T, T) {
    let mut count = 0usize;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for g in &ds.groups {
        for d in &g.docs {
            let v = column(d).to_f64().unwrap_or(f64::NAN);
            count += 1;
            let delta = v - mean;
            mean += delta / count as f64;
            m2 += delta * (v - mean);
        }
    }
    let var = if count > 0 { m2 / count as f64 } else { 0.0 };
    (T::cast(mean), T::cast(var.max(0.0).sqrt()))
}

/// Per-feature mean and population standard deviation over every training
/// document, pooled across queries. No pairs are selected yet.
pub fn fit_normalizer<T: Real>(ds: &Dataset<T>) -> FeaturePipeline<T> {
    let mut means = Vec::with_capacity(ds.feature_count);
    let mut stds = Vec::with_capacity(ds.feature_count);
    for f in 0..ds.feature_count {
        let (m, s) = column_stats(ds, |d| d[f]);
        means.push(m);
        stds.push(s);
    }
    FeaturePipeline {
        first_means: means,
        first_stds: stds,
        selected_pairs: Vec::new(),
        pair_means: Vec::new(),
        pair_stds: Vec::new(),
        corr_threshold: T::cast(DEFAULT_CORR_THRESHOLD),
    }
}

fn zscore<T: Real>(v: T, mean: T, std: T) -> T {
    if std < T::cast(STD_FLOOR) {
        T::zero()
    } else {
        (v - mean) / std
    }
}

/// Applies the first-order z-score transform; constant features map to 0.
pub fn apply_normalizer<T: Real>(
    pipeline: &FeaturePipeline<T>,
    ds: &Dataset<T>,
) -> Result<Dataset<T>> {
    if ds.feature_count != pipeline.feature_count() {
        return Err(Error::DimensionMismatch(format!(
            "pipeline fitted on {} features, dataset has {}",
            pipeline.feature_count(),
            ds.feature_count
        )));
    }
    let groups = ds
        .groups
        .iter()
        .map(|g| QueryGroup {
            query_id: g.query_id.clone(),
            labels: g.labels.clone(),
            docs: g
                .docs
                .iter()
                .map(|d| {
                    FeatureVector(
                        d.iter()
                            .enumerate()
                            .map(|(f, &v)| {
                                zscore(v, pipeline.first_means[f], pipeline.first_stds[f])
                            })
                            .collect(),
                    )
                })
                .collect(),
        })
        .collect();
    Ok(Dataset::new(ds.feature_count, groups))
}

/// Pearson correlation between a per-document value and the integer label,
/// pooled over all documents; 0 when either side is constant.
fn label_correlation<T: Real>(ds: &Dataset<T>, column: impl Fn(&[T]) -> T) -> f64 {
    let mut n = 0usize;
    let mut sum_x = 0.0;
    let mut sum_y = 0.0;
    for g in &ds.groups {
        for (d, &l) in g.docs.iter().zip(g.labels.iter()) {
            sum_x += column(d).to_f64().unwrap_or(f64::NAN);
            sum_y += l as f64;
            n += 1;
        }
    }
    let mean_x = sum_x / n as f64;
    let mean_y = sum_y / n as f64;
    let (mut cov, mut var_x, mut var_y) = (0.0, 0.0, 0.0);
    for g in &ds.groups {
        for (d, &l) in g.docs.iter().zip(g.labels.iter()) {
            let dx = column(d).to_f64().unwrap_or(f64::NAN) - mean_x;
            let dy = l as f64 - mean_y;
            cov += dx * dy;
            var_x += dx * dx;
            var_y += dy * dy;
        }
    }
    if var_x < STD_FLOOR || var_y < STD_FLOOR {
        0.0
    } else {
        cov / (var_x.sqrt() * var_y.sqrt())
    }
}

/// Candidate second-order features are the products `v_i * v_j` of
/// normalized first-order values for `i <= j`; pairs whose absolute Pearson
/// correlation with the label exceeds the threshold are selected, their
/// products z-scored on the training split. Returns the completed pipeline
/// and the expanded training dataset.
pub fn build_second_order<T: Real>(
    train_normalized: &Dataset<T>,
    pipeline: &FeaturePipeline<T>,
    corr_threshold: T,
) -> Result<(FeaturePipeline<T>, Dataset<T>)> {
    if corr_threshold < T::zero() || corr_threshold >= T::one() {
        return Err(Error::InvalidInput(format!(
            "correlation threshold must be in [0,1), got {corr_threshold}"
        )));
    }
    if train_normalized.feature_count != pipeline.feature_count() {
        return Err(Error::DimensionMismatch(
            "pipeline and training dataset disagree on feature count".into(),
        ));
    }
    let f = train_normalized.feature_count;
    let threshold = corr_threshold.to_f64().unwrap_or(DEFAULT_CORR_THRESHOLD);

    let mut selected = Vec::new();
    for i in 0..f {
        for j in i..f {
            let corr = label_correlation(train_normalized, |d| d[i] * d[j]);
            if corr.abs() > threshold {
                selected.push((i, j));
            }
        }
    }

    let mut pair_means = Vec::with_capacity(selected.len());
    let mut pair_stds = Vec::with_capacity(selected.len());
    for &(i, j) in &selected {
        let (m, s) = column_stats(train_normalized, |d| d[i] * d[j]);
        pair_means.push(m);
        pair_stds.push(s);
    }

    let completed = FeaturePipeline {
        first_means: pipeline.first_means.clone(),
        first_stds: pipeline.first_stds.clone(),
        selected_pairs: selected,
        pair_means,
        pair_stds,
        corr_threshold,
    };
    let expanded = expand_normalized(&completed, train_normalized)?;
    Ok((completed, expanded))
}

/// Appends the z-scored selected products to already-normalized documents.
fn expand_normalized<T: Real>(
    pipeline: &FeaturePipeline<T>,
    ds: &Dataset<T>,
) -> Result<Dataset<T>> {
    if ds.feature_count != pipeline.feature_count() {
        return Err(Error::DimensionMismatch(
            "pipeline and dataset disagree on feature count".into(),
        ));
    }
    if pipeline.selected_pairs.is_empty() {
        return Ok(ds.clone());
    }
    let groups = ds
        .groups
        .iter()
        .map(|g| QueryGroup {
            query_id: g.query_id.clone(),
            labels: g.labels.clone(),
            docs: g
                .docs
                .iter()
                .map(|d| {
                    let mut values = d.0.clone();
                    for (p, &(i, j)) in pipeline.selected_pairs.iter().enumerate() {
                        values.push(zscore(
                            d[i] * d[j],
                            pipeline.pair_means[p],
                            pipeline.pair_stds[p],
                        ));
                    }
                    FeatureVector(values)
                })
                .collect(),
        })
        .collect();
    Ok(Dataset::new(pipeline.expanded_feature_count(), groups))
}

/// Full transform for raw data: first-order z-score, then the selected
/// second-order products. Fitting happened on the training split only;
/// applying is label-free.
pub fn apply_pipeline<T: Real>(
    pipeline: &FeaturePipeline<T>,
    ds: &Dataset<T>,
) -> Result<Dataset<T>> {
    let normalized = apply_normalizer(pipeline, ds)?;
    expand_normalized(pipeline, &normalized)
}

/// Query-level split: a seeded shuffle of the query list, the first
/// `floor(n * train_fraction)` queries to the training side. Both sides
/// keep the original file order.
pub fn split_queries<T: Real>(
    ds: &Dataset<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let n = ds.len();
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidInput(format!(
            "fraction {train_fraction} leaves an empty split for {n} queries"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut labeled_rng(seed, "query-split"));
    let mut train_idx: Vec<usize> = idx[..n_train].to_vec();
    let mut test_idx: Vec<usize> = idx[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let pick = |chosen: &[usize]| {
        Dataset::new(
            ds.feature_count,
            chosen.iter().map(|&i| ds.groups[i].clone()).collect(),
        )
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Writes the versioned pipeline file: `feature-pipeline v1`, the
/// first-order count, `pair` lines, then `mean`/`std` lines for every
/// expanded index (0-based; indices at and beyond F are the pair products).
pub fn write_pipeline<T: Real, W: Write>(
    pipeline: &FeaturePipeline<T>,
    writer: &mut W,
) -> Result<()> {
    writeln!(writer, "feature-pipeline v1")?;
    writeln!(writer, "F {}", pipeline.feature_count())?;
    for &(i, j) in &pipeline.selected_pairs {
        writeln!(writer, "pair {i} {j}")?;
    }
    for (idx, (m, s)) in pipeline
        .first_means
        .iter()
        .chain(pipeline.pair_means.iter())
        .zip(pipeline.first_stds.iter().chain(pipeline.pair_stds.iter()))
        .enumerate()
    {
        writeln!(writer, "mean {idx} {m}")?;
        writeln!(writer, "std {idx} {s}")?;
    }
    Ok(())
}

pub fn write_pipeline_file<T: Real>(
    pipeline: &FeaturePipeline<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_pipeline(pipeline, &mut w)
}

pub fn read_pipeline<T: Real, R: BufRead>(reader: R) -> Result<FeaturePipeline<T>> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty pipeline file"))?;
    if header?.trim() != "feature-pipeline v1" {
        return Err(parse_err(1, "expected `feature-pipeline v1` header"));
    }

    let mut f: Option<usize> = None;
    let mut pairs = Vec::new();
    let mut means: HashMap<usize, f64> = HashMap::new();
    let mut stds: HashMap<usize, f64> = HashMap::new();

    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.trim();
        if content.is_empty() {
            continue;
        }
        let parts: Vec<&str> = content.split_whitespace().collect();
        let get_usize = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| parse_err(lineno, "bad or missing integer field"))
        };
        let get_f64 = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| parse_err(lineno, "bad or missing numeric field"))
        };
        match parts[0] {
            "F" => f = Some(get_usize(1)?),
            "pair" => pairs.push((get_usize(1)?, get_usize(2)?)),
            "mean" => {
                means.insert(get_usize(1)?, get_f64(2)?);
            }
            "std" => {
                stds.insert(get_usize(1)?, get_f64(2)?);
            }
            other => return Err(parse_err(lineno, format!("unknown line kind `{other}`"))),
        }
    }

    let f = f.ok_or_else(|| parse_err(0, "pipeline file missing F line"))?;
    let expanded = f + pairs.len();
    let mut first_means = Vec::with_capacity(f);
    let mut first_stds = Vec::with_capacity(f);
    let mut pair_means = Vec::with_capacity(pairs.len());
    let mut pair_stds = Vec::with_capacity(pairs.len());
    for idx in 0..expanded {
        let m = *means
            .get(&idx)
            .ok_or_else(|| parse_err(0, format!("missing mean for index {idx}")))?;
        let s = *stds
            .get(&idx)
            .ok_or_else(|| parse_err(0, format!("missing std for index {idx}")))?;
        if idx < f {
            first_means.push(T::cast(m));
            first_stds.push(T::cast(s));
        } else {
            pair_means.push(T::cast(m));
            pair_stds.push(T::cast(s));
        }
    }
    for &(i, j) in &pairs {
        if i > j || j >= f {
            return Err(parse_err(
                0,
                format!("pair ({i},{j}) out of range for F={f}"),
            ));
        }
    }
    Ok(FeaturePipeline {
        first_means,
        first_stds,
        selected_pairs: pairs,
        pair_means,
        pair_stds,
        corr_threshold: T::cast(DEFAULT_CORR_THRESHOLD),
    })
}

pub fn read_pipeline_file<T: Real>(path: impl AsRef<Path>) -> Result<FeaturePipeline<T>> {
    let file = File::open(path.as_ref())?;
    read_pipeline(BufReader::new(file))
}
