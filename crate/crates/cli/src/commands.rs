//! Implementations of the train / predict / eval / oracle subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pmop::baselines::PairwiseKind;
use pmop::data::{validate_dataset, Dataset};
use pmop::dataio::{
    apply_normalizer, apply_pipeline, build_second_order, fit_normalizer, parse_letor_file,
    read_pipeline_file, write_pipeline_file, FeaturePipeline,
};
use pmop::loss::{DavidsonLoss, FdLoss, ListMleLoss, LossModel, PairwiseLoss, RaoKupperLoss};
use pmop::metrics::{evaluate, RankedList};
use pmop::optim::{
    train_batch, train_stochastic, Algorithm, GeneralGradient, StopReason, TrainConfig, TrainReport,
};
use pmop::oracle;
use pmop::pmop_general::{CdConfig, MhAcceptance, SamplerKind};
use pmop::scoring::score;
use pmop::{Error, Result};

use crate::model_file::{LossName, ModelFile};
use crate::{CliError, EXIT_DATA, EXIT_USAGE};

pub struct TrainOptions {
    pub data: PathBuf,
    pub loss: LossName,
    pub out: PathBuf,
    pub second_order: bool,
    pub corr_threshold: f64,
    pub lr: Option<f64>,
    pub iters: Option<usize>,
    pub rel_tol: f64,
    pub l2: f64,
    pub sampler: Option<String>,
    pub cd_steps: usize,
    pub cd_samples: usize,
    pub seed: u64,
    pub threads: usize,
}

fn load_validated(path: &Path) -> Result<Dataset<f64>> {
    let ds = parse_letor_file::<f64>(path)?;
    let violations = validate_dataset(&ds);
    if !violations.is_empty() {
        let mut msg = format!("{} invariant violation(s):", violations.len());
        for v in violations.iter().take(5) {
            msg.push_str(&format!("\n  {v}"));
        }
        return Err(Error::InvalidInput(msg));
    }
    Ok(ds)
}

fn sampler_for(loss: LossName, flag: Option<&str>) -> std::result::Result<SamplerKind, CliError> {
    let implied = match loss {
        LossName::PmopGibbs => Some(SamplerKind::Gibbs),
        LossName::PmopMh => Some(SamplerKind::MetropolisHastings(MhAcceptance::Verbatim)),
        _ => None,
    };
    match (implied, flag) {
        (None, None) => Err(CliError::new(
            EXIT_USAGE,
            "internal: sampler requested for batch loss",
        )),
        (None, Some(_)) => Err(CliError::new(
            EXIT_USAGE,
            "--sampler only applies to the pmop-gibbs and pmop-mh losses",
        )),
        (Some(s), None) => Ok(s),
        (Some(s), Some(name)) => {
            let wanted = match name {
                "gibbs" => SamplerKind::Gibbs,
                "mh" => SamplerKind::MetropolisHastings(MhAcceptance::Verbatim),
                other => {
                    return Err(CliError::new(
                        EXIT_USAGE,
                        format!("unknown sampler `{other}`; expected gibbs or mh"),
                    ))
                }
            };
            if wanted != s {
                return Err(CliError::new(
                    EXIT_USAGE,
                    format!("--sampler {name} contradicts --loss {loss}"),
                ));
            }
            Ok(s)
        }
    }
}

pub fn cmd_train(opts: TrainOptions) -> std::result::Result<(), CliError> {
    let raw = load_validated(&opts.data)?;

    let base = fit_normalizer(&raw);
    let normalized = apply_normalizer(&base, &raw)?;
    let (pipeline, train_ds): (FeaturePipeline<f64>, Dataset<f64>) = if opts.second_order {
        build_second_order(&normalized, &base, opts.corr_threshold)?
    } else {
        (base, normalized)
    };

    let is_stochastic = matches!(opts.loss, LossName::PmopGibbs | LossName::PmopMh);
    if opts.sampler.is_some() && !is_stochastic {
        return Err(CliError::new(
            EXIT_USAGE,
            "--sampler only applies to the pmop-gibbs and pmop-mh losses",
        ));
    }

    let cfg = TrainConfig::<f64> {
        algorithm: if is_stochastic {
            Algorithm::Sgd
        } else {
            Algorithm::Lbfgs
        },
        max_iters: opts.iters.unwrap_or(if is_stochastic { 1000 } else { 100 }),
        rel_tol: opts.rel_tol,
        learning_rate: opts.lr.unwrap_or(0.1),
        lbfgs_memory: 10,
        l2_lambda: opts.l2,
        seed: opts.seed,
        threads: opts.threads,
    };

    let report: TrainReport<f64> = if is_stochastic {
        let sampler = sampler_for(opts.loss, opts.sampler.as_deref())?;
        let cd = CdConfig {
            sampler,
            mcmc_steps: opts.cd_steps,
            n_samples: opts.cd_samples,
        };
        train_stochastic(&train_ds, &GeneralGradient::Cd(cd), &cfg)?
    } else {
        let loss: Box<dyn LossModel<f64>> = match opts.loss {
            LossName::PmopFd => Box::new(FdLoss),
            LossName::ListMle => Box::new(ListMleLoss),
            LossName::RankNet => Box::new(PairwiseLoss(PairwiseKind::Logistic)),
            LossName::RankSvm => Box::new(PairwiseLoss(PairwiseKind::Hinge)),
            LossName::RankReg => Box::new(PairwiseLoss(PairwiseKind::Quadratic)),
            LossName::TiesRk => Box::new(RaoKupperLoss),
            LossName::TiesD => Box::new(DavidsonLoss),
            LossName::PmopGibbs | LossName::PmopMh => unreachable!(),
        };
        train_batch(&train_ds, loss.as_ref(), &cfg)?
    };

    for (i, obj) in report.objective_trace.iter().enumerate() {
        println!("iter={} objective={obj}", i + 1);
    }
    let stop = match report.stop_reason {
        StopReason::Converged => "converged",
        StopReason::MaxIters => "max-iters",
    };
    println!("stop={stop} iterations={}", report.iterations_run);

    let pipeline_name = format!(
        "{}.pipeline",
        opts.out
            .file_name()
            .map(|s| s.to_string_lossy())
            .unwrap_or_default()
    );
    let pipeline_path = opts.out.with_file_name(&pipeline_name);
    write_pipeline_file(&pipeline, &pipeline_path)?;

    let model = ModelFile {
        loss: opts.loss,
        features: train_ds.feature_count,
        weights: report.final_weights.0.clone(),
        alpha: (opts.loss == LossName::TiesRk).then(|| report.tie_param.unwrap_or(0.0)),
        beta: (opts.loss == LossName::TiesD).then(|| report.tie_param.unwrap_or(0.0)),
        pipeline: Some(pipeline_name),
    };
    model.write_file(&opts.out)?;
    println!("model={}", opts.out.display());
    println!("pipeline={}", pipeline_path.display());
    Ok(())
}

/// Loads the model plus its referenced pipeline (resolved next to the model
/// file) and prepares the dataset for scoring.
fn load_model_and_data(
    model_path: &Path,
    data_path: &Path,
) -> std::result::Result<(ModelFile, Dataset<f64>), CliError> {
    let model = ModelFile::read_file(model_path)?;
    let raw = load_validated(data_path)?;
    let ds = match &model.pipeline {
        Some(name) => {
            let p = model_path.with_file_name(name);
            if !p.exists() {
                return Err(CliError::new(
                    EXIT_DATA,
                    format!(
                        "model references pipeline `{name}` but {} does not exist; \
                         cannot reproduce the model's feature space",
                        p.display()
                    ),
                ));
            }
            let pipeline = read_pipeline_file::<f64>(&p)?;
            apply_pipeline(&pipeline, &raw)?
        }
        None => raw,
    };
    if ds.feature_count != model.features {
        return Err(CliError::new(
            EXIT_DATA,
            format!(
                "model expects {} features but the prepared data has {}",
                model.features, ds.feature_count
            ),
        ));
    }
    Ok((model, ds))
}

pub fn cmd_predict(
    data: &Path,
    model_path: &Path,
    out: &Path,
) -> std::result::Result<(), CliError> {
    let (model, ds) = load_model_and_data(model_path, data)?;
    let mut w = BufWriter::new(File::create(out).map_err(Error::from)?);
    for group in &ds.groups {
        let mut scores = Vec::with_capacity(group.len());
        for d in &group.docs {
            scores.push(score(d, &model.weights)?);
        }
        let list = RankedList::from_scores(&scores, &group.labels);
        let idx: Vec<String> = list.order().iter().map(|i| i.to_string()).collect();
        let sc: Vec<String> = list
            .order()
            .iter()
            .map(|&i| scores[i].to_string())
            .collect();
        writeln!(w, "{}\t{}\t{}", group.query_id, idx.join(" "), sc.join(" "))
            .map_err(Error::from)?;
    }
    Ok(())
}

pub fn cmd_eval(
    data: &Path,
    model_path: &Path,
    ndcg_at: &[usize],
) -> std::result::Result<(), CliError> {
    let (model, ds) = load_model_and_data(model_path, data)?;
    let report = evaluate(&ds, &model.weights, ndcg_at)?;
    print!("{}", report.key_value_lines());
    Ok(())
}

pub enum OracleRequest {
    Fubini(u64),
    Enumerate(usize),
    NormalizeCheck { n: usize, seed: u64 },
}

pub fn cmd_oracle(req: OracleRequest) -> std::result::Result<(), CliError> {
    match req {
        OracleRequest::Fubini(n) => {
            println!("{}", oracle::fubini(n)?);
        }
        OracleRequest::Enumerate(n) => {
            for p in oracle::enumerate_ordered_partitions(n)? {
                println!("{p}");
            }
        }
        OracleRequest::NormalizeCheck { n, seed } => {
            let (fd, general) = oracle::normalization_check(n, seed)?;
            println!("fd_sum={fd}");
            println!("general_sum={general}");
            println!("max_error={}", (fd - 1.0).abs().max((general - 1.0).abs()));
        }
    }
    Ok(())
}
