use std::fs;
use std::path::{Path, PathBuf};

use sparselab::algorithms::{train, widths_for, AlgorithmKind, AlgorithmSpec, TrainResult};
use sparselab::analysis::{
    check_fractions, degree_correlation, degree_rank_correlation, mean_std, reinit_with_structure,
    sensitivity_sweep, RemovalOrder, ReinitReport, DEFAULT_FRACTIONS,
};
use sparselab::io::csv::{self, Row};
use sparselab::io::{load_structure, write_csv, StructureFile};
use sparselab::{evaluate, train_static, DataSplit, SparseModel};

use crate::config::{AlgoArgs, CommonArgs, RunConfig};
use crate::CliError;

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub algo: AlgoArgs,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
pub struct ReinitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Structure file written by `train`.
    #[arg(long)]
    pub structure: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, clap::Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub algo: AlgoArgs,
    /// Retrain this structure from fresh weights instead of running `--algo`.
    #[arg(long)]
    pub structure: Option<PathBuf>,
    /// magnitude, random, or both comma separated.
    #[arg(long, value_delimiter = ',', default_value = "magnitude,random")]
    pub order: Vec<String>,
    /// Fractions of surviving weights to remove; must start at 0.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, clap::Args)]
pub struct DegreesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub algo: AlgoArgs,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, clap::Args)]
pub struct HybridArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fraction of weights kept in every layer.
    #[arg(long)]
    pub density: Option<f64>,
    /// Epochs after which the mask freezes (default: every epoch 0..=epochs).
    #[arg(long, value_delimiter = ',')]
    pub freeze_epochs: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

const SWEEP_SEEDS: [u64; 3] = [1, 2, 3];

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn run_label(spec: &AlgorithmSpec) -> String {
    format!("{}-d{}", spec.kind, spec.density())
}

fn train_one(cfg: &RunConfig, data: &DataSplit, spec: &AlgorithmSpec, seed: u64) -> Result<TrainResult, CliError> {
    let widths = widths_for(data, &cfg.hidden);
    Ok(train(data, &widths, &cfg.train.with_seed(seed), spec)?)
}

fn nnz_list(masks: &[sparselab::Mask]) -> String {
    masks.iter().map(|m| m.nnz().to_string()).collect::<Vec<_>>().join(",")
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&args.common)?;
    let spec = cfg.algorithm(&args.algo)?;
    let seed = match args.seed {
        Some(s) => s,
        None => cfg.seeds(None, &[1])?[0],
    };
    let data = cfg.data.load()?;
    ensure_out_dir(&cfg.out_dir)?;

    let result = train_one(&cfg, &data, &spec, seed)?;
    let stem = format!("{}-s{seed}", run_label(&spec));
    let structure = StructureFile::from_result(&result)?;
    sparselab::io::structure::write_structure(&structure, cfg.out_dir.join(format!("{stem}.structure")))?;
    write_csv(
        &csv::history_rows(&result),
        &csv::HISTORY,
        cfg.out_dir.join(format!("{stem}-history.csv")),
    )?;
    let last = result.history.last();
    println!(
        "algo={} density={} seed={seed} epochs={} train_loss={} test_accuracy={} nnz={}",
        spec.kind,
        spec.density(),
        result.epochs,
        csv::fmt_opt(last.map(|h| h.train_loss)),
        csv::fmt_opt(last.map(|h| h.test_accuracy)),
        nnz_list(&result.final_masks),
    );
    Ok(())
}

/// Loads a structure and checks it fits the dataset.
fn load_fitting_structure(path: &Path, data: &DataSplit) -> Result<StructureFile, CliError> {
    if !path.is_file() {
        return Err(CliError::usage(format!("structure file {} not found", path.display())));
    }
    let file = load_structure(path).map_err(CliError::usage_from)?;
    let (first, last) = (file.layer_shapes[0], *file.layer_shapes.last().unwrap());
    if first.1 != data.train.n_features() || last.0 != data.train.n_classes() {
        return Err(CliError::usage(format!(
            "structure {} maps {} inputs to {} outputs but the dataset has {} features and {} classes",
            path.display(),
            first.1,
            last.0,
            data.train.n_features(),
            data.train.n_classes()
        )));
    }
    Ok(file)
}

fn retrain_structure(file: &StructureFile, cfg: &RunConfig, data: &DataSplit, seed: u64) -> Result<SparseModel, CliError> {
    let model = reinit_with_structure(&file.masks()?, &file.layer_shapes, seed)?;
    Ok(train_static(model, &data.train, &cfg.train.with_seed(seed))?)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "structure".into())
}

pub fn cmd_reinit(args: &ReinitArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&args.common)?;
    let seeds = cfg.seeds(args.seeds.as_deref(), &SWEEP_SEEDS)?;
    let data = cfg.data.load()?;
    let file = load_fitting_structure(&args.structure, &data)?;
    ensure_out_dir(&cfg.out_dir)?;

    let accuracies = seeds
        .iter()
        .map(|&seed| {
            let model = retrain_structure(&file, &cfg, &data, seed)?;
            Ok(evaluate(&model, &data.test)?.accuracy)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (mean, std) = mean_std(&accuracies);
    let report = ReinitReport {
        source_algorithm: file.meta.algorithm,
        density: file.meta.density,
        seeds,
        accuracies,
        mean,
        std,
    };
    let out = cfg.out_dir.join(format!("reinit-{}.csv", file_stem(&args.structure)));
    write_csv(&csv::reinit_rows(&report), &csv::REINIT, &out)?;
    println!(
        "source={} density={} seeds={} mean={} std_population={}",
        report.source_algorithm,
        report.density,
        report.seeds.len(),
        mean,
        std
    );
    Ok(())
}

pub fn cmd_sensitivity(args: &SensitivityArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&args.common)?;
    let seeds = cfg.seeds(args.seeds.as_deref(), &SWEEP_SEEDS)?;
    let orders = args
        .order
        .iter()
        .map(|o| o.parse::<RemovalOrder>().map_err(CliError::usage_from))
        .collect::<Result<Vec<_>, _>>()?;
    let fractions = args.fractions.clone().unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec());
    check_fractions(&fractions).map_err(CliError::usage_from)?;
    // Only validated when it is actually used.
    let spec = match &args.structure {
        Some(_) => None,
        None => Some(cfg.algorithm(&args.algo)?),
    };
    let data = cfg.data.load()?;
    let structure = match &args.structure {
        Some(p) => Some(load_fitting_structure(p, &data)?),
        None => None,
    };
    ensure_out_dir(&cfg.out_dir)?;

    let mut rows: Vec<Row> = Vec::new();
    for &seed in &seeds {
        let model = match (&structure, &spec) {
            (Some(file), _) => retrain_structure(file, &cfg, &data, seed)?,
            (None, Some(spec)) => train_one(&cfg, &data, spec, seed)?.model,
            (None, None) => unreachable!(),
        };
        for &order in &orders {
            let curve = sensitivity_sweep(&model, order, &fractions, &data.test, seed)?;
            let area = sparselab::analysis::curve_area(&curve)?;
            println!("seed={seed} order={order} area={area}");
            rows.extend(csv::sensitivity_rows(&curve));
        }
    }
    let label = match (&args.structure, &spec) {
        (Some(p), _) => file_stem(p),
        (None, Some(spec)) => run_label(spec),
        (None, None) => unreachable!(),
    };
    write_csv(&rows, &csv::SENSITIVITY, cfg.out_dir.join(format!("sensitivity-{label}.csv")))?;
    Ok(())
}

pub fn cmd_degrees(args: &DegreesArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&args.common)?;
    let spec = cfg.algorithm(&args.algo)?;
    let seeds = cfg.seeds(args.seeds.as_deref(), &[1])?;
    let data = cfg.data.load()?;
    ensure_out_dir(&cfg.out_dir)?;

    for &seed in &seeds {
        let result = train_one(&cfg, &data, &spec, seed)?;
        let stem = format!("{}-s{seed}", run_label(&spec));
        let mut corr_rows: Vec<Row> = Vec::new();
        for trace in &result.degree_trace {
            let l = trace.layer_index();
            write_csv(
                &csv::degree_rows(trace),
                &csv::DEGREES,
                cfg.out_dir.join(format!("degrees-{stem}-layer{l}.csv")),
            )?;
            let last = trace.epochs();
            let mut pairs = vec![(0, last), (1.min(last), last), (last, last)];
            pairs.dedup();
            for (a, b) in pairs {
                let pearson = degree_correlation(trace, a, b)?;
                let spearman = degree_rank_correlation(trace, a, b)?;
                corr_rows.push(vec![
                    l.to_string(),
                    a.to_string(),
                    b.to_string(),
                    csv::fmt_opt(pearson),
                    csv::fmt_opt(spearman),
                ]);
            }
            println!(
                "seed={seed} layer={l} pearson_first_final={}",
                csv::fmt_opt(degree_correlation(trace, 1.min(last), last)?)
            );
        }
        write_csv(
            &corr_rows,
            &csv::CORRELATION,
            cfg.out_dir.join(format!("correlation-{stem}.csv")),
        )?;
    }
    Ok(())
}

pub fn cmd_hybrid_sweep(args: &HybridArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&args.common)?;
    let seeds = cfg.seeds(args.seeds.as_deref(), &SWEEP_SEEDS)?;
    let epochs = cfg.train.epochs;
    let freezes = args.freeze_epochs.clone().unwrap_or_else(|| (0..=epochs).collect());
    if freezes.is_empty() {
        return Err(CliError::usage("at least one freeze epoch is required"));
    }
    if let Some(&bad) = freezes.iter().find(|&&f| f > epochs) {
        return Err(CliError::usage(format!("freeze epoch {bad} exceeds {epochs} epochs")));
    }
    let density = args
        .density
        .or(cfg.file.algorithm.density)
        .unwrap_or(0.095);
    let specs = freezes
        .iter()
        .map(|&f| AlgorithmSpec::hybrid(density, f).map_err(CliError::usage_from))
        .collect::<Result<Vec<_>, _>>()?;
    let data = cfg.data.load()?;
    ensure_out_dir(&cfg.out_dir)?;

    let mut sorted: Vec<(usize, AlgorithmSpec)> = freezes.iter().copied().zip(specs).collect();
    sorted.sort_by_key(|(f, _)| *f);
    sorted.dedup_by_key(|(f, _)| *f);

    let mut rows: Vec<Row> = Vec::new();
    let mut summary: Vec<Row> = Vec::new();
    for (freeze, spec) in &sorted {
        let mut accs = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let result = train_one(&cfg, &data, spec, seed)?;
            let acc = evaluate(&result.model, &data.test)?.accuracy;
            rows.push(vec![freeze.to_string(), seed.to_string(), csv::fmt_f64(acc)]);
            accs.push(acc);
        }
        let (mean, std) = mean_std(&accs);
        println!("freeze_epoch={freeze} mean={mean} std_population={std}");
        summary.push(vec![freeze.to_string(), csv::fmt_f64(mean), csv::fmt_f64(std)]);
    }
    let label = format!("{}-d{density}", AlgorithmKind::HybridDnw);
    write_csv(&rows, &csv::HYBRID, cfg.out_dir.join(format!("{label}-sweep.csv")))?;
    write_csv(
        &summary,
        &csv::HYBRID_SUMMARY,
        cfg.out_dir.join(format!("{label}-sweep-summary.csv")),
    )?;
    Ok(())
}
