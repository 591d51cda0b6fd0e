//! Command-line front end.
//!
//! Exit codes: 0 success, 1 user error (bad input, config, data or network),
//! 2 internal failure.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::metrics::{resource_estimate, MetricError, RegressionReport, SplitKind};
use crate::molio::{
    featurize_all, parse_concatenated, read_feature_csv, read_xyz_dir, split_dataset, write_feature_csv,
    ColumnLayout, DatasetSplit, MolError, Molecule, PropertyKind, Sample,
};
use crate::persist::{ModelFile, ModelFileError, Provenance};
use crate::trainer::{score_into, train, Architecture, TrainError, Variant};

/// Overrides the default data directory (`./data`).
pub const DATA_ENV: &str = "PHOTONIC_ONN_DATA";
const ARCHIVE_NAME: &str = "dsgdb9nsd.xyz.tar.bz2";

#[derive(Debug, Parser)]
#[command(name = "photonic-onn", version, about = "Optical complex-valued network trainer for molecular properties")]
pub struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory, overrides the configured one.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download the dataset archive and verify its checksum.
    Fetch(FetchArgs),
    /// Parse records and write the eigenvalue feature cache.
    Featurize(FeaturizeArgs),
    /// Train one model variant with the genetic algorithm.
    Train,
    /// Score a saved model.
    Eval(EvalArgs),
    /// Train several variants over several seeds on shared splits.
    Compare,
    /// Throughput and power of an optical network.
    Resources(ResourceArgs),
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// Archive URL; there is no built-in mirror.
    #[arg(long)]
    pub url: String,
    /// Expected SHA-256 (hex). Without it the computed digest is only reported.
    #[arg(long)]
    pub sha256: Option<String>,
    /// Destination file; defaults to the data directory.
    #[arg(long)]
    pub dest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// Directory of `.xyz` records or one concatenated file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Feature cache to write; defaults to `<data>/features.csv`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = crate::molio::FEATURE_COUNT)]
    pub eigenvalues: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Score every row of this feature cache instead of rebuilding the training split.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ResourceArgs {
    /// Number of optical layers m.
    #[arg(long, default_value_t = 1.0)]
    pub layers: f64,
    /// Modes per layer N.
    #[arg(long, default_value_t = 8.0)]
    pub modes: f64,
    /// Detection rate D in Hz.
    #[arg(long, default_value_t = 1e9)]
    pub rate: f64,
    /// Saturation power density p in W/cm².
    #[arg(long, default_value_t = 1.0)]
    pub saturation_power: f64,
    /// Detector cross-section A in cm².
    #[arg(long, default_value_t = 1e-4)]
    pub cross_section: f64,
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("network failure fetching {url}: {reason}")]
    NetworkFailure { url: String, reason: String },
    #[error("checksum mismatch: expected {expected}, got {actual}")]
    ChecksumMismatch { expected: String, actual: String },
}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>()
            || cause.is::<MolError>()
            || cause.is::<FetchError>()
            || cause.is::<std::io::Error>()
            || cause.is::<MetricError>()
            || cause.is::<UserError>()
        {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<ModelFileError>() {
            return if matches!(e, ModelFileError::Model(_)) { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return if matches!(e, TrainError::Invalid(_) | TrainError::Data(_)) { 1 } else { 2 };
        }
    }
    2
}

#[derive(Debug, Error)]
pub enum UserError {
    #[error("no valid records in {0}")]
    NoValidRecords(PathBuf),
    #[error("{0}")]
    Usage(String),
}

fn data_dir() -> PathBuf {
    std::env::var_os(DATA_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = cli.threads;
    let work = move || dispatch(cli);
    match threads {
        Some(0) => Err(UserError::Usage("--threads must be positive".into()).into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(work),
        None => work(),
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.ga.seed = seed;
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Fetch(a) => fetch(a, cli.out.as_deref()),
        Command::Featurize(a) => featurize(a),
        Command::Train => cmd_train(&load_config(&cli)?),
        Command::Eval(a) => cmd_eval(&load_config(&cli)?, a),
        Command::Compare => cmd_compare(&load_config(&cli)?),
        Command::Resources(a) => resources(a),
    }
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Downloads to `<dest>.part`, hashing as it streams; the partial file never survives a failure.
fn fetch(a: &FetchArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let dest = a.dest.clone().unwrap_or_else(|| out.map_or_else(data_dir, Path::to_path_buf).join(ARCHIVE_NAME));
    let expected = a.sha256.as_ref().map(|s| s.trim().to_ascii_lowercase());
    if dest.exists() {
        let actual = sha256_file(&dest)?;
        match &expected {
            Some(e) if *e != actual => log::warn!("{} has checksum {actual}, downloading again", dest.display()),
            _ => {
                println!("{} already present (sha256 {actual})", dest.display());
                return Ok(());
            }
        }
    }
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let part = dest.with_extension("part");
    let result = download(&a.url, &part).and_then(|actual| match &expected {
        Some(e) if *e != actual => {
            Err(FetchError::ChecksumMismatch { expected: e.clone(), actual }.into())
        }
        _ => Ok(actual),
    });
    match result {
        Ok(actual) => {
            fs::rename(&part, &dest)?;
            println!("fetched {} (sha256 {actual})", dest.display());
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&part);
            Err(e)
        }
    }
}

fn download(url: &str, part: &Path) -> anyhow::Result<String> {
    let net = |reason: String| FetchError::NetworkFailure { url: url.into(), reason };
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_connect(Some(Duration::from_secs(30)))
        .build()
        .into();
    let response = agent.get(url).call().map_err(|e| net(e.to_string()))?;
    let mut reader = response.into_body().into_reader();
    let mut file = BufWriter::new(File::create(part)?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf).map_err(|e| net(e.to_string()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        file.write_all(&buf[..n])?;
    }
    file.flush()?;
    Ok(hex::encode(hasher.finalize()))
}

/// Parses records, keeping each failure with its source.
fn parse_input(input: &Path) -> anyhow::Result<(Vec<Molecule>, Vec<(String, String)>)> {
    let layout = ColumnLayout::default();
    let parsed: Vec<(String, Result<Molecule, MolError>)> = if input.is_dir() {
        read_xyz_dir(input, &layout)
            .with_context(|| format!("reading {}", input.display()))?
            .into_iter()
            .map(|(p, m)| (p.display().to_string(), m))
            .collect()
    } else {
        let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
        parse_concatenated(&text, &layout)
            .into_iter()
            .enumerate()
            .map(|(i, m)| (format!("{}#{}", input.display(), i + 1), m))
            .collect()
    };
    let mut mols = Vec::new();
    let mut skipped = Vec::new();
    for (source, m) in parsed {
        match m {
            Ok(m) => mols.push(m),
            Err(e) => {
                log::warn!("skipping {source}: {e}");
                skipped.push((source, e.to_string()));
            }
        }
    }
    Ok((mols, skipped))
}

fn featurize_records(mols: &[Molecule], k: usize, skipped: &mut Vec<(String, String)>) -> Vec<Sample> {
    let mut samples = Vec::new();
    for (m, s) in mols.iter().zip(featurize_all(mols, k)) {
        match s {
            Ok(s) => samples.push(s),
            Err(e) => {
                log::warn!("skipping {}: {e}", m.id);
                skipped.push((m.id.clone(), e.to_string()));
            }
        }
    }
    samples
}

fn featurize(a: &FeaturizeArgs) -> anyhow::Result<()> {
    let input = a.input.clone().unwrap_or_else(data_dir);
    let output = a.output.clone().unwrap_or_else(|| data_dir().join("features.csv"));
    let (mols, mut skipped) = parse_input(&input)?;
    let samples = featurize_records(&mols, a.eigenvalues, &mut skipped);
    if samples.is_empty() {
        bail!(UserError::NoValidRecords(input));
    }
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(&output)?);
    write_feature_csv(&mut w, &samples)?;
    w.flush()?;
    let manifest = output.with_extension("skipped.csv");
    let mut m = BufWriter::new(File::create(&manifest)?);
    writeln!(m, "source,reason")?;
    for (source, reason) in &skipped {
        writeln!(m, "{},\"{}\"", source, reason.replace('"', "'"))?;
    }
    m.flush()?;
    println!(
        "featurized {} records into {} ({} skipped, see {})",
        samples.len(),
        output.display(),
        skipped.len(),
        manifest.display()
    );
    Ok(())
}

/// Samples from the configured feature cache, raw records, or `<data>/features.csv`.
fn load_samples(cfg: &RunConfig) -> anyhow::Result<Vec<Sample>> {
    let samples = match (&cfg.features, &cfg.xyz_dir) {
        (Some(path), _) => read_cache(path)?,
        (None, Some(dir)) => {
            let (mols, mut skipped) = parse_input(dir)?;
            featurize_records(&mols, cfg.eigenvalues, &mut skipped)
        }
        (None, None) => read_cache(&data_dir().join("features.csv"))?,
    };
    Ok(samples)
}

fn read_cache(path: &Path) -> anyhow::Result<Vec<Sample>> {
    let file = File::open(path).with_context(|| format!("opening feature cache {}", path.display()))?;
    Ok(read_feature_csv(BufReader::new(file)).with_context(|| format!("in {}", path.display()))?)
}

fn write_report(report: &RegressionReport, dir: &Path) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(dir.join("report.csv"))?);
    report.write_csv(&mut w)?;
    w.flush()?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report.to_json())? + "\n")?;
    Ok(())
}

fn print_report(report: &RegressionReport) -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    report.write_csv(&mut lock)?;
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> anyhow::Result<()> {
    let samples = load_samples(cfg)?;
    let seed = cfg.ga.seed;
    let split = split_dataset(&samples, seed, cfg.n_train, cfg.n_test)?;
    let outcome = train(&split, cfg.arch, &cfg.properties, &cfg.ga)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;

    let provenance = Provenance {
        seed,
        split_seed: seed,
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        generations: cfg.ga.generations,
        config_sha256: cfg.sha256(),
        train_fitness: format!("{:e}", outcome.best_fitness),
        package_version: env!("CARGO_PKG_VERSION").into(),
    };
    ModelFile::from_outcome(&outcome, provenance).save(&cfg.out.join("model.json"))?;
    let mut h = BufWriter::new(File::create(cfg.out.join("history.csv"))?);
    outcome.history.write_csv(&mut h)?;
    h.flush()?;
    fs::write(
        cfg.out.join("history.json"),
        serde_json::to_string_pretty(&outcome.history.summary_json())? + "\n",
    )?;
    write_report(&outcome.report, &cfg.out)?;
    print_report(&outcome.report)?;
    println!("model written to {}", cfg.out.join("model.json").display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, a: &EvalArgs) -> anyhow::Result<()> {
    let file = ModelFile::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let model = file.model()?;
    let mut report = RegressionReport::default();
    match &a.features {
        Some(path) => {
            let samples = read_cache(path)?;
            check_width(&samples, file.n_features)?;
            score_into(&model, &samples, SplitKind::Test, &mut report)?;
        }
        None => {
            let p = &file.provenance;
            let samples = load_samples(cfg)?;
            check_width(&samples, file.n_features)?;
            let split = split_dataset(&samples, p.split_seed, p.n_train, p.n_test)?;
            score_into(&model, &split.train, SplitKind::Train, &mut report)?;
            if !split.test.is_empty() {
                score_into(&model, &split.test, SplitKind::Test, &mut report)?;
            }
        }
    }
    fs::create_dir_all(&cfg.out)?;
    write_report(&report, &cfg.out)?;
    print_report(&report)
}

fn check_width(samples: &[Sample], expected: usize) -> anyhow::Result<()> {
    match samples.iter().find(|s| s.features.len() != expected) {
        Some(s) => Err(UserError::Usage(format!(
            "record {} has {} features, model expects {expected}",
            s.id,
            s.features.len()
        ))
        .into()),
        None => Ok(()),
    }
}

/// One trained run of `compare`.
pub struct CompareRun {
    pub variant: Variant,
    pub seed: u64,
    pub report: RegressionReport,
}

/// Trains every variant on the same split for each seed.
pub fn compare_runs(cfg: &RunConfig, samples: &[Sample]) -> anyhow::Result<Vec<CompareRun>> {
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let split: DatasetSplit = split_dataset(samples, seed, cfg.n_train, cfg.n_test)?;
        for &variant in &cfg.variants {
            let arch = Architecture { variant, ..cfg.arch };
            let ga = crate::evolve::GaConfig { seed, ..cfg.ga.clone() };
            let out = train(&split, arch, &cfg.properties, &ga)
                .with_context(|| format!("training {variant} with seed {seed}"))?;
            runs.push(CompareRun { variant, seed, report: out.report });
        }
    }
    Ok(runs)
}

fn cmd_compare(cfg: &RunConfig) -> anyhow::Result<()> {
    if cfg.variants.len() < 2 {
        bail!(ConfigError::Invalid("compare needs at least two variants".into()));
    }
    let samples = load_samples(cfg)?;
    let runs = compare_runs(cfg, &samples)?;
    fs::create_dir_all(&cfg.out)?;

    let mut w = BufWriter::new(File::create(cfg.out.join("compare_runs.csv"))?);
    writeln!(w, "variant,seed,property,split,mae,rmse,r2,gradient")?;
    for r in &runs {
        for ((p, split), s) in &r.report.scores {
            writeln!(
                w,
                "{},{},{},{},{:e},{:e},{:e},{:e}",
                r.variant,
                r.seed,
                p,
                split.as_str(),
                s.mae,
                s.rmse,
                s.r2,
                s.bestfit_gradient
            )?;
        }
    }
    w.flush()?;

    // mean test scores over seeds, one column per (property, variant)
    let mut sums: BTreeMap<(PropertyKind, Variant), [f64; 4]> = BTreeMap::new();
    let n = cfg.seeds.len() as f64;
    for r in &runs {
        for p in &cfg.properties {
            if let Some(s) = r.report.get(*p, SplitKind::Test) {
                let e = sums.entry((*p, r.variant)).or_insert([0.0; 4]);
                for (acc, v) in e.iter_mut().zip([s.mae, s.rmse, s.bestfit_gradient, s.r2]) {
                    *acc += v / n;
                }
            }
        }
    }
    let mut table = String::from("metric");
    for p in &cfg.properties {
        for v in &cfg.variants {
            table += &format!(",{p} ({v})");
        }
    }
    table.push('\n');
    for (i, name) in ["MAE", "RMSE", "Gradient", "R2"].iter().enumerate() {
        table += name;
        for p in &cfg.properties {
            for v in &cfg.variants {
                table += &sums.get(&(*p, *v)).map_or_else(|| ",".to_string(), |m| format!(",{:.6}", m[i]));
            }
        }
        table.push('\n');
    }
    fs::write(cfg.out.join("compare_table.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn resources(a: &ResourceArgs) -> anyhow::Result<()> {
    let r = resource_estimate(a.layers, a.modes, a.rate, a.saturation_power, a.cross_section)?;
    println!("flops,{:e}", r.flops);
    println!("power_w,{:e}", r.power);
    println!("flops_per_watt,{:e}", r.efficiency);
    Ok(())
}
