//! Command-line front end for the synthesizer.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 solver
//! error. On failure the error's name is printed first on standard error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pgmsynth::accountant::{calibrate_sigma, PrivacyParams};
use pgmsynth::census::CensusTransform;
use pgmsynth::evaluation::{evaluate, Workload, WorkloadDocument};
use pgmsynth::generation::synth_data_capped;
use pgmsynth::mechanisms::{measure_marginals, GaussianNoise, MeasureOptions};
use pgmsynth::pgm::{estimate, EstimateOptions, GraphicalModel, ModelDocument};
use pgmsynth::pipeline::{read_dataset, read_domain, run, Mode, PipelineConfig, DEFAULT_DELTA};
use pgmsynth::rng::stream;
use pgmsynth::selection::{select_public, PublicSelectionOptions};
use pgmsynth::{Clique, Dataset, Domain, Error, ErrorKind, MeasurementLog, RdpLedger, DEFAULT_CELL_CAP};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "pgmsynth", version, about = "Differentially private synthetic tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a full mechanism and write synthetic data plus a manifest.
    Run(RunArgs),
    /// Measure noisy marginals and write a measurement log.
    Measure(MeasureArgs),
    /// Choose marginals on public provisional data.
    Select(SelectArgs),
    /// Fit a graphical model to a measurement log.
    Estimate(EstimateArgs),
    /// Generate records from a fitted model.
    Synth(SynthArgs),
    /// Score synthetic data against the truth on a query workload.
    Evaluate(EvaluateArgs),
    /// Summarize a measurement log.
    InspectLog(InspectArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    NistMst,
    Mst,
}

#[derive(Args, Debug)]
struct PrivacyArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value_t = EstimateOptions::default().iters)]
    iters: usize,
    #[arg(long, default_value_t = EstimateOptions::default().step)]
    step: f64,
    #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
    cell_cap: usize,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[command(flatten)]
    privacy: PrivacyArgs,
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    provisional: Option<PathBuf>,
    /// Synthetic data path; the manifest goes to `<out>.manifest.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Split INCWAGE and bucket VALUEH before measuring.
    #[arg(long)]
    census_transforms: bool,
    /// Comma-separated attribute names; repeatable.
    #[arg(long)]
    special: Vec<String>,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    #[command(flatten)]
    privacy: PrivacyArgs,
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated attribute names; repeatable. Defaults to every
    /// one-way marginal.
    #[arg(long = "clique")]
    cliques: Vec<String>,
    /// Noise scale; calibrated from ε and δ for a single release if absent.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
    cell_cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    provisional: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long)]
    special: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
    cell_cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    log: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record count; the model's estimated total if absent.
    #[arg(long)]
    records: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
    cell_cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    synth: PathBuf,
    /// Workload document; a random one is drawn from `--seed` if absent.
    #[arg(long)]
    workload: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    log: PathBuf,
}

fn cliques(domain: &Domain, specs: &[String]) -> pgmsynth::Result<Vec<Clique>> {
    specs
        .iter()
        .map(|s| {
            let names: Vec<&str> = s.split(',').map(str::trim).collect();
            domain.clique(&names)
        })
        .collect()
}

fn split_names(specs: &[String]) -> Vec<Vec<String>> {
    specs
        .iter()
        .map(|s| s.split(',').map(|n| n.trim().to_string()).collect())
        .collect()
}

fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> pgmsynth::Result<()> {
    match out {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            serde_json::to_writer_pretty(&mut f, value)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, value)?;
            lock.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> pgmsynth::Result<()> {
    let config = PipelineConfig {
        mode: match a.mode {
            ModeArg::NistMst => Mode::NistMst,
            ModeArg::Mst => Mode::Mst,
        },
        epsilon: a.privacy.epsilon,
        delta: a.privacy.delta,
        seed: a.privacy.seed,
        domain: a.domain,
        data: a.data,
        provisional: a.provisional,
        special: split_names(&a.special),
        cell_cap: a.solver.cell_cap,
        iters: a.solver.iters,
        step: a.solver.step,
        census: a.census_transforms.then(CensusTransform::default),
        out: Some(a.out),
        manifest: a.manifest,
        ..PipelineConfig::default()
    };
    let output = run(&config)?;
    output.write(&config)?;
    eprintln!(
        "wrote {} records; epsilon spent {:.6} of {}",
        output.synthetic.len(),
        output.manifest.epsilon_spent,
        config.epsilon
    );
    Ok(())
}

fn cmd_measure(a: MeasureArgs) -> pgmsynth::Result<()> {
    let domain = read_domain(&a.domain)?;
    let data = read_dataset(&a.data, domain.clone())?;
    let params = PrivacyParams::new(a.privacy.epsilon, a.privacy.delta)?;
    let sigma = match a.sigma {
        Some(s) => s,
        None => calibrate_sigma(params, 1)?,
    };
    let cs = if a.cliques.is_empty() {
        (0..domain.len()).map(Clique::single).collect()
    } else {
        cliques(&domain, &a.cliques)?
    };
    let weights = vec![1.0; cs.len()];
    let mut ledger = RdpLedger::new();
    let mut noise = GaussianNoise(stream(a.privacy.seed, "measure"));
    let opts = MeasureOptions {
        cell_cap: a.cell_cap,
        ..MeasureOptions::default()
    };
    let mut log = measure_marginals(&data, &cs, &weights, sigma, &mut noise, &mut ledger, &opts)?;
    log.rng_seed = Some(a.privacy.seed);
    let f = BufWriter::new(File::create(&a.out)?);
    log.write_ndjson(&domain, f)?;
    eprintln!(
        "{}",
        json!({"sigma": sigma, "ledger": ledger, "epsilon": ledger.epsilon(params.delta)?})
    );
    Ok(())
}

fn cmd_select(a: SelectArgs) -> pgmsynth::Result<()> {
    let domain = read_domain(&a.domain)?;
    let prov = read_dataset(&a.provisional, domain.clone())?;
    let params = PrivacyParams::new(a.epsilon, a.delta)?;
    let special = cliques(&domain, &a.special)?;
    let opts = PublicSelectionOptions {
        cell_cap: a.cell_cap,
        ..PublicSelectionOptions::default()
    };
    let sel = select_public(&prov, params, &special, &opts)?;
    let doc = json!({
        "cliques": sel.cliques.iter().map(|c| domain.clique_names(c)).collect::<Vec<_>>(),
        "weights": sel.weights,
    });
    emit_json(a.out.as_deref(), &doc)
}

fn read_log(domain: &Domain, path: &Path) -> pgmsynth::Result<MeasurementLog> {
    MeasurementLog::read_ndjson(domain, BufReader::new(File::open(path)?))
}

fn cmd_estimate(a: EstimateArgs) -> pgmsynth::Result<()> {
    let domain = read_domain(&a.domain)?;
    let log = read_log(&domain, &a.log)?;
    let opts = EstimateOptions {
        iters: a.solver.iters,
        step: a.solver.step,
        cell_cap: a.solver.cell_cap,
        ..EstimateOptions::default()
    };
    let model = estimate(&log, domain, &opts)?;
    emit_json(Some(&a.out), &serde_json::to_value(model.to_document())?)
}

fn cmd_synth(a: SynthArgs) -> pgmsynth::Result<()> {
    let domain = read_domain(&a.domain)?;
    let doc: ModelDocument = serde_json::from_reader(BufReader::new(File::open(&a.model)?))?;
    let model = GraphicalModel::from_document(domain, doc)?;
    let data = synth_data_capped(&model, a.records, a.seed, a.cell_cap)?;
    let f = BufWriter::new(File::create(&a.out)?);
    data.write_delimited(f, b',')
}

fn cmd_evaluate(a: EvaluateArgs) -> pgmsynth::Result<()> {
    let domain = read_domain(&a.domain)?;
    let truth = read_dataset(&a.truth, domain.clone())?;
    let synth: Dataset = read_dataset(&a.synth, domain.clone())?;
    let workload = match &a.workload {
        Some(p) => {
            let doc: WorkloadDocument = serde_json::from_reader(BufReader::new(File::open(p)?))?;
            Workload::from_document(&domain, &doc)?
        }
        None => {
            let mut rng = stream(a.seed, "workload");
            let mut w = Workload::random(&domain, 100, 100, Vec::new(), &mut rng)?;
            w.seed = Some(a.seed);
            w
        }
    };
    let report = evaluate(&truth, &synth, &workload)?;
    emit_json(a.out.as_deref(), &serde_json::to_value(&report)?)
}

fn cmd_inspect(a: InspectArgs) -> pgmsynth::Result<()> {
    let domain: Arc<Domain> = read_domain(&a.domain)?;
    let log = read_log(&domain, &a.log)?;
    let rows: Vec<_> = log
        .iter()
        .map(|m| {
            json!({
                "clique": domain.clique_names(&m.clique),
                "transform": m.transform.kind(),
                "weight": m.transform.weight(),
                "sigma": m.sigma,
                "cells": m.values.len(),
            })
        })
        .collect();
    emit_json(
        None,
        &json!({"measurements": log.len(), "rng_seed": log.rng_seed, "entries": rows}),
    )
}

fn dispatch(cli: Cli) -> pgmsynth::Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Measure(a) => cmd_measure(a),
        Command::Select(a) => cmd_select(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::InspectLog(a) => cmd_inspect(a),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Solver => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("ConfigError");
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
