//! End-to-end mechanisms.
//!
//! `nist-mst` selects marginals on public provisional data and spends the
//! whole budget on two Gaussian measurement rounds. `mst` needs no public
//! data: it splits a zCDP budget evenly between one-way measurement, private
//! tree selection and the second measurement round. Both compress the domain
//! using the noisy one-way counts, fit a graphical model to all
//! measurements, generate records and map them back to the input domain.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::accountant::{calibrate_rho, calibrate_sigma, LedgerEntry, PrivacyParams, RdpLedger};
use crate::census::CensusTransform;
use crate::compression::{compress_domain, reexpress_measurements, CompressionMap, decompress};
use crate::dataset::{load_dataset, Dataset};
use crate::domain::{load_domain, Clique, Domain};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, ScoreReport, Workload};
use crate::generation::synth_data_capped;
use crate::marginal::DEFAULT_CELL_CAP;
use crate::mechanisms::{measure_marginals, GaussianNoise, MeasureOptions, MeasurementLog};
use crate::pgm::{estimate, EstimateOptions, SolverDiagnostics};
use crate::rng::stream;
use crate::selection::{
    expand_special, select_private, select_public, special_triple_weight, PrivateSelectionOptions,
    PublicSelectionOptions, SelectionResult,
};

/// Default δ for a population of a few million records.
pub const DEFAULT_DELTA: f64 = 2.2e-12;

/// Relative slack taken off the calibrated `ρ` in `mst` mode so that
/// floating-point rounding in the three-way split can never push the spent
/// budget over the target.
const RHO_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NistMst,
    Mst,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::NistMst => "nist-mst",
            Mode::Mst => "mst",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nist-mst" => Ok(Mode::NistMst),
            "mst" => Ok(Mode::Mst),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    #[serde(default)]
    pub domain: PathBuf,
    #[serde(default)]
    pub data: PathBuf,
    /// Public data for structure selection; `nist-mst` only.
    #[serde(default)]
    pub provisional: Option<PathBuf>,
    /// Cliques given special treatment, as attribute names.
    #[serde(default)]
    pub special: Vec<Vec<String>>,
    pub cell_cap: usize,
    pub iters: usize,
    pub step: f64,
    /// Apply the census home-value and wage transforms.
    #[serde(default)]
    pub census: Option<CensusTransform>,
    /// Synthetic records are written here.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Run manifest; defaults to `<out>.manifest.json`.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    pub workload_triples: usize,
    pub workload_conjunctions: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let est = EstimateOptions::default();
        PipelineConfig {
            mode: Mode::Mst,
            epsilon: 1.0,
            delta: DEFAULT_DELTA,
            seed: 0,
            domain: PathBuf::new(),
            data: PathBuf::new(),
            provisional: None,
            special: Vec::new(),
            cell_cap: DEFAULT_CELL_CAP,
            iters: est.iters,
            step: est.step,
            census: None,
            out: None,
            manifest: None,
            workload_triples: 100,
            workload_conjunctions: 100,
        }
    }
}

impl PipelineConfig {
    pub fn params(&self) -> Result<PrivacyParams> {
        PrivacyParams::new(self.epsilon, self.delta)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        match (self.mode, &self.provisional) {
            (Mode::NistMst, None) => {
                return Err(Error::Config("nist-mst mode requires a provisional dataset".into()))
            }
            (Mode::Mst, Some(_)) => {
                return Err(Error::Config("mst mode does not take a provisional dataset".into()))
            }
            _ => {}
        }
        if self.cell_cap == 0 {
            return Err(Error::Config("cell cap must be positive".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        for c in &self.special {
            if !(2..=3).contains(&c.len()) {
                return Err(Error::Config(format!(
                    "special cliques have 2 or 3 attributes, got [{}]",
                    c.join(",")
                )));
            }
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> Option<PathBuf> {
        self.manifest.clone().or_else(|| {
            self.out.as_ref().map(|o| {
                let mut s = o.clone().into_os_string();
                s.push(".manifest.json");
                PathBuf::from(s)
            })
        })
    }

    fn estimate_options(&self) -> EstimateOptions {
        EstimateOptions {
            iters: self.iters,
            step: self.step,
            cell_cap: self.cell_cap,
            ..EstimateOptions::default()
        }
    }
}

/// Selected cliques by name with their measurement weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub cliques: Vec<Vec<String>>,
    pub weights: Vec<f64>,
}

impl SelectionRecord {
    fn new(domain: &Domain, sel: &SelectionResult) -> Self {
        SelectionRecord {
            cliques: sel.cliques.iter().map(|c| domain.clique_names(c)).collect(),
            weights: sel.weights.clone(),
        }
    }
}

/// Everything needed to audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: PipelineConfig,
    /// Noise scale of every Gaussian round.
    pub sigma: f64,
    /// zCDP budget in `mst` mode.
    pub rho_budget: Option<f64>,
    pub ledger: Vec<LedgerEntry>,
    pub total_rho: f64,
    pub epsilon_spent: f64,
    pub oneway_weights: Vec<f64>,
    pub selection: SelectionRecord,
    pub compression: CompressionMap,
    pub solver: Option<SolverDiagnostics>,
    pub domain_hash: String,
    pub compressed_domain_hash: String,
    pub records: usize,
    pub score: ScoreReport,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Synthetic records over the input domain (after any reverse transform).
    pub synthetic: Dataset,
    pub report: ScoreReport,
    pub manifest: Manifest,
    pub ledger: RdpLedger,
}

impl RunOutput {
    /// Writes the synthetic data and manifest to the configured paths.
    pub fn write(&self, config: &PipelineConfig) -> Result<()> {
        if let Some(out) = &config.out {
            let f = BufWriter::new(File::create(out)?);
            self.synthetic.write_delimited(f, b',')?;
        }
        if let Some(path) = config.manifest_path() {
            let mut f = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut f, &self.manifest)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        Ok(())
    }
}

pub fn read_domain(path: &Path) -> Result<Arc<Domain>> {
    Ok(Arc::new(load_domain(&std::fs::read_to_string(path)?)?))
}

pub fn read_dataset(path: &Path, domain: Arc<Domain>) -> Result<Dataset> {
    load_dataset(BufReader::new(File::open(path)?), domain, b',')
}

/// Loads inputs named by `config` and runs its mode. In `mst` mode the
/// provisional path is never opened.
pub fn run(config: &PipelineConfig) -> Result<RunOutput> {
    config.validate()?;
    let domain = read_domain(&config.domain)?;
    let data = read_dataset(&config.data, domain.clone())?;
    match config.mode {
        Mode::NistMst => {
            let path = config.provisional.as_ref().expect("validated");
            let provisional = read_dataset(path, domain.clone())?;
            run_nist_mst(config, domain, &data, &provisional)
        }
        Mode::Mst => run_mst(config, domain, &data),
    }
}

/// Input domain and data after the optional census transform.
struct Working {
    original: Arc<Domain>,
    domain: Arc<Domain>,
    data: Dataset,
    special: Vec<Clique>,
}

fn prepare(config: &PipelineConfig, domain: Arc<Domain>, data: &Dataset) -> Result<Working> {
    if **data.domain_arc() != *domain {
        return Err(Error::DomainMismatch);
    }
    let (wdomain, wdata) = match &config.census {
        Some(ct) => {
            let t = ct.transform(data)?;
            (t.domain_arc().clone(), t)
        }
        None => (domain.clone(), data.clone()),
    };
    let special = config
        .special
        .iter()
        .map(|names| wdomain.clique(names))
        .collect::<Result<Vec<_>>>()?;
    Ok(Working {
        original: domain,
        domain: wdomain,
        data: wdata,
        special,
    })
}

fn oneway_cliques(d: usize) -> Vec<Clique> {
    (0..d).map(Clique::single).collect()
}

#[allow(clippy::too_many_arguments)]
fn measure(
    data: &Dataset,
    cliques: &[Clique],
    weights: &[f64],
    sigma: f64,
    seed: u64,
    label: &str,
    ledger: &mut RdpLedger,
    cell_cap: usize,
) -> Result<MeasurementLog> {
    let mut noise = GaussianNoise(stream(seed, label));
    let opts = MeasureOptions {
        cell_cap,
        label: label.to_string(),
    };
    let mut log = measure_marginals(data, cliques, weights, sigma, &mut noise, ledger, &opts)?;
    log.rng_seed = Some(seed);
    Ok(log)
}

/// Shared tail: fit, generate, map back, score, and assemble the manifest.
#[allow(clippy::too_many_arguments)]
fn finish(
    config: &PipelineConfig,
    w: Working,
    small: Arc<Domain>,
    map: CompressionMap,
    log: MeasurementLog,
    selection: SelectionRecord,
    sigma: f64,
    rho_budget: Option<f64>,
    oneway_weights: Vec<f64>,
    ledger: RdpLedger,
) -> Result<RunOutput> {
    let model = estimate(&log, small.clone(), &config.estimate_options())?;
    let synth_small = synth_data_capped(&model, None, config.seed, config.cell_cap)?;
    let mut rng = stream(config.seed, "decompress");
    let synth_working = decompress(&synth_small, &map, w.domain.clone(), &mut rng)?;

    let designated: Vec<Clique> = w.special.iter().filter(|c| c.len() == 3).cloned().collect();
    let mut wrng = stream(config.seed, "workload");
    let mut workload = Workload::random(
        &w.domain,
        config.workload_triples,
        config.workload_conjunctions,
        designated,
        &mut wrng,
    )?;
    workload.seed = Some(config.seed);
    let report = evaluate(&w.data, &synth_working, &workload)?;

    let synthetic = match &config.census {
        Some(ct) => ct.reverse(&synth_working, config.seed)?,
        None => synth_working,
    };
    let epsilon_spent = ledger.epsilon(config.delta)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        sigma,
        rho_budget,
        ledger: ledger.entries().to_vec(),
        total_rho: ledger.total_rho(),
        epsilon_spent,
        oneway_weights,
        selection,
        compression: map,
        solver: model.diagnostics.clone(),
        domain_hash: w.original.content_hash(),
        compressed_domain_hash: small.content_hash(),
        records: synthetic.len(),
        score: report.clone(),
    };
    Ok(RunOutput {
        synthetic,
        report,
        manifest,
        ledger,
    })
}

/// Public-selection mechanism: two Gaussian rounds at one noise scale
/// calibrated so the pair composes to exactly `(ε, δ)`.
pub fn run_nist_mst(
    config: &PipelineConfig,
    domain: Arc<Domain>,
    data: &Dataset,
    provisional: &Dataset,
) -> Result<RunOutput> {
    config.validate()?;
    let params = config.params()?;
    let sigma = calibrate_sigma(params, 2)?;
    let w = prepare(config, domain, data)?;
    let prov = match &config.census {
        Some(ct) => ct.transform(provisional)?,
        None => provisional.clone(),
    };
    if *prov.domain() != *w.domain {
        return Err(Error::DomainMismatch);
    }
    let mut ledger = RdpLedger::new();

    let d = w.domain.len();
    let heavy = config.census.as_ref().and_then(|ct| w.domain.index_of(&ct.part_a()));
    let weights: Vec<f64> = (0..d).map(|i| if Some(i) == heavy { 2.0 } else { 1.0 }).collect();
    let oneway = measure(
        &w.data,
        &oneway_cliques(d),
        &weights,
        sigma,
        config.seed,
        "oneway",
        &mut ledger,
        config.cell_cap,
    )?;

    let (small_data, small, map) = compress_domain(&oneway, &w.data, &w.domain)?;
    let small_prov = map.compress(&prov, small.clone())?;
    let opts = PublicSelectionOptions {
        cell_cap: config.cell_cap,
        ..PublicSelectionOptions::default()
    };
    let sel = select_public(&small_prov, params, &w.special, &opts)?;
    let round2 = measure(
        &small_data,
        &sel.cliques,
        &sel.weights,
        sigma,
        config.seed,
        "marginals",
        &mut ledger,
        config.cell_cap,
    )?;

    let mut log = reexpress_measurements(&oneway, &map, &w.domain)?;
    log.extend(round2);
    let oneway_weights = oneway.iter().map(|m| m.transform.weight()).collect();
    let record = SelectionRecord::new(&small, &sel);
    finish(config, w, small, map, log, record, sigma, None, oneway_weights, ledger)
}

/// Private-selection mechanism: `ρ/3` each for one-way measurement, the
/// private spanning tree, and the second round.
pub fn run_mst(config: &PipelineConfig, domain: Arc<Domain>, data: &Dataset) -> Result<RunOutput> {
    config.validate()?;
    let params = config.params()?;
    let rho = calibrate_rho(params)? * (1.0 - RHO_SLACK);
    let sigma = (3.0 / (2.0 * rho)).sqrt();
    let w = prepare(config, domain, data)?;
    let mut ledger = RdpLedger::new();

    let d = w.domain.len();
    let weights = vec![1.0; d];
    let oneway = measure(
        &w.data,
        &oneway_cliques(d),
        &weights,
        sigma,
        config.seed,
        "oneway",
        &mut ledger,
        config.cell_cap,
    )?;
    let (small_data, small, map) = compress_domain(&oneway, &w.data, &w.domain)?;
    let log1 = reexpress_measurements(&oneway, &map, &w.domain)?;

    let (special_pairs, special_triples) = expand_special(&w.special);
    let initial: Vec<(usize, usize)> = special_pairs
        .iter()
        .map(|c| (c.attrs()[0], c.attrs()[1]))
        .collect();
    let popts = PrivateSelectionOptions {
        cell_cap: config.cell_cap,
        estimate: config.estimate_options(),
    };
    let mut rng = stream(config.seed, "select");
    let pairs = select_private(&small_data, &log1, rho / 3.0, &initial, &mut rng, &mut ledger, &popts)?;

    let mut sel = SelectionResult::default();
    for (i, j) in pairs {
        let c = Clique::pair(i, j)?;
        if !sel.cliques.contains(&c) {
            sel.cliques.push(c);
            sel.weights.push(1.0);
        }
    }
    for t in special_triples {
        if !sel.cliques.contains(&t) {
            sel.cliques.push(t);
            sel.weights.push(special_triple_weight(config.epsilon));
        }
    }
    let round2 = measure(
        &small_data,
        &sel.cliques,
        &sel.weights,
        sigma,
        config.seed,
        "marginals",
        &mut ledger,
        config.cell_cap,
    )?;
    let mut log = log1;
    log.extend(round2);
    let record = SelectionRecord::new(&small, &sel);
    finish(config, w, small, map, log, record, sigma, Some(rho), weights, ledger)
}
