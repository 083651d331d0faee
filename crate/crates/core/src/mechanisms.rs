//! Privacy-consuming primitives: Gaussian marginal measurement and the
//! exponential mechanism.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::accountant::{exponential_rho, gaussian_rho, RdpLedger};
use crate::dataset::Dataset;
use crate::domain::{Clique, Domain};
use crate::error::{Error, Result};
use crate::marginal::{marginal, DEFAULT_CELL_CAP};

/// Linear map from a clique marginal to the measured vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// `y = w·μ + noise`.
    Identity { weight: f64 },
    /// Row `g` observes `Σ_{t ∈ groups[g]} (w·μ_t + noise)`. Its residual is
    /// multiplied by `row_scales[g]` in the loss. `groups` hold source-cell
    /// indices from before re-expression; row `g` covers model cell `g`.
    Aggregate {
        weight: f64,
        groups: Vec<Vec<usize>>,
        row_scales: Vec<f64>,
    },
}

impl Transform {
    pub fn weight(&self) -> f64 {
        match self {
            Transform::Identity { weight } | Transform::Aggregate { weight, .. } => *weight,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Transform::Identity { .. } => "identity",
            Transform::Aggregate { .. } => "aggregate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub clique: Clique,
    pub transform: Transform,
    pub values: Vec<f64>,
    pub sigma: f64,
}

impl Measurement {
    /// Per-cell coefficient `a` and target `b` so that the measurement's
    /// residual is `a ⊙ μ − b` over the clique's cells.
    pub fn diagonal(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.transform {
            Transform::Identity { weight } => (vec![*weight; self.values.len()], self.values.clone()),
            Transform::Aggregate {
                weight, row_scales, ..
            } => (
                row_scales.iter().map(|s| weight * s).collect(),
                self.values.iter().zip(row_scales).map(|(y, s)| y * s).collect(),
            ),
        }
    }

    /// Rows whose noise-free value is `w·μ_t` exactly, i.e. whose sum
    /// informs the record total. Aggregate rows count with their group sum.
    pub fn sum_estimate(&self) -> Option<(f64, f64)> {
        let w = self.transform.weight();
        if w <= 0.0 {
            return None;
        }
        let n = match &self.transform {
            Transform::Identity { .. } => self.values.len() as f64,
            Transform::Aggregate { groups, .. } => groups.iter().map(Vec::len).sum::<usize>() as f64,
        };
        let est = self.values.iter().sum::<f64>() / w;
        let var = self.sigma * self.sigma * n / (w * w);
        Some((est, var))
    }

    fn check(&self, domain: &Domain) -> Result<()> {
        domain.check_clique(&self.clique)?;
        let cells = domain.cells_f64(&self.clique);
        if !(self.sigma > 0.0) {
            return Err(Error::NonPositiveParameter {
                name: "sigma",
                value: self.sigma,
            });
        }
        let rows = self.values.len();
        if rows as f64 != cells {
            return Err(Error::LengthMismatch(format!(
                "measurement on {} has {rows} values for {cells} cells",
                self.clique
            )));
        }
        if let Transform::Aggregate {
            groups, row_scales, ..
        } = &self.transform
        {
            if groups.len() != rows || row_scales.len() != rows {
                return Err(Error::LengthMismatch(format!(
                    "aggregate on {} has {} groups and {} scales for {rows} rows",
                    self.clique,
                    groups.len(),
                    row_scales.len()
                )));
            }
        }
        Ok(())
    }
}

/// Ordered noisy measurements plus the seed that produced them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementLog {
    pub measurements: Vec<Measurement>,
    pub rng_seed: Option<u64>,
}

impl MeasurementLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn extend(&mut self, other: MeasurementLog) {
        self.measurements.extend(other.measurements);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Measurement> {
        self.measurements.iter()
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        self.measurements.iter().try_for_each(|m| m.check(domain))
    }

    /// Writes a header line then one JSON object per measurement.
    pub fn write_ndjson<W: Write>(&self, domain: &Domain, mut out: W) -> Result<()> {
        let header = LogHeader {
            record: "header".into(),
            rng_seed: self.rng_seed,
            domain_hash: domain.content_hash(),
            count: self.measurements.len(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for m in &self.measurements {
            let (groups, row_scales) = match &m.transform {
                Transform::Identity { .. } => (None, None),
                Transform::Aggregate {
                    groups, row_scales, ..
                } => (Some(groups.clone()), Some(row_scales.clone())),
            };
            let rec = LogRecord {
                clique: domain.clique_names(&m.clique),
                transform: m.transform.kind().into(),
                weight: m.transform.weight(),
                groups,
                row_scales,
                sigma: m.sigma,
                values: m.values.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(domain: &Domain, input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header: LogHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l?)?,
            None => return Err(Error::Parse("measurement log has no header line".into())),
        };
        if header.record != "header" {
            return Err(Error::Parse("first line of a measurement log must be its header".into()));
        }
        let mut log = MeasurementLog {
            measurements: Vec::new(),
            rng_seed: header.rng_seed,
        };
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(&line)?;
            let clique = domain.clique(&rec.clique)?;
            let transform = match rec.transform.as_str() {
                "identity" => Transform::Identity { weight: rec.weight },
                "aggregate" => Transform::Aggregate {
                    weight: rec.weight,
                    groups: rec.groups.unwrap_or_default(),
                    row_scales: rec.row_scales.unwrap_or_default(),
                },
                other => return Err(Error::Parse(format!("unknown transform `{other}`"))),
            };
            let m = Measurement {
                clique,
                transform,
                values: rec.values,
                sigma: rec.sigma,
            };
            m.check(domain)?;
            log.measurements.push(m);
        }
        if log.measurements.len() != header.count {
            return Err(Error::Parse(format!(
                "header announces {} measurements, found {}",
                header.count,
                log.measurements.len()
            )));
        }
        Ok(log)
    }
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    record: String,
    rng_seed: Option<u64>,
    domain_hash: String,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct LogRecord {
    clique: Vec<String>,
    transform: String,
    weight: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    groups: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    row_scales: Option<Vec<f64>>,
    sigma: f64,
    values: Vec<f64>,
}

/// Source of additive measurement noise.
pub trait Noise {
    /// One draw from `N(0, σ²)`.
    fn draw(&mut self, sigma: f64) -> f64;
}

/// Gaussian noise from a caller-owned generator (ziggurat sampler).
pub struct GaussianNoise<R>(pub R);

impl<R: Rng> Noise for GaussianNoise<R> {
    fn draw(&mut self, sigma: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.0);
        sigma * z
    }
}

/// Noise-free test mode.
pub struct ZeroNoise;

impl Noise for ZeroNoise {
    fn draw(&mut self, _sigma: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct MeasureOptions {
    pub cell_cap: usize,
    /// Ledger label for the call.
    pub label: String,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            cell_cap: DEFAULT_CELL_CAP,
            label: "gaussian".into(),
        }
    }
}

/// Scales weights to unit L2 norm.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::NonPositiveParameter {
            name: "weight",
            value: w,
        });
    }
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    Ok(weights.iter().map(|w| w / norm).collect())
}

/// Measures each clique's marginal with weight `w_C` (normalized to unit L2
/// norm) plus i.i.d. `N(0, σ²)` noise per cell, in clique then cell order.
/// The whole batch has L2 sensitivity 1 and is charged once to `ledger`.
pub fn measure_marginals(
    data: &Dataset,
    cliques: &[Clique],
    weights: &[f64],
    sigma: f64,
    noise: &mut dyn Noise,
    ledger: &mut RdpLedger,
    opts: &MeasureOptions,
) -> Result<MeasurementLog> {
    if cliques.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} cliques but {} weights",
            cliques.len(),
            weights.len()
        )));
    }
    let rho = gaussian_rho(sigma, 1.0)?;
    let w = normalize_weights(weights)?;
    // Count everything before drawing any noise so errors leave no trace.
    let mus = cliques
        .iter()
        .map(|c| marginal(data, c, opts.cell_cap))
        .collect::<Result<Vec<_>>>()?;
    let mut log = MeasurementLog::new();
    for (mu, &wc) in mus.into_iter().zip(&w) {
        let values = mu.values.iter().map(|&x| wc * x + noise.draw(sigma)).collect();
        log.measurements.push(Measurement {
            clique: mu.clique,
            transform: Transform::Identity { weight: wc },
            values,
            sigma,
        });
    }
    if !cliques.is_empty() {
        ledger.record(opts.label.clone(), rho);
    }
    Ok(log)
}

/// Samples index `i` with probability `∝ exp(eps_step·scores[i])` and
/// charges `exponential_rho(eps_step, sensitivity)`.
pub fn exponential_mechanism<R: Rng + ?Sized>(
    scores: &[f64],
    eps_step: f64,
    sensitivity: f64,
    rng: &mut R,
    ledger: &mut RdpLedger,
) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let rho = exponential_rho(eps_step, sensitivity)?;
    let probs = exponential_probabilities(scores, eps_step);
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    let mut chosen = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            chosen = i;
            break;
        }
    }
    ledger.record("exponential", rho);
    Ok(chosen)
}

/// Selection probabilities of the exponential mechanism.
pub fn exponential_probabilities(scores: &[f64], eps_step: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| (eps_step * (s - max)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::sync::Arc;

    fn fixture() -> Dataset {
        let dom = Arc::new(Domain::from_sizes(&[("A", 2), ("B", 3)]).unwrap());
        Dataset::from_rows(dom, &[vec![0, 1], vec![1, 2], vec![1, 2]]).unwrap()
    }

    #[test]
    fn weights_normalize_to_unit_norm() {
        let w = normalize_weights(&[1.0, 1.0]).unwrap();
        assert!((w[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(normalize_weights(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn zero_noise_reproduces_marginals() {
        let ds = fixture();
        let cl = vec![Clique::single(1), Clique::pair(0, 1).unwrap()];
        let mut ledger = RdpLedger::new();
        let log = measure_marginals(
            &ds,
            &cl,
            &[1.0, 1.0],
            1.0,
            &mut ZeroNoise,
            &mut ledger,
            &MeasureOptions::default(),
        )
        .unwrap();
        let w = 0.5f64.sqrt();
        let got = &log.measurements[0].values;
        for (g, e) in got.iter().zip([0.0, w, 2.0 * w]) {
            assert!((g - e).abs() < 1e-15);
        }
        assert_eq!(ledger.len(), 1);
        assert_eq!(ledger.total_rho(), 0.5);
    }

    #[test]
    fn same_seed_same_log() {
        let ds = fixture();
        let cl = vec![Clique::pair(0, 1).unwrap()];
        let run = || {
            let mut l = RdpLedger::new();
            let mut noise = GaussianNoise(stream(3, "noise"));
            measure_marginals(&ds, &cl, &[1.0], 5.0, &mut noise, &mut l, &MeasureOptions::default())
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn length_mismatch() {
        let ds = fixture();
        let mut l = RdpLedger::new();
        let r = measure_marginals(
            &ds,
            &[Clique::single(0)],
            &[],
            1.0,
            &mut ZeroNoise,
            &mut l,
            &MeasureOptions::default(),
        );
        assert!(matches!(r, Err(Error::LengthMismatch(_))));
        assert!(l.is_empty());
    }

    #[test]
    fn ndjson_roundtrip() {
        let ds = fixture();
        let mut l = RdpLedger::new();
        let mut noise = GaussianNoise(stream(1, "noise"));
        let mut log = measure_marginals(
            &ds,
            &[Clique::single(0), Clique::pair(0, 1).unwrap()],
            &[1.0, 2.0],
            3.0,
            &mut noise,
            &mut l,
            &MeasureOptions::default(),
        )
        .unwrap();
        log.rng_seed = Some(1);
        log.measurements.push(Measurement {
            clique: Clique::single(1),
            transform: Transform::Aggregate {
                weight: 1.0,
                groups: vec![vec![0], vec![1, 2], vec![]],
                row_scales: vec![1.0, 0.5f64.sqrt(), 1.0],
            },
            values: vec![1.5, -2.25, 0.0],
            sigma: 3.0,
        });
        let mut buf = Vec::new();
        log.write_ndjson(ds.domain(), &mut buf).unwrap();
        let back = MeasurementLog::read_ndjson(ds.domain(), buf.as_slice()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn single_candidate_and_empty() {
        let mut l = RdpLedger::new();
        let mut rng = stream(0, "em");
        assert_eq!(exponential_mechanism(&[3.0], 1.0, 1.0, &mut rng, &mut l).unwrap(), 0);
        assert!(matches!(
            exponential_mechanism(&[], 1.0, 1.0, &mut rng, &mut l),
            Err(Error::EmptyCandidates)
        ));
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn shift_invariance_under_fixed_seed() {
        let scores = [0.3, 1.7, -2.0, 0.9];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 1234.5).collect();
        let mut l = RdpLedger::new();
        for seed in 0..200 {
            let a = exponential_mechanism(&scores, 0.8, 1.0, &mut stream(seed, "em"), &mut l).unwrap();
            let b = exponential_mechanism(&shifted, 0.8, 1.0, &mut stream(seed, "em"), &mut l).unwrap();
            assert_eq!(a, b);
        }
    }
}
