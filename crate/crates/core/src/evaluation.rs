//! Workload error between a true and a synthetic dataset.
//!
//! Three families of queries are scored: random 3-way marginals, designated
//! marginals of special interest, and high-order conjunctions. All errors are
//! distances between frequency vectors, so datasets of different sizes
//! compare directly and every error lies in `[0, 2]`.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::domain::{Clique, Domain};
use crate::error::{Error, Result};
use crate::marginal::{cell_indices, marginal, DEFAULT_CELL_CAP};
use crate::par;

/// Records whose value of every clique attribute lies in its subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjunctionQuery {
    pub clique: Clique,
    /// One sorted, nonempty subset of value indices per clique attribute.
    pub subsets: Vec<Vec<u32>>,
}

impl ConjunctionQuery {
    pub fn new(domain: &Domain, clique: Clique, mut subsets: Vec<Vec<u32>>) -> Result<Self> {
        domain.check_clique(&clique)?;
        if subsets.len() != clique.len() {
            return Err(Error::LengthMismatch(format!(
                "{} subsets for a clique of {} attributes",
                subsets.len(),
                clique.len()
            )));
        }
        for (s, &a) in subsets.iter_mut().zip(clique.attrs()) {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() || s.iter().any(|&v| v as usize >= domain.size(a)) {
                return Err(Error::InvalidClique(format!(
                    "subset for `{}` must be nonempty and in range",
                    domain.name(a)
                )));
            }
        }
        Ok(ConjunctionQuery { clique, subsets })
    }

    /// Per-attribute membership masks.
    fn masks(&self, domain: &Domain) -> Vec<(usize, Vec<bool>)> {
        self.clique
            .attrs()
            .iter()
            .zip(&self.subsets)
            .map(|(&a, s)| {
                let mut m = vec![false; domain.size(a)];
                for &v in s {
                    m[v as usize] = true;
                }
                (a, m)
            })
            .collect()
    }
}

/// `Σ_{t ∈ ∏ S_i} μ_t` read from the clique marginal.
pub fn conjunction_count(data: &Dataset, q: &ConjunctionQuery, cell_cap: usize) -> Result<f64> {
    let mu = marginal(data, &q.clique, cell_cap)?;
    let domain = data.domain();
    let masks = q.masks(domain);
    let mut total = 0.0;
    let mut digits = vec![0usize; masks.len()];
    for &x in &mu.values {
        if masks.iter().zip(&digits).all(|((_, m), &t)| m[t]) {
            total += x;
        }
        for p in (0..masks.len()).rev() {
            digits[p] += 1;
            if digits[p] < masks[p].1.len() {
                break;
            }
            digits[p] = 0;
        }
    }
    Ok(total)
}

/// Same count by a scan over records; no cell limit.
pub fn conjunction_count_scan(data: &Dataset, q: &ConjunctionQuery) -> u64 {
    let masks = q.masks(data.domain());
    let d = data.domain().len().max(1);
    par::map_chunks(data.flat(), par::ROW_CHUNK * d, |chunk| {
        chunk
            .chunks(d)
            .filter(|row| masks.iter().all(|(a, m)| m[row[*a] as usize]))
            .count() as u64
    })
    .into_iter()
    .sum()
}

fn choose3(d: usize) -> u128 {
    let d = d as u128;
    if d < 3 {
        0
    } else {
        d * (d - 1) * (d - 2) / 6
    }
}

/// `count` distinct attribute triples, each uniform over all triples.
pub fn random_3way_workload<R: Rng + ?Sized>(
    domain: &Domain,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Clique>> {
    let d = domain.len();
    if d < 3 {
        return Err(Error::TooFewAttributes(d));
    }
    let available = choose3(d);
    if count as u128 > available {
        return Err(Error::TooManyQueries {
            requested: count,
            available,
        });
    }
    let mut out: Vec<Clique> = Vec::with_capacity(count);
    while out.len() < count {
        let c = Clique::new(sample(rng, d, 3).into_vec()).expect("distinct indices");
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Conjunctions over random attribute sets: each attribute joins with
/// probability `attr_prob` (redrawn if none does), and each joined
/// attribute gets a uniformly random nonempty value subset.
pub fn random_conjunction_workload<R: Rng + ?Sized>(
    domain: &Domain,
    count: usize,
    attr_prob: f64,
    rng: &mut R,
) -> Result<Vec<ConjunctionQuery>> {
    if !(attr_prob > 0.0 && attr_prob <= 1.0) {
        return Err(Error::NonPositiveParameter {
            name: "attr_prob",
            value: attr_prob,
        });
    }
    let d = domain.len();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let attrs = loop {
            let a: Vec<usize> = (0..d).filter(|_| rng.random_bool(attr_prob)).collect();
            if !a.is_empty() {
                break a;
            }
        };
        let subsets = attrs
            .iter()
            .map(|&a| loop {
                let s: Vec<u32> = (0..domain.size(a) as u32).filter(|_| rng.random_bool(0.5)).collect();
                if !s.is_empty() {
                    break s;
                }
            })
            .collect();
        out.push(ConjunctionQuery {
            clique: Clique::new(attrs).expect("nonempty and distinct"),
            subsets,
        });
    }
    Ok(out)
}

/// Queries to score.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    #[serde(default)]
    pub triples: Vec<Clique>,
    /// Marginals of special interest, e.g. an income proxy.
    #[serde(default)]
    pub designated: Vec<Clique>,
    #[serde(default)]
    pub conjunctions: Vec<ConjunctionQuery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// On-disk workload: attributes and values by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadDocument {
    #[serde(default)]
    pub triples: Vec<Vec<String>>,
    #[serde(default)]
    pub designated: Vec<Vec<String>>,
    /// Attribute name to the labels it may take.
    #[serde(default)]
    pub conjunctions: Vec<Vec<(String, Vec<String>)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Workload {
    /// Random 3-way marginals (as many as exist, up to `triples`) and
    /// conjunctions with attribute probability 0.1.
    pub fn random<R: Rng + ?Sized>(
        domain: &Domain,
        triples: usize,
        conjunctions: usize,
        designated: Vec<Clique>,
        rng: &mut R,
    ) -> Result<Self> {
        let triples = if domain.len() >= 3 {
            let n = (triples as u128).min(choose3(domain.len())) as usize;
            random_3way_workload(domain, n, rng)?
        } else {
            Vec::new()
        };
        Ok(Workload {
            triples,
            designated,
            conjunctions: random_conjunction_workload(domain, conjunctions, 0.1, rng)?,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.triples.len() + self.designated.len() + self.conjunctions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_document(&self, domain: &Domain) -> WorkloadDocument {
        WorkloadDocument {
            triples: self.triples.iter().map(|c| domain.clique_names(c)).collect(),
            designated: self.designated.iter().map(|c| domain.clique_names(c)).collect(),
            conjunctions: self
                .conjunctions
                .iter()
                .map(|q| {
                    q.clique
                        .attrs()
                        .iter()
                        .zip(&q.subsets)
                        .map(|(&a, s)| {
                            let at = domain.attribute(a);
                            let labels = s.iter().map(|&v| at.label(v as usize).into_owned()).collect();
                            (at.name().to_string(), labels)
                        })
                        .collect()
                })
                .collect(),
            seed: self.seed,
        }
    }

    pub fn from_document(domain: &Domain, doc: &WorkloadDocument) -> Result<Self> {
        let cliques = |v: &[Vec<String>]| -> Result<Vec<Clique>> {
            v.iter().map(|names| domain.clique(names)).collect()
        };
        let mut conjunctions = Vec::with_capacity(doc.conjunctions.len());
        for q in &doc.conjunctions {
            let mut parts: Vec<(usize, Vec<u32>)> = Vec::with_capacity(q.len());
            for (name, labels) in q {
                let a = domain.require(name)?;
                let at = domain.attribute(a);
                let values = labels
                    .iter()
                    .map(|l| {
                        at.index_of(l).map(|v| v as u32).ok_or_else(|| Error::UnknownValue {
                            row: 0,
                            column: name.clone(),
                            value: l.clone(),
                        })
                    })
                    .collect::<Result<Vec<u32>>>()?;
                parts.push((a, values));
            }
            parts.sort_by_key(|p| p.0);
            let clique = Clique::new(parts.iter().map(|p| p.0).collect())?;
            conjunctions.push(ConjunctionQuery::new(
                domain,
                clique,
                parts.into_iter().map(|p| p.1).collect(),
            )?);
        }
        Ok(Workload {
            triples: cliques(&doc.triples)?,
            designated: cliques(&doc.designated)?,
            conjunctions,
            seed: doc.seed,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub triples: Option<f64>,
    pub designated: Option<f64>,
    pub conjunctions: Option<f64>,
}

/// Per-query errors and their means.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub triple_errors: Vec<f64>,
    pub designated_errors: Vec<f64>,
    pub conjunction_errors: Vec<f64>,
    pub means: MetricMeans,
    pub seed: Option<u64>,
    pub query_count: usize,
    pub truth_records: usize,
    pub synth_records: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// `‖μ_a/m_a − μ_b/m_b‖₁` over `clique`; dense when the clique is small,
/// otherwise over occupied cells only.
pub fn marginal_error(a: &Dataset, b: &Dataset, clique: &Clique) -> Result<f64> {
    let cells = a.domain().cells_f64(clique);
    let sa = if a.is_empty() { 0.0 } else { 1.0 / a.len() as f64 };
    let sb = if b.is_empty() { 0.0 } else { 1.0 / b.len() as f64 };
    if cells < DEFAULT_CELL_CAP as f64 {
        let ma = marginal(a, clique, DEFAULT_CELL_CAP)?;
        let mb = marginal(b, clique, DEFAULT_CELL_CAP)?;
        return Ok(ma.normalized_l1(&mb));
    }
    let mut joint: HashMap<usize, (u64, u64)> = HashMap::new();
    for c in cell_indices(a, clique) {
        joint.entry(c).or_default().0 += 1;
    }
    for c in cell_indices(b, clique) {
        joint.entry(c).or_default().1 += 1;
    }
    let mut cells: Vec<(usize, (u64, u64))> = joint.into_iter().collect();
    cells.sort_unstable_by_key(|e| e.0);
    Ok(cells
        .into_iter()
        .map(|(_, (x, y))| (x as f64 * sa - y as f64 * sb).abs())
        .sum())
}

/// Scores `synth` against `truth` on every query of `workload`.
pub fn evaluate(truth: &Dataset, synth: &Dataset, workload: &Workload) -> Result<ScoreReport> {
    if truth.domain() != synth.domain() {
        return Err(Error::DomainMismatch);
    }
    for c in workload.triples.iter().chain(&workload.designated) {
        truth.domain().check_clique(c)?;
    }
    let marg = |cs: &[Clique]| -> Result<Vec<f64>> {
        par::map_slice(cs, |c| marginal_error(truth, synth, c))
            .into_iter()
            .collect()
    };
    let triple_errors = marg(&workload.triples)?;
    let designated_errors = marg(&workload.designated)?;
    let ft = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let (st, ss) = (ft(truth.len()), ft(synth.len()));
    let conjunction_errors = par::map_slice(&workload.conjunctions, |q| {
        let a = conjunction_count_scan(truth, q) as f64 * st;
        let b = conjunction_count_scan(synth, q) as f64 * ss;
        (a - b).abs()
    });
    Ok(ScoreReport {
        means: MetricMeans {
            triples: mean(&triple_errors),
            designated: mean(&designated_errors),
            conjunctions: mean(&conjunction_errors),
        },
        triple_errors,
        designated_errors,
        conjunction_errors,
        seed: workload.seed,
        query_count: workload.len(),
        truth_records: truth.len(),
        synth_records: synth.len(),
    })
}
