//! Domain compression driven by noisy one-way counts.
//!
//! Values whose noisy count falls below three noise standard deviations are
//! merged into a reserved "other" cell (∅) per attribute. Measurements taken
//! over the original domain are re-expressed as aggregates over the smaller
//! one, and synthetic data is mapped back by spreading ∅ evenly over the
//! merged values.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::domain::{Attribute, Clique, Domain, Values};
use crate::error::{Error, Result};
use crate::mechanisms::{Measurement, MeasurementLog, Transform};

/// Label given to the ∅ cell unless it collides with a kept label.
pub const OTHER_LABEL: &str = "∅";

/// How one attribute's values were merged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMap {
    pub name: String,
    /// Compressed index of every original value.
    pub forward: Vec<u32>,
    /// Original index of every kept compressed value; ∅ comes last.
    pub kept: Vec<u32>,
    /// Originals merged into ∅, ascending.
    pub merged: Vec<u32>,
    pub other_label: String,
}

impl AttributeMap {
    /// Compressed index of ∅.
    pub fn other(&self) -> u32 {
        self.kept.len() as u32
    }

    pub fn compressed_size(&self) -> usize {
        self.kept.len() + 1
    }

    pub fn original_size(&self) -> usize {
        self.forward.len()
    }

    fn from_kept(attr: &Attribute, keep: &[bool]) -> Self {
        let mut forward = vec![0u32; keep.len()];
        let mut kept = Vec::new();
        let mut merged = Vec::new();
        for (t, &k) in keep.iter().enumerate() {
            if k {
                forward[t] = kept.len() as u32;
                kept.push(t as u32);
            } else {
                merged.push(t as u32);
            }
        }
        let other = kept.len() as u32;
        for &t in &merged {
            forward[t as usize] = other;
        }
        let mut other_label = OTHER_LABEL.to_string();
        while kept.iter().any(|&t| attr.label(t as usize) == other_label) {
            other_label.push('*');
        }
        AttributeMap {
            name: attr.name().to_string(),
            forward,
            kept,
            merged,
            other_label,
        }
    }
}

/// Per-attribute value remapping; reversible up to the ∅ cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressionMap {
    pub attributes: Vec<AttributeMap>,
}

impl CompressionMap {
    /// Map that keeps every value (∅ still appended, empty).
    pub fn identity(domain: &Domain) -> Self {
        CompressionMap {
            attributes: domain
                .attributes()
                .iter()
                .map(|a| AttributeMap::from_kept(a, &vec![true; a.size()]))
                .collect(),
        }
    }

    /// Keeps value `t` of each attribute when its noisy count clears
    /// `3σ`. The rule compares `y_t/w` with `3σ/w`, which is scale-free in
    /// the measurement weight.
    pub fn from_oneway(log: &MeasurementLog, domain: &Domain) -> Result<Self> {
        let mut attributes = Vec::with_capacity(domain.len());
        for (i, attr) in domain.attributes().iter().enumerate() {
            let single = Clique::single(i);
            let m = log
                .iter()
                .find(|m| m.clique == single && matches!(m.transform, Transform::Identity { .. }))
                .ok_or_else(|| Error::MissingOneWay(attr.name().to_string()))?;
            let w = m.transform.weight();
            if m.values.len() != attr.size() {
                return Err(Error::LengthMismatch(format!(
                    "one-way measurement of `{}` has {} values, domain has {}",
                    attr.name(),
                    m.values.len(),
                    attr.size()
                )));
            }
            let threshold = 3.0 * m.sigma / w;
            let keep: Vec<bool> = m.values.iter().map(|y| y / w >= threshold).collect();
            attributes.push(AttributeMap::from_kept(attr, &keep));
        }
        Ok(CompressionMap { attributes })
    }

    /// The compressed domain: kept labels in original order, then ∅.
    pub fn compressed_domain(&self, original: &Domain) -> Result<Domain> {
        let attrs = self
            .attributes
            .iter()
            .zip(original.attributes())
            .map(|(m, a)| {
                let mut labels: Vec<String> =
                    m.kept.iter().map(|&t| a.label(t as usize).into_owned()).collect();
                labels.push(m.other_label.clone());
                Attribute::new(a.name(), Values::Labels(labels))
            })
            .collect();
        Domain::new(attrs)
    }

    fn check(&self, domain: &Domain, compressed: bool) -> Result<()> {
        let ok = self.attributes.len() == domain.len()
            && self.attributes.iter().zip(domain.attributes()).all(|(m, a)| {
                m.name == a.name()
                    && a.size()
                        == if compressed {
                            m.compressed_size()
                        } else {
                            m.original_size()
                        }
            });
        if ok {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }

    /// Rewrites records of the original domain onto `target`, the
    /// compressed domain.
    pub fn compress(&self, data: &Dataset, target: Arc<Domain>) -> Result<Dataset> {
        self.check(data.domain(), false)?;
        self.check(&target, true)?;
        let d = self.attributes.len();
        let cells: Vec<u32> = data
            .flat()
            .iter()
            .enumerate()
            .map(|(k, &v)| self.attributes[k % d].forward[v as usize])
            .collect();
        Dataset::from_flat(target, cells)
    }

    /// Original-domain cells making up each compressed cell of `clique`.
    pub fn groups(&self, original: &Domain, clique: &Clique) -> Vec<Vec<usize>> {
        let attrs = clique.attrs();
        let osizes: Vec<usize> = attrs.iter().map(|&a| original.size(a)).collect();
        let csizes: Vec<usize> = attrs.iter().map(|&a| self.attributes[a].compressed_size()).collect();
        let ocells: usize = osizes.iter().product();
        let ccells: usize = csizes.iter().product();
        let mut cstrides = vec![1usize; attrs.len()];
        for k in (0..attrs.len().saturating_sub(1)).rev() {
            cstrides[k] = cstrides[k + 1] * csizes[k + 1];
        }
        let mut groups = vec![Vec::new(); ccells];
        let mut digits = vec![0usize; attrs.len()];
        for c in 0..ocells {
            let g: usize = attrs
                .iter()
                .zip(&digits)
                .zip(&cstrides)
                .map(|((&a, &t), &s)| self.attributes[a].forward[t] as usize * s)
                .sum();
            groups[g].push(c);
            for p in (0..attrs.len()).rev() {
                digits[p] += 1;
                if digits[p] < osizes[p] {
                    break;
                }
                digits[p] = 0;
            }
        }
        groups
    }
}

/// Compresses `domain` and `data` using the noisy one-way measurements.
pub fn compress_domain(
    oneway_log: &MeasurementLog,
    data: &Dataset,
    domain: &Domain,
) -> Result<(Dataset, Arc<Domain>, CompressionMap)> {
    let map = CompressionMap::from_oneway(oneway_log, domain)?;
    let small = Arc::new(map.compressed_domain(domain)?);
    let rewritten = map.compress(data, small.clone())?;
    Ok((rewritten, small, map))
}

/// Re-expresses identity measurements over the original domain as
/// aggregates over the compressed one. Row `g` sums the noisy values of the
/// original cells merged into compressed cell `g` and carries residual scale
/// `1/√k` for a group of `k` cells; an empty group keeps scale 1 and value 0.
pub fn reexpress_measurements(
    log: &MeasurementLog,
    map: &CompressionMap,
    original: &Domain,
) -> Result<MeasurementLog> {
    let mut out = MeasurementLog {
        measurements: Vec::with_capacity(log.len()),
        rng_seed: log.rng_seed,
    };
    for m in log.iter() {
        let Transform::Identity { weight } = m.transform else {
            return Err(Error::Config(format!(
                "only identity measurements can be re-expressed, {} is {}",
                m.clique,
                m.transform.kind()
            )));
        };
        let groups = map.groups(original, &m.clique);
        let mut values = Vec::with_capacity(groups.len());
        let mut row_scales = Vec::with_capacity(groups.len());
        for g in &groups {
            values.push(g.iter().map(|&c| m.values[c]).sum());
            row_scales.push(if g.is_empty() {
                1.0
            } else {
                1.0 / (g.len() as f64).sqrt()
            });
        }
        out.measurements.push(Measurement {
            clique: m.clique.clone(),
            transform: Transform::Aggregate {
                weight,
                groups,
                row_scales,
            },
            values,
            sigma: m.sigma,
        });
    }
    Ok(out)
}

/// Maps compressed records back to `original`. Kept values map exactly;
/// the ∅ records of each attribute are split as evenly as possible over the
/// merged values, remainders going to a random subset. An ∅ with nothing
/// merged into it is replaced by a uniform draw over the original values.
pub fn decompress<R: Rng + ?Sized>(
    data: &Dataset,
    map: &CompressionMap,
    original: Arc<Domain>,
    rng: &mut R,
) -> Result<Dataset> {
    map.check(data.domain(), true)?;
    map.check(&original, false)?;
    let d = map.attributes.len();
    let n = data.len();
    let mut cells = vec![0u32; n * d];
    for (i, am) in map.attributes.iter().enumerate() {
        let other = am.other();
        let mut others = Vec::new();
        for r in 0..n {
            let v = data.flat()[r * d + i];
            if v == other {
                others.push(r);
            } else {
                cells[r * d + i] = am.kept[v as usize];
            }
        }
        if others.is_empty() {
            continue;
        }
        let fill: Vec<u32> = if am.merged.is_empty() {
            log::warn!(
                "attribute `{}`: {} records in an empty other cell; drawing uniformly",
                am.name,
                others.len()
            );
            (0..others.len())
                .map(|_| rng.random_range(0..am.original_size()) as u32)
                .collect()
        } else {
            let k = am.merged.len();
            let share = others.len() / k;
            let mut fill: Vec<u32> = am
                .merged
                .iter()
                .flat_map(|&t| std::iter::repeat_n(t, share))
                .collect();
            let mut extra = am.merged.clone();
            extra.shuffle(rng);
            fill.extend(extra.into_iter().take(others.len() % k));
            fill.shuffle(rng);
            fill
        };
        for (&r, v) in others.iter().zip(fill) {
            cells[r * d + i] = v;
        }
    }
    Dataset::from_flat(original, cells)
}
