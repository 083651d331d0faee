//! Census-specific attribute transforms.
//!
//! Home value is bucketed to multiples of five with two sentinel codes kept
//! apart. Wage income is split into a hundreds part (`_A`) and a class of its
//! last two digits (`_B`), which keeps common round amounts distinct while
//! shrinking the domain by two orders of magnitude. Reversal draws the last
//! two digits uniformly within the recorded class.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::domain::{Attribute, Domain, Values};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::substream;

/// Largest home value bucketed directly.
pub const VALUEH_MAX: i64 = 25_000;
/// Sentinel codes carried through both attributes.
pub const SENTINEL_A: i64 = 9_999_998;
pub const SENTINEL_B: i64 = 9_999_999;

/// Buckets for home value: `0..=5000` plus the two sentinels.
pub const VALUEH_BUCKETS: usize = 5003;
/// `0..=50` hundreds, plus the sentinel bucket 51.
pub const INCWAGE_A_SIZE: usize = 52;
pub const INCWAGE_B_SIZE: usize = 8;

/// Moduli defining the digit classes, tested in order.
pub const DIGIT_MODULI: [i64; 8] = [100, 20, 50, 25, 10, 5, 2, 1];

pub fn valueh_bucket(v: i64) -> u32 {
    if (0..=VALUEH_MAX).contains(&v) {
        (v / 5) as u32
    } else if v == SENTINEL_A {
        5001
    } else if v == SENTINEL_B {
        5002
    } else {
        5000
    }
}

pub fn valueh_reverse(b: u32) -> i64 {
    match b {
        5001 => SENTINEL_A,
        5002 => SENTINEL_B,
        b => 5 * b as i64,
    }
}

pub fn incwage_a(v: i64) -> u32 {
    if (0..=5000).contains(&v) {
        (v / 100) as u32
    } else if v < SENTINEL_A {
        50
    } else {
        51
    }
}

/// Index of the first modulus in [`DIGIT_MODULI`] dividing `v`.
pub fn incwage_b(v: i64) -> u32 {
    DIGIT_MODULI
        .iter()
        .position(|&m| v.rem_euclid(m) == 0)
        .expect("every integer is a multiple of 1") as u32
}

/// The residual classes `L_0..L_7` of `{0..99}`: `L_k` holds the multiples
/// of the `k`-th modulus not already claimed by an earlier class.
pub fn digit_classes() -> [Vec<u32>; 8] {
    let mut classes: [Vec<u32>; 8] = Default::default();
    for l in 0..100u32 {
        classes[incwage_b(l as i64) as usize].push(l);
    }
    classes
}

/// Uniform draw from `L_k`.
pub fn incwage_b_to_digits<R: Rng + ?Sized>(k: u32, rng: &mut R) -> u32 {
    assert!((k as usize) < INCWAGE_B_SIZE, "digit class {k} out of range");
    thread_local! {
        static CLASSES: [Vec<u32>; 8] = digit_classes();
    }
    CLASSES.with(|c| *c[k as usize].choose(rng).expect("classes are nonempty"))
}

pub fn incwage_reverse<R: Rng + ?Sized>(a: u32, b: u32, rng: &mut R) -> i64 {
    if a as usize >= INCWAGE_A_SIZE - 1 {
        SENTINEL_A
    } else {
        100 * a as i64 + incwage_b_to_digits(b, rng) as i64
    }
}

/// Names of the two transformed attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusTransform {
    pub valueh: String,
    pub incwage: String,
}

impl Default for CensusTransform {
    fn default() -> Self {
        CensusTransform {
            valueh: "VALUEH".into(),
            incwage: "INCWAGE".into(),
        }
    }
}

fn integer_labels(attr: &Attribute) -> Result<Vec<i64>> {
    (0..attr.size())
        .map(|t| {
            let label = attr.label(t);
            label.trim().parse::<i64>().map_err(|_| Error::NonIntegerLabel {
                attribute: attr.name().to_string(),
                label: label.into_owned(),
            })
        })
        .collect()
}

impl CensusTransform {
    pub fn part_a(&self) -> String {
        format!("{}_A", self.incwage)
    }

    pub fn part_b(&self) -> String {
        format!("{}_B", self.incwage)
    }

    fn locate(&self, domain: &Domain, names: [&str; 2]) -> Result<[usize; 2]> {
        let find = |n: &str| {
            domain
                .index_of(n)
                .ok_or_else(|| Error::MissingAttribute(n.to_string()))
        };
        Ok([find(names[0])?, find(names[1])?])
    }

    /// Domain after [`transform`](Self::transform): home value becomes
    /// `0..5003`, wage becomes `_A` (`0..52`) followed by `_B` (`0..8`).
    pub fn transformed_domain(&self, domain: &Domain) -> Result<Domain> {
        let [vi, wi] = self.locate(domain, [&self.valueh, &self.incwage])?;
        let mut attrs = Vec::with_capacity(domain.len() + 1);
        for (i, a) in domain.attributes().iter().enumerate() {
            if i == vi {
                attrs.push(Attribute::new(a.name(), Values::Range(VALUEH_BUCKETS)));
            } else if i == wi {
                attrs.push(Attribute::new(self.part_a(), Values::Range(INCWAGE_A_SIZE)));
                attrs.push(Attribute::new(self.part_b(), Values::Range(INCWAGE_B_SIZE)));
            } else {
                attrs.push(a.clone());
            }
        }
        Domain::new(attrs)
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        let domain = data.domain();
        let [vi, wi] = self.locate(domain, [&self.valueh, &self.incwage])?;
        let vlabels = integer_labels(domain.attribute(vi))?;
        let wlabels = integer_labels(domain.attribute(wi))?;
        let target = Arc::new(self.transformed_domain(domain)?);
        let d = domain.len();
        let rows = par::map_chunks(data.flat(), par::ROW_CHUNK * d.max(1), |chunk| {
            let mut out = Vec::with_capacity(chunk.len() / d * (d + 1));
            for row in chunk.chunks(d) {
                for (i, &v) in row.iter().enumerate() {
                    if i == vi {
                        out.push(valueh_bucket(vlabels[v as usize]));
                    } else if i == wi {
                        let w = wlabels[v as usize];
                        out.push(incwage_a(w));
                        out.push(incwage_b(w));
                    } else {
                        out.push(v);
                    }
                }
            }
            out
        });
        Dataset::from_flat(target, rows.concat())
    }

    /// Domain after [`reverse`](Self::reverse): home value labels are the
    /// bucket representatives, wage labels are `0..=5099` and the sentinel.
    pub fn reversed_domain(&self, transformed: &Domain) -> Result<Domain> {
        let (a, b) = (self.part_a(), self.part_b());
        let [vi, ai] = self.locate(transformed, [&self.valueh, &a])?;
        let [bi, _] = self.locate(transformed, [&b, &b])?;
        let mut attrs = Vec::with_capacity(transformed.len() - 1);
        for (i, at) in transformed.attributes().iter().enumerate() {
            if i == vi {
                let labels = (0..VALUEH_BUCKETS as u32)
                    .map(|t| valueh_reverse(t).to_string())
                    .collect();
                attrs.push(Attribute::new(at.name(), Values::Labels(labels)));
            } else if i == ai {
                let mut labels: Vec<String> = (0..5100).map(|v: i64| v.to_string()).collect();
                labels.push(SENTINEL_A.to_string());
                attrs.push(Attribute::new(self.incwage.clone(), Values::Labels(labels)));
            } else if i != bi {
                attrs.push(at.clone());
            }
        }
        Domain::new(attrs)
    }

    /// Undoes [`transform`](Self::transform); the wage's last two digits are
    /// drawn per record from keyed streams of `seed`.
    pub fn reverse(&self, data: &Dataset, seed: u64) -> Result<Dataset> {
        let domain = data.domain();
        let (a, b) = (self.part_a(), self.part_b());
        let [vi, ai] = self.locate(domain, [&self.valueh, &a])?;
        let [bi, _] = self.locate(domain, [&b, &b])?;
        let target = Arc::new(self.reversed_domain(domain)?);
        let sentinel_index = 5100u32;
        let d = domain.len();
        let chunk_rows = par::ROW_CHUNK;
        let chunks: Vec<(usize, &[u32])> = data.flat().chunks(chunk_rows * d.max(1)).enumerate().collect();
        let rows = par::map_slice(&chunks, |&(c, chunk)| {
            let mut rng = substream(seed, "digits", &[c as u64]);
            let mut out = Vec::with_capacity(chunk.len());
            for row in chunk.chunks(d) {
                for (i, &v) in row.iter().enumerate() {
                    if i == vi {
                        out.push(v);
                    } else if i == ai {
                        let w = incwage_reverse(v, row[bi], &mut rng);
                        out.push(if w == SENTINEL_A { sentinel_index } else { w as u32 });
                    } else if i != bi {
                        out.push(v);
                    }
                }
            }
            out
        });
        Dataset::from_flat(target, rows.concat())
    }
}
