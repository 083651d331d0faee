//! Synthetic records from a fitted graphical model.
//!
//! Rather than sampling records independently, each column is filled so
//! that its counts match the model's expected counts up to rounding: whole
//! parts are emitted deterministically and only the fractional remainders
//! are sampled.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::marginal::{strides, DEFAULT_CELL_CAP};
use crate::par;
use crate::pgm::GraphicalModel;
use crate::rng::substream;

/// Column of `n` value indices whose counts track `mu`.
///
/// Each value `t` appears `⌊mu_t⌋` times; the remaining slots go to distinct
/// values drawn without replacement with probability proportional to the
/// fractional parts. If the fractional mass runs out first (possible when
/// `Σ mu < n`), further slots are drawn in proportion to `mu`, or uniformly
/// when `mu` is all zero.
pub fn synth_column<R: Rng + ?Sized>(mu: &[f64], n: usize, rng: &mut R) -> Result<Vec<u32>> {
    if mu.iter().any(|&m| !m.is_finite() || m < 0.0) {
        return Err(Error::NegativeMass);
    }
    let floors: Vec<u64> = mu.iter().map(|m| m.floor() as u64).collect();
    let whole: u64 = floors.iter().sum();
    if whole > n as u64 {
        return Err(Error::InsufficientBudget { floors: whole, n });
    }
    let mut out = Vec::with_capacity(n);
    for (t, &f) in floors.iter().enumerate() {
        out.extend(std::iter::repeat_n(t as u32, f as usize));
    }
    let mut rem: Vec<f64> = mu.iter().zip(&floors).map(|(m, &f)| m - f as f64).collect();
    while out.len() < n {
        let mass: f64 = rem.iter().sum();
        if mass <= 0.0 {
            break;
        }
        let t = weighted_index(&rem, mass, rng);
        out.push(t as u32);
        rem[t] = 0.0;
    }
    if out.len() < n {
        let mass: f64 = mu.iter().sum();
        while out.len() < n {
            let t = if mass > 0.0 {
                weighted_index(mu, mass, rng)
            } else {
                rng.random_range(0..mu.len())
            };
            out.push(t as u32);
        }
    }
    out.shuffle(rng);
    Ok(out)
}

/// Inverse-CDF draw from unnormalized weights with known positive sum.
fn weighted_index<R: Rng + ?Sized>(w: &[f64], mass: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * mass;
    let mut acc = 0.0;
    let mut last = 0;
    for (t, &x) in w.iter().enumerate() {
        if x > 0.0 {
            acc += x;
            last = t;
            if u < acc {
                return t;
            }
        }
    }
    last
}

/// One step of the fill: attribute `attr` conditioned on `given`, both
/// inside a single junction-tree clique.
struct Step {
    attr: usize,
    given: Vec<usize>,
}

/// Attribute order for generation: cliques in tree pre-order, ascending
/// attributes within each clique. Each attribute is conditioned on the
/// already-generated attributes of the first clique that holds it.
fn plan(model: &GraphicalModel) -> Vec<Step> {
    let tree = model.tree();
    let mut done = vec![false; model.domain().len()];
    let mut steps = Vec::new();
    for &k in tree.preorder() {
        let clique = tree.cliques()[k].attrs();
        for &a in clique {
            if done[a] {
                continue;
            }
            let given = clique.iter().copied().filter(|&b| done[b]).collect();
            steps.push(Step { attr: a, given });
            done[a] = true;
        }
    }
    steps
}

/// Joint model probabilities over `given ∪ {attr}` and its row-major strides.
fn step_joint(
    model: &GraphicalModel,
    beliefs: &crate::pgm::Beliefs,
    step: &Step,
    cell_cap: usize,
) -> Result<(Vec<usize>, Vec<f64>, Vec<usize>)> {
    let mut attrs = step.given.clone();
    attrs.push(step.attr);
    attrs.sort_unstable();
    let joint = model
        .marginal_probabilities(beliefs, &attrs, cell_cap)
        .map_err(|e| match e {
            Error::CliqueTooLarge { cells, cap } => Error::TreewidthTooLarge { cells, cap },
            e => e,
        })?;
    let s = strides(model.domain(), &attrs);
    Ok((attrs, joint, s))
}

/// Synthetic dataset of `n` records (default: the model's rounded total).
///
/// Records are grown one attribute at a time. Partial records are grouped by
/// their values on the conditioning set, and each group's new column is
/// filled by [`synth_column`] from the model's conditional expected counts.
/// Groups draw from independent keyed streams, so the output depends only on
/// `seed` and not on scheduling.
pub fn synth_data(model: &GraphicalModel, n: Option<usize>, seed: u64) -> Result<Dataset> {
    synth_data_capped(model, n, seed, DEFAULT_CELL_CAP)
}

pub fn synth_data_capped(
    model: &GraphicalModel,
    n: Option<usize>,
    seed: u64,
    cell_cap: usize,
) -> Result<Dataset> {
    let domain = model.domain_arc().clone();
    let n = n.unwrap_or_else(|| model.total().round().max(0.0) as usize);
    let d = domain.len();
    if n == 0 {
        return Ok(Dataset::empty(domain));
    }
    let beliefs = model.belief_propagation();
    let mut columns: Vec<Vec<u32>> = vec![Vec::new(); d];
    for step in plan(model) {
        let (attrs, joint, s) = step_joint(model, &beliefs, &step, cell_cap)?;
        let pos = |a: usize| attrs.iter().position(|&b| b == a).expect("attribute in step");
        let given_strides: Vec<(usize, usize)> =
            step.given.iter().map(|&a| (a, s[pos(a)])).collect();
        let own_stride = s[pos(step.attr)];
        let size = domain.size(step.attr);

        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        #[allow(clippy::needless_range_loop)]
        for r in 0..n {
            let base: usize = given_strides
                .iter()
                .map(|&(a, st)| columns[a][r] as usize * st)
                .sum();
            groups.entry(base).or_default().push(r);
        }
        let groups: Vec<(usize, Vec<usize>)> = groups.into_iter().collect();
        let filled = par::map_slice(&groups, |(base, rows)| {
            let cond: Vec<f64> = (0..size).map(|v| joint[base + v * own_stride]).collect();
            let mass: f64 = cond.iter().sum();
            let m = rows.len() as f64;
            let expected: Vec<f64> = if mass > 0.0 {
                cond.iter().map(|p| m * p / mass).collect()
            } else {
                vec![m / size as f64; size]
            };
            let mut rng = substream(seed, "synth", &[step.attr as u64, *base as u64]);
            synth_column(&expected, rows.len(), &mut rng)
        });
        let mut col = vec![0u32; n];
        for ((_, rows), values) in groups.iter().zip(filled) {
            for (&r, v) in rows.iter().zip(values?) {
                col[r] = v;
            }
        }
        columns[step.attr] = col;
    }
    Dataset::from_columns(domain, &columns)
}

/// Independent draws from the model, using the same conditionals as
/// [`synth_data`]. Provided as a baseline for comparing rounding error.
pub fn sample_iid<R: Rng + ?Sized>(model: &GraphicalModel, n: usize, rng: &mut R) -> Result<Dataset> {
    let domain = model.domain_arc().clone();
    let beliefs = model.belief_propagation();
    let mut columns: Vec<Vec<u32>> = vec![vec![0; n]; domain.len()];
    for step in plan(model) {
        let (attrs, joint, s) = step_joint(model, &beliefs, &step, DEFAULT_CELL_CAP)?;
        let pos = |a: usize| attrs.iter().position(|&b| b == a).expect("attribute in step");
        let own_stride = s[pos(step.attr)];
        let size = domain.size(step.attr);
        #[allow(clippy::needless_range_loop)]
        for r in 0..n {
            let base: usize = step
                .given
                .iter()
                .map(|&a| columns[a][r] as usize * s[pos(a)])
                .sum();
            let cond: Vec<f64> = (0..size).map(|v| joint[base + v * own_stride]).collect();
            let mass: f64 = cond.iter().sum();
            columns[step.attr][r] = if mass > 0.0 {
                weighted_index(&cond, mass, rng) as u32
            } else {
                rng.random_range(0..size) as u32
            };
        }
    }
    Dataset::from_columns(domain, &columns)
}
