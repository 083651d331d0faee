//! Maximum-likelihood fitting of a graphical model to a measurement log.
//!
//! The loss is the precision-weighted squared residual
//! `Σ_m ‖a_m ⊙ μ_m − b_m‖² / σ_m²` over the measured cliques, written in
//! probability units so step sizes do not depend on the record count.
//! Potentials follow entropic mirror descent: `θ ← θ − η·∇_p loss`, with
//! backtracking that halves `η` until the loss does not increase.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::factor::{cells, sum_with_table};
use super::junction_tree::JunctionTree;
use super::model::{Beliefs, GraphicalModel};
use crate::domain::{Clique, Domain};
use crate::error::{Error, Result};
use crate::marginal::{ProjectionMap, DEFAULT_CELL_CAP};
use crate::mechanisms::MeasurementLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub iters: usize,
    /// Initial mirror-descent step.
    pub step: f64,
    pub cell_cap: usize,
    /// Fixed record count; estimated from the log when absent.
    pub total: Option<f64>,
    /// Keep the per-iteration loss in the diagnostics.
    pub record_trace: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            iters: 2500,
            step: 2.0,
            cell_cap: DEFAULT_CELL_CAP,
            total: None,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Final loss in count units, `Σ ‖a⊙μ − b‖²/σ²`.
    pub final_loss: f64,
    pub final_step: f64,
    pub halvings: usize,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

/// Precision-weighted mean of the per-measurement record-count estimates
/// `Σy/w`, clamped at zero. `None` if no measurement carries one.
pub fn estimate_total(log: &MeasurementLog) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for m in log.iter() {
        if let Some((est, var)) = m.sum_estimate() {
            num += est / var;
            den += 1.0 / var;
        }
    }
    (den > 0.0).then(|| (num / den).max(0.0))
}

/// One measurement bound to the junction-tree clique that holds it.
struct Term {
    clique: usize,
    table: Vec<usize>,
    cells: usize,
    coef: Vec<f64>,
    /// Target in probability units, `b/T`.
    target: Vec<f64>,
    /// `(σ₀/σ)²`.
    lambda: f64,
}

/// The loss of a log against a fixed tree, in probability units.
pub(crate) struct Problem {
    terms: Vec<Term>,
    total: f64,
    sigma0: f64,
}

impl Problem {
    pub(crate) fn new(
        domain: &Domain,
        tree: &JunctionTree,
        log: &MeasurementLog,
        total: f64,
    ) -> Result<Self> {
        let sigma0 = log
            .iter()
            .map(|m| m.sigma)
            .fold(f64::INFINITY, f64::min);
        let inv_t = if total > 0.0 { 1.0 / total } else { 0.0 };
        let mut terms = Vec::with_capacity(log.len());
        for m in log.iter() {
            let k = tree.containing(m.clique.attrs()).ok_or_else(|| {
                Error::InvalidClique(format!("{} is not covered by the model", m.clique))
            })?;
            let table =
                ProjectionMap::new(domain, tree.cliques()[k].attrs(), m.clique.attrs()).table();
            let (coef, b) = m.diagonal();
            terms.push(Term {
                clique: k,
                table,
                cells: cells(domain, m.clique.attrs()),
                coef,
                target: b.iter().map(|x| x * inv_t).collect(),
                lambda: (sigma0 / m.sigma).powi(2),
            });
        }
        Ok(Problem {
            terms,
            total,
            sigma0,
        })
    }

    /// Loss and per-term gradient with respect to the measured marginals.
    fn evaluate(&self, beliefs: &Beliefs) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut probs_cache: Vec<Option<Vec<f64>>> = vec![None; beliefs.log.len()];
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(self.terms.len());
        let mut margs = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let probs = probs_cache[t.clique].get_or_insert_with(|| beliefs.probabilities(t.clique));
            let p = sum_with_table(probs, &t.table, t.cells);
            let mut g = Vec::with_capacity(t.cells);
            for ((pc, a), b) in p.iter().zip(&t.coef).zip(&t.target) {
                let r = a * pc - b;
                loss += t.lambda * r * r;
                g.push(2.0 * t.lambda * a * r);
            }
            grads.push(g);
            margs.push(p);
        }
        (loss, grads, margs)
    }

    /// Count-unit loss from a probability-unit loss.
    fn to_counts(&self, loss: f64) -> f64 {
        loss * (self.total / self.sigma0).powi(2)
    }

    fn step_theta(&self, theta: &[Vec<f64>], grads: &[Vec<f64>], eta: f64) -> Vec<Vec<f64>> {
        let mut out = theta.to_vec();
        for (t, g) in self.terms.iter().zip(grads) {
            let th = &mut out[t.clique];
            for (v, &s) in th.iter_mut().zip(&t.table) {
                *v -= eta * g[s];
            }
        }
        out
    }
}

/// Fits potentials on the junction tree of the log's cliques.
pub fn estimate(
    log: &MeasurementLog,
    domain: Arc<Domain>,
    opts: &EstimateOptions,
) -> Result<GraphicalModel> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    log.validate(&domain)?;
    if !(opts.step > 0.0) {
        return Err(Error::NonPositiveParameter {
            name: "step",
            value: opts.step,
        });
    }
    let cliques: Vec<Clique> = log.iter().map(|m| m.clique.clone()).collect();
    let tree = JunctionTree::build(&domain, &cliques, opts.cell_cap)?;
    let total = match opts.total {
        Some(t) => t.max(0.0),
        None => estimate_total(log).unwrap_or(0.0),
    };
    let model = GraphicalModel::uniform(domain.clone(), tree, total);
    let problem = Problem::new(&domain, model.tree(), log, total)?;
    if total == 0.0 {
        log::warn!("estimated record count is zero; returning the uniform model");
        let mut m = model;
        m.diagnostics = Some(SolverDiagnostics {
            iterations: 0,
            final_loss: 0.0,
            final_step: opts.step,
            halvings: 0,
            total,
            trace: Vec::new(),
        });
        return Ok(m);
    }
    Ok(mirror_descent(model, &problem, opts))
}

/// First-order decrease `⟨g, p_old − p_new⟩` predicted by the gradient.
fn predicted_decrease(grads: &[Vec<f64>], old: &[Vec<f64>], new: &[Vec<f64>]) -> f64 {
    grads
        .iter()
        .zip(old.iter().zip(new))
        .map(|(g, (a, b))| g.iter().zip(a.iter().zip(b)).map(|(g, (x, y))| g * (x - y)).sum::<f64>())
        .sum()
}

/// Entropic mirror descent on the potentials with Nesterov extrapolation.
///
/// Each iteration steps from the extrapolated point, halving the step until
/// an Armijo decrease holds there. Momentum restarts whenever the accepted
/// point is worse than the current one, so the loss never increases.
fn mirror_descent(mut model: GraphicalModel, problem: &Problem, opts: &EstimateOptions) -> GraphicalModel {
    let beliefs = model.belief_propagation();
    let (mut loss, mut grads, mut margs) = problem.evaluate(&beliefs);
    drop(beliefs);
    let mut prev = model.theta().to_vec();
    let mut t_k = 1.0f64;
    let mut eta = opts.step;
    let mut halvings = 0;
    let mut trace = Vec::new();
    let mut done = 0;
    for _ in 0..opts.iters {
        done += 1;
        let t_next = (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt()) / 2.0;
        let beta = (t_k - 1.0) / t_next;
        // Extrapolated base point and its loss, gradient and marginals.
        let (base, base_loss, base_grads, base_margs) = if beta > 0.0 {
            let theta: Vec<Vec<f64>> = model
                .theta()
                .iter()
                .zip(&prev)
                .map(|(cur, old)| cur.iter().zip(old).map(|(c, o)| c + beta * (c - o)).collect())
                .collect();
            let y = model.replace_theta(theta);
            let (l, g, m) = problem.evaluate(&y.belief_propagation());
            (y, l, g, m)
        } else {
            (model.clone(), loss, grads.clone(), margs.clone())
        };
        let mut accepted = None;
        for _ in 0..40 {
            let cand = base.replace_theta(problem.step_theta(base.theta(), &base_grads, eta));
            let (cl, cg, cm) = problem.evaluate(&cand.belief_propagation());
            let lin = predicted_decrease(&base_grads, &base_margs, &cm);
            if cl.is_finite() && cl <= base_loss - 0.5 * lin.max(0.0) {
                accepted = Some((cand, cl, cg, cm));
                break;
            }
            eta *= 0.5;
            halvings += 1;
        }
        match accepted {
            Some((cand, cl, cg, cm)) if cl <= loss => {
                prev = model.theta().to_vec();
                model = cand;
                loss = cl;
                grads = cg;
                margs = cm;
                t_k = t_next;
            }
            Some(_) => {
                // Momentum overshot; restart from the current point.
                prev = model.theta().to_vec();
                t_k = 1.0;
            }
            None if beta > 0.0 => {
                prev = model.theta().to_vec();
                t_k = 1.0;
            }
            None => break,
        }
        if opts.record_trace {
            trace.push(loss);
        }
    }
    model.diagnostics = Some(SolverDiagnostics {
        iterations: done,
        final_loss: problem.to_counts(loss),
        final_step: eta,
        halvings,
        total: problem.total,
        trace,
    });
    model
}

/// Loss of `model` against `log` in probability units (the quantity the
/// solver decreases).
pub fn normalized_loss(model: &GraphicalModel, log: &MeasurementLog) -> Result<f64> {
    let problem = Problem::new(model.domain(), model.tree(), log, model.total())?;
    Ok(problem.evaluate(&model.belief_propagation()).0)
}

/// Loss of `model` against `log` in count units, `Σ ‖a⊙μ − b‖²/σ²`.
pub fn count_loss(model: &GraphicalModel, log: &MeasurementLog) -> Result<f64> {
    let problem = Problem::new(model.domain(), model.tree(), log, model.total())?;
    Ok(problem.to_counts(problem.evaluate(&model.belief_propagation()).0))
}

/// Exact gradient of [`normalized_loss`] with respect to every potential.
///
/// `∂ℓ/∂θ_K[c] = Σ_m E[g_m(x_m)·1{x_K = c}] − P(x_K = c)·E[g_m(x_m)]`,
/// with the joint over `K ∪ C_m` taken from the model itself.
pub fn theta_gradient(model: &GraphicalModel, log: &MeasurementLog) -> Result<Vec<Vec<f64>>> {
    let domain = model.domain();
    let problem = Problem::new(domain, model.tree(), log, model.total())?;
    let beliefs = model.belief_propagation();
    let (_, grads, margs) = problem.evaluate(&beliefs);
    let tree = model.tree();
    let mut out: Vec<Vec<f64>> = tree
        .cliques()
        .iter()
        .map(|c| vec![0.0; cells(domain, c.attrs())])
        .collect();
    for ((m, g), p) in log.iter().zip(&grads).zip(&margs) {
        let eg: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
        for (k, kc) in tree.cliques().iter().enumerate() {
            let joint_attrs = super::factor::union(kc.attrs(), m.clique.attrs());
            let joint = model.marginal_probabilities(&beliefs, &joint_attrs, usize::MAX)?;
            let to_k = ProjectionMap::new(domain, &joint_attrs, kc.attrs()).table();
            let to_m = ProjectionMap::new(domain, &joint_attrs, m.clique.attrs()).table();
            let pk = beliefs.probabilities(k);
            for (j, &pj) in joint.iter().enumerate() {
                out[k][to_k[j]] += pj * g[to_m[j]];
            }
            for (o, q) in out[k].iter_mut().zip(&pk) {
                *o -= q * eg;
            }
        }
    }
    Ok(out)
}
