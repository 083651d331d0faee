//! Graphical models over a junction tree.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::factor::{
    cells, cells_f64, intersect, is_subset, logsumexp, logsumexp_with_table, union, Factor,
};
use super::junction_tree::JunctionTree;
use super::SolverDiagnostics;
use crate::domain::{Clique, Domain};
use crate::error::{Error, Result};
use crate::marginal::{MarginalVector, ProjectionMap};

/// `P_θ(x) ∝ exp(Σ_K θ_K(x_K))` over the cliques of a junction tree, plus an
/// estimated record count.
#[derive(Debug, Clone)]
pub struct GraphicalModel {
    domain: Arc<Domain>,
    tree: JunctionTree,
    theta: Vec<Vec<f64>>,
    total: f64,
    plan: Arc<Plan>,
    pub diagnostics: Option<SolverDiagnostics>,
}

/// Projection tables for message passing, computed once per tree.
#[derive(Debug)]
struct Plan {
    /// Clique `k` cells to its parent-separator cells.
    to_parent_sep: Vec<Vec<usize>>,
    /// Parent cells to the separator with child `k`.
    parent_to_sep: Vec<Vec<usize>>,
    sep_cells: Vec<usize>,
}

impl Plan {
    fn new(domain: &Domain, tree: &JunctionTree) -> Self {
        let n = tree.cliques().len();
        let mut to_parent_sep = vec![Vec::new(); n];
        let mut parent_to_sep = vec![Vec::new(); n];
        let mut sep_cells = vec![1; n];
        for k in 0..n {
            if let Some(p) = tree.parent(k) {
                let sep = tree.parent_separator(k);
                to_parent_sep[k] =
                    ProjectionMap::new(domain, tree.cliques()[k].attrs(), sep).table();
                parent_to_sep[k] =
                    ProjectionMap::new(domain, tree.cliques()[p].attrs(), sep).table();
                sep_cells[k] = cells(domain, sep);
            }
        }
        Plan {
            to_parent_sep,
            parent_to_sep,
            sep_cells,
        }
    }
}

/// Normalized log-marginals of every junction-tree clique.
#[derive(Debug, Clone)]
pub struct Beliefs {
    pub log: Vec<Vec<f64>>,
}

impl Beliefs {
    pub fn probabilities(&self, k: usize) -> Vec<f64> {
        self.log[k].iter().map(|x| x.exp()).collect()
    }
}

/// `a − b` with `−∞ − −∞ = −∞`: a zero divided by a zero stays zero.
fn safe_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        a - b
    }
}

impl GraphicalModel {
    /// Model with all-zero potentials (the uniform distribution).
    pub fn uniform(domain: Arc<Domain>, tree: JunctionTree, total: f64) -> Self {
        let theta = tree
            .cliques()
            .iter()
            .map(|c| vec![0.0; cells(&domain, c.attrs())])
            .collect();
        GraphicalModel::with_theta(domain, tree, theta, total)
    }

    pub fn with_theta(
        domain: Arc<Domain>,
        tree: JunctionTree,
        theta: Vec<Vec<f64>>,
        total: f64,
    ) -> Self {
        let plan = Arc::new(Plan::new(&domain, &tree));
        GraphicalModel {
            domain,
            tree,
            theta,
            total,
            plan,
            diagnostics: None,
        }
    }

    /// Same structure, new potentials.
    pub(crate) fn replace_theta(&self, theta: Vec<Vec<f64>>) -> Self {
        GraphicalModel {
            domain: self.domain.clone(),
            tree: self.tree.clone(),
            theta,
            total: self.total,
            plan: self.plan.clone(),
            diagnostics: None,
        }
    }

    /// Maximum-entropy model of a set of mutually consistent marginals whose
    /// cliques form a decomposable structure (e.g. the edges of a tree).
    pub fn from_consistent_marginals(
        domain: Arc<Domain>,
        marginals: &[MarginalVector],
        cell_cap: usize,
    ) -> Result<Self> {
        let cliques: Vec<Clique> = marginals.iter().map(|m| m.clique.clone()).collect();
        let tree = JunctionTree::build(&domain, &cliques, cell_cap)?;
        let total = marginals.first().map_or(0.0, MarginalVector::total);
        let mut theta = Vec::with_capacity(tree.cliques().len());
        for (k, kc) in tree.cliques().iter().enumerate() {
            let log_mu = match marginals.iter().find(|m| kc.is_subset_of(&m.clique)) {
                Some(m) => m.project(&domain, kc)?.values,
                None if kc.len() == 1 => vec![1.0; domain.size(kc.attrs()[0])],
                None => {
                    return Err(Error::InvalidClique(format!(
                        "marginals do not form a decomposable structure at {kc}"
                    )))
                }
            };
            let mut t: Vec<f64> = log_mu.iter().map(|x| x.ln()).collect();
            if tree.parent(k).is_some() {
                let sep = tree.parent_separator(k);
                let table = ProjectionMap::new(&domain, kc.attrs(), sep).table();
                let sep_mu = super::factor::sum_with_table(&log_mu, &table, cells(&domain, sep));
                for (v, &s) in t.iter_mut().zip(&table) {
                    *v = safe_sub(*v, sep_mu[s].ln());
                }
            }
            theta.push(t);
        }
        Ok(GraphicalModel::with_theta(domain, tree, theta, total))
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn tree(&self) -> &JunctionTree {
        &self.tree
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Exact normalized clique marginals by two-pass message passing in log
    /// space.
    pub fn belief_propagation(&self) -> Beliefs {
        let tree = &self.tree;
        let plan = &self.plan;
        let n = tree.cliques().len();
        let pre = tree.preorder();
        // inner[k] = θ_k + messages from k's children.
        let mut inner: Vec<Vec<f64>> = self.theta.clone();
        let mut up: Vec<Vec<f64>> = vec![Vec::new(); n];
        for &k in pre.iter().rev() {
            for &c in tree.children(k) {
                let table = &plan.parent_to_sep[c];
                let msg = &up[c];
                for (v, &s) in inner[k].iter_mut().zip(table) {
                    *v += msg[s];
                }
            }
            if tree.parent(k).is_some() {
                up[k] = logsumexp_with_table(&inner[k], &plan.to_parent_sep[k], plan.sep_cells[k]);
            }
        }
        // Downward: full[k] = inner[k] + message from the parent.
        let mut full = inner;
        for &k in pre {
            if let Some(p) = tree.parent(k) {
                let sep_full =
                    logsumexp_with_table(&full[p], &plan.parent_to_sep[k], plan.sep_cells[k]);
                let down: Vec<f64> = sep_full
                    .iter()
                    .zip(&up[k])
                    .map(|(a, b)| safe_sub(*a, *b))
                    .collect();
                let table = &plan.to_parent_sep[k];
                for (v, &s) in full[k].iter_mut().zip(table) {
                    *v += down[s];
                }
            }
        }
        for b in &mut full {
            let z = logsumexp(b);
            b.iter_mut().for_each(|x| *x = safe_sub(*x, z));
        }
        Beliefs { log: full }
    }

    /// Probability marginal over a sorted attribute set.
    pub fn marginal_probabilities(
        &self,
        beliefs: &Beliefs,
        attrs: &[usize],
        cell_cap: usize,
    ) -> Result<Vec<f64>> {
        let domain = &*self.domain;
        let want = cells_f64(domain, attrs);
        if want >= cell_cap as f64 {
            return Err(Error::CliqueTooLarge {
                cells: want,
                cap: cell_cap,
            });
        }
        if let Some(k) = self.tree.containing(attrs) {
            let table = ProjectionMap::new(domain, self.tree.cliques()[k].attrs(), attrs).table();
            let probs = beliefs.probabilities(k);
            return Ok(super::factor::sum_with_table(&probs, &table, cells(domain, attrs)));
        }
        let log = self.eliminate_over_subtree(beliefs, attrs, cell_cap)?;
        Ok(log.values.iter().map(|x| x.exp()).collect())
    }

    /// Joint over attributes spread across several cliques: multiply the
    /// subtree's clique beliefs divided by separator beliefs, eliminating
    /// unneeded attributes leaf-first.
    fn eliminate_over_subtree(
        &self,
        beliefs: &Beliefs,
        attrs: &[usize],
        cell_cap: usize,
    ) -> Result<Factor> {
        let domain = &*self.domain;
        let sub = self.tree.steiner_subtree(attrs);
        let root = sub[0];
        let in_sub = |k: usize| sub.contains(&k);
        let mut pending: Vec<Option<Factor>> = vec![None; self.tree.cliques().len()];
        for &k in sub.iter().rev() {
            let scope = self.tree.cliques()[k].attrs().to_vec();
            let mut f = Factor {
                attrs: scope.clone(),
                values: beliefs.log[k].clone(),
            };
            if k != root {
                let sep = self.tree.parent_separator(k);
                let table = &self.plan.to_parent_sep[k];
                let sep_log = logsumexp_with_table(&f.values, table, cells(domain, sep));
                for (v, &s) in f.values.iter_mut().zip(table) {
                    *v = safe_sub(*v, sep_log[s]);
                }
            }
            for &c in self.tree.children(k) {
                if !in_sub(c) {
                    continue;
                }
                let msg = pending[c].take().expect("children are processed first");
                let scope_cells = cells_f64(domain, &union(&f.attrs, &msg.attrs));
                if scope_cells >= cell_cap as f64 {
                    return Err(Error::CliqueTooLarge {
                        cells: scope_cells,
                        cap: cell_cap,
                    });
                }
                f = f.log_product(domain, &msg);
            }
            let mut keep = intersect(&f.attrs, attrs);
            if k != root {
                keep = union(&keep, self.tree.parent_separator(k));
            }
            pending[k] = Some(if keep == f.attrs {
                f
            } else {
                f.logsumexp_to(domain, &keep)
            });
        }
        let out = pending[root].take().expect("root processed");
        debug_assert_eq!(out.attrs, attrs);
        Ok(out)
    }

    /// Expected counts `total·M_C(P_θ)`, clamped at zero.
    pub fn model_marginal(&self, clique: &Clique, cell_cap: usize) -> Result<MarginalVector> {
        self.domain.check_clique(clique)?;
        let beliefs = self.belief_propagation();
        self.model_marginal_with(&beliefs, clique, cell_cap)
    }

    /// As [`model_marginal`](Self::model_marginal) with precomputed beliefs.
    pub fn model_marginal_with(
        &self,
        beliefs: &Beliefs,
        clique: &Clique,
        cell_cap: usize,
    ) -> Result<MarginalVector> {
        let p = self.marginal_probabilities(beliefs, clique.attrs(), cell_cap)?;
        Ok(MarginalVector {
            clique: clique.clone(),
            values: p.into_iter().map(|x| (self.total * x).max(0.0)).collect(),
        })
    }

    /// Serializable form.
    pub fn to_document(&self) -> ModelDocument {
        let d = &*self.domain;
        ModelDocument {
            domain_hash: d.content_hash(),
            cliques: self.tree.cliques().iter().map(|c| d.clique_names(c)).collect(),
            edges: self.tree.edges().iter().map(|(a, b, _)| (*a, *b)).collect(),
            elimination_order: self
                .tree
                .elimination_order()
                .iter()
                .map(|&i| d.name(i).to_string())
                .collect(),
            theta: self.theta.clone(),
            total: self.total,
            solver: self.diagnostics.clone(),
        }
    }

    pub fn from_document(domain: Arc<Domain>, doc: ModelDocument) -> Result<Self> {
        if doc.domain_hash != domain.content_hash() {
            return Err(Error::DomainMismatch);
        }
        let cliques = doc
            .cliques
            .iter()
            .map(|names| domain.clique(names))
            .collect::<Result<Vec<_>>>()?;
        let n = cliques.len();
        if doc.theta.len() != n || doc.edges.len() + 1 != n.max(1) {
            return Err(Error::Parse("model document has inconsistent sizes".into()));
        }
        for (c, t) in cliques.iter().zip(&doc.theta) {
            if t.len() as f64 != domain.cells_f64(c) {
                return Err(Error::Parse(format!("potential of {c} has wrong length")));
            }
        }
        let mut edges = Vec::with_capacity(doc.edges.len());
        for (a, b) in doc.edges {
            if a >= n || b >= n {
                return Err(Error::Parse("model edge out of range".into()));
            }
            let sep = intersect(cliques[a].attrs(), cliques[b].attrs());
            edges.push((a, b, sep));
        }
        let order = doc
            .elimination_order
            .iter()
            .map(|name| domain.require(name))
            .collect::<Result<Vec<_>>>()?;
        let tree = JunctionTree::from_parts(cliques, edges, order);
        if !tree.has_running_intersection(domain.len())
            || (0..domain.len()).any(|a| tree.containing(&[a]).is_none())
        {
            return Err(Error::Parse("model cliques do not form a junction tree".into()));
        }
        let mut model = GraphicalModel::with_theta(domain, tree, doc.theta, doc.total);
        model.diagnostics = doc.solver;
        Ok(model)
    }

    /// Whether every clique of `clique` lies inside one model clique.
    pub fn covers(&self, clique: &Clique) -> bool {
        self.tree
            .cliques()
            .iter()
            .any(|k| is_subset(clique.attrs(), k.attrs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub domain_hash: String,
    pub cliques: Vec<Vec<String>>,
    pub edges: Vec<(usize, usize)>,
    pub elimination_order: Vec<String>,
    pub theta: Vec<Vec<f64>>,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverDiagnostics>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::DEFAULT_CELL_CAP;

    fn cl(v: &[usize]) -> Clique {
        Clique::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_theta_is_uniform() {
        let dom = Arc::new(Domain::from_sizes(&[("A", 2), ("B", 3), ("C", 4)]).unwrap());
        let tree = JunctionTree::build(&dom, &[cl(&[0, 1]), cl(&[1, 2])], DEFAULT_CELL_CAP).unwrap();
        let m = GraphicalModel::uniform(dom, tree, 24.0);
        let b = m.belief_propagation();
        for k in 0..2 {
            let p = b.probabilities(k);
            let u = 1.0 / p.len() as f64;
            assert!(p.iter().all(|x| (x - u).abs() < 1e-12));
        }
        let ac = m.model_marginal(&cl(&[0, 2]), DEFAULT_CELL_CAP).unwrap();
        assert!(ac.values.iter().all(|x| (x - 3.0).abs() < 1e-12));
    }

    #[test]
    fn single_clique_is_softmax() {
        let dom = Arc::new(Domain::from_sizes(&[("A", 3)]).unwrap());
        let tree = JunctionTree::build(&dom, &[cl(&[0])], DEFAULT_CELL_CAP).unwrap();
        let theta = vec![vec![0.0, 1.0, -1.0]];
        let m = GraphicalModel::with_theta(dom, tree, theta.clone(), 1.0);
        let p = m.belief_propagation().probabilities(0);
        let q = super::super::factor::softmax(&theta[0]);
        assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn consistent_marginals_reproduced_with_zero_cells() {
        let dom = Arc::new(Domain::from_sizes(&[("A", 2), ("B", 2), ("C", 2)]).unwrap());
        let ab = MarginalVector::new(&dom, cl(&[0, 1]), vec![3.0, 0.0, 1.0, 4.0]).unwrap();
        let bc = MarginalVector::new(&dom, cl(&[1, 2]), vec![2.0, 2.0, 4.0, 0.0]).unwrap();
        let m = GraphicalModel::from_consistent_marginals(dom, &[ab.clone(), bc.clone()], 1000)
            .unwrap();
        let got_ab = m.model_marginal(&cl(&[0, 1]), 1000).unwrap();
        let got_bc = m.model_marginal(&cl(&[1, 2]), 1000).unwrap();
        for (a, b) in got_ab.values.iter().zip(&ab.values) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in got_bc.values.iter().zip(&bc.values) {
            assert!((a - b).abs() < 1e-12);
        }
        // A ⊥ C | B: P(a,b,c) = P(a,b) P(b,c) / P(b).
        let abc = m.model_marginal(&cl(&[0, 1, 2]), 1000).unwrap();
        assert!((abc.values[0] - 3.0 * 2.0 / 4.0).abs() < 1e-12);
        assert!(abc.values[7].abs() < 1e-12);
    }

    #[test]
    fn document_roundtrip() {
        let dom = Arc::new(Domain::from_sizes(&[("A", 2), ("B", 3), ("C", 2)]).unwrap());
        let tree = JunctionTree::build(&dom, &[cl(&[0, 1]), cl(&[1, 2])], 1000).unwrap();
        let theta = vec![vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], vec![1.0, -1.0, 0.5, 0.0, 2.0, 0.25]];
        let m = GraphicalModel::with_theta(dom.clone(), tree, theta, 10.0);
        let doc = m.to_document();
        let json = serde_json::to_string(&doc).unwrap();
        let back =
            GraphicalModel::from_document(dom, serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.theta(), m.theta());
        let a = m.model_marginal(&cl(&[0, 2]), 1000).unwrap();
        let b = back.model_marginal(&cl(&[0, 2]), 1000).unwrap();
        assert_eq!(a, b);
    }
}
