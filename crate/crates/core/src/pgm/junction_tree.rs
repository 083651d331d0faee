//! Junction trees by min-fill triangulation.

use super::factor::{cells_f64, intersect, is_subset};
use crate::domain::{Clique, Domain};
use crate::error::{Error, Result};

/// A clique tree over every attribute of a domain.
///
/// Disconnected parts of the interaction graph are joined by edges with
/// empty separators, so the structure is always a single tree.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionTree {
    cliques: Vec<Clique>,
    /// `(a, b, separator)` with `a < b`.
    edges: Vec<(usize, usize, Vec<usize>)>,
    elimination_order: Vec<usize>,
    /// Derived rooting at clique 0.
    layout: Layout,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Layout {
    parent: Vec<Option<usize>>,
    /// Separator with the parent (empty for the root).
    parent_sep: Vec<Vec<usize>>,
    preorder: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl JunctionTree {
    /// Triangulates the interaction graph of `cliques` over all attributes of
    /// `domain` and joins the maximal cliques into a tree by separator size.
    pub fn build(domain: &Domain, cliques: &[Clique], cell_cap: usize) -> Result<Self> {
        for c in cliques {
            domain.check_clique(c)?;
        }
        let d = domain.len();
        let mut adj = vec![vec![false; d]; d];
        for c in cliques {
            for (k, &a) in c.attrs().iter().enumerate() {
                for &b in &c.attrs()[k + 1..] {
                    adj[a][b] = true;
                    adj[b][a] = true;
                }
            }
        }
        let order = min_fill_order(domain, &adj);
        let mut elim_cliques = eliminate(&adj, &order);
        // Keep maximal cliques, first occurrence order.
        elim_cliques.sort_by_key(|c| std::cmp::Reverse(c.len()));
        let mut maximal: Vec<Vec<usize>> = Vec::new();
        for c in elim_cliques {
            if !maximal.iter().any(|m| is_subset(&c, m)) {
                maximal.push(c);
            }
        }
        maximal.sort();
        for m in &maximal {
            let cells = cells_f64(domain, m);
            if cells >= cell_cap as f64 {
                return Err(Error::TreewidthTooLarge {
                    cells,
                    cap: cell_cap,
                });
            }
        }
        let cliques: Vec<Clique> = maximal
            .into_iter()
            .map(|m| Clique::new(m).expect("elimination cliques are nonempty"))
            .collect();
        let edges = clique_tree_edges(&cliques);
        Ok(JunctionTree::from_parts(cliques, edges, order))
    }

    /// Reassembles a tree from stored parts.
    pub fn from_parts(
        cliques: Vec<Clique>,
        edges: Vec<(usize, usize, Vec<usize>)>,
        elimination_order: Vec<usize>,
    ) -> Self {
        let layout = Layout::new(cliques.len(), &edges);
        JunctionTree {
            cliques,
            edges,
            elimination_order,
            layout,
        }
    }

    pub fn cliques(&self) -> &[Clique] {
        &self.cliques
    }

    pub fn edges(&self) -> &[(usize, usize, Vec<usize>)] {
        &self.edges
    }

    pub fn elimination_order(&self) -> &[usize] {
        &self.elimination_order
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.layout.parent[k]
    }

    pub fn parent_separator(&self, k: usize) -> &[usize] {
        &self.layout.parent_sep[k]
    }

    pub fn children(&self, k: usize) -> &[usize] {
        &self.layout.children[k]
    }

    /// Cliques in root-first order.
    pub fn preorder(&self) -> &[usize] {
        &self.layout.preorder
    }

    /// Largest clique size minus one.
    pub fn treewidth(&self) -> usize {
        self.cliques.iter().map(Clique::len).max().unwrap_or(1) - 1
    }

    /// First clique (by index) containing every attribute of `attrs`.
    pub fn containing(&self, attrs: &[usize]) -> Option<usize> {
        self.cliques.iter().position(|c| is_subset(attrs, c.attrs()))
    }

    /// Whether, for every attribute, the cliques holding it form a
    /// connected subtree.
    pub fn has_running_intersection(&self, d: usize) -> bool {
        (0..d).all(|a| {
            let holding: Vec<usize> = (0..self.cliques.len())
                .filter(|&k| self.cliques[k].contains(a))
                .collect();
            // Connected iff exactly one holder has no holding parent.
            holding
                .iter()
                .filter(|&&k| self.parent(k).is_none_or(|p| !self.cliques[p].contains(a)))
                .count()
                <= 1
        })
    }

    /// Minimal set of cliques whose union covers `attrs` and that forms a
    /// connected subtree, as a list rooted at its first element.
    pub(crate) fn steiner_subtree(&self, attrs: &[usize]) -> Vec<usize> {
        let n = self.cliques.len();
        let mut marked = vec![false; n];
        for &a in attrs {
            if let Some(k) = self.cliques.iter().position(|c| c.contains(a)) {
                marked[k] = true;
            }
        }
        // Keep every clique on a path between two marked cliques: prune
        // unmarked leaves repeatedly.
        let mut keep = vec![true; n];
        let mut degree = vec![0usize; n];
        for (a, b, _) in &self.edges {
            degree[*a] += 1;
            degree[*b] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&k| degree[k] <= 1 && !marked[k]).collect();
        while let Some(k) = stack.pop() {
            if !keep[k] {
                continue;
            }
            keep[k] = false;
            for (a, b, _) in &self.edges {
                let other = if *a == k {
                    *b
                } else if *b == k {
                    *a
                } else {
                    continue;
                };
                if keep[other] {
                    degree[other] -= 1;
                    if degree[other] <= 1 && !marked[other] {
                        stack.push(other);
                    }
                }
            }
        }
        self.layout
            .preorder
            .iter()
            .copied()
            .filter(|&k| keep[k])
            .collect()
    }
}

impl Layout {
    fn new(n: usize, edges: &[(usize, usize, Vec<usize>)]) -> Self {
        let mut nbrs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (e, (a, b, _)) in edges.iter().enumerate() {
            nbrs[*a].push((*b, e));
            nbrs[*b].push((*a, e));
        }
        let mut parent = vec![None; n];
        let mut parent_sep = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut preorder = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        for root in 0..n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut stack = vec![root];
            while let Some(k) = stack.pop() {
                preorder.push(k);
                // Push in reverse so lower-index children are visited first.
                for &(c, e) in nbrs[k].iter().rev() {
                    if !seen[c] {
                        seen[c] = true;
                        parent[c] = Some(k);
                        parent_sep[c] = edges[e].2.clone();
                        children[k].push(c);
                        stack.push(c);
                    }
                }
            }
        }
        for ch in &mut children {
            ch.sort_unstable();
        }
        Layout {
            parent,
            parent_sep,
            preorder,
            children,
        }
    }
}

/// Greedy min-fill order; ties go to the smaller resulting clique, then to
/// the lower attribute index.
fn min_fill_order(domain: &Domain, adj: &[Vec<bool>]) -> Vec<usize> {
    let d = adj.len();
    let mut g: Vec<Vec<bool>> = adj.to_vec();
    let mut alive = vec![true; d];
    let mut order = Vec::with_capacity(d);
    for _ in 0..d {
        let mut best: Option<(usize, f64, usize)> = None;
        for v in (0..d).filter(|&v| alive[v]) {
            let nb: Vec<usize> = (0..d).filter(|&u| alive[u] && g[v][u]).collect();
            let mut fill = 0;
            for (k, &a) in nb.iter().enumerate() {
                for &b in &nb[k + 1..] {
                    if !g[a][b] {
                        fill += 1;
                    }
                }
            }
            let weight: f64 = nb.iter().map(|&u| domain.size(u) as f64).product::<f64>()
                * domain.size(v) as f64;
            let better = match best {
                None => true,
                Some((bf, bw, _)) => fill < bf || (fill == bf && weight < bw),
            };
            if better {
                best = Some((fill, weight, v));
            }
        }
        let (_, _, v) = best.expect("an alive vertex remains");
        let nb: Vec<usize> = (0..d).filter(|&u| alive[u] && g[v][u]).collect();
        for (k, &a) in nb.iter().enumerate() {
            for &b in &nb[k + 1..] {
                g[a][b] = true;
                g[b][a] = true;
            }
        }
        alive[v] = false;
        order.push(v);
    }
    order
}

/// Cliques created by eliminating vertices in `order`.
pub(crate) fn eliminate(adj: &[Vec<bool>], order: &[usize]) -> Vec<Vec<usize>> {
    let d = adj.len();
    let mut g: Vec<Vec<bool>> = adj.to_vec();
    let mut alive = vec![true; d];
    let mut out = Vec::with_capacity(order.len());
    for &v in order {
        let nb: Vec<usize> = (0..d).filter(|&u| alive[u] && g[v][u]).collect();
        for (k, &a) in nb.iter().enumerate() {
            for &b in &nb[k + 1..] {
                g[a][b] = true;
                g[b][a] = true;
            }
        }
        let mut c = nb;
        c.push(v);
        c.sort_unstable();
        out.push(c);
        alive[v] = false;
    }
    out
}

/// Maximum spanning tree over cliques weighted by separator size, including
/// zero-weight edges so the result is connected.
fn clique_tree_edges(cliques: &[Clique]) -> Vec<(usize, usize, Vec<usize>)> {
    let n = cliques.len();
    let mut cand = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let sep = intersect(cliques[a].attrs(), cliques[b].attrs());
            cand.push((sep.len(), a, b, sep));
        }
    }
    // Heaviest first, then lexicographic pair order.
    cand.sort_by(|x, y| y.0.cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut uf = crate::selection::UnionFind::new(n);
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for (_, a, b, sep) in cand {
        if uf.union(a, b) {
            edges.push((a, b, sep));
        }
    }
    edges
}
