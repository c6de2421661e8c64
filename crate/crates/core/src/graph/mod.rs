//! Spatio-temporal graphs: attention topology, truncation and coarsening.

mod attention;
mod graclus;

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

pub use attention::{attention_on_tape, attention_weights, head_dim, AttentionParams};
pub use graclus::{graclus, ClusterAssignment};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Default truncation threshold for learned edge weights.
pub const DEFAULT_TAU: f64 = 0.05;

/// How node degree enters degree-normalised quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DegreeMode {
    /// Number of incident edges with non-zero weight.
    #[default]
    Unweighted,
    /// Sum of incident edge weights.
    Weighted,
}

/// Undirected weighted graph stored as a dense symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatioTemporalGraph {
    weights: Tensor,
}

impl SpatioTemporalGraph {
    /// Wraps a square, symmetric, non-negative matrix with a zero diagonal.
    pub fn from_weights(weights: Tensor) -> Result<Self> {
        let n = weights.rows();
        if weights.shape().len() != 2 || weights.cols() != n {
            return Err(Error::Structure(format!(
                "weight matrix must be square, got {:?}",
                weights.shape()
            )));
        }
        for u in 0..n {
            if weights.get(u, u) != 0.0 {
                return Err(Error::Structure(format!("self loop on node {u}")));
            }
            for v in 0..n {
                let w = weights.get(u, v);
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::Structure(format!("edge ({u},{v}) has weight {w}")));
                }
                if (w - weights.get(v, u)).abs() > 1e-12 {
                    return Err(Error::Structure(format!("edge ({u},{v}) is not symmetric")));
                }
            }
        }
        Ok(SpatioTemporalGraph { weights })
    }

    pub fn edgeless(n: usize) -> Self {
        SpatioTemporalGraph {
            weights: Tensor::zeros(&[n, n]),
        }
    }

    /// Builds a graph from undirected `(u, v, w)` triples.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = Tensor::zeros(&[n, n]);
        for &(u, v, x) in edges {
            if u >= n || v >= n {
                return Err(Error::Index { index: u.max(v), len: n });
            }
            w.set(u, v, x);
            w.set(v, u, x);
        }
        Self::from_weights(w)
    }

    pub fn num_nodes(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.weights.get(u, v)
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .row(u)
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w > 0.0)
            .map(|(v, _)| v)
    }

    /// Unweighted degree: the number of incident non-zero edges.
    pub fn degree(&self, node: usize) -> Result<usize> {
        self.check(node)?;
        Ok(self.neighbors(node).count())
    }

    pub fn weighted_degree(&self, node: usize) -> Result<f64> {
        self.check(node)?;
        Ok(self.weights.row(node).iter().sum())
    }

    pub fn degrees(&self, mode: DegreeMode) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|u| match mode {
                DegreeMode::Unweighted => self.neighbors(u).count() as f64,
                DegreeMode::Weighted => self.weights.row(u).iter().sum(),
            })
            .collect()
    }

    /// Undirected edges `(u, v, w)` with `u < v` and `w > 0`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let w = self.weights.get(u, v);
                if w > 0.0 {
                    out.push((u, v, w));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    /// Subgraph induced by `nodes`, relabelled `0..nodes.len()` in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Result<SpatioTemporalGraph> {
        for &u in nodes {
            self.check(u)?;
        }
        let k = nodes.len();
        let mut w = Tensor::zeros(&[k, k]);
        for (i, &u) in nodes.iter().enumerate() {
            for (j, &v) in nodes.iter().enumerate() {
                if i != j {
                    w.set(i, j, self.weights.get(u, v));
                }
            }
        }
        Ok(SpatioTemporalGraph { weights: w })
    }

    /// The node itself followed by its neighbours in ascending order.
    pub fn closed_neighborhood(&self, node: usize) -> Result<Vec<usize>> {
        self.check(node)?;
        Ok(std::iter::once(node).chain(self.neighbors(node)).collect())
    }

    fn check(&self, node: usize) -> Result<()> {
        if node >= self.num_nodes() {
            Err(Error::Index {
                index: node,
                len: self.num_nodes(),
            })
        } else {
            Ok(())
        }
    }

    /// Writes the edge list as CSV with header `u,v,w`.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut body = format!("# nodes={}\nu,v,w\n", self.num_nodes());
        for (u, v, w) in self.edges() {
            body.push_str(&format!("{u},{v},{w}\n"));
        }
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads a file produced by [`write_edge_list`](Self::write_edge_list).
    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut n = None;
        let mut edges = Vec::new();
        for (row, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# nodes=") {
                n = Some(rest.parse::<usize>().map_err(|e| Error::Parse {
                    row,
                    message: e.to_string(),
                })?);
                continue;
            }
            if line.is_empty() || line == "u,v,w" {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let parse_err = |m: String| Error::Parse { row, message: m };
            if parts.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, found {}", parts.len())));
            }
            let u = parts[0].trim().parse::<usize>().map_err(|e| parse_err(e.to_string()))?;
            let v = parts[1].trim().parse::<usize>().map_err(|e| parse_err(e.to_string()))?;
            let w = parts[2].trim().parse::<f64>().map_err(|e| parse_err(e.to_string()))?;
            edges.push((u, v, w));
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0));
        Self::from_edges(n, &edges)
    }
}

/// Zeroes every entry below `tau`; surviving entries keep their value.
pub fn truncate(weights: &Tensor, tau: f64) -> Result<SpatioTemporalGraph> {
    check_tau(tau)?;
    SpatioTemporalGraph::from_weights(weights.map(|w| if w < tau { 0.0 } else { w }))
}

/// 0/1 mask of the entries [`truncate`] keeps.
pub fn truncation_mask(weights: &Tensor, tau: f64) -> Result<Tensor> {
    check_tau(tau)?;
    Ok(weights.map(|w| if w < tau { 0.0 } else { 1.0 }))
}

pub fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::config("tau", format!("{tau} is outside the legal range (0, 1]")))
    }
}

/// Connected components over non-zero edges, each sorted ascending and
/// ordered by smallest member.
pub fn connected_components(graph: &SpatioTemporalGraph) -> Vec<Vec<usize>> {
    let n = graph.num_nodes();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in graph.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Abstract topology produced by fresh self-attention over the cliques'
/// features, truncated with the same threshold.
pub fn coarsen(
    graph: &SpatioTemporalGraph,
    assignment: &ClusterAssignment,
    abstract_features: &Tensor,
    params: &AttentionParams,
    tau: f64,
) -> Result<SpatioTemporalGraph> {
    if assignment.num_nodes() != graph.num_nodes() {
        return Err(Error::shape(
            "coarsen",
            &[graph.num_nodes()],
            &[assignment.num_nodes()],
        ));
    }
    if abstract_features.rows() != assignment.num_clusters() {
        return Err(Error::shape(
            "coarsen",
            abstract_features.shape(),
            &[assignment.num_clusters()],
        ));
    }
    truncate(&attention_weights(abstract_features, params)?, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triangle() -> SpatioTemporalGraph {
        SpatioTemporalGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn degrees() {
        let star = SpatioTemporalGraph::from_edges(4, &[(0, 1, 0.5), (0, 2, 0.5), (0, 3, 0.2)]).unwrap();
        assert_eq!(star.degree(0).unwrap(), 3);
        assert_eq!(triangle().degree(1).unwrap(), 2);
        let g = SpatioTemporalGraph::from_edges(3, &[(0, 1, 0.5)]).unwrap();
        assert_eq!(g.degree(2).unwrap(), 0);
        assert!(matches!(g.degree(3), Err(Error::Index { index: 3, len: 3 })));
        assert!((star.weighted_degree(0).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn truncate_examples() {
        let w = Tensor::from_rows(&[
            vec![0.0, 0.05, 0.3],
            vec![0.05, 0.0, 0.7],
            vec![0.3, 0.7, 0.0],
        ])
        .unwrap();
        let g = truncate(&w, 0.2).unwrap();
        assert_eq!(g.edges(), vec![(0, 2, 0.3), (1, 2, 0.7)]);
        assert_eq!(truncate(&w, 0.05).unwrap().weights(), &w);
        let ones = Tensor::from_rows(&[vec![0.0, 1.0, 0.5], vec![1.0, 0.0, 0.9], vec![0.5, 0.9, 0.0]]).unwrap();
        assert_eq!(truncate(&ones, 1.0).unwrap().edges(), vec![(0, 1, 1.0)]);
        for bad in [0.0, -0.1, 1.5] {
            let err = truncate(&w, bad).unwrap_err();
            assert!(matches!(err, Error::Config { ref key, .. } if key == "tau"), "{err}");
        }
    }

    #[test]
    fn components() {
        assert_eq!(connected_components(&SpatioTemporalGraph::edgeless(4)).len(), 4);
        let path = SpatioTemporalGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        assert_eq!(connected_components(&path), vec![vec![0, 1, 2, 3]]);
    }

    fn union_find_components(g: &SpatioTemporalGraph) -> Vec<Vec<usize>> {
        let n = g.num_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for (u, v, _) in g.edges() {
            let (a, b) = (find(&mut parent, u), find(&mut parent, v));
            parent[a.max(b)] = a.min(b);
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for u in 0..n {
            let r = find(&mut parent, u);
            groups.entry(r).or_default().push(u);
        }
        groups.into_values().collect()
    }

    #[test]
    fn two_triangles_match_union_find() {
        let g = SpatioTemporalGraph::from_edges(
            6,
            &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)],
        )
        .unwrap();
        let comps = connected_components(&g);
        assert_eq!(comps, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(comps, union_find_components(&g));
    }

    #[test]
    fn edge_list_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let g = SpatioTemporalGraph::from_edges(5, &[(0, 3, 0.25), (1, 2, 0.125)]).unwrap();
        g.write_edge_list(&path).unwrap();
        assert_eq!(SpatioTemporalGraph::read_edge_list(&path).unwrap(), g);
    }

    #[test]
    fn coarsen_examples() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let params = AttentionParams::random(4, 2, &mut rng).unwrap();
        let g = SpatioTemporalGraph::from_edges(4, &[(0, 1, 0.9), (1, 2, 0.2), (2, 3, 0.8)]).unwrap();

        let one = ClusterAssignment::new(vec![0, 0, 0, 0]).unwrap();
        let feats = Tensor::matrix(1, 4, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let abs = coarsen(&g, &one, &feats, &params, DEFAULT_TAU).unwrap();
        assert_eq!(abs.num_nodes(), 1);
        assert_eq!(abs.num_edges(), 0);

        let pairs = graclus(&g);
        assert_eq!(pairs.members(), vec![vec![0, 1], vec![2, 3]]);
        let same = Tensor::from_rows(&[vec![0.5, -0.5, 0.2, 0.1], vec![0.5, -0.5, 0.2, 0.1]]).unwrap();
        let abs = coarsen(&g, &pairs, &same, &params, DEFAULT_TAU).unwrap();
        assert_eq!(abs.edges(), vec![(0, 1, 0.5)]);

        // hand-run single-head attention on two abstract rows
        let p1 = AttentionParams::new(vec![Tensor::identity(2)], vec![Tensor::identity(2)]).unwrap();
        let feats = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.5, 2.0]]).unwrap();
        let abs = coarsen(&g, &pairs, &feats, &p1, 0.01).unwrap();
        let s = |a: [f64; 2], b: [f64; 2]| (a[0] * b[0] + a[1] * b[1]) / 2f64.sqrt();
        let (x0, x1) = ([1.0, 0.0], [0.5, 2.0]);
        let a01 = s(x0, x1).exp() / (s(x0, x0).exp() + s(x0, x1).exp());
        let a10 = s(x1, x0).exp() / (s(x1, x0).exp() + s(x1, x1).exp());
        assert!((abs.weight(0, 1) - 0.5 * (a01 + a10)).abs() < 1e-12);

        assert!(coarsen(&g, &pairs, &Tensor::zeros(&[3, 4]), &params, DEFAULT_TAU).is_err());
    }

    fn random_weights() -> impl Strategy<Value = Tensor> {
        (1usize..24).prop_flat_map(|n| {
            proptest::collection::vec(0.0f64..1.0, n * n).prop_map(move |raw| {
                let mut w = Tensor::zeros(&[n, n]);
                for u in 0..n {
                    for v in u + 1..n {
                        let x = raw[u * n + v];
                        w.set(u, v, x);
                        w.set(v, u, x);
                    }
                }
                w
            })
        })
    }

    proptest! {
        #[test]
        fn truncate_is_idempotent(w in random_weights(), tau in 0.01f64..=1.0) {
            let once = truncate(&w, tau).unwrap();
            let twice = truncate(once.weights(), tau).unwrap();
            prop_assert_eq!(once.weights(), twice.weights());
            for (_, _, x) in once.edges() {
                prop_assert!(x >= tau);
            }
        }

        #[test]
        fn components_agree_with_union_find(w in random_weights(), tau in 0.3f64..=1.0) {
            let g = truncate(&w, tau).unwrap();
            prop_assert_eq!(connected_components(&g), union_find_components(&g));
        }
    }
}
