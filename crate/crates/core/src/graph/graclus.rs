use super::{connected_components, SpatioTemporalGraph};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Disjoint cover of a graph's nodes by cliques; maps predecessor nodes to
/// abstract nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment {
    cluster_of: Vec<usize>,
    num_clusters: usize,
}

impl ClusterAssignment {
    /// `cluster_of[u]` is the clique of node `u`; ids must be exactly `0..k`.
    pub fn new(cluster_of: Vec<usize>) -> Result<Self> {
        let k = cluster_of.iter().map(|&c| c + 1).max().unwrap_or(0);
        let mut used = vec![false; k];
        for &c in &cluster_of {
            used[c] = true;
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::Structure(format!("clique id {missing} has no members")));
        }
        Ok(ClusterAssignment {
            cluster_of,
            num_clusters: k,
        })
    }

    pub fn singletons(n: usize) -> Self {
        ClusterAssignment {
            cluster_of: (0..n).collect(),
            num_clusters: n,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.cluster_of[node]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.cluster_of
    }

    /// Members of every clique, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (u, &c) in self.cluster_of.iter().enumerate() {
            out[c].push(u);
        }
        out
    }

    /// `n × k` 0/1 matrix with a one at `(u, cluster_of(u))`.
    pub fn membership_matrix(&self) -> Tensor {
        let mut p = Tensor::zeros(&[self.num_nodes(), self.num_clusters]);
        for (u, &c) in self.cluster_of.iter().enumerate() {
            p.set(u, c, 1.0);
        }
        p
    }

    /// Checks that the assignment covers `graph` and every clique induces a
    /// connected subgraph.
    pub fn validate(&self, graph: &SpatioTemporalGraph) -> Result<()> {
        if self.num_nodes() != graph.num_nodes() {
            return Err(Error::Structure(format!(
                "assignment covers {} nodes, graph has {}",
                self.num_nodes(),
                graph.num_nodes()
            )));
        }
        for (c, members) in self.members().iter().enumerate() {
            if members.len() > 1 && connected_components(&graph.induced(members)?).len() != 1 {
                return Err(Error::Structure(format!("clique {c} {members:?} is not connected")));
            }
        }
        Ok(())
    }
}

/// Greedy heavy-edge matching.
///
/// Nodes are visited by descending maximum incident weight (ties: ascending
/// index). An unmatched node pairs with its heaviest unmatched neighbour
/// (ties: ascending index) or becomes a singleton. Clique ids are ordered by
/// smallest member.
pub fn graclus(graph: &SpatioTemporalGraph) -> ClusterAssignment {
    let n = graph.num_nodes();
    let w = graph.weights();
    let max_incident: Vec<f64> = (0..n)
        .map(|u| w.row(u).iter().cloned().fold(0.0, f64::max))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| max_incident[b].total_cmp(&max_incident[a]).then(a.cmp(&b)));

    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut matched = vec![false; n];
    for &u in &order {
        if matched[u] {
            continue;
        }
        matched[u] = true;
        let mut best: Option<(usize, f64)> = None;
        for v in 0..n {
            let x = w.get(u, v);
            if v == u || matched[v] || x <= 0.0 {
                continue;
            }
            if best.is_none_or(|(_, bx)| x > bx) {
                best = Some((v, x));
            }
        }
        if let Some((v, _)) = best {
            matched[v] = true;
            partner[u] = Some(v);
            partner[v] = Some(u);
        }
    }

    let mut cluster_of = vec![usize::MAX; n];
    let mut next = 0;
    for u in 0..n {
        if cluster_of[u] != usize::MAX {
            continue;
        }
        cluster_of[u] = next;
        if let Some(v) = partner[u] {
            cluster_of[v] = next;
        }
        next += 1;
    }
    ClusterAssignment {
        cluster_of,
        num_clusters: next,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_edge_pairs() {
        let g = SpatioTemporalGraph::from_edges(2, &[(0, 1, 0.4)]).unwrap();
        let a = graclus(&g);
        assert_eq!(a.num_clusters(), 1);
        assert_eq!(a.members(), vec![vec![0, 1]]);
    }

    #[test]
    fn triangle_greedy_trace() {
        let g = SpatioTemporalGraph::from_edges(3, &[(0, 1, 0.9), (1, 2, 0.5), (0, 2, 0.1)]).unwrap();
        let a = graclus(&g);
        assert_eq!(a.members(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn edgeless_is_all_singletons() {
        let a = graclus(&SpatioTemporalGraph::edgeless(5));
        assert_eq!(a, ClusterAssignment::singletons(5));
    }

    #[test]
    fn heaviest_pair_is_matched_first() {
        // path 0-1-2-3 with the heaviest edge in the middle
        let g = SpatioTemporalGraph::from_edges(4, &[(0, 1, 0.3), (1, 2, 0.9), (2, 3, 0.3)]).unwrap();
        assert_eq!(graclus(&g).members(), vec![vec![0], vec![1, 2], vec![3]]);
    }

    #[test]
    fn validate_rejects_disconnected_clique() {
        let g = SpatioTemporalGraph::from_edges(3, &[(0, 1, 0.3)]).unwrap();
        let bad = ClusterAssignment::new(vec![0, 1, 0]).unwrap();
        assert!(bad.validate(&g).is_err());
        assert!(ClusterAssignment::new(vec![0, 2]).is_err());
    }

    fn random_graph() -> impl Strategy<Value = SpatioTemporalGraph> {
        (1usize..=64).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..1.0, n * n),
                proptest::collection::vec(any::<bool>(), n * n),
            )
                .prop_map(move |(raw, keep)| {
                    let mut edges = Vec::new();
                    for u in 0..n {
                        for v in u + 1..n {
                            if keep[u * n + v] {
                                edges.push((u, v, raw[u * n + v]));
                            }
                        }
                    }
                    SpatioTemporalGraph::from_edges(n, &edges).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn graclus_invariants(g in random_graph()) {
            let a = graclus(&g);
            let n = g.num_nodes();
            prop_assert!(a.validate(&g).is_ok());
            prop_assert!(a.members().iter().all(|m| !m.is_empty() && m.len() <= 2));
            prop_assert!(a.num_clusters() >= n.div_ceil(2) && a.num_clusters() <= n);
            prop_assert_eq!(graclus(&g), a);
        }
    }
}
