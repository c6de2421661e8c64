use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::Serialize;

use super::theorems::{abstract_graph, pool_sum};
use crate::error::{Error, Result};
use crate::graph::{coarsen, graclus, AttentionParams, ClusterAssignment, SpatioTemporalGraph};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Signature {
    Refine(usize, Vec<usize>),
    Memory(usize, usize),
}

/// Exact injective hash: every unseen tuple receives the next integer.
///
/// Share one registry between graphs whose colourings are compared.
#[derive(Clone, Debug, Default)]
pub struct ColorRegistry {
    ids: HashMap<Signature, usize>,
}

impl ColorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry-wide colour for an initial label.
    pub fn initial(&mut self, label: usize) -> usize {
        self.intern(Signature::Refine(label, Vec::new()))
    }

    fn intern(&mut self, s: Signature) -> usize {
        let next = self.ids.len();
        *self.ids.entry(s).or_insert(next)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Node colouring with consecutive colours from 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WLColorMap {
    pub colors: Vec<usize>,
    pub num_colors: usize,
    /// Hierarchy prefix depth that produced the colouring.
    pub depth_tag: usize,
    /// Registry colours before relabelling; comparable across graphs
    /// sharing a registry.
    pub raw: Vec<usize>,
}

impl WLColorMap {
    /// Relabels `raw` in increasing registry order.
    pub fn from_raw(raw: Vec<usize>, depth_tag: usize) -> Self {
        let mut order: BTreeMap<usize, usize> = raw.iter().map(|&c| (c, 0)).collect();
        for (i, slot) in order.values_mut().enumerate() {
            *slot = i;
        }
        WLColorMap {
            colors: raw.iter().map(|c| order[c]).collect(),
            num_colors: order.len(),
            depth_tag,
            raw,
        }
    }

    /// Sorted registry colours of `nodes`.
    pub fn histogram(&self, nodes: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut h: Vec<usize> = nodes.into_iter().map(|u| self.raw[u]).collect();
        h.sort_unstable();
        h
    }
}

fn distinct(c: &[usize]) -> usize {
    let mut v = c.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// 1-WL colour refinement from `init` for at most `rounds` rounds, stopping
/// early once the partition stops splitting.
pub fn wl_refine(graph: &SpatioTemporalGraph, init: &[usize], rounds: usize, registry: &mut ColorRegistry) -> Result<WLColorMap> {
    let n = graph.num_nodes();
    if init.len() != n {
        return Err(Error::shape("wl_refine", &[init.len()], &[n]));
    }
    let mut colors: Vec<usize> = init.iter().map(|&c| registry.initial(c)).collect();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|u| graph.neighbors(u).collect()).collect();
    for _ in 0..rounds {
        let next: Vec<usize> = (0..n)
            .map(|u| {
                let mut m: Vec<usize> = neighbors[u].iter().map(|&v| colors[v]).collect();
                m.sort_unstable();
                registry.intern(Signature::Refine(colors[u], m))
            })
            .collect();
        let stable = distinct(&next) == distinct(&colors);
        colors = next;
        if stable {
            break;
        }
    }
    Ok(WLColorMap::from_raw(colors, 1))
}

/// Stack of graphs with the clustering between consecutive levels.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub graphs: Vec<SpatioTemporalGraph>,
    pub assignments: Vec<ClusterAssignment>,
}

/// How a coarser level's topology is produced.
#[derive(Clone, Debug)]
pub enum Coarsening<'a> {
    /// Summed inter-clique weights, clipped to `[0, 1]`.
    InterCliqueSum,
    /// Attention over pooled features, truncated at `tau`.
    Attention { params: &'a AttentionParams, features: &'a Tensor, tau: f64 },
}

impl Hierarchy {
    /// Repeated Graclus + coarsening until `depth` levels exist.
    pub fn build(base: SpatioTemporalGraph, depth: usize, coarsening: &Coarsening<'_>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::config("depth", "must be positive"));
        }
        let mut graphs = vec![base];
        let mut assignments = Vec::new();
        let mut features = match coarsening {
            Coarsening::Attention { features, .. } => Some((*features).clone()),
            Coarsening::InterCliqueSum => None,
        };
        while graphs.len() < depth {
            let g = graphs.last().expect("non-empty");
            let a = graclus(g);
            let next = match (coarsening, features.as_mut()) {
                (Coarsening::Attention { params, tau, .. }, Some(x)) => {
                    *x = pool_sum(x, &a)?;
                    coarsen(g, &a, x, params, *tau)?
                }
                _ => abstract_graph(g, &a)?,
            };
            assignments.push(a);
            graphs.push(next);
        }
        Ok(Hierarchy { graphs, assignments })
    }

    pub fn depth(&self) -> usize {
        self.graphs.len()
    }

    fn validate(&self) -> Result<()> {
        if self.graphs.is_empty() || self.assignments.len() + 1 != self.graphs.len() {
            return Err(Error::Structure(format!(
                "{} graphs need {} cluster maps, found {}",
                self.graphs.len(),
                self.graphs.len().saturating_sub(1),
                self.assignments.len()
            )));
        }
        for (i, a) in self.assignments.iter().enumerate() {
            let (fine, coarse) = (&self.graphs[i], &self.graphs[i + 1]);
            if a.num_nodes() != fine.num_nodes() || a.num_clusters() != coarse.num_nodes() {
                return Err(Error::Structure(format!(
                    "cluster map {} maps {} nodes to {} cliques, graphs have {} and {}",
                    i + 1,
                    a.num_nodes(),
                    a.num_clusters(),
                    fine.num_nodes(),
                    coarse.num_nodes()
                )));
            }
        }
        Ok(())
    }

    /// Level-wise disjoint union; nodes of `other` follow those of `self`.
    pub fn disjoint_union(&self, other: &Hierarchy) -> Result<Hierarchy> {
        if self.depth() != other.depth() {
            return Err(Error::Structure("union of hierarchies with different depths".into()));
        }
        let graphs = self
            .graphs
            .iter()
            .zip(&other.graphs)
            .map(|(a, b)| {
                let (na, nb) = (a.num_nodes(), b.num_nodes());
                let mut edges = a.edges();
                edges.extend(b.edges().into_iter().map(|(u, v, w)| (u + na, v + na, w)));
                SpatioTemporalGraph::from_edges(na + nb, &edges)
            })
            .collect::<Result<Vec<_>>>()?;
        let assignments = self
            .assignments
            .iter()
            .zip(&other.assignments)
            .map(|(a, b)| {
                let mut c = a.as_slice().to_vec();
                c.extend(b.as_slice().iter().map(|&j| j + a.num_clusters()));
                ClusterAssignment::new(c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Hierarchy { graphs, assignments })
    }
}

/// Memory-enabled colourings for prefix depths `1..=depth`.
///
/// Depth 1 is 1-WL on the finest graph. At depth `k` a node's colour hashes
/// its own 1-WL colour with the depth-`(k−1)` memory colour of its clique in
/// the next level, computed recursively on the remaining hierarchy.
pub fn memory_wl(hierarchy: &Hierarchy, depth: usize, registry: &mut ColorRegistry) -> Result<Vec<WLColorMap>> {
    hierarchy.validate()?;
    if depth == 0 || depth > hierarchy.depth() {
        return Err(Error::config(
            "depth",
            format!("{depth} outside 1..={} for this hierarchy", hierarchy.depth()),
        ));
    }
    // memory[l][k-1]: raw colours of level l at prefix depth k
    let levels = depth;
    let mut memory: Vec<Vec<Vec<usize>>> = vec![Vec::new(); levels];
    for l in (0..levels).rev() {
        let g = &hierarchy.graphs[l];
        let n = g.num_nodes();
        let base = wl_refine(g, &vec![0; n], n, registry)?.raw;
        let mut chain = vec![base.clone()];
        if l + 1 < levels {
            let a = &hierarchy.assignments[l];
            for coarse in memory[l + 1].clone() {
                let colors = (0..n)
                    .map(|u| registry.intern(Signature::Memory(base[u], coarse[a.cluster_of(u)])))
                    .collect();
                chain.push(colors);
            }
        }
        memory[l] = chain;
    }
    Ok(memory
        .swap_remove(0)
        .into_iter()
        .enumerate()
        .map(|(k, raw)| WLColorMap::from_raw(raw, k + 1))
        .collect())
}

/// True iff colour counts never decrease with prefix depth.
pub fn theorem3_check(colorings: &[WLColorMap]) -> bool {
    colorings.windows(2).all(|w| w[1].num_colors >= w[0].num_colors)
}

/// Random undirected graph with edge probability `p` and weights in `[lo, 1)`.
pub fn random_graph<R: Rng + ?Sized>(n: usize, p: f64, lo: f64, rng: &mut R) -> Result<SpatioTemporalGraph> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v, rng.random_range(lo..1.0)));
            }
        }
    }
    SpatioTemporalGraph::from_edges(n, &edges)
}
