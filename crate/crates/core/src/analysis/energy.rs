use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DegreeMode, SpatioTemporalGraph};
use crate::numerics::Tensor;

/// `Σ_{(u,v) ∈ E} ‖x_u/d_u − x_v/d_v‖₂`, each undirected edge once.
pub fn dirichlet_energy(graph: &SpatioTemporalGraph, features: &Tensor, mode: DegreeMode) -> Result<f64> {
    energy_with_degrees(graph, features, &graph.degrees(mode))
}

/// Dirichlet energy with caller-supplied node degrees.
pub fn energy_with_degrees(graph: &SpatioTemporalGraph, features: &Tensor, degrees: &[f64]) -> Result<f64> {
    let n = graph.num_nodes();
    if features.rows() != n || degrees.len() != n {
        return Err(Error::shape("dirichlet_energy", features.shape(), &[n, degrees.len()]));
    }
    let mut total = 0.0;
    for (u, v, _) in graph.edges() {
        let (du, dv) = (degrees[u], degrees[v]);
        let sq: f64 = features
            .row(u)
            .iter()
            .zip(features.row(v))
            .map(|(a, b)| {
                let d = a / du - b / dv;
                d * d
            })
            .sum();
        total += sq.sqrt();
    }
    Ok(total)
}

/// Energy of the subgraph induced by `node` and its neighbours.
///
/// Degrees are counted inside that subgraph.
pub fn clique_energy(graph: &SpatioTemporalGraph, features: &Tensor, node: usize, mode: DegreeMode) -> Result<f64> {
    let nodes = graph.closed_neighborhood(node)?;
    let sub = graph.induced(&nodes)?;
    dirichlet_energy(&sub, &gather_rows(features, &nodes)?, mode)
}

fn gather_rows(features: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(rows.len() * features.cols());
    for &r in rows {
        if r >= features.rows() {
            return Err(Error::Index {
                index: r,
                len: features.rows(),
            });
        }
        data.extend_from_slice(features.row(r));
    }
    Tensor::matrix(rows.len(), features.cols(), data)
}

/// Energies of one hierarchy level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelEnergy {
    pub level: usize,
    pub num_nodes: usize,
    /// Energy of the embedded features `h` on the level graph.
    pub embedded: f64,
    /// Energy of the lifted features `u` on the level graph.
    pub lifted: f64,
    /// Per-node closed-neighbourhood energies of `h`.
    pub clique_energies: Vec<f64>,
}

/// Per-level smoothness snapshot taken at `(epoch, batch)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirichletReport {
    pub epoch: usize,
    pub batch: usize,
    pub levels: Vec<LevelEnergy>,
}

impl DirichletReport {
    /// Mean of `E(h_i) − E(h_{i+1})` over consecutive levels; zero for one level.
    pub fn mean_embed_energy_drop(&self) -> f64 {
        let drops: Vec<f64> = self
            .levels
            .windows(2)
            .map(|w| w[0].embedded - w[1].embedded)
            .collect();
        if drops.is_empty() {
            0.0
        } else {
            drops.iter().sum::<f64>() / drops.len() as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path3() -> SpatioTemporalGraph {
        SpatioTemporalGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn energy_examples() {
        let cycle = SpatioTemporalGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 0.5)]).unwrap();
        let same = Tensor::filled(&[4, 3], 0.7);
        assert_eq!(dirichlet_energy(&cycle, &same, DegreeMode::Unweighted).unwrap(), 0.0);

        let edge = SpatioTemporalGraph::from_edges(2, &[(0, 1, 0.4)]).unwrap();
        assert_eq!(dirichlet_energy(&edge, &Tensor::filled(&[2, 1], 1.0), DegreeMode::Unweighted).unwrap(), 0.0);

        let x = Tensor::matrix(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        assert!((dirichlet_energy(&path3(), &x, DegreeMode::Unweighted).unwrap() - 2.0).abs() < 1e-15);
        assert!(dirichlet_energy(&path3(), &Tensor::zeros(&[2, 1]), DegreeMode::Unweighted).is_err());
    }

    #[test]
    fn clique_energy_examples() {
        let g = SpatioTemporalGraph::from_edges(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::uniform(&[4, 2], 1.0, &mut rng);
        let full = dirichlet_energy(&g, &x, DegreeMode::Unweighted).unwrap();
        assert!((clique_energy(&g, &x, 0, DegreeMode::Unweighted).unwrap() - full).abs() < 1e-15);
        let lonely = SpatioTemporalGraph::edgeless(3);
        assert_eq!(clique_energy(&lonely, &Tensor::zeros(&[3, 2]), 1, DegreeMode::Unweighted).unwrap(), 0.0);
    }

    #[test]
    fn clique_energy_matches_explicit_subgraph() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.random_range(2..12);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random_bool(0.35) {
                        edges.push((u, v, rng.random_range(0.1..1.0)));
                    }
                }
            }
            let g = SpatioTemporalGraph::from_edges(n, &edges).unwrap();
            let x = Tensor::uniform(&[n, 3], 1.0, &mut rng);
            let node = rng.random_range(0..n);
            // explicit oracle: keep edges with both ends in N[node], count degrees there
            let inside = |w: usize| w == node || g.weight(node, w) > 0.0;
            let kept: Vec<_> = edges.iter().filter(|(u, v, _)| inside(*u) && inside(*v)).collect();
            let mut deg = vec![0.0; n];
            for (u, v, _) in &kept {
                deg[*u] += 1.0;
                deg[*v] += 1.0;
            }
            let mut expected = 0.0;
            for (u, v, _) in &kept {
                let s: f64 = (0..3).map(|c| (x.get(*u, c) / deg[*u] - x.get(*v, c) / deg[*v]).powi(2)).sum();
                expected += s.sqrt();
            }
            let got = clique_energy(&g, &x, node, DegreeMode::Unweighted).unwrap();
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn energy_drop_mean() {
        let level = |level, embedded| LevelEnergy { level, num_nodes: 1, embedded, lifted: 0.0, clique_energies: vec![] };
        let r = DirichletReport { epoch: 0, batch: 0, levels: vec![level(1, 5.0), level(2, 3.0), level(3, 2.0)] };
        assert_eq!(r.mean_embed_energy_drop(), 1.5);
        let one = DirichletReport { epoch: 0, batch: 0, levels: vec![level(1, 5.0)] };
        assert_eq!(one.mean_embed_energy_drop(), 0.0);
    }
}
