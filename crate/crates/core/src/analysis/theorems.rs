use serde::Serialize;

use super::energy::{clique_energy, dirichlet_energy, energy_with_degrees};
use crate::error::{Error, Result};
use crate::graph::{ClusterAssignment, DegreeMode, SpatioTemporalGraph};
use crate::numerics::Tensor;

/// Abstract graph whose edge `(i, j)` carries the summed predecessor weight
/// between cliques `i` and `j`, clipped to `[0, 1]`.
pub fn abstract_graph(graph: &SpatioTemporalGraph, assignment: &ClusterAssignment) -> Result<SpatioTemporalGraph> {
    check(graph, assignment)?;
    let k = assignment.num_clusters();
    let mut w = Tensor::zeros(&[k, k]);
    for (u, v, weight) in graph.edges() {
        let (a, b) = (assignment.cluster_of(u), assignment.cluster_of(v));
        if a != b {
            let s = (w.get(a, b) + weight).min(1.0);
            w.set(a, b, s);
            w.set(b, a, s);
        }
    }
    SpatioTemporalGraph::from_weights(w)
}

/// Statistical sum `M(C) = Σ_{u ∈ C} x_u`.
pub fn pool_sum(features: &Tensor, assignment: &ClusterAssignment) -> Result<Tensor> {
    if features.rows() != assignment.num_nodes() {
        return Err(Error::shape("pool_sum", features.shape(), &[assignment.num_nodes()]));
    }
    assignment.membership_matrix().transpose().matmul(features)
}

fn check(graph: &SpatioTemporalGraph, assignment: &ClusterAssignment) -> Result<()> {
    if graph.num_nodes() != assignment.num_nodes() {
        return Err(Error::shape("assignment", &[graph.num_nodes()], &[assignment.num_nodes()]));
    }
    Ok(())
}

/// How abstract-node degrees enter the global energy comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum AbstractDegree {
    /// Sum of the members' predecessor degrees.
    #[default]
    MemberSum,
    /// Edge count in the abstract graph.
    Unweighted,
}

fn abstract_degrees(
    graph: &SpatioTemporalGraph,
    abstract_g: &SpatioTemporalGraph,
    assignment: &ClusterAssignment,
    mode: AbstractDegree,
) -> Vec<f64> {
    match mode {
        AbstractDegree::Unweighted => abstract_g.degrees(DegreeMode::Unweighted),
        AbstractDegree::MemberSum => {
            let d = graph.degrees(DegreeMode::Unweighted);
            let mut out = vec![0.0; assignment.num_clusters()];
            for (u, du) in d.into_iter().enumerate() {
                out[assignment.cluster_of(u)] += du;
            }
            out
        }
    }
}

/// Predecessor nodes whose clique lies in the closed neighbourhood of
/// abstract node `j`.
fn preimage(abstract_g: &SpatioTemporalGraph, assignment: &ClusterAssignment, j: usize) -> Result<Vec<usize>> {
    let hood = abstract_g.closed_neighborhood(j)?;
    Ok((0..assignment.num_nodes())
        .filter(|&u| hood.contains(&assignment.cluster_of(u)))
        .collect())
}

/// Neighbourhood energies on both sides of one abstract node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CliqueComparison {
    pub abstract_energy: f64,
    pub predecessor_energy: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub per_clique: Vec<CliqueComparison>,
    pub abstract_energy: f64,
    pub predecessor_energy: f64,
    pub global_holds: bool,
}

impl Theorem1Report {
    pub fn all_cliques_hold(&self) -> bool {
        self.per_clique.iter().all(|c| c.holds)
    }

    /// `Σ_j |abstract_j − predecessor_j|`.
    pub fn linear_deficit(&self) -> f64 {
        self.per_clique
            .iter()
            .map(|c| (c.abstract_energy - c.predecessor_energy).abs())
            .sum()
    }
}

/// Compares energies before and after coarsening by statistical sum.
///
/// For every abstract node `j`, the energy of its closed neighbourhood in
/// the abstract graph is compared with the summed closed-neighbourhood
/// energies of every predecessor node mapped into that neighbourhood.
/// Globally, the abstract graph's energy is compared with the predecessor's.
pub fn theorem1_check(
    graph: &SpatioTemporalGraph,
    features: &Tensor,
    assignment: &ClusterAssignment,
    degree: AbstractDegree,
    slack: f64,
) -> Result<Theorem1Report> {
    let pooled = pool_sum(features, assignment)?;
    compare(graph, features, assignment, &pooled, degree, slack)
}

fn compare(
    graph: &SpatioTemporalGraph,
    features: &Tensor,
    assignment: &ClusterAssignment,
    abstract_features: &Tensor,
    degree: AbstractDegree,
    slack: f64,
) -> Result<Theorem1Report> {
    check(graph, assignment)?;
    let ag = abstract_graph(graph, assignment)?;
    let local: Vec<f64> = (0..graph.num_nodes())
        .map(|u| clique_energy(graph, features, u, DegreeMode::Unweighted))
        .collect::<Result<_>>()?;
    let mut per_clique = Vec::with_capacity(ag.num_nodes());
    for j in 0..ag.num_nodes() {
        let abstract_energy = clique_energy(&ag, abstract_features, j, DegreeMode::Unweighted)?;
        let predecessor_energy: f64 = preimage(&ag, assignment, j)?.into_iter().map(|u| local[u]).sum();
        per_clique.push(CliqueComparison {
            abstract_energy,
            predecessor_energy,
            holds: abstract_energy <= predecessor_energy + slack,
        });
    }
    let abstract_energy = energy_with_degrees(&ag, abstract_features, &abstract_degrees(graph, &ag, assignment, degree))?;
    let predecessor_energy = dirichlet_energy(graph, features, DegreeMode::Unweighted)?;
    Ok(Theorem1Report {
        per_clique,
        abstract_energy,
        predecessor_energy,
        global_holds: abstract_energy <= predecessor_energy + slack,
    })
}

/// Transition applied to pooled clique features.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TransitionSpec {
    StatisticalSum,
    /// `Σ_{b=1..B} ω_b z^b` elementwise, `B = coefficients.len()`.
    TruncatedPowerSeries { coefficients: Vec<f64> },
}

impl TransitionSpec {
    /// Taylor coefficients `1/b!` of `exp(z) − 1` up to order `terms`.
    pub fn exponential(terms: usize) -> Result<Self> {
        if terms == 0 {
            return Err(Error::config("B", "the series needs at least one term"));
        }
        let mut coefficients = Vec::with_capacity(terms);
        let mut c = 1.0;
        for b in 1..=terms {
            c /= b as f64;
            coefficients.push(c);
        }
        Ok(TransitionSpec::TruncatedPowerSeries { coefficients })
    }

    pub fn apply(&self, z: &Tensor) -> Tensor {
        match self {
            TransitionSpec::StatisticalSum => z.clone(),
            TransitionSpec::TruncatedPowerSeries { coefficients } => z.map(|v| {
                let mut power = 1.0;
                let mut total = 0.0;
                for w in coefficients {
                    power *= v;
                    total += w * power;
                }
                total
            }),
        }
    }
}

/// Summed per-clique gap `Σ_j |𝒟(C_j) − Σ_u 𝒟(C_u)|` after the truncated
/// exponential series of `terms` terms.
///
/// Pooled features are divided by `max(1, ‖M‖∞)` before the series.
pub fn theorem2_gap(graph: &SpatioTemporalGraph, features: &Tensor, assignment: &ClusterAssignment, terms: usize) -> Result<f64> {
    theorem2_gap_with(graph, features, assignment, &TransitionSpec::exponential(terms)?)
}

pub fn theorem2_gap_with(
    graph: &SpatioTemporalGraph,
    features: &Tensor,
    assignment: &ClusterAssignment,
    transition: &TransitionSpec,
) -> Result<f64> {
    let pooled = pool_sum(features, assignment)?;
    let scale = pooled.max_abs().max(1.0);
    let mapped = transition.apply(&pooled.scale(1.0 / scale));
    let report = compare(graph, features, assignment, &mapped, AbstractDegree::MemberSum, 0.0)?;
    Ok(report.linear_deficit())
}
