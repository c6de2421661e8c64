use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::theorems::{theorem1_check, theorem2_gap, AbstractDegree};
use super::wl::{memory_wl, random_graph, theorem3_check, Coarsening, ColorRegistry, Hierarchy};
use crate::error::{Error, Result};
use crate::graph::{graclus, AttentionParams, ClusterAssignment, SpatioTemporalGraph, DEFAULT_TAU};
use crate::numerics::Tensor;
use crate::parallel::Execution;

/// Shared knobs of the randomized harnesses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarnessConfig {
    pub trials: usize,
    /// Trial `i` is seeded with `seed + i`.
    pub seed: u64,
    pub max_nodes: usize,
    pub execution: Execution,
}

impl HarnessConfig {
    fn trial_seeds(&self) -> Result<Vec<u64>> {
        if self.max_nodes < 2 {
            return Err(Error::config("max_nodes", "random instances need at least 2 nodes"));
        }
        Ok((0..self.trials as u64).map(|i| self.seed.wrapping_add(i)).collect())
    }
}

/// One line of the plot-ready analysis CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisRow {
    pub suite: &'static str,
    pub trial_seed: u64,
    pub depth: Option<usize>,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub gap: Option<f64>,
    pub energy: Option<f64>,
    pub color_count: Option<usize>,
}

pub const ANALYSIS_COLUMNS: [&str; 7] = ["suite", "trial_seed", "depth", "B", "gap", "energy", "color_count"];

pub fn write_rows(path: &Path, rows: &[AnalysisRow]) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(io)?;
    w.write_record(ANALYSIS_COLUMNS).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Random weighted graph, features in `[-1, 1]` and its Graclus clustering.
pub fn random_instance(rng: &mut ChaCha8Rng, max_nodes: usize) -> Result<(SpatioTemporalGraph, Tensor, ClusterAssignment)> {
    let n = rng.random_range(2..=max_nodes);
    let p = rng.random_range(0.05..0.6);
    let g = random_graph(n, p, 1e-3, rng)?;
    let d = rng.random_range(1..=4);
    let x = Tensor::uniform(&[n, d], 1.0, rng);
    let a = graclus(&g);
    Ok((g, x, a))
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem1Summary {
    pub trials: usize,
    pub per_clique_pass: usize,
    pub global_pass: usize,
    /// Largest `abstract − predecessor` seen, clique-wise and globally.
    pub worst_clique_excess: f64,
    pub worst_global_excess: f64,
    #[serde(skip)]
    pub rows: Vec<AnalysisRow>,
}

impl Theorem1Summary {
    pub fn passed(&self) -> bool {
        self.per_clique_pass == self.trials && self.global_pass == self.trials
    }
}

/// Energy contraction under sum pooling on random instances.
pub fn run_theorem1(cfg: &HarnessConfig, degree: AbstractDegree, slack: f64) -> Result<Theorem1Summary> {
    let seeds = cfg.trial_seeds()?;
    let results = cfg.execution.map(&seeds, |&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let (g, x, a) = random_instance(&mut rng, cfg.max_nodes)?;
        theorem1_check(&g, &x, &a, degree, slack)
    });
    let mut summary = Theorem1Summary {
        trials: seeds.len(),
        per_clique_pass: 0,
        global_pass: 0,
        worst_clique_excess: f64::NEG_INFINITY,
        worst_global_excess: f64::NEG_INFINITY,
        rows: Vec::with_capacity(seeds.len()),
    };
    for (&seed, r) in seeds.iter().zip(results) {
        let r = r?;
        summary.per_clique_pass += usize::from(r.all_cliques_hold());
        summary.global_pass += usize::from(r.global_holds);
        for c in &r.per_clique {
            summary.worst_clique_excess = summary.worst_clique_excess.max(c.abstract_energy - c.predecessor_energy);
        }
        summary.worst_global_excess = summary.worst_global_excess.max(r.abstract_energy - r.predecessor_energy);
        summary.rows.push(AnalysisRow {
            suite: "theorem1",
            trial_seed: seed,
            depth: Some(2),
            b: None,
            gap: Some(r.predecessor_energy - r.abstract_energy),
            energy: Some(r.abstract_energy),
            color_count: None,
        });
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem2Summary {
    pub trials: usize,
    pub terms: Vec<usize>,
    pub median_gaps: Vec<f64>,
    pub non_increasing: bool,
    /// Median gap at the largest `B` over the median at the smallest.
    pub ratio: f64,
    #[serde(skip)]
    pub rows: Vec<AnalysisRow>,
}

impl Theorem2Summary {
    pub fn passed(&self, max_ratio: f64) -> bool {
        self.non_increasing && self.ratio <= max_ratio
    }
}

/// Gap between abstract and predecessor neighbourhood energies as the
/// exponential series gains terms.
pub fn run_theorem2(cfg: &HarnessConfig, terms: &[usize]) -> Result<Theorem2Summary> {
    if terms.is_empty() {
        return Err(Error::config("B", "no series lengths given"));
    }
    let seeds = cfg.trial_seeds()?;
    let results = cfg.execution.map(&seeds, |&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let (g, x, a) = random_instance(&mut rng, cfg.max_nodes)?;
        terms.iter().map(|&b| theorem2_gap(&g, &x, &a, b)).collect::<Result<Vec<f64>>>()
    });
    let mut per_b = vec![Vec::with_capacity(seeds.len()); terms.len()];
    let mut rows = Vec::with_capacity(seeds.len() * terms.len());
    for (&seed, r) in seeds.iter().zip(results) {
        for (i, gap) in r?.into_iter().enumerate() {
            per_b[i].push(gap);
            rows.push(AnalysisRow {
                suite: "theorem2",
                trial_seed: seed,
                depth: Some(2),
                b: Some(terms[i]),
                gap: Some(gap),
                energy: None,
                color_count: None,
            });
        }
    }
    let median_gaps: Vec<f64> = per_b.iter().map(|g| median(g)).collect();
    let non_increasing = median_gaps.windows(2).all(|w| w[1] <= w[0]);
    let ratio = median_gaps[median_gaps.len() - 1] / median_gaps[0];
    Ok(Theorem2Summary {
        trials: seeds.len(),
        terms: terms.to_vec(),
        median_gaps,
        non_increasing,
        ratio,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem3Summary {
    pub trials: usize,
    pub passed_trials: usize,
    /// Trials in which some deeper prefix strictly gained colours.
    pub strict_gains: usize,
    #[serde(skip)]
    pub rows: Vec<AnalysisRow>,
}

impl Theorem3Summary {
    pub fn passed(&self) -> bool {
        self.passed_trials == self.trials
    }
}

/// Memory-WL colour-count chains on random attention hierarchies.
pub fn run_theorem3(cfg: &HarnessConfig, max_depth: usize) -> Result<Theorem3Summary> {
    if max_depth == 0 {
        return Err(Error::config("depth", "must be positive"));
    }
    let seeds = cfg.trial_seeds()?;
    let results = cfg.execution.map(&seeds, |&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let n = rng.random_range(2..=cfg.max_nodes);
        let depth = rng.random_range(1..=max_depth);
        let g = random_graph(n, rng.random_range(0.05..0.6), 1e-3, &mut rng)?;
        let x = Tensor::uniform(&[n, 4], 1.0, &mut rng);
        let params = AttentionParams::random(4, 2, &mut rng)?;
        let coarsening = Coarsening::Attention {
            params: &params,
            features: &x,
            tau: DEFAULT_TAU,
        };
        let h = Hierarchy::build(g, depth, &coarsening)?;
        memory_wl(&h, depth, &mut ColorRegistry::new())
    });
    let mut summary = Theorem3Summary {
        trials: seeds.len(),
        passed_trials: 0,
        strict_gains: 0,
        rows: Vec::new(),
    };
    for (&seed, r) in seeds.iter().zip(results) {
        let chain = r?;
        summary.passed_trials += usize::from(theorem3_check(&chain));
        summary.strict_gains += usize::from(chain.windows(2).any(|w| w[1].num_colors > w[0].num_colors));
        for c in &chain {
            summary.rows.push(AnalysisRow {
                suite: "theorem3",
                trial_seed: seed,
                depth: Some(c.depth_tag),
                b: None,
                gap: None,
                energy: None,
                color_count: Some(c.num_colors),
            });
        }
    }
    Ok(summary)
}

/// Whether memory colourings tell the 6-cycle from two triangles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairSeparation {
    /// Separation outcome per prefix depth, starting at 1.
    pub separated: Vec<bool>,
    pub abstract_sizes: [usize; 2],
}

fn unit_cycle(n: usize, offset: usize) -> Vec<(usize, usize, f64)> {
    (0..n).map(|i| (offset + i, offset + (i + 1) % n, 1.0)).collect()
}

/// Builds both two-level hierarchies with unit weights and summed
/// inter-clique topology, then compares their memory colourings under one
/// joint refinement.
pub fn cycle_pair_separation() -> Result<PairSeparation> {
    let c6 = SpatioTemporalGraph::from_edges(6, &unit_cycle(6, 0))?;
    let mut two = unit_cycle(3, 0);
    two.extend(unit_cycle(3, 3));
    let c3c3 = SpatioTemporalGraph::from_edges(6, &two)?;
    let a = Hierarchy::build(c6, 2, &Coarsening::InterCliqueSum)?;
    let b = Hierarchy::build(c3c3, 2, &Coarsening::InterCliqueSum)?;
    let union = a.disjoint_union(&b)?;
    let chain = memory_wl(&union, 2, &mut ColorRegistry::new())?;
    let separated = chain
        .iter()
        .map(|c| c.histogram(0..6) != c.histogram(6..12))
        .collect();
    Ok(PairSeparation {
        separated,
        abstract_sizes: [a.graphs[1].num_nodes(), b.graphs[1].num_nodes()],
    })
}
