//! Dirichlet-energy instrumentation, the randomized theorem harnesses and
//! forecast metrics.

mod energy;
mod harness;
mod metrics;
mod theorems;
mod wl;

pub use energy::{clique_energy, dirichlet_energy, energy_with_degrees, DirichletReport, LevelEnergy};
pub use metrics::{mae, rmse, ErrorAccumulator};
pub use theorems::{
    abstract_graph, pool_sum, theorem1_check, theorem2_gap, theorem2_gap_with, AbstractDegree, CliqueComparison,
    Theorem1Report, TransitionSpec,
};
pub use wl::{memory_wl, random_graph, theorem3_check, wl_refine, Coarsening, ColorRegistry, Hierarchy, WLColorMap};
pub use harness::{
    cycle_pair_separation, median, random_instance, run_theorem1, run_theorem2, run_theorem3, write_rows, AnalysisRow,
    HarnessConfig, PairSeparation, Theorem1Summary, Theorem2Summary, Theorem3Summary, ANALYSIS_COLUMNS,
};
