use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{check_tau, head_dim, DEFAULT_TAU};

/// Switches for the optional transition components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Add the learned per-node shift before the embedding MLP.
    pub embed_domain_shift: bool,
    /// Add the learned per-node shift before the lifting MLP.
    pub lift_domain_shift: bool,
    /// Add the dense coarse-to-fine encoder to the lifted signal.
    pub naive_encoding: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            embed_domain_shift: true,
            lift_domain_shift: true,
            naive_encoding: true,
        }
    }
}

/// Architecture of a [`HiGFlowModel`](super::HiGFlowModel).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_vars: usize,
    pub t_in: usize,
    pub t_out: usize,
    /// Number of hierarchy levels `K ≥ 1`.
    pub depth: usize,
    /// Feature width `D`.
    pub hidden: usize,
    pub heads: usize,
    pub tau: f64,
    /// Layers in each transition MLP (1 = linear).
    pub transition_depth: usize,
    pub readout_hidden: usize,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_vars: 8,
            t_in: 3,
            t_out: 12,
            depth: 2,
            hidden: 16,
            heads: 4,
            tau: DEFAULT_TAU,
            transition_depth: 2,
            readout_hidden: 32,
            ablation: Ablation::default(),
        }
    }
}

impl ModelConfig {
    /// Node count of the level-1 graph, `N · T_in`.
    pub fn base_nodes(&self) -> usize {
        self.num_vars * self.t_in
    }

    pub fn validate(&self) -> Result<()> {
        for (key, value) in [
            ("num_vars", self.num_vars),
            ("t_in", self.t_in),
            ("t_out", self.t_out),
            ("depth", self.depth),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("readout_hidden", self.readout_hidden),
        ] {
            if value == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(1..=3).contains(&self.transition_depth) {
            return Err(Error::config(
                "transition_depth",
                format!("{} outside the legal range 1..=3", self.transition_depth),
            ));
        }
        head_dim(self.hidden, self.heads)?;
        check_tau(self.tau)
    }
}
