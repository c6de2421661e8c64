use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::graph::{attention_on_tape, graclus, head_dim, truncation_mask, ClusterAssignment, SpatioTemporalGraph};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Debug)]
struct Linear {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
struct LevelIds {
    queries: Vec<ParamId>,
    keys: Vec<ParamId>,
    block: Linear,
}

#[derive(Clone, Debug)]
struct TransitionIds {
    embed_mlp: Vec<Linear>,
    embed_shift: Option<ParamId>,
    lift_mlp: Vec<Linear>,
    lift_shift: Option<ParamId>,
    encoder: Option<ParamId>,
}

#[derive(Clone, Debug)]
struct Ids {
    input: Linear,
    levels: Vec<LevelIds>,
    transitions: Vec<TransitionIds>,
    readout: [Linear; 2],
}

/// Discrete choices of one forward pass: the truncation mask of every level
/// graph and the clustering between consecutive levels.
///
/// Replaying a pass with a fixed topology makes the model a smooth function
/// of its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub masks: Vec<Tensor>,
    pub assignments: Vec<ClusterAssignment>,
}

impl Topology {
    /// Node count per level.
    pub fn widths(&self) -> Vec<usize> {
        self.masks.iter().map(Tensor::rows).collect()
    }
}

/// Tape handles and graph of one level after a forward pass.
#[derive(Clone, Debug)]
pub struct LevelPass {
    pub h: Var,
    pub u: Var,
    pub y: Var,
    /// Truncated attention weights used for message passing.
    pub adjacency: Var,
    pub graph: SpatioTemporalGraph,
}

/// Result of [`HiGFlowModel::forward`].
#[derive(Clone, Debug)]
pub struct Pass {
    pub prediction: Var,
    pub levels: Vec<LevelPass>,
    pub topology: Topology,
}

/// The hierarchical forecaster: input embedding, `K` attention graphs linked
/// by embedding and lifting maps, a memory block per level and a readout.
#[derive(Clone, Debug)]
pub struct HiGFlowModel {
    config: ModelConfig,
    params: ParamStore,
    ids: Ids,
}

fn add_linear(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, shape: [usize; 2], bias: [usize; 2], fan_in: usize) -> Linear {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Linear {
        weight: store.add(format!("{name}.w"), Tensor::uniform(&shape, bound, rng)),
        bias: store.add(format!("{name}.b"), Tensor::uniform(&bias, bound, rng)),
    }
}

fn index_column(n: usize) -> Tensor {
    Tensor::matrix(n, 1, (1..=n).map(|i| i as f64).collect()).expect("column shape")
}

impl HiGFlowModel {
    /// Allocates parameters for `config`, seeded by `seed`.
    ///
    /// Spatial maps act on level widths that depend on the clustering, so
    /// they are allocated at the level-1 width and their leading block is
    /// used.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (d, nmax) = (config.hidden, config.base_nodes());
        let hd = head_dim(d, config.heads)?;
        let ab = config.ablation;

        let input = add_linear(&mut store, &mut rng, "input", [1, d], [1, d], 1);
        let mut levels = Vec::with_capacity(config.depth);
        for level in 1..=config.depth {
            let bound = 1.0 / (d as f64).sqrt();
            let mut queries = Vec::new();
            let mut keys = Vec::new();
            for h in 0..config.heads {
                queries.push(store.add(format!("level{level}.attn.q{h}"), Tensor::uniform(&[d, hd], bound, &mut rng)));
                keys.push(store.add(format!("level{level}.attn.k{h}"), Tensor::uniform(&[d, hd], bound, &mut rng)));
            }
            let block = add_linear(&mut store, &mut rng, &format!("level{level}.block"), [4 * d, d], [1, d], 4 * d);
            levels.push(LevelIds { queries, keys, block });
        }

        let spatial = |store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str| -> Vec<Linear> {
            (0..config.transition_depth)
                .map(|l| add_linear(store, rng, &format!("{prefix}.mlp{l}"), [nmax, nmax], [nmax, 1], nmax))
                .collect()
        };
        let square = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: String| {
            store.add(name, Tensor::uniform(&[nmax, nmax], 1.0 / (nmax as f64).sqrt(), rng))
        };
        let mut transitions = Vec::new();
        for t in 1..config.depth {
            let embed_mlp = spatial(&mut store, &mut rng, &format!("embed{t}"));
            let embed_shift = ab.embed_domain_shift.then(|| square(&mut store, &mut rng, format!("embed{t}.shift")));
            let lift_mlp = spatial(&mut store, &mut rng, &format!("lift{t}"));
            let lift_shift = ab.lift_domain_shift.then(|| square(&mut store, &mut rng, format!("lift{t}.shift")));
            let encoder = ab.naive_encoding.then(|| square(&mut store, &mut rng, format!("lift{t}.encoder")));
            transitions.push(TransitionIds {
                embed_mlp,
                embed_shift,
                lift_mlp,
                lift_shift,
                encoder,
            });
        }

        let flat = config.t_in * d;
        let r = config.readout_hidden;
        let readout = [
            add_linear(&mut store, &mut rng, "readout.hidden", [flat, r], [1, r], flat),
            add_linear(&mut store, &mut rng, "readout.out", [r, config.t_out], [1, config.t_out], r),
        ];
        Ok(HiGFlowModel {
            config,
            params: store,
            ids: Ids {
                input,
                levels,
                transitions,
                readout,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces every parameter from a named list; names and shapes must match.
    pub fn load_params(&mut self, named: &[(String, Tensor)]) -> Result<()> {
        self.params.load_from(named)
    }

    /// Parameters owned by the lifting side (MLP, shift, encoder) of every transition.
    pub fn lifting_param_names(&self) -> Vec<String> {
        self.params
            .iter()
            .filter(|(_, name, _)| name.starts_with("lift"))
            .map(|(_, name, _)| name.to_string())
            .collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = [self.config.num_vars, self.config.t_in];
        if x.shape() != want {
            return Err(Error::shape("forward", &want, x.shape()));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("input window contains NaN or infinity".into()));
        }
        Ok(())
    }

    fn linear_spatial(&self, tape: &mut Tape, x: Var, layers: &[Linear], n: usize) -> Result<Var> {
        let mut z = x;
        for (l, layer) in layers.iter().enumerate() {
            let w = tape.param(&self.params, layer.weight);
            let w = tape.block(w, n, n)?;
            let b = tape.param(&self.params, layer.bias);
            let b = tape.block(b, n, 1)?;
            z = tape.matmul(w, z)?;
            z = tape.add_col_broadcast(z, b)?;
            if l + 1 < layers.len() {
                z = tape.relu(z);
            }
        }
        Ok(z)
    }

    /// Per-node shift `Wᵀ v` with `v = (1, …, n)`, added to every column.
    fn domain_shift(&self, tape: &mut Tape, x: Var, shift: Option<ParamId>, n: usize) -> Result<Var> {
        let Some(id) = shift else { return Ok(x) };
        let w = tape.param(&self.params, id);
        let w = tape.block(w, n, n)?;
        let wt = tape.transpose(w);
        let v = tape.constant(index_column(n));
        let s = tape.matmul(wt, v)?;
        tape.add_col_broadcast(x, s)
    }

    fn transition(&self, index: usize) -> Result<&TransitionIds> {
        self.ids.transitions.get(index).ok_or(Error::Index {
            index,
            len: self.ids.transitions.len(),
        })
    }

    /// `tanh(x_node · w + b)` for every scalar of the window; node `v·T_in + t`.
    pub fn embed_series_on_tape(&self, tape: &mut Tape, x: &Tensor) -> Result<Var> {
        self.check_input(x)?;
        let col = tape.constant(x.reshape(&[self.config.base_nodes(), 1])?);
        let w = tape.param(&self.params, self.ids.input.weight);
        let b = tape.param(&self.params, self.ids.input.bias);
        let z = tape.matmul(col, w)?;
        let z = tape.add_row_broadcast(z, b)?;
        Ok(tape.tanh(z))
    }

    /// Truncated attention adjacency of `level` (0-based) over features `h`.
    pub fn attention_on_tape(&self, tape: &mut Tape, level: usize, h: Var) -> Result<Var> {
        let ids = self.ids.levels.get(level).ok_or(Error::Index {
            index: level,
            len: self.config.depth,
        })?;
        let q: Vec<Var> = ids.queries.iter().map(|&id| tape.param(&self.params, id)).collect();
        let k: Vec<Var> = ids.keys.iter().map(|&id| tape.param(&self.params, id)).collect();
        attention_on_tape(tape, h, &q, &k)
    }

    /// Sums clique members, adds the optional shift, then applies the embedding MLP.
    pub fn embed_level_on_tape(&self, tape: &mut Tape, transition: usize, h: Var, assignment: &ClusterAssignment) -> Result<Var> {
        let ids = self.transition(transition)?;
        if tape.value(h).rows() != assignment.num_nodes() {
            return Err(Error::shape("embed_level", tape.value(h).shape(), &[assignment.num_nodes()]));
        }
        let n = assignment.num_clusters();
        let pt = tape.constant(assignment.membership_matrix().transpose());
        let pooled = tape.matmul(pt, h)?;
        let shifted = self.domain_shift(tape, pooled, ids.embed_shift, n)?;
        self.linear_spatial(tape, shifted, &ids.embed_mlp, n)
    }

    /// Broadcasts each clique's memory row to its members, adds the optional
    /// shift, applies the lifting MLP and adds the optional dense encoding.
    pub fn lift_level_on_tape(&self, tape: &mut Tape, transition: usize, y_coarse: Var, assignment: &ClusterAssignment) -> Result<Var> {
        let ids = self.transition(transition)?;
        if tape.value(y_coarse).rows() != assignment.num_clusters() {
            return Err(Error::shape("lift_level", tape.value(y_coarse).shape(), &[assignment.num_clusters()]));
        }
        let (fine, coarse) = (assignment.num_nodes(), assignment.num_clusters());
        let p = tape.constant(assignment.membership_matrix());
        let broadcast = tape.matmul(p, y_coarse)?;
        let shifted = self.domain_shift(tape, broadcast, ids.lift_shift, fine)?;
        let lifted = self.linear_spatial(tape, shifted, &ids.lift_mlp, fine)?;
        match ids.encoder {
            None => Ok(lifted),
            Some(id) => {
                let l = tape.param(&self.params, id);
                let l = tape.block(l, fine, coarse)?;
                let e = tape.matmul(l, y_coarse)?;
                tape.add(lifted, e)
            }
        }
    }

    /// One round of weighted-mean 1-hop aggregation over `[h ∥ u]`.
    pub fn memory_update_on_tape(&self, tape: &mut Tape, level: usize, h: Var, u: Var, adjacency: Var) -> Result<Var> {
        let ids = self.ids.levels.get(level).ok_or(Error::Index {
            index: level,
            len: self.config.depth,
        })?;
        if tape.value(h).shape() != tape.value(u).shape() {
            return Err(Error::shape("memory_update", tape.value(h).shape(), tape.value(u).shape()));
        }
        let n = tape.value(h).rows();
        if tape.value(adjacency).shape() != [n, n] {
            return Err(Error::shape("memory_update", &[n, n], tape.value(adjacency).shape()));
        }
        let z = tape.concat_cols(h, u)?;
        let mean = tape.row_normalize(adjacency);
        let agg = tape.matmul(mean, z)?;
        let both = tape.concat_cols(z, agg)?;
        let w = tape.param(&self.params, ids.block.weight);
        let b = tape.param(&self.params, ids.block.bias);
        let pre = tape.matmul(both, w)?;
        let pre = tape.add_row_broadcast(pre, b)?;
        Ok(tape.tanh(pre))
    }

    /// Gathers each variable's `T_in` node rows and maps them to `T_out` values.
    pub fn readout_on_tape(&self, tape: &mut Tape, y: Var) -> Result<Var> {
        let c = &self.config;
        let flat = tape.reshape(y, &[c.num_vars, c.t_in * c.hidden])?;
        let [hidden, out] = &self.ids.readout;
        let w1 = tape.param(&self.params, hidden.weight);
        let b1 = tape.param(&self.params, hidden.bias);
        let z = tape.matmul(flat, w1)?;
        let z = tape.add_row_broadcast(z, b1)?;
        let z = tape.relu(z);
        let w2 = tape.param(&self.params, out.weight);
        let b2 = tape.param(&self.params, out.bias);
        let z = tape.matmul(z, w2)?;
        tape.add_row_broadcast(z, b2)
    }

    /// Full downsweep/upsweep on `tape`.
    ///
    /// With `topology` the truncation masks and clusterings are replayed
    /// instead of recomputed.
    pub fn forward(&self, tape: &mut Tape, x: &Tensor, topology: Option<&Topology>) -> Result<Pass> {
        let k = self.config.depth;
        if let Some(t) = topology {
            if t.masks.len() != k || t.assignments.len() + 1 != k {
                return Err(Error::Structure(format!(
                    "topology has {} masks and {} clusterings for depth {k}",
                    t.masks.len(),
                    t.assignments.len()
                )));
            }
        }
        let mut hs = vec![self.embed_series_on_tape(tape, x)?];
        let mut adjacencies = Vec::with_capacity(k);
        let mut graphs = Vec::with_capacity(k);
        let mut masks = Vec::with_capacity(k);
        let mut assignments = Vec::with_capacity(k.saturating_sub(1));
        for level in 0..k {
            let h = hs[level];
            let n = tape.value(h).rows();
            if n == 0 {
                return Err(Error::Structure(format!("level {} has no nodes", level + 1)));
            }
            let attn = self.attention_on_tape(tape, level, h)?;
            let mask = match topology {
                Some(t) if t.masks[level].shape() != [n, n] => {
                    return Err(Error::Structure(format!(
                        "frozen mask for level {} is {:?}, level has {n} nodes",
                        level + 1,
                        t.masks[level].shape()
                    )))
                }
                Some(t) => t.masks[level].clone(),
                None => truncation_mask(tape.value(attn), self.config.tau)?,
            };
            let adjacency = tape.mask(attn, mask.clone())?;
            let graph = SpatioTemporalGraph::from_weights(tape.value(adjacency).clone())?;
            if level + 1 < k {
                let assignment = match topology {
                    Some(t) => t.assignments[level].clone(),
                    None => graclus(&graph),
                };
                hs.push(self.embed_level_on_tape(tape, level, h, &assignment)?);
                assignments.push(assignment);
            }
            masks.push(mask);
            adjacencies.push(adjacency);
            graphs.push(graph);
        }

        let mut us = vec![None; k];
        let mut ys = vec![None; k];
        let deepest = tape.constant(Tensor::zeros(tape.value(hs[k - 1]).shape()));
        us[k - 1] = Some(deepest);
        ys[k - 1] = Some(self.memory_update_on_tape(tape, k - 1, hs[k - 1], deepest, adjacencies[k - 1])?);
        for level in (0..k - 1).rev() {
            let coarse = ys[level + 1].expect("set on previous iteration");
            let u = self.lift_level_on_tape(tape, level, coarse, &assignments[level])?;
            us[level] = Some(u);
            ys[level] = Some(self.memory_update_on_tape(tape, level, hs[level], u, adjacencies[level])?);
        }
        let prediction = self.readout_on_tape(tape, ys[0].expect("level 1 computed"))?;

        let levels = graphs
            .into_iter()
            .enumerate()
            .map(|(i, graph)| LevelPass {
                h: hs[i],
                u: us[i].expect("every level lifted"),
                y: ys[i].expect("every level updated"),
                adjacency: adjacencies[i],
                graph,
            })
            .collect();
        Ok(Pass {
            prediction,
            levels,
            topology: Topology { masks, assignments },
        })
    }

    /// Forecast for one window, without gradient recording.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        let pass = self.forward(&mut tape, x, None)?;
        Ok(tape.value(pass.prediction).clone())
    }

    /// Level-1 features and graph for a window.
    pub fn embed_series(&self, x: &Tensor) -> Result<(Tensor, SpatioTemporalGraph)> {
        let mut tape = Tape::no_grad();
        let h = self.embed_series_on_tape(&mut tape, x)?;
        let h_val = tape.value(h).clone();
        let graph = self.level_graph(0, &h_val)?;
        Ok((h_val, graph))
    }

    /// Attention graph of `level` (0-based) over `features`, truncated at `τ`.
    pub fn level_graph(&self, level: usize, features: &Tensor) -> Result<SpatioTemporalGraph> {
        let mut tape = Tape::no_grad();
        let h = tape.constant(features.clone());
        let attn = self.attention_on_tape(&mut tape, level, h)?;
        crate::graph::truncate(tape.value(attn), self.config.tau)
    }

    /// Embedding map from level `transition` to `transition + 1` (0-based).
    pub fn embed_level(&self, transition: usize, h: &Tensor, assignment: &ClusterAssignment) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        let hv = tape.constant(h.clone());
        let out = self.embed_level_on_tape(&mut tape, transition, hv, assignment)?;
        Ok(tape.value(out).clone())
    }

    /// Lifting map from level `transition + 1` back to `transition` (0-based).
    pub fn lift_level(&self, transition: usize, y_coarse: &Tensor, assignment: &ClusterAssignment) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        let y = tape.constant(y_coarse.clone());
        let out = self.lift_level_on_tape(&mut tape, transition, y, assignment)?;
        Ok(tape.value(out).clone())
    }

    /// Memory block of `level` (0-based) over `graph`'s weights.
    pub fn memory_update(&self, level: usize, h: &Tensor, u: &Tensor, graph: &SpatioTemporalGraph) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        let hv = tape.constant(h.clone());
        let uv = tape.constant(u.clone());
        let a = tape.constant(graph.weights().clone());
        let out = self.memory_update_on_tape(&mut tape, level, hv, uv, a)?;
        Ok(tape.value(out).clone())
    }

    pub fn readout(&self, y: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        let yv = tape.constant(y.clone());
        let out = self.readout_on_tape(&mut tape, yv)?;
        Ok(tape.value(out).clone())
    }
}
