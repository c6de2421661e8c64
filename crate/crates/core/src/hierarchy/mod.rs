//! The hierarchical forecaster and its training loop.
//!
//! Level 1 is the hypervariate graph over `(variable, timestep)` nodes.
//! Each deeper level clusters the previous graph, pools features through an
//! embedding map and recomputes its topology by attention. The upsweep
//! lifts memory back to finer levels, and the level-1 memory feeds the
//! readout.

mod checkpoint;
mod config;
mod model;
mod probe;
mod train;

pub use checkpoint::Checkpoint;
pub use config::{Ablation, ModelConfig};
pub use model::{HiGFlowModel, LevelPass, Pass, Topology};
pub use probe::{probe_window, smoothness_probe};
pub use train::{evaluate, last_value_baseline, EpochMetrics, FitOutcome, TrainConfig, Trainer};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::WindowSample;
    use crate::graph::{ClusterAssignment, DegreeMode, SpatioTemporalGraph};
    use crate::numerics::{Tape, Tensor};
    use crate::parallel::Execution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(depth: usize) -> ModelConfig {
        ModelConfig {
            num_vars: 4,
            t_in: 3,
            t_out: 5,
            depth,
            hidden: 8,
            heads: 2,
            transition_depth: 2,
            readout_hidden: 6,
            ..ModelConfig::default()
        }
    }

    fn window(seed: u64, n: usize, t: usize) -> Tensor {
        Tensor::uniform(&[n, t], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn set(model: &mut HiGFlowModel, name: &str, value: Tensor) {
        let id = model.params().find(name).unwrap_or_else(|| panic!("no parameter {name}"));
        *model.params_mut().get_mut(id) = value;
    }

    /// Transition MLPs of `model` set to identity with zero bias.
    fn identity_transitions(model: &mut HiGFlowModel) {
        let nmax = model.config().base_nodes();
        let names: Vec<String> = model
            .params()
            .iter()
            .map(|(_, n, _)| n.to_string())
            .filter(|n| n.contains(".mlp"))
            .collect();
        for name in names {
            let v = if name.ends_with(".w") { Tensor::identity(nmax) } else { Tensor::zeros(&[nmax, 1]) };
            set(model, &name, v);
        }
    }

    #[test]
    fn config_validation_names_keys() {
        let bad = ModelConfig { heads: 3, ..ModelConfig::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("heads"));
        let bad = ModelConfig { tau: 1.5, ..ModelConfig::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("tau"));
        let bad = ModelConfig { transition_depth: 4, ..ModelConfig::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("transition_depth"));
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn ablated_components_are_not_allocated() {
        let full = HiGFlowModel::new(small(2), 0).unwrap();
        let cfg = ModelConfig {
            ablation: Ablation { embed_domain_shift: false, lift_domain_shift: false, naive_encoding: false },
            ..small(2)
        };
        let bare = HiGFlowModel::new(cfg, 0).unwrap();
        assert_eq!(full.params().len(), bare.params().len() + 3);
        for name in ["embed1.shift", "lift1.shift", "lift1.encoder"] {
            assert!(full.params().find(name).is_some());
            assert!(bare.params().find(name).is_none());
        }
    }

    #[test]
    fn embed_series_examples() {
        let mut m = HiGFlowModel::new(small(1), 3).unwrap();
        set(&mut m, "input.b", Tensor::zeros(&[1, 8]));
        let (h, g) = m.embed_series(&Tensor::zeros(&[4, 3])).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
        assert_eq!(g.num_nodes(), 12);

        let m2 = HiGFlowModel::new(ModelConfig { num_vars: 2, ..small(1) }, 3).unwrap();
        let x = window(1, 2, 3);
        let (h, _) = m2.embed_series(&x).unwrap();
        assert_eq!(h.shape(), &[6, 8]);
        // node v·T_in + t holds tanh(x[v,t]·w + b)
        let w = m2.params().get(m2.params().find("input.w").unwrap());
        let b = m2.params().get(m2.params().find("input.b").unwrap());
        for v in 0..2 {
            for t in 0..3 {
                for c in 0..8 {
                    let want = (x.get(v, t) * w.get(0, c) + b.get(0, c)).tanh();
                    assert_eq!(h.get(v * 3 + t, c), want);
                }
            }
        }
        let again = HiGFlowModel::new(ModelConfig { num_vars: 2, ..small(1) }, 3).unwrap();
        assert_eq!(again.embed_series(&x).unwrap().0.data(), h.data());
    }

    #[test]
    fn embed_level_examples() {
        let cfg = ModelConfig {
            transition_depth: 1,
            ablation: Ablation { embed_domain_shift: false, ..Ablation::default() },
            ..small(2)
        };
        let mut m = HiGFlowModel::new(cfg, 1).unwrap();
        identity_transitions(&mut m);
        let h = window(2, 12, 8);
        let same = m.embed_level(0, &h, &ClusterAssignment::singletons(12)).unwrap();
        assert_eq!(same.data(), h.data());

        let ones = Tensor::filled(&[2, 8], 1.0);
        let pair = ClusterAssignment::new(vec![0, 0]).unwrap();
        let pooled = m.embed_level(0, &ones, &pair).unwrap();
        assert_eq!(pooled.data(), Tensor::filled(&[1, 8], 2.0).data());
    }

    #[test]
    fn embed_level_pooling_matches_loop() {
        let cfg = ModelConfig {
            transition_depth: 1,
            ablation: Ablation { embed_domain_shift: false, ..Ablation::default() },
            ..small(2)
        };
        let mut m = HiGFlowModel::new(cfg, 1).unwrap();
        identity_transitions(&mut m);
        let h = window(5, 12, 8);
        let a = ClusterAssignment::new(vec![0, 1, 0, 2, 3, 3, 1, 4, 5, 6, 7, 2]).unwrap();
        let got = m.embed_level(0, &h, &a).unwrap();
        for j in 0..a.num_clusters() {
            for c in 0..8 {
                let want: f64 = (0..12).filter(|&q| a.cluster_of(q) == j).map(|q| h.get(q, c)).sum();
                assert!((got.get(j, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embed_shift_adds_one_scalar_per_node() {
        let cfg = ModelConfig { transition_depth: 1, ..small(2) };
        let mut m = HiGFlowModel::new(cfg, 4).unwrap();
        identity_transitions(&mut m);
        let h = window(6, 12, 8);
        let a = ClusterAssignment::new(vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]).unwrap();
        let got = m.embed_level(0, &h, &a).unwrap();
        let w = m.params().get(m.params().find("embed1.shift").unwrap());
        for j in 0..6 {
            let shift: f64 = (0..6).map(|k| w.get(k, j) * (k + 1) as f64).sum();
            for c in 0..8 {
                let want = h.get(2 * j, c) + h.get(2 * j + 1, c) + shift;
                assert!((got.get(j, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lift_level_examples() {
        let off = Ablation { embed_domain_shift: false, lift_domain_shift: false, naive_encoding: false };
        let cfg = ModelConfig { transition_depth: 1, ablation: off, ..small(2) };
        let mut m = HiGFlowModel::new(cfg, 2).unwrap();
        identity_transitions(&mut m);
        let y = window(3, 5, 8);
        let a = ClusterAssignment::new(vec![0, 1, 1, 2, 3, 3, 4, 0, 2, 4, 1, 3]).unwrap();
        let u = m.lift_level(0, &y, &a).unwrap();
        for q in 0..12 {
            assert_eq!(u.row(q), y.row(a.cluster_of(q)));
        }
        let one = ClusterAssignment::new(vec![0; 12]).unwrap();
        let u = m.lift_level(0, &window(4, 1, 8), &one).unwrap();
        for q in 1..12 {
            assert_eq!(u.row(q), u.row(0));
        }
    }

    #[test]
    fn lift_level_with_encoder_matches_loop() {
        let mut m = HiGFlowModel::new(ModelConfig { transition_depth: 1, ..small(2) }, 8).unwrap();
        identity_transitions(&mut m);
        let y = window(9, 4, 8);
        let a = ClusterAssignment::new(vec![0, 0, 1, 1, 2, 2, 3, 3, 1, 2, 3, 0]).unwrap();
        let got = m.lift_level(0, &y, &a).unwrap();
        let wl = m.params().get(m.params().find("lift1.shift").unwrap());
        let enc = m.params().get(m.params().find("lift1.encoder").unwrap());
        for q in 0..12 {
            let shift: f64 = (0..12).map(|k| wl.get(k, q) * (k + 1) as f64).sum();
            for c in 0..8 {
                let e: f64 = (0..4).map(|j| enc.get(q, j) * y.get(j, c)).sum();
                let want = y.get(a.cluster_of(q), c) + shift + e;
                assert!((got.get(q, c) - want).abs() < 1e-12);
            }
        }
    }

    /// `tanh([z ∥ mean_w(z)] W + b)` evaluated with loops.
    fn memory_oracle(m: &HiGFlowModel, h: &Tensor, u: &Tensor, w: &Tensor) -> Tensor {
        let (n, d) = (h.rows(), h.cols());
        let bw = m.params().get(m.params().find("level1.block.w").unwrap());
        let bb = m.params().get(m.params().find("level1.block.b").unwrap());
        let z = |r: usize, c: usize| if c < d { h.get(r, c) } else { u.get(r, c - d) };
        let mut out = Tensor::zeros(&[n, d]);
        for r in 0..n {
            let total: f64 = (0..n).map(|s| w.get(r, s)).sum();
            let mut cat = vec![0.0; 4 * d];
            for c in 0..2 * d {
                cat[c] = z(r, c);
                if total > 0.0 {
                    cat[2 * d + c] = (0..n).map(|s| w.get(r, s) * z(s, c)).sum::<f64>() / total;
                }
            }
            for o in 0..d {
                let pre: f64 = (0..4 * d).map(|i| cat[i] * bw.get(i, o)).sum::<f64>() + bb.get(0, o);
                out.set(r, o, pre.tanh());
            }
        }
        out
    }

    #[test]
    fn memory_update_examples() {
        let m = HiGFlowModel::new(small(1), 6).unwrap();
        let (h, u) = (window(1, 3, 8), window(2, 3, 8));
        let edgeless = SpatioTemporalGraph::edgeless(3);
        let y = m.memory_update(0, &h, &u, &edgeless).unwrap();
        let solo = m.memory_update(0, &window(1, 1, 8), &window(2, 1, 8), &SpatioTemporalGraph::edgeless(1)).unwrap();
        assert_eq!(y.row(0), solo.row(0));

        let path = SpatioTemporalGraph::from_edges(3, &[(0, 1, 0.6), (1, 2, 0.3)]).unwrap();
        let y = m.memory_update(0, &h, &u, &path).unwrap();
        let want = memory_oracle(&m, &h, &u, path.weights());
        for (a, b) in y.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-10);
        }

        // endpoints of a symmetric path with equal features are interchangeable
        let sym = SpatioTemporalGraph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap();
        let mut hs = h.clone();
        let mut us = u.clone();
        for c in 0..8 {
            hs.set(2, c, hs.get(0, c));
            us.set(2, c, us.get(0, c));
        }
        let y = m.memory_update(0, &hs, &us, &sym).unwrap();
        assert_eq!(y.row(0), y.row(2));
        assert!(m.memory_update(0, &h, &u, &SpatioTemporalGraph::edgeless(2)).is_err());
    }

    #[test]
    fn readout_examples() {
        let mut m = HiGFlowModel::new(small(1), 7).unwrap();
        set(&mut m, "readout.hidden.b", Tensor::zeros(&[1, 6]));
        set(&mut m, "readout.out.b", Tensor::zeros(&[1, 5]));
        assert!(m.readout(&Tensor::zeros(&[12, 8])).unwrap().data().iter().all(|&v| v == 0.0));

        let m = HiGFlowModel::new(small(1), 7).unwrap();
        let mut y = window(3, 12, 8);
        for t in 0..3 {
            for c in 0..8 {
                y.set(3 + t, c, y.get(t, c));
            }
        }
        let out = m.readout(&y).unwrap();
        assert_eq!(out.shape(), &[4, 5]);
        assert_eq!(out.row(0), out.row(1));

        let p = |name: &str| m.params().get(m.params().find(name).unwrap()).clone();
        let (w1, b1, w2, b2) = (p("readout.hidden.w"), p("readout.hidden.b"), p("readout.out.w"), p("readout.out.b"));
        for v in 0..4 {
            let flat: Vec<f64> = (0..3).flat_map(|t| y.row(v * 3 + t).to_vec()).collect();
            let hidden: Vec<f64> = (0..6)
                .map(|j| ((0..24).map(|i| flat[i] * w1.get(i, j)).sum::<f64>() + b1.get(0, j)).max(0.0))
                .collect();
            for o in 0..5 {
                let want = (0..6).map(|j| hidden[j] * w2.get(j, o)).sum::<f64>() + b2.get(0, o);
                assert!((out.get(v, o) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depth_one_reduces_to_single_memory_block() {
        let m = HiGFlowModel::new(small(1), 11).unwrap();
        let x = window(12, 4, 3);
        let (h, g) = m.embed_series(&x).unwrap();
        let y = m.memory_update(0, &h, &Tensor::zeros(h.shape()), &g).unwrap();
        assert_eq!(m.readout(&y).unwrap().data(), m.predict(&x).unwrap().data());
        assert!(m.lifting_param_names().is_empty());
    }

    #[test]
    fn forward_equals_composition_at_depth_two() {
        let m = HiGFlowModel::new(small(2), 13).unwrap();
        let x = window(14, 4, 3);
        let (h1, g1) = m.embed_series(&x).unwrap();
        let a1 = crate::graph::graclus(&g1);
        let h2 = m.embed_level(0, &h1, &a1).unwrap();
        let g2 = m.level_graph(1, &h2).unwrap();
        let y2 = m.memory_update(1, &h2, &Tensor::zeros(h2.shape()), &g2).unwrap();
        let u1 = m.lift_level(0, &y2, &a1).unwrap();
        let y1 = m.memory_update(0, &h1, &u1, &g1).unwrap();
        let want = m.readout(&y1).unwrap();
        let got = m.predict(&x).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn output_shape_for_every_depth() {
        for k in 1..=4 {
            let m = HiGFlowModel::new(small(k), k as u64).unwrap();
            let mut tape = Tape::no_grad();
            let pass = m.forward(&mut tape, &window(k as u64, 4, 3), None).unwrap();
            assert_eq!(tape.value(pass.prediction).shape(), &[4, 5]);
            assert_eq!(pass.levels.len(), k);
            let widths = pass.topology.widths();
            assert!(widths.windows(2).all(|w| w[1] <= w[0] && 2 * w[1] >= w[0]));
        }
        let m = HiGFlowModel::new(small(2), 0).unwrap();
        assert!(m.predict(&Tensor::zeros(&[3, 3])).is_err());
    }

    #[test]
    fn deepest_memory_ignores_lifting_parameters() {
        let m = HiGFlowModel::new(small(2), 21).unwrap();
        let x = window(22, 4, 3);
        let deepest = |m: &HiGFlowModel| {
            let mut tape = Tape::no_grad();
            let pass = m.forward(&mut tape, &x, None).unwrap();
            tape.value(pass.levels[1].y).clone()
        };
        let base = deepest(&m);
        let mut perturbed = m.clone();
        for name in m.lifting_param_names() {
            let id = perturbed.params().find(&name).unwrap();
            let t = perturbed.params().get(id).map(|v| v + 0.3);
            *perturbed.params_mut().get_mut(id) = t;
        }
        assert_eq!(deepest(&perturbed).data(), base.data());
        assert_ne!(perturbed.predict(&x).unwrap().data(), m.predict(&x).unwrap().data());
    }

    #[test]
    fn depth_one_is_permutation_equivariant() {
        let m = HiGFlowModel::new(small(1), 31).unwrap();
        let x = window(32, 4, 3);
        let perm = [2, 0, 3, 1];
        let mut px = Tensor::zeros(&[4, 3]);
        for (new, &old) in perm.iter().enumerate() {
            for t in 0..3 {
                px.set(new, t, x.get(old, t));
            }
        }
        let (y, py) = (m.predict(&x).unwrap(), m.predict(&px).unwrap());
        for (new, &old) in perm.iter().enumerate() {
            for (a, b) in py.row(new).iter().zip(y.row(old)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn every_active_parameter_gets_a_gradient() {
        for k in 1..=3 {
            let m = HiGFlowModel::new(small(k), 40 + k as u64).unwrap();
            let mut tape = Tape::new();
            let pass = m.forward(&mut tape, &window(50, 4, 3), None).unwrap();
            let target = tape.constant(window(51, 4, 5));
            let loss = tape.mse(pass.prediction, target).unwrap();
            let grads = tape.backward(loss).unwrap().aligned(m.params());
            for ((_, name, _), g) in m.params().iter().zip(&grads) {
                assert!(g.norm() > 0.0, "depth {k}: {name} has zero gradient");
            }
        }
    }

    #[test]
    fn frozen_topology_replays_the_pass() {
        let m = HiGFlowModel::new(small(3), 60).unwrap();
        let x = window(61, 4, 3);
        let mut tape = Tape::no_grad();
        let pass = m.forward(&mut tape, &x, None).unwrap();
        let mut replay = Tape::no_grad();
        let again = m.forward(&mut replay, &x, Some(&pass.topology)).unwrap();
        assert_eq!(replay.value(again.prediction).data(), tape.value(pass.prediction).data());
        let wrong = Topology { masks: pass.topology.masks[..2].to_vec(), assignments: vec![] };
        assert!(m.forward(&mut Tape::no_grad(), &x, Some(&wrong)).is_err());
    }

    #[test]
    fn finite_differences_agree_at_depth_two() {
        let m = HiGFlowModel::new(small(2), 70).unwrap();
        let x = window(71, 4, 3);
        let y = window(72, 4, 5);
        let mut tape = Tape::no_grad();
        let topo = m.forward(&mut tape, &x, None).unwrap().topology;
        let report = crate::numerics::finite_difference_check(
            m.params(),
            |store, tape| {
                let mut local = m.clone();
                *local.params_mut() = store.clone();
                let pass = local.forward(tape, &x, Some(&topo))?;
                let t = tape.constant(y.clone());
                tape.mse(pass.prediction, t)
            },
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{:?}", report.worst());
    }

    fn samples(n: usize) -> Vec<WindowSample> {
        (0..n)
            .map(|k| WindowSample { input: window(k as u64, 4, 3), target: window(100 + k as u64, 4, 5), origin: k })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let m = HiGFlowModel::new(small(2), 80).unwrap();
        let before = m.params().clone();
        let cfg = TrainConfig { learning_rate: 0.0, batch_size: 3, epochs: 3, ..TrainConfig::default() };
        let mut tr = Trainer::new(m, cfg).unwrap();
        let data = samples(7);
        let a = tr.train_epoch(&data, &data).unwrap();
        let b = tr.train_epoch(&data, &data).unwrap();
        assert_eq!(a.train_loss, b.train_loss);
        assert_eq!(tr.model().params().tensors(), before.tensors());
    }

    #[test]
    fn overfits_a_repeated_sample() {
        let m = HiGFlowModel::new(small(2), 81).unwrap();
        let cfg = TrainConfig { learning_rate: 1e-3, batch_size: 1, freeze_clusters: true, ..TrainConfig::default() };
        let mut tr = Trainer::new(m, cfg).unwrap();
        let one = samples(1);
        let losses: Vec<f64> = (0..20).map(|_| tr.train_epoch(&one, &one).unwrap().train_loss).collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
    }

    #[test]
    fn training_is_deterministic_across_execution_modes() {
        let data = samples(9);
        let run = |exec: Execution| {
            let m = HiGFlowModel::new(small(2), 82).unwrap();
            let cfg = TrainConfig { batch_size: 4, epochs: 3, execution: exec, ..TrainConfig::default() };
            let mut tr = Trainer::new(m, cfg).unwrap();
            let out = tr.fit(&data, &data, |_, _| Ok(())).unwrap();
            (out.history, tr.into_model().params().clone())
        };
        let (h0, p0) = run(Execution::Sequential);
        for exec in Execution::available() {
            let (h, p) = run(exec);
            assert_eq!(h, h0);
            assert_eq!(p.tensors(), p0.tensors());
        }
    }

    #[test]
    fn early_stopping_restores_best_weights() {
        let data = samples(6);
        let m = HiGFlowModel::new(small(1), 83).unwrap();
        let cfg = TrainConfig { learning_rate: 0.0, batch_size: 2, epochs: 10, patience: 2, ..TrainConfig::default() };
        let mut tr = Trainer::new(m, cfg).unwrap();
        let out = tr.fit(&data, &data, |_, _| Ok(())).unwrap();
        assert_eq!(out.history.len(), 3);
        assert_eq!(out.best_epoch, Some(1));
        let none = Trainer::new(HiGFlowModel::new(small(1), 83).unwrap(), TrainConfig { epochs: 0, ..TrainConfig::default() })
            .unwrap()
            .fit(&data, &data, |_, _| Ok(()))
            .unwrap();
        assert!(none.history.is_empty() && none.best_epoch.is_none());
    }

    #[test]
    fn non_finite_loss_reports_diagnostics() {
        let m = HiGFlowModel::new(small(1), 84).unwrap();
        let mut tr = Trainer::new(m, TrainConfig::default()).unwrap();
        let mut bad = samples(1);
        bad[0].target.set(0, 0, f64::NAN);
        let err = tr.train_epoch(&bad, &bad).unwrap_err();
        let text = err.to_string();
        assert!(matches!(err, crate::Error::NonFinite(_)));
        assert!(text.contains("level energies") && text.contains("readout.out.w"), "{text}");
    }

    #[test]
    fn checkpoint_round_trip_and_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let m = HiGFlowModel::new(small(2), 90).unwrap();
        Checkpoint::from_model(&m).save(&path).unwrap();
        let ck = Checkpoint::load(&path).unwrap();
        assert_eq!(ck.config, *m.config());
        let mut other = HiGFlowModel::new(ck.config.clone(), 91).unwrap();
        ck.restore_into(&mut other).unwrap();
        assert_eq!(other.params().tensors(), m.params().tensors());

        let mut wider = HiGFlowModel::new(ModelConfig { hidden: 12, ..small(2) }, 0).unwrap();
        let err = ck.restore_into(&mut wider).unwrap_err().to_string();
        assert!(err.contains("expected") && err.contains("found"), "{err}");

        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(crate::Error::Checkpoint(_))));
    }

    #[test]
    fn probe_examples() {
        let m = HiGFlowModel::new(small(1), 95).unwrap();
        let data = samples(3);
        let report = smoothness_probe(&m, &data, 0, 0, DegreeMode::Unweighted).unwrap();
        assert_eq!(report.levels.len(), 1);

        let mut flat = HiGFlowModel::new(small(1), 96).unwrap();
        for h in 0..2 {
            for kind in ["q", "k"] {
                set(&mut flat, &format!("level1.attn.{kind}{h}"), Tensor::zeros(&[8, 4]));
            }
        }
        let constant = vec![WindowSample { input: Tensor::filled(&[4, 3], 0.4), target: Tensor::zeros(&[4, 5]), origin: 0 }];
        let report = smoothness_probe(&flat, &constant, 0, 0, DegreeMode::Unweighted).unwrap();
        assert_eq!(report.levels[0].embedded, 0.0);

        let deep = HiGFlowModel::new(small(3), 97).unwrap();
        for s in &data {
            let (pred, levels) = probe_window(&deep, &s.input, DegreeMode::Unweighted).unwrap();
            assert_eq!(pred.data(), deep.predict(&s.input).unwrap().data());
            assert_eq!(levels.len(), 3);
        }
    }
}
