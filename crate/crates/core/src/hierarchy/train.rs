use std::collections::HashMap;

use super::model::{HiGFlowModel, Pass, Topology};
use crate::analysis::{dirichlet_energy, ErrorAccumulator};
use crate::dataio::WindowSample;
use crate::error::{Error, Result};
use crate::graph::DegreeMode;
use crate::numerics::{ParamStore, RmsProp, Tape, Tensor};
use crate::parallel::Execution;

/// Optimisation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation-MAE improvement before stopping.
    pub patience: usize,
    /// Reuse each window's first-epoch topology in later epochs.
    pub freeze_clusters: bool,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            batch_size: 32,
            epochs: 50,
            patience: 10,
            freeze_clusters: false,
            execution: Execution::default(),
        }
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
}

/// Outcome of [`Trainer::fit`]; the model holds the best-validation weights.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub history: Vec<EpochMetrics>,
    /// Epoch whose weights were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

/// Minibatch RMSProp training with per-sample tapes.
#[derive(Debug)]
pub struct Trainer {
    model: HiGFlowModel,
    optimizer: RmsProp,
    config: TrainConfig,
    frozen: HashMap<usize, Topology>,
    epochs_run: usize,
}

struct SampleGrad {
    loss: f64,
    grads: Vec<Tensor>,
    topology: Topology,
}

fn diagnostics(model: &HiGFlowModel, tape: &Tape, pass: &Pass) -> String {
    let energies: Vec<String> = pass
        .levels
        .iter()
        .map(|l| match dirichlet_energy(&l.graph, tape.value(l.h), DegreeMode::Unweighted) {
            Ok(e) => format!("{e:.4e}"),
            Err(_) => "n/a".into(),
        })
        .collect();
    let norms: Vec<String> = model
        .params()
        .iter()
        .map(|(_, name, t)| format!("{name}={:.3e}", t.norm()))
        .collect();
    format!("level energies [{}]; parameter norms [{}]", energies.join(", "), norms.join(", "))
}

impl Trainer {
    pub fn new(model: HiGFlowModel, config: TrainConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::config("lr", format!("{} must be a non-negative number", config.learning_rate)));
        }
        let optimizer = RmsProp::new(model.params(), config.learning_rate);
        Ok(Trainer {
            model,
            optimizer,
            config,
            frozen: HashMap::new(),
            epochs_run: 0,
        })
    }

    pub fn model(&self) -> &HiGFlowModel {
        &self.model
    }

    pub fn into_model(self) -> HiGFlowModel {
        self.model
    }

    fn sample_gradient(&self, sample: &WindowSample, topology: Option<&Topology>) -> Result<SampleGrad> {
        let mut tape = Tape::new();
        let pass = self.model.forward(&mut tape, &sample.input, topology)?;
        let target = tape.constant(sample.target.clone());
        let loss = tape.mse(pass.prediction, target)?;
        let value = tape.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss {value} at epoch {}, window origin {}; {}",
                self.epochs_run,
                sample.origin,
                diagnostics(&self.model, &tape, &pass)
            )));
        }
        let grads = tape.backward(loss)?.aligned(self.model.params());
        Ok(SampleGrad {
            loss: value,
            grads,
            topology: pass.topology,
        })
    }

    /// Mean loss and mean gradient over `batch`, summed in sample order.
    pub fn batch_gradient(&self, batch: &[WindowSample]) -> Result<(f64, Vec<Tensor>)> {
        let (loss, grads, _) = self.batch_gradient_with_topology(batch)?;
        Ok((loss, grads))
    }

    fn batch_gradient_with_topology(&self, batch: &[WindowSample]) -> Result<(f64, Vec<Tensor>, Vec<Topology>)> {
        if batch.is_empty() {
            return Err(Error::State("empty batch".into()));
        }
        let results = self
            .config
            .execution
            .map(batch, |s| self.sample_gradient(s, self.frozen.get(&s.origin)));
        let mut total = 0.0;
        let mut sum: Vec<Tensor> = self.model.params().tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let mut topologies = Vec::with_capacity(batch.len());
        for r in results {
            let r = r?;
            total += r.loss;
            for (acc, g) in sum.iter_mut().zip(&r.grads) {
                acc.accumulate(g)?;
            }
            topologies.push(r.topology);
        }
        let scale = 1.0 / batch.len() as f64;
        Ok((total * scale, sum.into_iter().map(|g| g.scale(scale)).collect(), topologies))
    }

    /// One chronological pass over `train` followed by validation metrics.
    pub fn train_epoch(&mut self, train: &[WindowSample], validation: &[WindowSample]) -> Result<EpochMetrics> {
        if train.is_empty() {
            return Err(Error::State("no training windows".into()));
        }
        let freeze_now = self.config.freeze_clusters && self.epochs_run == 0;
        let mut loss_sum = 0.0;
        for batch in train.chunks(self.config.batch_size) {
            let (loss, grads, topologies) = self.batch_gradient_with_topology(batch)?;
            loss_sum += loss * batch.len() as f64;
            self.optimizer.step(self.model.params_mut(), &grads)?;
            if freeze_now {
                for (s, t) in batch.iter().zip(topologies) {
                    self.frozen.insert(s.origin, t);
                }
            }
        }
        let val = evaluate(&self.model, validation, self.config.execution)?;
        let metrics = EpochMetrics {
            epoch: self.epochs_run + 1,
            train_loss: loss_sum / train.len() as f64,
            val_mae: val.mae(),
            val_rmse: val.rmse(),
        };
        self.epochs_run += 1;
        Ok(metrics)
    }

    /// Trains up to `epochs` with early stopping on validation MAE and
    /// restores the best weights.
    pub fn fit(
        &mut self,
        train: &[WindowSample],
        validation: &[WindowSample],
        mut on_epoch: impl FnMut(&EpochMetrics, &HiGFlowModel) -> Result<()>,
    ) -> Result<FitOutcome> {
        let mut history = Vec::new();
        let mut best: Option<(f64, usize, ParamStore)> = None;
        let mut stale = 0;
        for _ in 0..self.config.epochs {
            let m = self.train_epoch(train, validation)?;
            on_epoch(&m, &self.model)?;
            history.push(m);
            if best.as_ref().is_none_or(|(mae, _, _)| m.val_mae < *mae) {
                best = Some((m.val_mae, m.epoch, self.model.params().clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= self.config.patience {
                    break;
                }
            }
        }
        let best_epoch = best.map(|(_, epoch, params)| {
            *self.model.params_mut() = params;
            epoch
        });
        Ok(FitOutcome { history, best_epoch })
    }
}

/// MAE/RMSE over all forecast elements of `samples`, gradients disabled.
pub fn evaluate(model: &HiGFlowModel, samples: &[WindowSample], execution: Execution) -> Result<ErrorAccumulator> {
    let preds = execution.map(samples, |s| model.predict(&s.input));
    let mut acc = ErrorAccumulator::default();
    for (p, s) in preds.into_iter().zip(samples) {
        acc.push(&p?, &s.target)?;
    }
    Ok(acc)
}

/// Forecast that repeats each variable's last observed value.
pub fn last_value_baseline(samples: &[WindowSample]) -> Result<ErrorAccumulator> {
    let mut acc = ErrorAccumulator::default();
    for s in samples {
        let (n, t_in) = (s.input.rows(), s.input.cols());
        let t_out = s.target.cols();
        let mut pred = Tensor::zeros(&[n, t_out]);
        for v in 0..n {
            for t in 0..t_out {
                pred.set(v, t, s.input.get(v, t_in - 1));
            }
        }
        acc.push(&pred, &s.target)?;
    }
    Ok(acc)
}
