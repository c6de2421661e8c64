use super::model::HiGFlowModel;
use crate::analysis::{clique_energy, dirichlet_energy, DirichletReport, LevelEnergy};
use crate::dataio::WindowSample;
use crate::error::{Error, Result};
use crate::graph::DegreeMode;
use crate::numerics::{Tape, Tensor};

/// Forecast plus per-level energies of `h` and `u` for one window.
///
/// The energies are read off the finished pass, so the forecast is the
/// same as [`HiGFlowModel::predict`].
pub fn probe_window(model: &HiGFlowModel, x: &Tensor, mode: DegreeMode) -> Result<(Tensor, Vec<LevelEnergy>)> {
    let mut tape = Tape::no_grad();
    let pass = model.forward(&mut tape, x, None)?;
    let mut levels = Vec::with_capacity(pass.levels.len());
    for (i, l) in pass.levels.iter().enumerate() {
        let h = tape.value(l.h);
        let cliques = (0..l.graph.num_nodes())
            .map(|node| clique_energy(&l.graph, h, node, mode))
            .collect::<Result<Vec<_>>>()?;
        levels.push(LevelEnergy {
            level: i + 1,
            num_nodes: l.graph.num_nodes(),
            embedded: dirichlet_energy(&l.graph, h, mode)?,
            lifted: dirichlet_energy(&l.graph, tape.value(l.u), mode)?,
            clique_energies: cliques,
        });
    }
    Ok((tape.value(pass.prediction).clone(), levels))
}

/// Batch-mean level energies; node counts and per-clique energies are those
/// of the first window.
pub fn smoothness_probe(
    model: &HiGFlowModel,
    batch: &[WindowSample],
    epoch: usize,
    batch_index: usize,
    mode: DegreeMode,
) -> Result<DirichletReport> {
    let Some(first) = batch.first() else {
        return Err(Error::State("probe needs at least one window".into()));
    };
    let (_, mut levels) = probe_window(model, &first.input, mode)?;
    for s in &batch[1..] {
        let (_, more) = probe_window(model, &s.input, mode)?;
        for (acc, l) in levels.iter_mut().zip(more) {
            acc.embedded += l.embedded;
            acc.lifted += l.lifted;
        }
    }
    let count = batch.len() as f64;
    for l in &mut levels {
        l.embedded /= count;
        l.lifted /= count;
    }
    Ok(DirichletReport {
        epoch,
        batch: batch_index,
        levels,
    })
}
