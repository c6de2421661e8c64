//! The commands behind the `higflow` binary. Each one takes a validated
//! [`RunConfig`], writes its artifacts into a run directory and returns a
//! serialisable report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::analysis::{
    cycle_pair_separation, run_theorem1, run_theorem2, run_theorem3, write_rows, AbstractDegree, DirichletReport,
    ErrorAccumulator, HarnessConfig, PairSeparation, Theorem1Summary, Theorem2Summary, Theorem3Summary,
};
use crate::config::{DataSource, RunConfig};
use crate::dataio::{coupled_sinusoids, load_series, prepare, DatasetManifest, NormStats, PreparedData, SyntheticSpec, WindowSample};
use crate::error::{Error, Result};
use crate::hierarchy::{last_value_baseline, smoothness_probe, Checkpoint, HiGFlowModel, ModelConfig, Trainer};
use crate::numerics::Tensor;
use crate::parallel::Execution;

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_COLUMNS: [&str; 4] = ["epoch", "train_loss", "val_mae", "val_rmse"];
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const ENERGY_FILE: &str = "energy_report.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_COLUMNS: [&str; 7] = [
    "axis",
    "axis_value",
    "mae",
    "rmse",
    "mean_embed_energy_drop",
    "energies_h",
    "energies_u",
];

/// Windows per-epoch smoothness probes look at.
const PROBE_WINDOWS: usize = 32;
/// Additive tolerance of the contraction checks.
pub const THEOREM1_SLACK: f64 = 1e-9;
pub const THEOREM2_TERMS: [usize; 4] = [1, 2, 4, 8];
/// Largest accepted `gap(8) / gap(1)`.
pub const THEOREM2_MAX_RATIO: f64 = 0.5;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::State(format!("serialising report: {e}")))?;
    write_file(path, &(text + "\n"))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Loads, z-scores and windows the configured series.
pub fn load_data(cfg: &RunConfig) -> Result<PreparedData> {
    let raw = match &cfg.data {
        DataSource::Csv { path, format } => load_series(path, format)?,
        DataSource::Manifest(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let base = path.parent().unwrap_or(Path::new("."));
            let m = DatasetManifest::parse(&text, base)?;
            load_series(&m.path, &m.format)?
        }
        DataSource::Synthetic(spec) => coupled_sinusoids(spec)?,
    };
    prepare(raw, cfg.model.t_in, cfg.model.t_out)
}

/// Model settings with the variable count taken from the data.
pub fn model_config(cfg: &RunConfig, data: &PreparedData) -> Result<ModelConfig> {
    let m = ModelConfig {
        num_vars: data.raw.num_vars(),
        ..cfg.model.clone()
    };
    m.validate()?;
    Ok(m)
}

/// Test-split error of a forecast.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub windows: usize,
    /// Whether errors are in original units rather than z-scores.
    pub denormalized: bool,
}

fn score(
    samples: &[WindowSample],
    preds: Vec<Result<Tensor>>,
    stats: Option<&NormStats>,
) -> Result<TestMetrics> {
    let mut acc = ErrorAccumulator::default();
    for (p, s) in preds.into_iter().zip(samples) {
        let p = p?;
        match stats {
            Some(st) => acc.push(&st.denormalize(&p)?, &st.denormalize(&s.target)?)?,
            None => acc.push(&p, &s.target)?,
        }
    }
    Ok(TestMetrics {
        mae: acc.mae(),
        rmse: acc.rmse(),
        windows: samples.len(),
        denormalized: stats.is_some(),
    })
}

/// Model forecast error on `samples`.
pub fn model_metrics(
    model: &HiGFlowModel,
    samples: &[WindowSample],
    stats: Option<&NormStats>,
    execution: Execution,
) -> Result<TestMetrics> {
    let preds = execution.map(samples, |s| model.predict(&s.input));
    score(samples, preds, stats)
}

/// Last-value-repeat error on `samples`.
pub fn baseline_metrics(samples: &[WindowSample], stats: Option<&NormStats>) -> Result<TestMetrics> {
    if stats.is_none() {
        let acc = last_value_baseline(samples)?;
        return Ok(TestMetrics {
            mae: acc.mae(),
            rmse: acc.rmse(),
            windows: samples.len(),
            denormalized: false,
        });
    }
    let preds = samples
        .iter()
        .map(|s| {
            let (n, t_in) = (s.input.rows(), s.input.cols());
            let t_out = s.target.cols();
            let mut p = Tensor::zeros(&[n, t_out]);
            for v in 0..n {
                for t in 0..t_out {
                    p.set(v, t, s.input.get(v, t_in - 1));
                }
            }
            Ok(p)
        })
        .collect();
    score(samples, preds, stats)
}

/// Smoothness probes taken during and after training.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub degree_mode: &'static str,
    /// One probe per epoch over the first validation windows.
    pub epochs: Vec<DirichletReport>,
    /// Probe of the kept weights over the whole test split.
    #[serde(rename = "final")]
    pub final_probe: DirichletReport,
    pub mean_embed_energy_drop: f64,
}

/// What `train` reports and stores as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub run_dir: PathBuf,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub test: TestMetrics,
    pub baseline: TestMetrics,
    pub mean_embed_energy_drop: f64,
    #[serde(skip)]
    pub energy: EnergyReport,
}

fn degree_name(cfg: &RunConfig) -> &'static str {
    match cfg.degree_mode {
        crate::graph::DegreeMode::Unweighted => "unweighted",
        crate::graph::DegreeMode::Weighted => "weighted",
    }
}

/// Trains with early stopping and fills `run_dir` with the checkpoint of
/// the kept weights, `metrics.csv`, the config snapshot, the energy report
/// and the summary.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let model = HiGFlowModel::new(model_config(cfg, &data)?, cfg.seed)?;
    let run_dir = cfg.resolve_output_dir("train");
    create_dir(&run_dir)?;
    write_file(&run_dir.join(CONFIG_FILE), &cfg.snapshot())?;

    let split = &data.split;
    if split.train.is_empty() || split.validation.is_empty() || split.test.is_empty() {
        return Err(Error::config("data", "series too short for train/validation/test windows"));
    }
    let probe_set = &split.validation[..split.validation.len().min(PROBE_WINDOWS)];
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let mut epochs = Vec::new();
    let outcome = trainer.fit(&split.train, &split.validation, |m, model| {
        epochs.push(smoothness_probe(model, probe_set, m.epoch, 0, cfg.degree_mode)?);
        Ok(())
    })?;
    let model = trainer.into_model();
    Checkpoint::from_model(&model).save(&run_dir.join(CHECKPOINT_FILE))?;

    let mut csv = METRICS_COLUMNS.join(",") + "\n";
    for m in &outcome.history {
        let _ = writeln!(csv, "{},{},{},{}", m.epoch, m.train_loss, m.val_mae, m.val_rmse);
    }
    write_file(&run_dir.join(METRICS_FILE), &csv)?;

    let stats = cfg.denormalize.then_some(&data.stats);
    let test = model_metrics(&model, &split.test, stats, cfg.train.execution)?;
    let baseline = baseline_metrics(&split.test, stats)?;
    let final_probe = smoothness_probe(&model, &split.test, outcome.best_epoch.unwrap_or(0), 0, cfg.degree_mode)?;
    let energy = EnergyReport {
        degree_mode: degree_name(cfg),
        epochs,
        mean_embed_energy_drop: final_probe.mean_embed_energy_drop(),
        final_probe,
    };
    write_json(&run_dir.join(ENERGY_FILE), &energy)?;
    let report = TrainReport {
        run_dir: run_dir.clone(),
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        test,
        baseline,
        mean_embed_energy_drop: energy.mean_embed_energy_drop,
        energy,
    };
    write_json(&run_dir.join(SUMMARY_FILE), &report)?;
    Ok(report)
}

/// Test metrics of a stored checkpoint under `cfg`'s data and architecture.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<TestMetrics> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let mut model = HiGFlowModel::new(model_config(cfg, &data)?, cfg.seed)?;
    Checkpoint::load(checkpoint)?.restore_into(&mut model)?;
    model_metrics(
        &model,
        &data.split.test,
        cfg.denormalize.then_some(&data.stats),
        cfg.train.execution,
    )
}

/// One named pass/fail line of the analysis summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub check: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub seed: u64,
    pub theorem1: Theorem1Summary,
    pub theorem2: Theorem2Summary,
    pub theorem3: Theorem3Summary,
    pub cycle_pair: PairSeparation,
    pub verdicts: Vec<Verdict>,
}

/// Runs the three randomized theorem harnesses and the cycle-pair check,
/// writing `analysis.csv`, `analysis.json` and `summary.txt`.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalysisReport> {
    cfg.validate()?;
    let a = &cfg.analysis;
    let harness = |trials| HarnessConfig {
        trials,
        seed: cfg.seed,
        max_nodes: a.max_nodes,
        execution: cfg.train.execution,
    };
    let t1 = run_theorem1(&harness(a.theorem1_trials), AbstractDegree::MemberSum, THEOREM1_SLACK)?;
    let t2 = run_theorem2(&harness(a.theorem2_trials), &THEOREM2_TERMS)?;
    let t3 = run_theorem3(&harness(a.theorem3_trials), a.max_depth)?;
    let pair = cycle_pair_separation()?;

    let verdicts = vec![
        Verdict {
            check: "theorem1",
            passed: t1.passed(),
            detail: format!(
                "per-clique {}/{}, global {}/{}",
                t1.per_clique_pass, t1.trials, t1.global_pass, t1.trials
            ),
        },
        Verdict {
            check: "theorem2",
            passed: t2.passed(THEOREM2_MAX_RATIO),
            detail: format!(
                "median gaps {:?} for B {:?}, non-increasing {}, ratio {:.4}",
                t2.median_gaps, t2.terms, t2.non_increasing, t2.ratio
            ),
        },
        Verdict {
            check: "theorem3",
            passed: t3.passed(),
            detail: format!("{}/{} chains hold, {} strict gains", t3.passed_trials, t3.trials, t3.strict_gains),
        },
        Verdict {
            check: "cycle_pair",
            passed: pair.separated.last().copied().unwrap_or(false),
            detail: format!("separated by depth {:?}", pair.separated),
        },
    ];

    let dir = cfg.resolve_output_dir("analyze");
    create_dir(&dir)?;
    write_file(&dir.join(CONFIG_FILE), &cfg.snapshot())?;
    let rows: Vec<_> = t1.rows.iter().chain(&t2.rows).chain(&t3.rows).cloned().collect();
    write_rows(&dir.join("analysis.csv"), &rows)?;
    let report = AnalysisReport {
        seed: cfg.seed,
        theorem1: t1,
        theorem2: t2,
        theorem3: t3,
        cycle_pair: pair,
        verdicts,
    };
    write_json(&dir.join("analysis.json"), &report)?;
    write_file(&dir.join("summary.txt"), &verdict_lines(&report.verdicts))?;
    Ok(report)
}

/// `PASS name: detail` lines.
pub fn verdict_lines(verdicts: &[Verdict]) -> String {
    let mut s = String::new();
    for v in verdicts {
        let _ = writeln!(s, "{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.check, v.detail);
    }
    s
}

/// Setting varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Depth,
    TransitionDepth,
    Horizon,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Depth => "depth",
            SweepAxis::TransitionDepth => "transition_depth",
            SweepAxis::Horizon => "horizon",
        }
    }

    fn range(self) -> (usize, usize) {
        match self {
            SweepAxis::Depth => (1, 4),
            SweepAxis::TransitionDepth => (1, 3),
            SweepAxis::Horizon => (3, 12),
        }
    }

    fn apply(self, cfg: &mut RunConfig, value: usize) {
        match self {
            SweepAxis::Depth => cfg.model.depth = value,
            SweepAxis::TransitionDepth => cfg.model.transition_depth = value,
            SweepAxis::Horizon => cfg.model.t_out = value,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(SweepAxis::Depth),
            "transition_depth" => Ok(SweepAxis::TransitionDepth),
            "horizon" => Ok(SweepAxis::Horizon),
            _ => Err(Error::config("axis", format!("`{s}` is not depth, transition_depth or horizon"))),
        }
    }
}

/// One row of `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: &'static str,
    pub axis_value: usize,
    pub mae: f64,
    pub rmse: f64,
    pub mean_embed_energy_drop: f64,
    /// Final per-level energies of `h`, finest first.
    pub energies_h: Vec<f64>,
    pub energies_u: Vec<f64>,
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Trains once per axis value with the same seed, each into
/// `<dir>/<axis>-<value>`, and writes the consolidated `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[usize]) -> Result<Vec<SweepRow>> {
    let (lo, hi) = axis.range();
    if values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    if let Some(v) = values.iter().find(|&&v| v < lo || v > hi) {
        return Err(Error::config(axis.name(), format!("{v} outside {lo}..={hi}")));
    }
    let dir = cfg.resolve_output_dir("sweep");
    create_dir(&dir)?;
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        axis.apply(&mut c, v);
        c.output_dir = Some(dir.join(format!("{}-{v}", axis.name())));
        let r = cmd_train(&c)?;
        let levels = &r.energy.final_probe.levels;
        rows.push(SweepRow {
            axis: axis.name(),
            axis_value: v,
            mae: r.test.mae,
            rmse: r.test.rmse,
            mean_embed_energy_drop: r.mean_embed_energy_drop,
            energies_h: levels.iter().map(|l| l.embedded).collect(),
            energies_u: levels.iter().map(|l| l.lifted).collect(),
        });
    }
    let mut csv = SWEEP_COLUMNS.join(",") + "\n";
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.axis,
            r.axis_value,
            r.mae,
            r.rmse,
            r.mean_embed_energy_drop,
            join(&r.energies_h),
            join(&r.energies_u)
        );
    }
    write_file(&dir.join(SWEEP_FILE), &csv)?;
    Ok(rows)
}

/// Writes the seeded coupled-sinusoid series as CSV.
pub fn cmd_gen_synthetic(spec: &SyntheticSpec, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    coupled_sinusoids(spec)?.write_csv(path)
}
