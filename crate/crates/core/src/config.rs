//! Run configuration: a flat `key = value` file, overridden by
//! `key=value` pairs from the command line, over built-in defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataio::{FormatSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::graph::DegreeMode;
use crate::hierarchy::{ModelConfig, TrainConfig};
use crate::parallel::Execution;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "HIGFLOW_OUTPUT_ROOT";

/// Where the series comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, format: FormatSpec },
    Manifest(PathBuf),
    Synthetic(SyntheticSpec),
}

/// Trial counts and sizes for the theorem harnesses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalysisSettings {
    pub theorem1_trials: usize,
    pub theorem2_trials: usize,
    pub theorem3_trials: usize,
    pub max_nodes: usize,
    pub max_depth: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            theorem1_trials: 500,
            theorem2_trials: 100,
            theorem3_trials: 200,
            max_nodes: 32,
            max_depth: 4,
        }
    }
}

/// Every setting of a run, validated before any compute.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Report metrics in original units instead of z-scores.
    pub denormalize: bool,
    pub degree_mode: DegreeMode,
    pub analysis: AnalysisSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::Synthetic(SyntheticSpec::default()),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seed: 0,
            output_dir: None,
            denormalize: false,
            degree_mode: DegreeMode::Unweighted,
            analysis: AnalysisSettings::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("`{value}` is not {what}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("`{value}` is not a boolean"))),
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            row: i + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults, then `file` (if any), then `overrides`, then validation.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (k, v) in parse_pairs(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn synthetic_mut(&mut self) -> &mut SyntheticSpec {
        if !matches!(self.data, DataSource::Synthetic(_)) {
            self.data = DataSource::Synthetic(SyntheticSpec::default());
        }
        match &mut self.data {
            DataSource::Synthetic(s) => s,
            _ => unreachable!("just set"),
        }
    }

    fn csv_format_mut(&mut self, key: &str) -> Result<&mut FormatSpec> {
        match &mut self.data {
            DataSource::Csv { format, .. } => Ok(format),
            _ => Err(Error::config(key, "only applies after `data` names a CSV file")),
        }
    }

    /// Applies one setting; unknown keys and malformed values are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        let a = &mut self.analysis;
        match key {
            "data" => {
                self.data = DataSource::Csv {
                    path: PathBuf::from(value),
                    format: FormatSpec::default(),
                }
            }
            "data_manifest" => self.data = DataSource::Manifest(PathBuf::from(value)),
            "has_header" => self.csv_format_mut(key)?.has_header = parse_bool(key, value)?,
            "n_vars" => self.csv_format_mut(key)?.num_vars = Some(parse(key, value, "an integer")?),
            "synthetic_vars" => self.synthetic_mut().num_vars = parse(key, value, "an integer")?,
            "synthetic_len" => self.synthetic_mut().len = parse(key, value, "an integer")?,
            "synthetic_noise" => self.synthetic_mut().noise = parse(key, value, "a number")?,
            "synthetic_coupling" => self.synthetic_mut().coupling = parse(key, value, "a number")?,
            "synthetic_seed" => self.synthetic_mut().seed = parse(key, value, "an integer")?,
            "t_in" => m.t_in = parse(key, value, "an integer")?,
            "t_out" => m.t_out = parse(key, value, "an integer")?,
            "depth" => m.depth = parse(key, value, "an integer")?,
            "hidden" => m.hidden = parse(key, value, "an integer")?,
            "heads" => m.heads = parse(key, value, "an integer")?,
            "tau" => m.tau = parse(key, value, "a number")?,
            "transition_depth" => m.transition_depth = parse(key, value, "an integer")?,
            "readout_hidden" => m.readout_hidden = parse(key, value, "an integer")?,
            "embed_domain_shift" => m.ablation.embed_domain_shift = parse_bool(key, value)?,
            "lift_domain_shift" => m.ablation.lift_domain_shift = parse_bool(key, value)?,
            "naive_encoding" => m.ablation.naive_encoding = parse_bool(key, value)?,
            "lr" => t.learning_rate = parse(key, value, "a number")?,
            "batch_size" => t.batch_size = parse(key, value, "an integer")?,
            "epochs" => t.epochs = parse(key, value, "an integer")?,
            "patience" => t.patience = parse(key, value, "an integer")?,
            "freeze_clusters" => t.freeze_clusters = parse_bool(key, value)?,
            "execution" => {
                t.execution = match value {
                    "sequential" => Execution::Sequential,
                    #[cfg(feature = "parallel")]
                    "rayon" => Execution::Rayon,
                    _ => {
                        let legal: Vec<&str> = Execution::available().iter().map(|e| e.name()).collect();
                        return Err(Error::config(key, format!("`{value}` is not one of {}", legal.join(", "))));
                    }
                }
            }
            "seed" => self.seed = parse(key, value, "an integer")?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "denormalize" => self.denormalize = parse_bool(key, value)?,
            "degree_mode" => {
                self.degree_mode = match value {
                    "unweighted" => DegreeMode::Unweighted,
                    "weighted" => DegreeMode::Weighted,
                    _ => return Err(Error::config(key, format!("`{value}` is not unweighted or weighted"))),
                }
            }
            "theorem1_trials" => a.theorem1_trials = parse(key, value, "an integer")?,
            "theorem2_trials" => a.theorem2_trials = parse(key, value, "an integer")?,
            "theorem3_trials" => a.theorem3_trials = parse(key, value, "an integer")?,
            "max_nodes" => a.max_nodes = parse(key, value, "an integer")?,
            "max_depth" => a.max_depth = parse(key, value, "an integer")?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Synthetic(s) = &self.data {
            if s.num_vars == 0 {
                return Err(Error::config("synthetic_vars", "must be positive"));
            }
            if s.len == 0 {
                return Err(Error::config("synthetic_len", "must be positive"));
            }
            if !(s.noise >= 0.0 && s.noise.is_finite()) {
                return Err(Error::config("synthetic_noise", "must be a non-negative number"));
            }
        }
        // num_vars is taken from the data; check the rest with a placeholder
        ModelConfig {
            num_vars: self.model.num_vars.max(1),
            ..self.model.clone()
        }
        .validate()?;
        let t = &self.train;
        if !(t.learning_rate >= 0.0 && t.learning_rate.is_finite()) {
            return Err(Error::config("lr", format!("{} must be a non-negative number", t.learning_rate)));
        }
        if t.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if t.patience == 0 {
            return Err(Error::config("patience", "must be positive"));
        }
        let a = &self.analysis;
        if a.max_nodes < 2 {
            return Err(Error::config("max_nodes", "must be at least 2"));
        }
        if a.max_depth == 0 {
            return Err(Error::config("max_depth", "must be positive"));
        }
        Ok(())
    }

    /// Resolved settings in loadable form.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.data {
            DataSource::Csv { path, format } => {
                put("data", path.display().to_string());
                put("has_header", format.has_header.to_string());
                if let Some(n) = format.num_vars {
                    put("n_vars", n.to_string());
                }
            }
            DataSource::Manifest(p) => put("data_manifest", p.display().to_string()),
            DataSource::Synthetic(sp) => {
                put("synthetic_vars", sp.num_vars.to_string());
                put("synthetic_len", sp.len.to_string());
                put("synthetic_noise", sp.noise.to_string());
                put("synthetic_coupling", sp.coupling.to_string());
                put("synthetic_seed", sp.seed.to_string());
            }
        }
        let m = &self.model;
        put("t_in", m.t_in.to_string());
        put("t_out", m.t_out.to_string());
        put("depth", m.depth.to_string());
        put("hidden", m.hidden.to_string());
        put("heads", m.heads.to_string());
        put("tau", m.tau.to_string());
        put("transition_depth", m.transition_depth.to_string());
        put("readout_hidden", m.readout_hidden.to_string());
        put("embed_domain_shift", m.ablation.embed_domain_shift.to_string());
        put("lift_domain_shift", m.ablation.lift_domain_shift.to_string());
        put("naive_encoding", m.ablation.naive_encoding.to_string());
        let t = &self.train;
        put("lr", t.learning_rate.to_string());
        put("batch_size", t.batch_size.to_string());
        put("epochs", t.epochs.to_string());
        put("patience", t.patience.to_string());
        put("freeze_clusters", t.freeze_clusters.to_string());
        put("execution", t.execution.name().to_string());
        put("seed", self.seed.to_string());
        if let Some(o) = &self.output_dir {
            put("output_dir", o.display().to_string());
        }
        put("denormalize", self.denormalize.to_string());
        put(
            "degree_mode",
            match self.degree_mode {
                DegreeMode::Unweighted => "unweighted",
                DegreeMode::Weighted => "weighted",
            }
            .into(),
        );
        let a = &self.analysis;
        put("theorem1_trials", a.theorem1_trials.to_string());
        put("theorem2_trials", a.theorem2_trials.to_string());
        put("theorem3_trials", a.theorem3_trials.to_string());
        put("max_nodes", a.max_nodes.to_string());
        put("max_depth", a.max_depth.to_string());
        s
    }

    /// `output_dir`, or `$HIGFLOW_OUTPUT_ROOT/<command>` (root defaults to `runs`).
    pub fn resolve_output_dir(&self, command: &str) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"))
                .join(command)
        })
    }
}
