//! Series loading, normalisation, chronological splitting and windowing.

mod synthetic;

use std::ops::Range;
use std::path::{Path, PathBuf};

pub use synthetic::{coupled_sinusoids, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// `N × L` multivariate series (variables in rows, timesteps in columns).
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub values: Tensor,
    pub variable_names: Option<Vec<String>>,
}

impl RawSeries {
    pub fn num_vars(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the series as CSV with one row per timestep.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let names = self
            .variable_names
            .clone()
            .unwrap_or_else(|| (0..self.num_vars()).map(|i| format!("x{i}")).collect());
        w.write_record(&names).map_err(|e| csv_io(path, e))?;
        for t in 0..self.len() {
            let row: Vec<String> = (0..self.num_vars())
                .map(|v| self.values.get(v, t).to_string())
                .collect();
            w.write_record(&row).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// How to read a series file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormatSpec {
    pub has_header: bool,
    /// Keep only the first `n` columns.
    pub num_vars: Option<usize>,
}

impl Default for FormatSpec {
    fn default() -> Self {
        FormatSpec {
            has_header: true,
            num_vars: None,
        }
    }
}

/// Dataset manifest: a flat `key = value` file naming the series file.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub path: PathBuf,
    pub format: FormatSpec,
}

impl DatasetManifest {
    /// Parses `path`, `has_header` and `n` keys; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut path = None;
        let mut format = FormatSpec::default();
        for (row, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                row: row + 1,
                message: format!("expected key = value, found `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "path" => path = Some(base.join(v)),
                "has_header" => {
                    format.has_header = v
                        .parse()
                        .map_err(|_| Error::config("has_header", format!("`{v}` is not a boolean")))?
                }
                "n" => {
                    format.num_vars = Some(
                        v.parse()
                            .map_err(|_| Error::config("n", format!("`{v}` is not an integer")))?,
                    )
                }
                other => return Err(Error::config(other, "unknown manifest key")),
            }
        }
        let path = path.ok_or_else(|| Error::config("path", "missing from manifest"))?;
        Ok(DatasetManifest { path, format })
    }
}

/// Reads a CSV whose rows are timesteps and columns are variables.
pub fn load_series(path: &Path, format: &FormatSpec) -> Result<RawSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut names = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let keep = format.num_vars.unwrap_or(record.len()).min(record.len());
        if format.num_vars.is_some_and(|n| n > record.len()) {
            return Err(Error::Parse {
                row,
                message: format!("requested {} variables, row has {}", format.num_vars.unwrap(), record.len()),
            });
        }
        if i == 0 && format.has_header {
            names = Some(record.iter().take(keep).map(str::to_string).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    row,
                    message: format!("ragged row: expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        if columns.is_empty() {
            columns = vec![Vec::new(); keep];
        }
        for (c, cell) in record.iter().take(keep).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric cell `{cell}` in column {c}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("non-finite cell `{cell}` in column {c}"),
                });
            }
            columns[c].push(v);
        }
    }
    let n = columns.len();
    let l = columns.first().map_or(0, Vec::len);
    let values = Tensor::matrix(n, l, columns.into_iter().flatten().collect())?;
    Ok(RawSeries {
        values,
        variable_names: names,
    })
}

/// Per-variable mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Standard deviations below this are replaced by 1.
    pub const STD_FLOOR: f64 = 1e-8;

    /// Applies `(x − mean)/std` row-wise to an `N × T` matrix.
    pub fn normalize(&self, x: &Tensor) -> Result<Tensor> {
        self.apply(x, |v, m, s| (v - m) / s)
    }

    pub fn denormalize(&self, x: &Tensor) -> Result<Tensor> {
        self.apply(x, |v, m, s| v * s + m)
    }

    fn apply(&self, x: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
        if x.rows() != self.mean.len() {
            return Err(Error::shape("normalize", x.shape(), &[self.mean.len()]));
        }
        let mut out = x.clone();
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                out.set(r, c, f(x.get(r, c), self.mean[r], self.std[r]));
            }
        }
        Ok(out)
    }
}

/// Z-scores every variable with statistics from `fit_range` only.
pub fn zscore(raw: &RawSeries, fit_range: Range<usize>) -> Result<(RawSeries, NormStats)> {
    if fit_range.is_empty() || fit_range.end > raw.len() {
        return Err(Error::config(
            "fit_range",
            format!("{fit_range:?} is empty or exceeds series length {}", raw.len()),
        ));
    }
    let count = fit_range.len() as f64;
    let mut mean = Vec::with_capacity(raw.num_vars());
    let mut std = Vec::with_capacity(raw.num_vars());
    for v in 0..raw.num_vars() {
        let xs = &raw.values.row(v)[fit_range.clone()];
        let m = xs.iter().sum::<f64>() / count;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / count;
        let s = var.sqrt();
        mean.push(m);
        std.push(if s < NormStats::STD_FLOOR { 1.0 } else { s });
    }
    let stats = NormStats { mean, std };
    let values = stats.normalize(&raw.values)?;
    Ok((
        RawSeries {
            values,
            variable_names: raw.variable_names.clone(),
        },
        stats,
    ))
}

/// Train/validation/test proportions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

/// Timestep boundaries: train `[0, train_end)`, validation
/// `[train_end, val_end)`, test `[val_end, len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitBoundaries {
    pub train_end: usize,
    pub val_end: usize,
    pub len: usize,
}

impl SplitBoundaries {
    pub fn train(&self) -> Range<usize> {
        0..self.train_end
    }

    pub fn validation(&self) -> Range<usize> {
        self.train_end..self.val_end
    }

    pub fn test(&self) -> Range<usize> {
        self.val_end..self.len
    }
}

/// Chronological boundaries at `floor(train·L)` and `floor((train+val)·L)`.
///
/// Every segment must hold at least `min_segment` timesteps.
pub fn split(len: usize, fractions: SplitFractions, min_segment: usize) -> Result<SplitBoundaries> {
    let SplitFractions {
        train,
        validation,
        test,
    } = fractions;
    if [train, validation, test].iter().any(|f| !(0.0..=1.0).contains(f))
        || (train + validation + test - 1.0).abs() > 1e-9
    {
        return Err(Error::config(
            "split",
            format!("fractions {train}/{validation}/{test} must be in [0,1] and sum to 1"),
        ));
    }
    let train_end = (train * len as f64).floor() as usize;
    let val_end = ((train + validation) * len as f64).floor() as usize;
    let b = SplitBoundaries {
        train_end,
        val_end,
        len,
    };
    for (name, r) in [("train", b.train()), ("validation", b.validation()), ("test", b.test())] {
        if r.len() < min_segment {
            return Err(Error::config(
                "split",
                format!("{name} segment has {} timesteps, need at least {min_segment}", r.len()),
            ));
        }
    }
    Ok(b)
}

/// One `(input, target)` pair cut from a series.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// `N × T_in`, timesteps `[origin, origin + T_in)`.
    pub input: Tensor,
    /// `N × T_out`, timesteps `[origin + T_in, origin + T_in + T_out)`.
    pub target: Tensor,
    pub origin: usize,
}

/// Stride-1 windows lying entirely inside `range`.
pub fn make_windows(series: &Tensor, t_in: usize, t_out: usize, range: Range<usize>) -> Result<Vec<WindowSample>> {
    if t_in == 0 || t_out == 0 {
        return Err(Error::config("t_in", "input and output lengths must be positive"));
    }
    if range.end > series.cols() || range.len() < t_in + t_out {
        return Err(Error::config(
            "t_out",
            format!(
                "range {range:?} cannot hold a window of {t_in}+{t_out} timesteps (series length {})",
                series.cols()
            ),
        ));
    }
    let n = series.rows();
    let count = range.len() - t_in - t_out + 1;
    let cut = |start: usize, width: usize| -> Result<Tensor> {
        let mut data = Vec::with_capacity(n * width);
        for v in 0..n {
            data.extend_from_slice(&series.row(v)[start..start + width]);
        }
        Tensor::matrix(n, width, data)
    };
    (0..count)
        .map(|k| {
            let origin = range.start + k;
            Ok(WindowSample {
                input: cut(origin, t_in)?,
                target: cut(origin + t_in, t_out)?,
                origin,
            })
        })
        .collect()
}

/// Windows for each chronological segment, generated independently.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub boundaries: SplitBoundaries,
}

impl DatasetSplit {
    pub fn build(series: &Tensor, t_in: usize, t_out: usize, boundaries: SplitBoundaries) -> Result<Self> {
        Ok(DatasetSplit {
            train: make_windows(series, t_in, t_out, boundaries.train())?,
            validation: make_windows(series, t_in, t_out, boundaries.validation())?,
            test: make_windows(series, t_in, t_out, boundaries.test())?,
            boundaries,
        })
    }
}

/// A loaded, normalised and windowed dataset.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub raw: RawSeries,
    pub normalized: RawSeries,
    pub stats: NormStats,
    pub split: DatasetSplit,
}

/// Splits `raw`, fits z-score statistics on the training segment and cuts windows.
pub fn prepare(raw: RawSeries, t_in: usize, t_out: usize) -> Result<PreparedData> {
    let boundaries = split(raw.len(), SplitFractions::default(), t_in + t_out)?;
    let (normalized, stats) = zscore(&raw, boundaries.train())?;
    let split = DatasetSplit::build(&normalized.values, t_in, t_out, boundaries)?;
    Ok(PreparedData {
        raw,
        normalized,
        stats,
        split,
    })
}
