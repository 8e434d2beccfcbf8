//! Series ingestion, normalization, windowing, and a synthetic process with
//! fault injection.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GawnoError, Result};
use crate::tensor::{Tensor, TimeSeriesBatch};

pub const LABEL_COLUMN: &str = "label";

/// `T × F` multivariate series stored column-wise, with optional 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    labels: Option<Vec<u8>>,
}

impl SeriesTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, labels: Option<Vec<u8>>) -> Result<Self> {
        if names.len() != columns.len() || names.is_empty() {
            return Err(GawnoError::Data(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let len = columns[0].len();
        if columns.iter().any(|c| c.len() != len) {
            return Err(GawnoError::Data("columns have different lengths".into()));
        }
        if let Some(l) = &labels {
            if l.len() != len || l.iter().any(|&v| v > 1) {
                return Err(GawnoError::Data("labels must be 0/1, one per row".into()));
            }
        }
        if let Some((f, t)) = columns.iter().enumerate().find_map(|(f, c)| {
            c.iter().position(|v| !v.is_finite()).map(|t| (f, t))
        }) {
            return Err(GawnoError::Parse {
                row: t + 1,
                col: f + 1,
                msg: "non-finite value".into(),
            });
        }
        Ok(SeriesTable {
            names,
            columns,
            labels,
        })
    }

    /// Timesteps `T`.
    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Variables `F`.
    pub fn features(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, f: usize) -> &[f64] {
        &self.columns[f]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Option<Vec<u8>>) -> Result<()> {
        let t = SeriesTable::new(self.names.clone(), self.columns.clone(), labels)?;
        *self = t;
        Ok(())
    }

    /// Rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<SeriesTable> {
        if start > end || end > self.len() {
            return Err(GawnoError::length(
                "slice",
                format!("[{start}, {end}) outside 0..{}", self.len()),
            ));
        }
        Ok(SeriesTable {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[start..end].to_vec()).collect(),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
        })
    }

    /// The whole series as a `[1, F, T]` batch.
    pub fn to_batch(&self) -> TimeSeriesBatch {
        let data = self.columns.concat();
        Tensor::new(&[1, self.features(), self.len()], data).expect("consistent table")
    }

    /// Writes the table as CSV with a trailing label column when present.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        if self.labels.is_some() {
            header.push(LABEL_COLUMN);
        }
        w.write_record(&header).map_err(csv_io)?;
        for t in 0..self.len() {
            let mut row: Vec<String> = self.columns.iter().map(|c| c[t].to_string()).collect();
            if let Some(l) = &self.labels {
                row.push(l[t].to_string());
            }
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> GawnoError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => GawnoError::Io(io),
        other => GawnoError::Data(format!("{other:?}")),
    }
}

/// Reads a CSV file; see [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>) -> Result<SeriesTable> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        GawnoError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.as_ref().display()),
        ))
    })?;
    read_csv(file)
}

/// Parses a header row of names and a numeric body. A final column named
/// `label` is split off as 0/1 labels. Row numbers in errors are 1-based file
/// lines (the header is line 1), columns are 1-based.
pub fn read_csv<R: Read>(reader: R) -> Result<SeriesTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, 1, e))?
        .iter()
        .map(String::from)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(GawnoError::Parse {
            row: 1,
            col: 1,
            msg: "empty file".into(),
        });
    }
    let has_label = header.last().map(String::as_str) == Some(LABEL_COLUMN);
    let f = header.len() - usize::from(has_label);
    if f == 0 {
        return Err(GawnoError::Parse {
            row: 1,
            col: 1,
            msg: "no variable columns".into(),
        });
    }
    let mut columns = vec![Vec::new(); f];
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(row, 1, e))?;
        if rec.len() != header.len() {
            return Err(GawnoError::Parse {
                row,
                col: rec.len().min(header.len()) + 1,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| GawnoError::Parse {
                row,
                col: c + 1,
                msg: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(GawnoError::Parse {
                    row,
                    col: c + 1,
                    msg: format!("`{cell}` is not finite"),
                });
            }
            if c < f {
                columns[c].push(v);
            } else if v == 0.0 || v == 1.0 {
                labels.push(v as u8);
            } else {
                return Err(GawnoError::Parse {
                    row,
                    col: c + 1,
                    msg: format!("label `{cell}` is not 0 or 1"),
                });
            }
        }
    }
    if columns[0].is_empty() {
        return Err(GawnoError::Parse {
            row: 2,
            col: 1,
            msg: "no data rows".into(),
        });
    }
    log::debug!("read {} rows of {f} variables", columns[0].len());
    SeriesTable::new(
        header[..f].to_vec(),
        columns,
        has_label.then_some(labels),
    )
}

fn parse_err(row: usize, col: usize, e: csv::Error) -> GawnoError {
    GawnoError::Parse {
        row,
        col,
        msg: e.to_string(),
    }
}

/// Per-variable statistics of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Sample mean and `(n−1)`-denominator standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn fit_norm(train: &SeriesTable) -> Result<NormStats> {
    let mut s = NormStats {
        mean: Vec::new(),
        std: Vec::new(),
        min: Vec::new(),
        max: Vec::new(),
    };
    for (name, col) in train.names().iter().zip(train.columns()) {
        let (m, sd) = mean_std(col);
        if !(sd > 0.0) {
            return Err(GawnoError::Data(format!("variable `{name}` is constant")));
        }
        s.mean.push(m);
        s.std.push(sd);
        s.min.push(col.iter().copied().fold(f64::INFINITY, f64::min));
        s.max.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(s)
}

impl NormStats {
    fn z_range(&self, f: usize) -> (f64, f64) {
        (
            (self.min[f] - self.mean[f]) / self.std[f],
            (self.max[f] - self.mean[f]) / self.std[f],
        )
    }

    fn check(&self, x: &SeriesTable) -> Result<()> {
        if x.features() != self.mean.len() {
            return Err(GawnoError::Data(format!(
                "table has {} variables, statistics have {}",
                x.features(),
                self.mean.len()
            )));
        }
        Ok(())
    }

    /// Normalized value of `v` for variable `f`.
    pub fn forward(&self, f: usize, v: f64) -> f64 {
        let (lo, hi) = self.z_range(f);
        let z = (v - self.mean[f]) / self.std[f];
        2.0 * (z - lo) / (hi - lo) - 1.0
    }

    pub fn inverse(&self, f: usize, y: f64) -> f64 {
        let (lo, hi) = self.z_range(f);
        let z = (y + 1.0) * 0.5 * (hi - lo) + lo;
        z * self.std[f] + self.mean[f]
    }

    /// Size of one raw standard deviation of variable `f` in normalized units.
    pub fn sigma_scale(&self, f: usize) -> f64 {
        let (lo, hi) = self.z_range(f);
        2.0 / (hi - lo)
    }
}

/// Z-scores each variable with the training statistics, then maps the
/// z-scored training range affinely onto `[−1, 1]`.
pub fn normalize(x: &SeriesTable, stats: &NormStats) -> Result<SeriesTable> {
    stats.check(x)?;
    map_columns(x, |f, v| stats.forward(f, v))
}

pub fn denormalize(x: &SeriesTable, stats: &NormStats) -> Result<SeriesTable> {
    stats.check(x)?;
    map_columns(x, |f, v| stats.inverse(f, v))
}

fn map_columns(x: &SeriesTable, g: impl Fn(usize, f64) -> f64) -> Result<SeriesTable> {
    let columns = x
        .columns()
        .iter()
        .enumerate()
        .map(|(f, c)| c.iter().map(|&v| g(f, v)).collect())
        .collect();
    SeriesTable::new(x.names().to_vec(), columns, x.labels.clone())
}

/// Fixed-length windows of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct Windows {
    /// `[K, F, n]`.
    pub batch: TimeSeriesBatch,
    pub starts: Vec<usize>,
    /// A window is faulty when any timestep it covers is.
    pub labels: Option<Vec<bool>>,
}

impl Windows {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Windows `idx` as a `[idx.len(), F, n]` batch.
    pub fn select(&self, idx: &[usize]) -> Result<TimeSeriesBatch> {
        let items: Vec<Tensor> = idx.iter().map(|&i| self.batch.batch_item(i)).collect();
        Tensor::stack(&items)
    }
}

/// `⌊(T−n)/s⌋ + 1` windows, window `k` covering `[k·s, k·s + n)`.
pub fn window(x: &SeriesTable, n: usize, s: usize) -> Result<Windows> {
    if n == 0 || s == 0 {
        return Err(GawnoError::length("window", "length and stride must be positive"));
    }
    if n > x.len() {
        return Err(GawnoError::length(
            "window",
            format!("window length {n} exceeds series length {}", x.len()),
        ));
    }
    let k = (x.len() - n) / s + 1;
    let f = x.features();
    let starts: Vec<usize> = (0..k).map(|i| i * s).collect();
    let mut data = Vec::with_capacity(k * f * n);
    for &st in &starts {
        for c in x.columns() {
            data.extend_from_slice(&c[st..st + n]);
        }
    }
    let labels = x
        .labels()
        .map(|l| starts.iter().map(|&st| l[st..st + n].contains(&1)).collect());
    Ok(Windows {
        batch: Tensor::new(&[k, f, n], data)?,
        starts,
        labels,
    })
}

/// Parameters of the synthetic process.
///
/// Each channel is `offset_f + Σ_k gain_{f,k}·sin(2πt/P_k + φ_k + δ_{f,k})`
/// plus stationary AR(1) noise. The latent phases `φ_k` are shared, the
/// channel gains and phase offsets `δ` are per channel, so channels are
/// positively correlated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub features: usize,
    pub len: usize,
    /// Latent sinusoid periods in timesteps.
    pub periods: Vec<f64>,
    /// Channel phase offsets are drawn from `U(−spread, spread)` radians.
    pub phase_spread: f64,
    pub gain_min: f64,
    pub gain_max: f64,
    /// Stationary standard deviation of the AR(1) noise; 0 disables it.
    pub noise_std: f64,
    pub ar_coef: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            features: 5,
            len: 480,
            periods: vec![64.0, 32.0],
            phase_spread: 0.5,
            gain_min: 0.5,
            gain_max: 1.5,
            noise_std: 0.2,
            ar_coef: 0.7,
        }
    }
}

impl SynthConfig {
    pub fn new(features: usize, len: usize) -> Self {
        SynthConfig {
            features,
            len,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features < 2 {
            return Err(GawnoError::Config("synthetic process needs at least 2 variables".into()));
        }
        if self.len == 0 || self.periods.is_empty() || self.periods.iter().any(|&p| !(p > 0.0)) {
            return Err(GawnoError::Config(
                "length and every period must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.ar_coef.abs()) || self.noise_std < 0.0 {
            return Err(GawnoError::Config(
                "need |ar_coef| < 1 and noise_std >= 0".into(),
            ));
        }
        if !(self.gain_min <= self.gain_max) {
            return Err(GawnoError::Config("gain_min exceeds gain_max".into()));
        }
        Ok(())
    }
}

/// Deterministic multichannel series from `cfg` and `seed`. Variables are
/// named `x1..xF`.
pub fn synth_process(cfg: &SynthConfig, seed: u64) -> Result<SeriesTable> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    let latent: Vec<f64> = cfg.periods.iter().map(|_| rng.gen_range(0.0..tau)).collect();
    let mut columns = Vec::with_capacity(cfg.features);
    for _ in 0..cfg.features {
        let offset: f64 = rng.sample(StandardNormal);
        let chan: Vec<(f64, f64)> = cfg
            .periods
            .iter()
            .map(|_| {
                let g = if cfg.gain_max > cfg.gain_min {
                    rng.gen_range(cfg.gain_min..cfg.gain_max)
                } else {
                    cfg.gain_min
                };
                let d = if cfg.phase_spread > 0.0 {
                    rng.gen_range(-cfg.phase_spread..cfg.phase_spread)
                } else {
                    0.0
                };
                (g, d)
            })
            .collect();
        let innov = (1.0 - cfg.ar_coef * cfg.ar_coef).sqrt() * cfg.noise_std;
        let mut e: f64 = cfg.noise_std * rng.sample::<f64, _>(StandardNormal);
        let mut col = Vec::with_capacity(cfg.len);
        for t in 0..cfg.len {
            let mut v = offset;
            for ((p, phi), (g, d)) in cfg.periods.iter().zip(&latent).zip(&chan) {
                v += g * (tau * t as f64 / p + phi + d).sin();
            }
            if cfg.noise_std > 0.0 {
                if t > 0 {
                    e = cfg.ar_coef * e + innov * rng.sample::<f64, _>(StandardNormal);
                }
                v += e;
            }
            col.push(v);
        }
        columns.push(col);
    }
    let names = (1..=cfg.features).map(|i| format!("x{i}")).collect();
    SeriesTable::new(names, columns, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Step,
    RandomVariation,
    SlowDrift,
    Sticking,
}

impl std::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FaultKind::Step => "step",
            FaultKind::RandomVariation => "random_variation",
            FaultKind::SlowDrift => "slow_drift",
            FaultKind::Sticking => "sticking",
        })
    }
}

impl std::str::FromStr for FaultKind {
    type Err = GawnoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(FaultKind::Step),
            "random_variation" => Ok(FaultKind::RandomVariation),
            "slow_drift" => Ok(FaultKind::SlowDrift),
            "sticking" => Ok(FaultKind::Sticking),
            _ => Err(GawnoError::Config(format!("unknown fault kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub target: usize,
    #[serde(default = "default_onset")]
    pub onset: usize,
    /// In units of the target variable's standard deviation.
    pub magnitude: f64,
}

fn default_onset() -> usize {
    160
}

impl FaultSpec {
    pub fn validate(&self, x: &SeriesTable) -> Result<()> {
        if self.target >= x.features() {
            return Err(GawnoError::Index {
                index: self.target,
                len: x.features(),
            });
        }
        if self.onset >= x.len() {
            return Err(GawnoError::Config(format!(
                "onset {} outside series of length {}",
                self.onset,
                x.len()
            )));
        }
        if !(self.magnitude >= 0.0) || !self.magnitude.is_finite() {
            return Err(GawnoError::Config("fault magnitude must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Applies `spec` to its target variable and labels every row from the onset
/// on as faulty. `σ` is the sample standard deviation of the unfaulted target
/// column. Other columns are untouched.
pub fn inject_fault(x: &SeriesTable, spec: &FaultSpec, seed: u64) -> Result<SeriesTable> {
    spec.validate(x)?;
    let mut columns = x.columns().to_vec();
    let col = &mut columns[spec.target];
    let (_, sigma) = mean_std(col);
    let amp = spec.magnitude * sigma;
    let (onset, t_end) = (spec.onset, col.len());
    match spec.kind {
        FaultKind::Step => col[onset..].iter_mut().for_each(|v| *v += amp),
        FaultKind::RandomVariation => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, amp).map_err(|e| GawnoError::Config(e.to_string()))?;
            col[onset..].iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        }
        FaultKind::SlowDrift => {
            let span = (t_end - 1 - onset).max(1) as f64;
            for (k, v) in col[onset..].iter_mut().enumerate() {
                *v += amp * k as f64 / span;
            }
        }
        FaultKind::Sticking => {
            let stuck = col[onset];
            col[onset..].iter_mut().for_each(|v| *v = stuck);
        }
    }
    let mut labels = x.labels().map(<[u8]>::to_vec).unwrap_or_else(|| vec![0; t_end]);
    labels[onset..].iter_mut().for_each(|l| *l = 1);
    SeriesTable::new(x.names().to_vec(), columns, Some(labels))
}
