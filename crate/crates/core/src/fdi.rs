//! Fault detection and isolation from generator reconstruction errors, and
//! the evaluation metrics.
//!
//! A window is reconstructed by the generator output closest (in squared
//! error) to it among a fixed, seeded bank of noise draws. Per-variable
//! squared residuals are smoothed with a centered moving average; a Gaussian
//! fitted per variable on normal data gives the thresholds.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SeriesTable;
use crate::error::{GawnoError, Result};
use crate::network::{generate, GeneratorSpec};
use crate::optim::ParamStore;
use crate::par::Exec;
use crate::tensor::{Tensor, TimeSeriesBatch};

pub const DEFAULT_DRAWS: usize = 64;
pub const DEFAULT_K: f64 = 3.0;
pub const SMOOTH_WINDOW: usize = 5;

/// Generator outputs for a fixed bank of noise draws.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    spec: GeneratorSpec,
    candidates: Tensor,
    exec: Exec,
}

/// Result of matching a batch against the candidate bank.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub xhat: TimeSeriesBatch,
    /// Index of the chosen draw per window.
    pub chosen: Vec<usize>,
    /// Squared error of the chosen draw per window.
    pub sq_error: Vec<f64>,
}

/// The `draws` noise tensors `z_i ~ N(0, 1)` of shape `[draws, F, n]`.
pub fn noise_bank(spec: &GeneratorSpec, draws: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(&[draws, spec.features, spec.n], &mut rng)
}

impl Reconstructor {
    pub fn new(spec: &GeneratorSpec, params: &ParamStore, draws: usize, seed: u64) -> Result<Self> {
        Self::with_exec(Exec::default(), spec, params, draws, seed)
    }

    pub fn with_exec(
        exec: Exec,
        spec: &GeneratorSpec,
        params: &ParamStore,
        draws: usize,
        seed: u64,
    ) -> Result<Self> {
        if draws == 0 {
            return Err(GawnoError::Config("need at least one noise draw".into()));
        }
        let z = noise_bank(spec, draws, seed);
        // Generate in small batches so the pieces can run concurrently.
        const CHUNK: usize = 16;
        let pieces = exec.map_range(draws.div_ceil(CHUNK), |c| {
            let idx: Vec<Tensor> = (c * CHUNK..((c + 1) * CHUNK).min(draws))
                .map(|i| z.batch_item(i))
                .collect();
            generate(spec, params, &Tensor::stack(&idx)?)
        });
        let mut items = Vec::with_capacity(draws);
        for p in pieces {
            let p = p?;
            items.extend((0..p.dim(0)).map(|i| p.batch_item(i)));
        }
        Ok(Reconstructor {
            spec: spec.clone(),
            candidates: Tensor::stack(&items)?,
            exec,
        })
    }

    pub fn candidates(&self) -> &Tensor {
        &self.candidates
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Best-of-N reconstruction of each window in `x: [B, F, n]`. Ties go to
    /// the lower draw index.
    pub fn reconstruct(&self, x: &TimeSeriesBatch) -> Result<Reconstruction> {
        let (b, f, n) = x.dims3("reconstruct")?;
        if f != self.spec.features || n != self.spec.n {
            return Err(GawnoError::dim(
                "reconstruct",
                x.shape(),
                &[b, self.spec.features, self.spec.n],
            ));
        }
        let size = f * n;
        let cand = self.candidates.data();
        let draws = self.candidates.dim(0);
        let best = self.exec.map_range(b, |i| {
            let xi = &x.data()[i * size..(i + 1) * size];
            let mut arg = (0, f64::INFINITY);
            for d in 0..draws {
                let e: f64 = cand[d * size..(d + 1) * size]
                    .iter()
                    .zip(xi)
                    .map(|(c, v)| (c - v) * (c - v))
                    .sum();
                if e < arg.1 {
                    arg = (d, e);
                }
            }
            arg
        });
        let mut data = Vec::with_capacity(b * size);
        for &(d, _) in &best {
            data.extend_from_slice(&cand[d * size..(d + 1) * size]);
        }
        Ok(Reconstruction {
            xhat: Tensor::new(&[b, f, n], data)?,
            chosen: best.iter().map(|p| p.0).collect(),
            sq_error: best.iter().map(|p| p.1).collect(),
        })
    }

    /// Per-variable squared residual series of a whole normalized table.
    ///
    /// The table is cut into windows at stride `n`, plus one window aligned
    /// to the end when `n` does not divide `T`; overlapping reconstructions
    /// are averaged.
    pub fn residuals(&self, x: &SeriesTable) -> Result<Vec<Vec<f64>>> {
        let (t_len, f, n) = (x.len(), x.features(), self.spec.n);
        if f != self.spec.features {
            return Err(GawnoError::dim("residuals", &[t_len, f], &[t_len, self.spec.features]));
        }
        if t_len < n {
            return Err(GawnoError::length(
                "residuals",
                format!("series of length {t_len} is shorter than the window {n}"),
            ));
        }
        let mut starts: Vec<usize> = (0..=(t_len - n)).step_by(n).collect();
        if t_len % n != 0 {
            starts.push(t_len - n);
        }
        let mut data = Vec::with_capacity(starts.len() * f * n);
        for &s in &starts {
            for c in x.columns() {
                data.extend_from_slice(&c[s..s + n]);
            }
        }
        let batch = Tensor::new(&[starts.len(), f, n], data)?;
        let rec = self.reconstruct(&batch)?;
        let mut sum = vec![vec![0.0; t_len]; f];
        let mut count = vec![0u32; t_len];
        for (w, &s) in starts.iter().enumerate() {
            for (v, row) in sum.iter_mut().enumerate() {
                let off = (w * f + v) * n;
                for (k, acc) in row[s..s + n].iter_mut().enumerate() {
                    *acc += rec.xhat.data()[off + k];
                }
            }
            count[s..s + n].iter_mut().for_each(|c| *c += 1);
        }
        Ok(sum
            .into_iter()
            .zip(x.columns())
            .map(|(row, col)| {
                row.iter()
                    .zip(col)
                    .zip(&count)
                    .map(|((s, v), &c)| {
                        let d = v - s / c as f64;
                        d * d
                    })
                    .collect()
            })
            .collect())
    }
}

/// Convenience wrapper: best-of-`draws` reconstruction of `x`.
pub fn reconstruct(
    x: &TimeSeriesBatch,
    params: &ParamStore,
    spec: &GeneratorSpec,
    draws: usize,
    seed: u64,
) -> Result<TimeSeriesBatch> {
    Ok(Reconstructor::new(spec, params, draws, seed)?
        .reconstruct(x)?
        .xhat)
}

/// Centered moving average of odd width `w`; near the ends the average is
/// taken over the available samples.
pub fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    (0..x.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Per-variable Gaussian on normal-data errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdModel {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub k: f64,
}

impl ThresholdModel {
    pub fn variable_threshold(&self, f: usize) -> f64 {
        self.mu[f] + self.k * self.sigma[f]
    }

    /// Mean over variables of `μ_f + k·σ_f`.
    pub fn global_threshold(&self) -> f64 {
        (0..self.mu.len())
            .map(|f| self.variable_threshold(f))
            .sum::<f64>()
            / self.mu.len() as f64
    }

    pub fn with_k(&self, k: f64) -> Self {
        ThresholdModel { k, ..self.clone() }
    }
}

/// Sample mean and `(n−1)` standard deviation of each variable's errors.
pub fn fit_threshold(normal_errors: &[Vec<f64>], k: f64) -> Result<ThresholdModel> {
    if normal_errors.is_empty() {
        return Err(GawnoError::InsufficientData("no variables".into()));
    }
    let mut mu = Vec::new();
    let mut sigma = Vec::new();
    for (f, e) in normal_errors.iter().enumerate() {
        if e.len() < 2 {
            return Err(GawnoError::InsufficientData(format!(
                "variable {f} has {} error samples, need 2",
                e.len()
            )));
        }
        let (m, s) = crate::data::mean_std(e);
        mu.push(m);
        sigma.push(s);
    }
    Ok(ThresholdModel { mu, sigma, k })
}

/// Smoothed per-variable errors of a normal table, then [`fit_threshold`].
pub fn fit_threshold_on(rec: &Reconstructor, normal: &SeriesTable, k: f64) -> Result<ThresholdModel> {
    let smoothed = smooth_all(&rec.residuals(normal)?);
    fit_threshold(&smoothed, k)
}

fn smooth_all(raw: &[Vec<f64>]) -> Vec<Vec<f64>> {
    raw.iter().map(|r| moving_average(r, SMOOTH_WINDOW)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultReport {
    pub names: Vec<String>,
    /// Mean over variables of the smoothed squared residuals.
    pub score: Vec<f64>,
    pub flags: Vec<bool>,
    /// Smoothed squared residual per variable.
    pub residuals: Vec<Vec<f64>>,
    pub var_flags: Vec<Vec<bool>>,
    pub onset: Option<usize>,
}

impl FaultReport {
    pub fn len(&self) -> usize {
        self.score.len()
    }

    pub fn is_empty(&self) -> bool {
        self.score.is_empty()
    }

    pub fn flagged_fraction(&self) -> f64 {
        if self.flags.is_empty() {
            return 0.0;
        }
        self.flags.iter().filter(|&&f| f).count() as f64 / self.flags.len() as f64
    }

    /// Columns `t, score, flag, residual_<var>…, flag_<var>…`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "score".into(), "flag".into()];
        header.extend(self.names.iter().map(|n| format!("residual_{n}")));
        header.extend(self.names.iter().map(|n| format!("flag_{n}")));
        w.write_record(&header).map_err(csv_err)?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string(), self.score[t].to_string(), u8::from(self.flags[t]).to_string()];
            row.extend(self.residuals.iter().map(|r| r[t].to_string()));
            row.extend(self.var_flags.iter().map(|f| u8::from(f[t]).to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<FaultReport> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| parse(1, 1, e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        if header.len() < 3 || header[..3] != ["t", "score", "flag"] || (header.len() - 3) % 2 != 0 {
            return Err(parse(1, 1, "expected columns t, score, flag, residual_*, flag_*".into()));
        }
        let f = (header.len() - 3) / 2;
        let names: Vec<String> = header[3..3 + f]
            .iter()
            .map(|h| h.strip_prefix("residual_").unwrap_or(h).to_string())
            .collect();
        let mut rep = FaultReport {
            names,
            score: Vec::new(),
            flags: Vec::new(),
            residuals: vec![Vec::new(); f],
            var_flags: vec![Vec::new(); f],
            onset: None,
        };
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| parse(row, 1, e.to_string()))?;
            let num = |c: usize| -> Result<f64> {
                rec.get(c)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse(row, c + 1, "not a finite number".into()))
            };
            let flag = |c: usize| -> Result<bool> {
                match num(c)? {
                    v if v == 0.0 => Ok(false),
                    v if v == 1.0 => Ok(true),
                    _ => Err(parse(row, c + 1, "flag must be 0 or 1".into())),
                }
            };
            rep.score.push(num(1)?);
            rep.flags.push(flag(2)?);
            for v in 0..f {
                rep.residuals[v].push(num(3 + v)?);
                rep.var_flags[v].push(flag(3 + f + v)?);
            }
        }
        rep.onset = rep.flags.iter().position(|&b| b);
        Ok(rep)
    }
}

fn csv_err(e: csv::Error) -> GawnoError {
    GawnoError::Data(e.to_string())
}

fn parse(row: usize, col: usize, msg: String) -> GawnoError {
    GawnoError::Parse { row, col, msg }
}

/// Builds a report from raw per-variable squared residuals.
pub fn detect_from_errors(
    names: &[String],
    raw: &[Vec<f64>],
    model: &ThresholdModel,
) -> Result<FaultReport> {
    if raw.len() != model.mu.len() || names.len() != raw.len() {
        return Err(GawnoError::dim(
            "detect",
            &[raw.len(), names.len()],
            &[model.mu.len()],
        ));
    }
    let residuals = smooth_all(raw);
    let t_len = residuals.first().map_or(0, Vec::len);
    let f = residuals.len() as f64;
    let score: Vec<f64> = (0..t_len)
        .map(|t| residuals.iter().map(|r| r[t]).sum::<f64>() / f)
        .collect();
    let thr = model.global_threshold();
    let flags: Vec<bool> = score.iter().map(|&s| s > thr).collect();
    let var_flags = residuals
        .iter()
        .enumerate()
        .map(|(v, r)| {
            let tv = model.variable_threshold(v);
            r.iter().map(|&e| e > tv).collect()
        })
        .collect();
    Ok(FaultReport {
        names: names.to_vec(),
        onset: flags.iter().position(|&b| b),
        score,
        flags,
        residuals,
        var_flags,
    })
}

/// Reconstructs a normalized table and flags timesteps whose smoothed score
/// exceeds the global threshold.
pub fn detect(x: &SeriesTable, model: &ThresholdModel, rec: &Reconstructor) -> Result<FaultReport> {
    detect_from_errors(x.names(), &rec.residuals(x)?, model)
}

/// Ranks variables by their peak standardized residual `(e − μ)/σ` over the
/// flagged timesteps, highest first, ties by index. Zero `σ` maps a positive
/// excess to `+∞`. An empty flagged region yields an empty ranking.
pub fn isolate(report: &FaultReport, model: &ThresholdModel) -> Vec<(usize, f64)> {
    let flagged: Vec<usize> = (0..report.len()).filter(|&t| report.flags[t]).collect();
    if flagged.is_empty() {
        return Vec::new();
    }
    let mut peaks: Vec<(usize, f64)> = report
        .residuals
        .iter()
        .enumerate()
        .map(|(v, r)| {
            let peak = flagged
                .iter()
                .map(|&t| standardize(r[t], model.mu[v], model.sigma[v]))
                .fold(f64::NEG_INFINITY, f64::max);
            (v, peak)
        })
        .collect();
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("no NaN peaks"));
    peaks
}

fn standardize(e: f64, mu: f64, sigma: f64) -> f64 {
    let d = e - mu;
    if sigma > 0.0 {
        d / sigma
    } else if d > 0.0 {
        f64::INFINITY
    } else if d < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn from_flags(pred: &[bool], labels: &[u8]) -> Result<Self> {
        if pred.len() != labels.len() {
            return Err(GawnoError::dim("confusion", &[pred.len()], &[labels.len()]));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &l) in pred.iter().zip(labels) {
            match (p, l != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Notes about zero denominators that were defined as 0.
    pub warnings: Vec<String>,
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let mut warnings = Vec::new();
    let mut ratio = |num: u64, den: u64, what: &str| {
        if den == 0 {
            warnings.push(format!("{what} undefined (zero denominator), reported as 0"));
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp, "precision");
    let recall = ratio(c.tp, c.tp + c.fn_, "recall");
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        if c.tp == 0 {
            warnings.push("f1 undefined (precision + recall = 0), reported as 0".into());
        }
        0.0
    };
    Metrics {
        precision,
        recall,
        f1,
        warnings,
    }
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ordered
/// correctly, ties counting one half. Computed from midranks in integer
/// half-units, so it equals the pairwise count exactly.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(GawnoError::dim("auc_roc", &[scores.len()], &[labels.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GawnoError::Data("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l != 0).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(GawnoError::UndefinedAuc(format!(
            "{n_pos} positive and {n_neg} negative samples"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN"));
    // Twice the positive rank sum, with 1-based midranks for tied groups.
    let mut rank2_pos: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u64;
        let pos = order[i..=j].iter().filter(|&&k| labels[k] != 0).count() as u64;
        rank2_pos += mid2 * pos;
        i = j + 1;
    }
    let u2 = rank2_pos - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn brute_auc(s: &[f64], l: &[u8]) -> f64 {
        let mut wins2 = 0u64;
        let mut pairs = 0u64;
        for (i, &li) in l.iter().enumerate() {
            for (j, &lj) in l.iter().enumerate() {
                if li == 1 && lj == 0 {
                    pairs += 1;
                    wins2 += if s[i] > s[j] {
                        2
                    } else if s[i] == s[j] {
                        1
                    } else {
                        0
                    };
                }
            }
        }
        wins2 as f64 / (2 * pairs) as f64
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionCounts { tp: 8, fp: 2, fn_: 2, tn: 0 });
        assert_eq!((m.precision, m.recall), (0.8, 0.8));
        assert!((m.f1 - 0.8).abs() < 1e-15);
        let m = metrics(&ConfusionCounts { tp: 5, fp: 0, fn_: 0, tn: 3 });
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = metrics(&ConfusionCounts { tp: 3, fp: 1, fn_: 2, tn: 0 });
        assert_eq!((m.precision, m.recall), (0.75, 0.6));
        assert!((m.f1 - 2.0 * 0.45 / 1.35).abs() < 1e-15);
        let m = metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 4, tn: 1 });
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.3; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(matches!(auc_roc(&[0.1, 0.2], &[1, 1]), Err(GawnoError::UndefinedAuc(_))));
    }

    #[test]
    fn threshold_examples() {
        let m = fit_threshold(&[vec![0.7; 4]], 3.0).unwrap();
        assert_eq!((m.mu[0], m.sigma[0], m.global_threshold()), (0.7, 0.0, 0.7));
        let m = fit_threshold(&[vec![0.0, 2.0]], 3.0).unwrap();
        assert_eq!(m.mu[0], 1.0);
        assert!((m.sigma[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!((m.global_threshold() - (1.0 + 3.0 * 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(m.with_k(0.0).global_threshold(), 1.0);
        assert!(matches!(
            fit_threshold(&[vec![1.0]], 3.0),
            Err(GawnoError::InsufficientData(_))
        ));
    }

    #[test]
    fn moving_average_edges() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = moving_average(&x, 5);
        assert_eq!(y, vec![2.0, 2.5, 3.0, 4.0, 4.5, 5.0]);
    }

    fn names(f: usize) -> Vec<String> {
        (0..f).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn quiet_scores_give_no_onset() {
        let raw = vec![vec![0.1; 20]; 3];
        let model = fit_threshold(&vec![vec![0.1, 0.3]; 3], 3.0).unwrap();
        let rep = detect_from_errors(&names(3), &raw, &model).unwrap();
        assert!(rep.onset.is_none() && rep.flags.iter().all(|&f| !f));
        assert!(isolate(&rep, &model).is_empty());
    }

    #[test]
    fn isolation_ties_and_zero_sigma() {
        let mut raw = vec![vec![0.0; 10]; 3];
        for r in &mut raw {
            r[5] = 10.0;
        }
        let model = ThresholdModel {
            mu: vec![0.1; 3],
            sigma: vec![0.2; 3],
            k: 3.0,
        };
        let rep = detect_from_errors(&names(3), &raw, &model).unwrap();
        let order: Vec<usize> = isolate(&rep, &model).iter().map(|p| p.0).collect();
        assert_eq!(order, vec![0, 1, 2]);

        let model = ThresholdModel {
            mu: vec![0.1, 0.1, 0.1],
            sigma: vec![5.0, 5.0, 0.0],
            k: 0.0,
        };
        let rep = detect_from_errors(&names(3), &raw, &model).unwrap();
        let ranked = isolate(&rep, &model);
        assert_eq!(ranked[0], (2, f64::INFINITY));
    }

    #[test]
    fn report_csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<Vec<f64>> = (0..2).map(|_| (0..30).map(|_| rng.gen::<f64>()).collect()).collect();
        let model = fit_threshold(&raw, 1.0).unwrap();
        let rep = detect_from_errors(&names(2), &raw, &model).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 3 + 2 * 2);
        assert_eq!(FaultReport::read_csv(buf.as_slice()).unwrap(), rep);
    }

    #[test]
    fn best_of_n_reconstruction() {
        let spec = GeneratorSpec::tiny(2, 64);
        let params = spec.init_params(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let one = Reconstructor::new(&spec, &params, 1, 5).unwrap();
        let z0 = noise_bank(&spec, 1, 5);
        let g0 = generate(&spec, &params, &z0).unwrap();
        let x = Tensor::randn(&[3, 2, 64], &mut ChaCha8Rng::seed_from_u64(1));
        let r = one.reconstruct(&x).unwrap();
        for i in 0..3 {
            assert_eq!(r.xhat.batch_item(i), g0);
        }

        let rec = Reconstructor::new(&spec, &params, 8, 5).unwrap();
        let exact = rec.candidates().batch_item(6);
        let r = rec.reconstruct(&exact).unwrap();
        assert_eq!((r.chosen[0], r.sq_error[0]), (6, 0.0));

        let r = rec.reconstruct(&x).unwrap();
        for i in 0..3 {
            let xi = x.batch_item(i);
            for d in 0..8 {
                let e = rec.candidates().batch_item(d);
                let err: f64 = e.data().iter().zip(xi.data()).map(|(a, b)| (a - b) * (a - b)).sum();
                assert!(r.sq_error[i] <= err);
            }
        }
        let seq = Reconstructor::with_exec(Exec::Sequential, &spec, &params, 8, 5).unwrap();
        assert_eq!(seq.candidates(), rec.candidates());
    }

    #[test]
    fn residual_series_covers_tail() {
        let spec = GeneratorSpec::tiny(2, 64);
        let params = spec.init_params(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let rec = Reconstructor::new(&spec, &params, 4, 0).unwrap();
        let cand = rec.candidates().batch_item(2);
        // Two copies of candidate 2 then 32 more of its tail: every window's
        // best match is candidate 2 except the overlapping tail window.
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|f| {
                let c = &cand.data()[f * 64..(f + 1) * 64];
                [c, c].concat()
            })
            .collect();
        let table = SeriesTable::new(names(2), cols, None).unwrap();
        let res = rec.residuals(&table).unwrap();
        assert!(res.iter().flatten().all(|&e| e == 0.0));
        let short = table.slice(0, 100).unwrap();
        let res = rec.residuals(&short).unwrap();
        assert_eq!(res[0].len(), 100);
        assert!(res[0][..36].iter().all(|&e| e == 0.0));
        assert!(rec.residuals(&table.slice(0, 63).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(seed in any::<u64>(), n in 2usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..6) as f64) / 5.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            prop_assert_eq!(auc_roc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
        }

        #[test]
        fn f1_bounded_by_min(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let m = metrics(&ConfusionCounts { tp, fp, fn_, tn: 0 });
            prop_assert!(m.f1 <= 2.0 * m.precision.min(m.recall) + 1e-15);
            prop_assert!(m.f1 <= m.precision + m.recall + 1e-15);
        }

        #[test]
        fn raising_k_never_adds_flags(seed in any::<u64>(), k in 0.0f64..4.0, dk in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<Vec<f64>> = (0..3).map(|_| (0..40).map(|_| rng.gen::<f64>()).collect()).collect();
            let base = fit_threshold(&raw, k).unwrap();
            let a = detect_from_errors(&names(3), &raw, &base).unwrap();
            let b = detect_from_errors(&names(3), &raw, &base.with_k(k + dk)).unwrap();
            let count = |r: &FaultReport| r.flags.iter().filter(|&&f| f).count();
            prop_assert!(count(&b) <= count(&a));
        }

        #[test]
        fn detection_commutes_with_variable_permutation(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<Vec<f64>> = (0..4).map(|_| (0..30).map(|_| rng.gen::<f64>()).collect()).collect();
            let model = fit_threshold(&raw, 1.0).unwrap();
            let perm = [2usize, 0, 3, 1];
            let raw_p: Vec<Vec<f64>> = perm.iter().map(|&p| raw[p].clone()).collect();
            let names_p: Vec<String> = perm.iter().map(|&p| format!("v{p}")).collect();
            let model_p = ThresholdModel {
                mu: perm.iter().map(|&p| model.mu[p]).collect(),
                sigma: perm.iter().map(|&p| model.sigma[p]).collect(),
                k: 1.0,
            };
            let a = detect_from_errors(&names(4), &raw, &model).unwrap();
            let b = detect_from_errors(&names_p, &raw_p, &model_p).unwrap();
            for t in 0..30 {
                prop_assert!((a.score[t] - b.score[t]).abs() <= 1e-12);
            }
            for (i, &p) in perm.iter().enumerate() {
                prop_assert_eq!(&a.residuals[p], &b.residuals[i]);
                prop_assert_eq!(&a.var_flags[p], &b.var_flags[i]);
            }
        }
    }
}
