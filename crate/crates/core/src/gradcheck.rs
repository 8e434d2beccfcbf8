//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values on fresh tapes, so it
//! stays independent of the backward rules it checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{GawnoError, Result};
use crate::par::Exec;
use crate::tensor::Tensor;

/// Gradient magnitudes below this are compared in absolute rather than
/// relative terms; central differences cannot resolve them relatively.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// `(input, flat entry)` of the worst mismatch.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Checks `f` (which must return a scalar) against central differences with
/// the given step for every entry of every input.
pub fn check_gradients<F>(inputs: &[Tensor], step: f64, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync + Send,
{
    check_gradients_with(Exec::default(), inputs, step, f)
}

pub fn check_gradients_with<F>(
    exec: Exec,
    inputs: &[Tensor],
    step: f64,
    f: F,
) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync + Send,
{
    check_entries(exec, inputs, None, step, f)
}

/// Like [`check_gradients`] but probes at most `per_input` entries of each
/// input, chosen uniformly without replacement under `seed`. Large networks
/// have too many scalars for an exhaustive sweep.
pub fn check_gradients_sampled<F>(
    inputs: &[Tensor],
    per_input: usize,
    seed: u64,
    step: f64,
    f: F,
) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync + Send,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        let k = per_input.min(t.numel());
        let mut picked = rand::seq::index::sample(&mut rng, t.numel(), k).into_vec();
        picked.sort_unstable();
        entries.extend(picked.into_iter().map(|j| (i, j)));
    }
    check_entries(Exec::default(), inputs, Some(&entries), step, f)
}

fn check_entries<F>(
    exec: Exec,
    inputs: &[Tensor],
    entries: Option<&[(usize, usize)]>,
    step: f64,
    f: F,
) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync + Send,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            grads
                .get(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let index: Vec<(usize, usize)> = match entries {
        Some(e) => e.to_vec(),
        None => inputs
            .iter()
            .enumerate()
            .flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j)))
            .collect(),
    };

    let numeric = exec.map_range(index.len(), |k| -> Result<f64> {
        let (i, j) = index[k];
        let mut shifted = inputs.to_vec();
        let base = inputs[i].data()[j];
        shifted[i].data_mut()[j] = base + step;
        let plus = eval(&shifted)?;
        shifted[i].data_mut()[j] = base - step;
        let minus = eval(&shifted)?;
        Ok((plus - minus) / (2.0 * step))
    });

    let mut report = GradReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: index.len(),
    };
    for (k, num) in numeric.into_iter().enumerate() {
        let num = num?;
        let (i, j) = index[k];
        let a = analytic[i][j];
        let e = rel_error(a, num);
        if !e.is_finite() {
            return Err(GawnoError::InvalidState(format!(
                "non-finite gradient at input {i} entry {j}"
            )));
        }
        if e > report.max_rel_error {
            report = GradReport {
                max_rel_error: e,
                worst: (i, j),
                analytic: a,
                numeric: num,
                entries_checked: report.entries_checked,
            };
        }
    }
    Ok(report)
}
