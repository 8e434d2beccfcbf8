//! Named trainable parameters and the Adam optimizer with decoupled weight
//! decay.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{GawnoError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Vec<f64>>,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Param {
    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

/// Ordered collection of trainable tensors plus Adam state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
    step_count: u64,
}

/// Parameters of a store registered on a particular tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| GawnoError::InvalidState(format!("unknown parameter `{name}`")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(GawnoError::InvalidState(format!(
                "duplicate parameter `{name}`"
            )));
        }
        let numel = value.numel();
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            value,
            grad: None,
            m: vec![0.0; numel],
            v: vec![0.0; numel],
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index
            .get(name)
            .copied()
            .map(move |i| &mut self.params[i].value)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Registers every parameter as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.bind_impl(tape, true)
    }

    /// Registers every parameter as a constant; no gradient reaches it.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        self.bind_impl(tape, false)
    }

    /// Wraps externally created tape handles, one per parameter in store
    /// order, so code written against [`Bound`] can run on arbitrary leaves.
    pub fn bound_from(&self, vars: Vec<Var>) -> Result<Bound> {
        if vars.len() != self.params.len() {
            return Err(GawnoError::InvalidState(format!(
                "expected {} parameter handles, got {}",
                self.params.len(),
                vars.len()
            )));
        }
        Ok(Bound {
            vars,
            index: self.index.clone(),
        })
    }

    fn bind_impl(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        Bound {
            vars,
            index: self.index.clone(),
        }
    }

    /// Adds the gradients of the bound leaves into each parameter's slot.
    pub fn accumulate(&mut self, grads: &Gradients, bound: &Bound) {
        for (p, &var) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(g) = grads.get(var) {
                match &mut p.grad {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    None => p.grad = Some(g.to_vec()),
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Euclidean norm over all populated gradients.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter_map(|p| p.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for g in self.params.iter_mut().filter_map(|p| p.grad.as_mut()) {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Copies values from `other`, which must hold the same names and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        for p in &mut self.params {
            let src = other.get(&p.name).ok_or_else(|| {
                GawnoError::CorruptCheckpoint(format!("missing tensor `{}`", p.name))
            })?;
            if src.shape() != p.value.shape() {
                return Err(GawnoError::CheckpointShape {
                    name: p.name.clone(),
                    expected: p.value.shape().to_vec(),
                    found: src.shape().to_vec(),
                });
            }
            p.value = src.clone();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// One Adam update over every parameter, then clears the gradients.
///
/// Weight decay is decoupled (`θ ← θ − lr·wd·θ` before the moment update).
/// Fails without touching any parameter if a gradient is missing.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    if let Some(p) = store.params.iter().find(|p| p.grad.is_none()) {
        return Err(GawnoError::InvalidState(format!(
            "parameter `{}` has no gradient",
            p.name
        )));
    }
    store.step_count += 1;
    let t = store.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for p in &mut store.params {
        let g = p.grad.take().expect("checked above");
        let theta = p.value.data_mut();
        for i in 0..theta.len() {
            theta[i] -= cfg.lr * cfg.weight_decay * theta[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g[i];
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = p.m[i] / bc1;
            let v_hat = p.v[i] / bc2;
            theta[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
