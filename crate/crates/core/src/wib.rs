//! Wavelet integral blocks.
//!
//! A block maps `v: [B, d_v, n]` to `σ(K(v) + ℓ(v))` where `K` weights the
//! level-`m` approximation and detail coefficients channel-wise per
//! coefficient and transforms back, and `ℓ` is a 1×1 convolution. The three
//! modes differ only in the inverse transform: plain reconstructs length `n`,
//! downlift drops the finest bands (length `n/2^h`), uplift appends a zero
//! detail band (length `2n`). The residual path is resampled to match by
//! group averaging (downlift) or sample duplication (uplift).
//!
//! Detail bands finer than level `m` carry no kernel. They are passed through
//! unchanged when `d_v == d_o` and dropped otherwise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{GawnoError, Result};
use crate::kernels;
use crate::optim::{Bound, ParamStore};
use crate::tensor::Tensor;
use crate::wavelet::{self, check_divisible, DecompositionConfig, WaveletFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WibMode {
    Plain,
    Downlift,
    Uplift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    None,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Gelu => tape.gelu(x),
            Activation::None => x,
        }
    }
}

/// Trainable per-coefficient kernel `R[d_v, d_o, n_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights(Tensor);

impl KernelWeights {
    pub fn new(r: Tensor) -> Result<Self> {
        if r.rank() != 3 {
            return Err(GawnoError::dim("KernelWeights", r.shape(), &[0, 0, 0]));
        }
        if !r.all_finite() {
            return Err(GawnoError::InvalidState("non-finite kernel weights".into()));
        }
        Ok(KernelWeights(r))
    }

    /// `R[i,o,t] = δ_io`.
    pub fn identity(channels: usize, band: usize) -> Self {
        let mut r = Tensor::zeros(&[channels, channels, band]);
        for i in 0..channels {
            r.data_mut()[(i * channels + i) * band..(i * channels + i + 1) * band].fill(1.0);
        }
        KernelWeights(r)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn band_len(&self) -> usize {
        self.0.dim(2)
    }
}

/// `out[b,o,t] = Σ_i R[i,o,t]·Wv[b,i,t]`.
pub fn kernel_multiply(wv: &Tensor, r: &KernelWeights) -> Result<Tensor> {
    let (batch, din, k) = wv.dims3("kernel_multiply")?;
    let rs = r.0.shape();
    if rs[0] != din || rs[2] != k {
        return Err(GawnoError::dim("kernel_multiply", wv.shape(), rs));
    }
    let out = kernels::kernel_multiply(wv.data(), (batch, din, k), r.0.data(), rs[1]);
    Tensor::new(&[batch, rs[1], k], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WibConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub mode: WibMode,
    pub filter: WaveletFilter,
    pub decomposition: DecompositionConfig,
    pub activation: Activation,
}

/// Tape handles of one block's parameters.
#[derive(Debug, Clone, Copy)]
pub struct WibVars {
    pub r_approx: Var,
    pub r_detail: Var,
    pub w: Var,
    pub b: Var,
}

impl WibVars {
    pub fn from_bound(bound: &Bound, prefix: &str) -> Result<Self> {
        Ok(WibVars {
            r_approx: bound.get(&format!("{prefix}.r_approx"))?,
            r_detail: bound.get(&format!("{prefix}.r_detail"))?,
            w: bound.get(&format!("{prefix}.w"))?,
            b: bound.get(&format!("{prefix}.b"))?,
        })
    }
}

impl WibConfig {
    pub fn validate_input(&self, n: usize) -> Result<()> {
        self.decomposition.validate()?;
        let m = self.decomposition.m;
        match self.mode {
            WibMode::Downlift => check_divisible("wib_forward", n, m + 1),
            _ => check_divisible("wib_forward", n, m),
        }
    }

    /// Length of the parameterized coefficient bands for input length `n`.
    pub fn band_len(&self, n: usize) -> usize {
        n >> self.decomposition.m
    }

    pub fn output_len(&self, n: usize) -> usize {
        match self.mode {
            WibMode::Plain => n,
            WibMode::Downlift => n >> self.decomposition.h,
            WibMode::Uplift => 2 * n,
        }
    }

    /// Registers this block's parameters under `prefix` for input length `n`.
    ///
    /// Kernels start uniform in `[0, 1/(d_v·d_o))`; the residual convolution
    /// uses the usual `±1/√d_v` fan-in bound.
    pub fn init_params<R: Rng + ?Sized>(
        &self,
        store: &mut ParamStore,
        prefix: &str,
        n: usize,
        rng: &mut R,
    ) -> Result<()> {
        self.validate_input(n)?;
        let (di, dout) = (self.in_channels, self.out_channels);
        let k = self.band_len(n);
        let scale = 1.0 / (di * dout) as f64;
        let bound = 1.0 / (di as f64).sqrt();
        store.insert(
            format!("{prefix}.r_approx"),
            Tensor::uniform(&[di, dout, k], 0.0, scale, rng),
        )?;
        store.insert(
            format!("{prefix}.r_detail"),
            Tensor::uniform(&[di, dout, k], 0.0, scale, rng),
        )?;
        store.insert(
            format!("{prefix}.w"),
            Tensor::uniform(&[dout, di], -bound, bound, rng),
        )?;
        store.insert(
            format!("{prefix}.b"),
            Tensor::uniform(&[dout], -bound, bound, rng),
        )?;
        Ok(())
    }
}

/// Runs one block on the tape.
pub fn wib_forward(tape: &mut Tape, v: Var, cfg: &WibConfig, p: &WibVars) -> Result<Var> {
    let (_, d_v, n) = tape.value(v).dims3("wib_forward")?;
    if d_v != cfg.in_channels {
        return Err(GawnoError::dim(
            "wib_forward",
            tape.shape(v),
            &[cfg.in_channels, cfg.out_channels],
        ));
    }
    cfg.validate_input(n)?;
    let dc = cfg.decomposition;
    let f = &cfg.filter;

    let coeffs = wavelet::wavedec_var(tape, v, f, dc.m)?;
    let approx = tape.kernel_multiply(coeffs.approx, p.r_approx)?;
    let coarse = tape.kernel_multiply(coeffs.details[0], p.r_detail)?;
    let pass = cfg.in_channels == cfg.out_channels;
    let finer = |keep: usize| -> Vec<Option<Var>> {
        coeffs.details[1..keep]
            .iter()
            .map(|&d| if pass { Some(d) } else { None })
            .collect()
    };
    let kept = match cfg.mode {
        WibMode::Downlift => dc.m - dc.h,
        _ => dc.m,
    };
    let mut bands = vec![Some(coarse)];
    bands.extend(finer(kept));
    let mut spectral = wavelet::waverec_var(tape, approx, &bands, f)?;
    if cfg.mode == WibMode::Uplift {
        spectral = wavelet::idwt1_var(tape, spectral, None, f)?;
    }

    let residual = match cfg.mode {
        WibMode::Plain => tape.linear(v, p.w, Some(p.b))?,
        WibMode::Downlift => {
            let pooled = tape.pool_mean(v, 1 << dc.h)?;
            tape.linear(pooled, p.w, Some(p.b))?
        }
        WibMode::Uplift => {
            let mixed = tape.linear(v, p.w, Some(p.b))?;
            tape.repeat(mixed, 2)?
        }
    };
    let sum = tape.add(spectral, residual)?;
    Ok(cfg.activation.apply(tape, sum))
}
