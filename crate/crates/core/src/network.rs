//! Generator and discriminator operators.
//!
//! Both share a U-Net body: a pointwise lifting `P: F → C0`, four
//! downlifting blocks (`C0, 2C0, 4C0, 8C0` channels, length halving each
//! time), four uplifting blocks whose outputs are concatenated with the
//! mirror-depth encoder output, and a pointwise projection `Q` with two GeLU
//! hidden layers back to `F` channels.
//!
//! The discriminator appends a small fully connected head applied at every
//! `(feature, t)` to the pair `[h, t/n]`, averages it over `t` to obtain
//! `r[b, f]`, and squashes the feature mean to a probability.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{GawnoError, Result};
use crate::optim::{Bound, ParamStore};
use crate::tensor::Tensor;
use crate::wavelet::{DecompositionConfig, WaveletFilter, WaveletName};
use crate::wib::{wib_forward, Activation, WibConfig, WibMode, WibVars};

/// Number of downlifting (and uplifting) blocks.
pub const DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub features: usize,
    pub n: usize,
    pub c0: usize,
    /// Width of both hidden layers of `Q`.
    pub q_hidden: usize,
    pub wavelet: WaveletName,
    pub m: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSpec {
    pub body: GeneratorSpec,
    /// Width of both hidden layers of the head.
    pub head_hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorScore {
    /// `[B, F]` integral outputs.
    pub r: Tensor,
    /// `[B]` probabilities.
    pub p: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorVars {
    pub r: Var,
    pub p: Var,
}

struct Block {
    name: String,
    cfg: WibConfig,
    input_len: usize,
}

impl GeneratorSpec {
    /// Default widths (`C0 = 32`, `Q` hidden 64) with db6, `m = 2`, `h = 1`.
    pub fn new(features: usize, n: usize) -> Self {
        GeneratorSpec {
            features,
            n,
            c0: 32,
            q_hidden: 64,
            wavelet: WaveletName::Db6,
            m: 2,
            h: 1,
        }
    }

    /// Small widths for tests and desk experiments.
    pub fn tiny(features: usize, n: usize) -> Self {
        GeneratorSpec {
            c0: 4,
            q_hidden: 8,
            ..Self::new(features, n)
        }
    }

    pub fn decomposition(&self) -> DecompositionConfig {
        DecompositionConfig {
            m: self.m,
            h: self.h,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.c0 == 0 || self.q_hidden == 0 {
            return Err(GawnoError::Config(
                "features, c0 and q_hidden must be positive".into(),
            ));
        }
        self.decomposition().validate()?;
        // Uplifting doubles length, so the encoder must halve it exactly.
        if self.h != 1 {
            return Err(GawnoError::Config(format!(
                "the U-Net needs h = 1 so encoder and decoder lengths match, got h = {}",
                self.h
            )));
        }
        let q = 1usize << (DEPTH + self.m);
        if self.n == 0 || self.n % q != 0 {
            return Err(GawnoError::Config(format!(
                "window length {} must be a positive multiple of 2^(4+m) = {q}",
                self.n
            )));
        }
        Ok(())
    }

    /// Encoder channel widths after each downlifting block.
    pub fn down_channels(&self) -> [usize; DEPTH] {
        let c = self.c0;
        [c, 2 * c, 4 * c, 8 * c]
    }

    fn blocks(&self) -> Result<Vec<Block>> {
        let filter = WaveletFilter::new(self.wavelet)?;
        let dc = self.decomposition();
        let make = |din, dout, mode| WibConfig {
            in_channels: din,
            out_channels: dout,
            mode,
            filter: filter.clone(),
            decomposition: dc,
            activation: Activation::Gelu,
        };
        let d = self.down_channels();
        let mut blocks = Vec::with_capacity(2 * DEPTH);
        let mut din = self.c0;
        for (j, &dout) in d.iter().enumerate() {
            blocks.push(Block {
                name: format!("down{}", j + 1),
                cfg: make(din, dout, WibMode::Downlift),
                input_len: self.n >> j,
            });
            din = dout;
        }
        // Decoder: u1 reads d4; u_j for j > 1 reads concat(u_{j-1}, d_{5-j}).
        let skips = [d[2], d[1], d[0], self.c0];
        for (j, &skip) in skips.iter().enumerate() {
            blocks.push(Block {
                name: format!("up{}", j + 1),
                cfg: make(din, skip, WibMode::Uplift),
                input_len: self.n >> (DEPTH - j),
            });
            din = 2 * skip;
        }
        Ok(blocks)
    }

    /// Fresh parameters: `U(±1/√fan_in)` for pointwise layers, block kernels
    /// as in [`WibConfig::init_params`].
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore> {
        self.validate()?;
        let mut store = ParamStore::new();
        init_linear(&mut store, "P", self.features, self.c0, rng)?;
        for b in self.blocks()? {
            b.cfg.init_params(&mut store, &b.name, b.input_len, rng)?;
        }
        init_linear(&mut store, "Q1", 2 * self.c0, self.q_hidden, rng)?;
        init_linear(&mut store, "Q2", self.q_hidden, self.q_hidden, rng)?;
        init_linear(&mut store, "Q3", self.q_hidden, self.features, rng)?;
        Ok(store)
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 3 || shape[1] != self.features || shape[2] != self.n {
            return Err(GawnoError::dim(
                "network input",
                shape,
                &[shape.first().copied().unwrap_or(0), self.features, self.n],
            ));
        }
        Ok(())
    }
}

impl DiscriminatorSpec {
    pub fn new(body: GeneratorSpec) -> Self {
        DiscriminatorSpec {
            body,
            head_hidden: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_hidden == 0 {
            return Err(GawnoError::Config("head_hidden must be positive".into()));
        }
        self.body.validate()
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore> {
        self.validate()?;
        let mut store = self.body.init_params(rng)?;
        init_linear(&mut store, "head1", 2, self.head_hidden, rng)?;
        init_linear(&mut store, "head2", self.head_hidden, self.head_hidden, rng)?;
        init_linear(&mut store, "head3", self.head_hidden, 1, rng)?;
        Ok(store)
    }
}

fn init_linear<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<()> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    store.insert(
        format!("{name}.w"),
        Tensor::uniform(&[fan_out, fan_in], -bound, bound, rng),
    )?;
    store.insert(
        format!("{name}.b"),
        Tensor::uniform(&[fan_out], -bound, bound, rng),
    )
}

fn dense(tape: &mut Tape, x: Var, p: &Bound, name: &str) -> Result<Var> {
    let w = p.get(&format!("{name}.w"))?;
    let b = p.get(&format!("{name}.b"))?;
    tape.linear(x, w, Some(b))
}

/// Lifting, U-Net and projection shared by both networks.
fn body_forward(tape: &mut Tape, x: Var, spec: &GeneratorSpec, p: &Bound) -> Result<Var> {
    body_forward_with(tape, x, spec, p, false)
}

fn body_forward_with(
    tape: &mut Tape,
    x: Var,
    spec: &GeneratorSpec,
    p: &Bound,
    zero_skips: bool,
) -> Result<Var> {
    spec.validate()?;
    spec.check_input(tape.shape(x))?;
    let blocks = spec.blocks()?;
    let lifted = dense(tape, x, p, "P")?;

    let mut skips = vec![lifted];
    let mut v = lifted;
    for b in &blocks[..DEPTH] {
        v = wib_forward(tape, v, &b.cfg, &WibVars::from_bound(p, &b.name)?)?;
        skips.push(v);
    }
    // skips = [P, d1, d2, d3, d4]; u1 consumes d4 directly.
    skips.pop();
    for b in &blocks[DEPTH..] {
        let u = wib_forward(tape, v, &b.cfg, &WibVars::from_bound(p, &b.name)?)?;
        let mut skip = skips.pop().expect("one skip per decoder block");
        if zero_skips {
            skip = tape.constant(Tensor::zeros(tape.shape(skip)));
        }
        v = tape.concat_channels(u, skip)?;
    }

    let q = dense(tape, v, p, "Q1")?;
    let q = tape.gelu(q);
    let q = dense(tape, q, p, "Q2")?;
    let q = tape.gelu(q);
    dense(tape, q, p, "Q3")
}

/// `G(z)`: `[B, F, n] → [B, F, n]`.
pub fn generator_forward(tape: &mut Tape, z: Var, spec: &GeneratorSpec, p: &Bound) -> Result<Var> {
    body_forward(tape, z, spec, p)
}

/// `D(y)`: returns the `[B, F]` integrals and `[B]` probabilities.
pub fn discriminator_forward(
    tape: &mut Tape,
    y: Var,
    spec: &DiscriminatorSpec,
    p: &Bound,
) -> Result<DiscriminatorVars> {
    let hv = body_forward(tape, y, &spec.body, p)?;
    let (b, f, n) = tape.value(hv).dims3("discriminator_forward")?;
    let rows = b * f;
    let flat = tape.reshape(hv, &[rows, 1, n])?;
    let time: Vec<f64> = (0..rows)
        .flat_map(|_| (0..n).map(|t| t as f64 / n as f64))
        .collect();
    let tv = tape.constant(Tensor::new(&[rows, 1, n], time)?);
    let input = tape.concat_channels(flat, tv)?;
    let k = dense(tape, input, p, "head1")?;
    let k = tape.gelu(k);
    let k = dense(tape, k, p, "head2")?;
    let k = tape.gelu(k);
    let k = dense(tape, k, p, "head3")?;
    let k = tape.reshape(k, &[b, f, n])?;
    let r = tape.mean_last(k)?;
    let logits = tape.mean_last(r)?;
    let prob = tape.sigmoid(logits);
    Ok(DiscriminatorVars { r, p: prob })
}

/// Inference-only generator pass.
pub fn generate(spec: &GeneratorSpec, params: &ParamStore, z: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = params.bind_frozen(&mut tape);
    let zv = tape.constant(z.clone());
    let out = generator_forward(&mut tape, zv, spec, &bound)?;
    Ok(tape.value(out).clone())
}

/// Inference-only discriminator pass.
pub fn discriminate(
    spec: &DiscriminatorSpec,
    params: &ParamStore,
    y: &Tensor,
) -> Result<DiscriminatorScore> {
    let mut tape = Tape::new();
    let bound = params.bind_frozen(&mut tape);
    let yv = tape.constant(y.clone());
    let out = discriminator_forward(&mut tape, yv, spec, &bound)?;
    Ok(DiscriminatorScore {
        r: tape.value(out.r).clone(),
        p: tape.value(out.p).clone(),
    })
}
