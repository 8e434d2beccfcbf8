//! Daubechies filter banks and periodic multilevel DWT along the length axis,
//! plus the domain-halving (downlift) and domain-doubling (uplift) variants.
//!
//! Conventions: a single analysis level is a circular convolution followed by
//! keeping the even-indexed samples, `c[k] = Σ_j h[j]·x[(2k − j) mod n]`.
//! Synthesis is the transpose of the two-band analysis operator, which is its
//! exact inverse because the periodized filter bank is orthonormal. Every
//! transform exists in a plain form on [`Tensor`]s and a recorded form on a
//! [`Tape`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{GawnoError, Result};
use crate::kernels;
use crate::tensor::Tensor;

// Scaling (decomposition low-pass) filters, as tabulated by PyWavelets.
const DB1: [f64; 2] = [0.7071067811865476, 0.7071067811865476];
const DB3: [f64; 6] = [
    0.03522629188570953,
    -0.08544127388202666,
    -0.13501102001025458,
    0.45987750211849154,
    0.8068915093110925,
    0.33267055295008263,
];
const DB6: [f64; 12] = [
    -0.0010773010853084796,
    0.004777257510945511,
    0.0005538422011614961,
    -0.03158203931748603,
    0.027522865530305727,
    0.09750160558732304,
    -0.12976686756726194,
    -0.22626469396543983,
    0.31525035170919763,
    0.7511339080210954,
    0.49462389039845306,
    0.11154074335010947,
];
const DB8: [f64; 16] = [
    -0.00011747678412476953,
    0.0006754494064505693,
    -0.00039174037337694705,
    -0.004870352993451574,
    0.008746094047405777,
    0.013981027917398282,
    -0.044088253930794755,
    -0.017369301001807547,
    0.12874742662047847,
    0.0004724845739132828,
    -0.2840155429615469,
    -0.015829105256349306,
    0.5853546836542067,
    0.6756307362972898,
    0.31287159091429995,
    0.05441584224310401,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletName {
    Db1,
    Db3,
    Db6,
    Db8,
}

impl WaveletName {
    pub const ALL: [WaveletName; 4] = [
        WaveletName::Db1,
        WaveletName::Db3,
        WaveletName::Db6,
        WaveletName::Db8,
    ];

    fn scaling(self) -> &'static [f64] {
        match self {
            WaveletName::Db1 => &DB1,
            WaveletName::Db3 => &DB3,
            WaveletName::Db6 => &DB6,
            WaveletName::Db8 => &DB8,
        }
    }
}

impl fmt::Display for WaveletName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WaveletName::Db1 => "db1",
            WaveletName::Db3 => "db3",
            WaveletName::Db6 => "db6",
            WaveletName::Db8 => "db8",
        };
        f.write_str(s)
    }
}

impl FromStr for WaveletName {
    type Err = GawnoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "db1" | "haar" => Ok(WaveletName::Db1),
            "db3" => Ok(WaveletName::Db3),
            "db6" => Ok(WaveletName::Db6),
            "db8" => Ok(WaveletName::Db8),
            other => Err(GawnoError::Config(format!("unknown wavelet `{other}`"))),
        }
    }
}

/// Orthonormal two-channel analysis/synthesis filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    pub name: WaveletName,
    pub dec_lo: Vec<f64>,
    pub dec_hi: Vec<f64>,
    pub rec_lo: Vec<f64>,
    pub rec_hi: Vec<f64>,
}

const FILTER_TOL: f64 = 1e-12;

impl WaveletFilter {
    /// Builds the bank from the embedded scaling table and checks the
    /// orthonormality invariants.
    pub fn new(name: WaveletName) -> Result<Self> {
        let dec_lo = name.scaling().to_vec();
        let len = dec_lo.len();
        let dec_hi: Vec<f64> = (0..len)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * dec_lo[len - 1 - k]
            })
            .collect();
        let rec_lo = dec_lo.iter().rev().copied().collect();
        let rec_hi = dec_hi.iter().rev().copied().collect();
        let f = WaveletFilter {
            name,
            dec_lo,
            dec_hi,
            rec_lo,
            rec_hi,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.dec_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dec_lo.is_empty()
    }

    pub fn vanishing_moments(&self) -> usize {
        self.len() / 2
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(GawnoError::Config(format!(
                "{} filter fails {what} (got {v:e})",
                self.name
            )))
        };
        let s_lo: f64 = self.dec_lo.iter().sum();
        if (s_lo - std::f64::consts::SQRT_2).abs() > FILTER_TOL {
            return bad("Σ dec_lo = √2", s_lo);
        }
        let s_hi: f64 = self.dec_hi.iter().sum();
        if s_hi.abs() > FILTER_TOL {
            return bad("Σ dec_hi = 0", s_hi);
        }
        let energy: f64 = self.dec_lo.iter().map(|c| c * c).sum();
        if (energy - 1.0).abs() > FILTER_TOL {
            return bad("Σ dec_lo² = 1", energy);
        }
        // Double-shift orthogonality.
        for shift in (2..self.len()).step_by(2) {
            let dot: f64 = (0..self.len() - shift)
                .map(|k| self.dec_lo[k] * self.dec_lo[k + shift])
                .sum();
            if dot.abs() > FILTER_TOL {
                return bad("double-shift orthogonality", dot);
            }
        }
        Ok(())
    }
}

/// Decomposition depth `m` and the retained-from level `h` used by downlift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionConfig {
    pub m: usize,
    pub h: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        DecompositionConfig { m: 2, h: 1 }
    }
}

impl DecompositionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(GawnoError::Config("decomposition depth m must be ≥ 1".into()));
        }
        if self.h >= self.m {
            return Err(GawnoError::Config(format!(
                "retained level h = {} must be < m = {}",
                self.h, self.m
            )));
        }
        Ok(())
    }
}

/// Coarsest approximation band plus detail bands ordered coarsest first
/// (`details[0]` is level `m`, `details[m-1]` is level 1).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    pub approx: Tensor,
    pub details: Vec<Tensor>,
}

impl WaveletCoeffs {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Sum of squares over every band.
    pub fn energy(&self) -> f64 {
        self.approx.sum_squares() + self.details.iter().map(Tensor::sum_squares).sum::<f64>()
    }
}

pub(crate) fn check_divisible(op: &'static str, n: usize, m: usize) -> Result<()> {
    let block = 1usize << m;
    if n == 0 || n % block != 0 {
        return Err(GawnoError::length(
            op,
            format!("length n = {n} is not divisible by 2^m = {block} (m = {m})"),
        ));
    }
    Ok(())
}

/// One analysis level: `(approx, detail)`, each half the input length.
pub fn dwt1(x: &Tensor, f: &WaveletFilter) -> Result<(Tensor, Tensor)> {
    let (b, c, n) = x.dims3("dwt1")?;
    if n == 0 || n % 2 != 0 {
        return Err(GawnoError::length("dwt1", format!("length {n} is not even")));
    }
    let a = kernels::analysis(x.data(), n, &f.dec_lo);
    let d = kernels::analysis(x.data(), n, &f.dec_hi);
    Ok((
        Tensor::new(&[b, c, n / 2], a)?,
        Tensor::new(&[b, c, n / 2], d)?,
    ))
}

/// One synthesis level, inverse of [`dwt1`].
pub fn idwt1(approx: &Tensor, detail: &Tensor, f: &WaveletFilter) -> Result<Tensor> {
    if approx.shape() != detail.shape() {
        return Err(GawnoError::dim("idwt1", approx.shape(), detail.shape()));
    }
    synthesize(approx, Some(detail), f)
}

fn synthesize(approx: &Tensor, detail: Option<&Tensor>, f: &WaveletFilter) -> Result<Tensor> {
    let (b, c, half) = approx.dims3("idwt1")?;
    let n = 2 * half;
    let mut out = vec![0.0; b * c * n];
    kernels::analysis_transpose_into(approx.data(), n, &f.dec_lo, &mut out);
    if let Some(d) = detail {
        kernels::analysis_transpose_into(d.data(), n, &f.dec_hi, &mut out);
    }
    Tensor::new(&[b, c, n], out)
}

/// `m`-level decomposition: `dwt1` applied recursively to the approximation.
pub fn wavedec(x: &Tensor, f: &WaveletFilter, m: usize) -> Result<WaveletCoeffs> {
    let (_, _, n) = x.dims3("wavedec")?;
    check_divisible("wavedec", n, m)?;
    let mut approx = x.clone();
    let mut details = Vec::with_capacity(m);
    for _ in 0..m {
        let (a, d) = dwt1(&approx, f)?;
        details.push(d);
        approx = a;
    }
    details.reverse();
    Ok(WaveletCoeffs { approx, details })
}

pub fn waverec(coeffs: &WaveletCoeffs, f: &WaveletFilter) -> Result<Tensor> {
    let mut x = coeffs.approx.clone();
    for d in &coeffs.details {
        x = idwt1(&x, d, f)?;
    }
    Ok(x)
}

/// Decomposes `m` levels and reconstructs from the bands at levels above
/// `h` only, giving length `n / 2^h` (`n/2` for the default `h = 1`).
pub fn downlift(x: &Tensor, f: &WaveletFilter, cfg: &DecompositionConfig) -> Result<Tensor> {
    cfg.validate()?;
    let (_, _, n) = x.dims3("downlift")?;
    check_divisible("downlift", n, cfg.m)?;
    let mut coeffs = wavedec(x, f, cfg.m)?;
    coeffs.details.truncate(cfg.m - cfg.h);
    waverec(&coeffs, f)
}

/// Decomposes `m` levels, reconstructs them all and then one more level with
/// an all-zero detail band, giving length `2n`.
pub fn uplift(x: &Tensor, f: &WaveletFilter, cfg: &DecompositionConfig) -> Result<Tensor> {
    cfg.validate()?;
    let (_, _, n) = x.dims3("uplift")?;
    check_divisible("uplift", n, cfg.m)?;
    let rec = waverec(&wavedec(x, f, cfg.m)?, f)?;
    synthesize(&rec, None, f)
}

/// Recorded coefficient bands: `(approx, details coarsest first)`.
pub struct VarCoeffs {
    pub approx: Var,
    pub details: Vec<Var>,
}

pub fn dwt1_var(tape: &mut Tape, x: Var, f: &WaveletFilter) -> Result<(Var, Var)> {
    let a = tape.analysis(x, &f.dec_lo)?;
    let d = tape.analysis(x, &f.dec_hi)?;
    Ok((a, d))
}

/// Synthesis step on the tape; `None` stands for an all-zero detail band.
pub fn idwt1_var(tape: &mut Tape, approx: Var, detail: Option<Var>, f: &WaveletFilter) -> Result<Var> {
    tape.synthesis(approx, detail, &f.dec_lo, &f.dec_hi)
}

pub fn wavedec_var(tape: &mut Tape, x: Var, f: &WaveletFilter, m: usize) -> Result<VarCoeffs> {
    let (_, _, n) = tape.value(x).dims3("wavedec")?;
    check_divisible("wavedec", n, m)?;
    let mut approx = x;
    let mut details = Vec::with_capacity(m);
    for _ in 0..m {
        let (a, d) = dwt1_var(tape, approx, f)?;
        details.push(d);
        approx = a;
    }
    details.reverse();
    Ok(VarCoeffs { approx, details })
}

/// Reconstruction where each detail band may be absent (zero).
pub fn waverec_var(
    tape: &mut Tape,
    approx: Var,
    details: &[Option<Var>],
    f: &WaveletFilter,
) -> Result<Var> {
    let mut x = approx;
    for &d in details {
        x = idwt1_var(tape, x, d, f)?;
    }
    Ok(x)
}

pub fn downlift_var(tape: &mut Tape, x: Var, f: &WaveletFilter, cfg: &DecompositionConfig) -> Result<Var> {
    cfg.validate()?;
    let c = wavedec_var(tape, x, f, cfg.m)?;
    let kept: Vec<Option<Var>> = c.details[..cfg.m - cfg.h].iter().copied().map(Some).collect();
    waverec_var(tape, c.approx, &kept, f)
}

pub fn uplift_var(tape: &mut Tape, x: Var, f: &WaveletFilter, cfg: &DecompositionConfig) -> Result<Var> {
    cfg.validate()?;
    let c = wavedec_var(tape, x, f, cfg.m)?;
    let all: Vec<Option<Var>> = c.details.iter().copied().map(Some).collect();
    let rec = waverec_var(tape, c.approx, &all, f)?;
    idwt1_var(tape, rec, None, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn filt(name: WaveletName) -> WaveletFilter {
        WaveletFilter::new(name).unwrap()
    }

    fn row(v: &[f64]) -> Tensor {
        Tensor::new(&[1, 1, v.len()], v.to_vec()).unwrap()
    }

    fn rand_signal(shape: &[usize], seed: u64) -> Tensor {
        Tensor::randn(shape, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Direct convolve-then-decimate loop, written independently of the kernels.
    fn conv_decimate_oracle(x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = x.len() as i64;
        let full: Vec<f64> = (0..n)
            .map(|i| {
                h.iter()
                    .enumerate()
                    .map(|(j, hj)| hj * x[(i - j as i64).rem_euclid(n) as usize])
                    .sum()
            })
            .collect();
        full.iter().step_by(2).copied().collect()
    }

    #[test]
    fn all_filters_satisfy_invariants() {
        for name in WaveletName::ALL {
            let f = filt(name);
            assert_eq!(f.len(), 2 * f.vanishing_moments());
            let l = f.len();
            for k in 0..l {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(f.dec_hi[k], sign * f.dec_lo[l - 1 - k]);
                assert_eq!(f.rec_lo[k], f.dec_lo[l - 1 - k]);
                assert_eq!(f.rec_hi[k], f.dec_hi[l - 1 - k]);
            }
        }
        assert_eq!(filt(WaveletName::Db6).len(), 12);
    }

    #[test]
    fn haar_constant_and_alternating() {
        let f = filt(WaveletName::Db1);
        let (a, d) = dwt1(&row(&[1.0; 4]), &f).unwrap();
        assert!(a.data().iter().all(|v| (v - SQRT2).abs() < 1e-15));
        assert!(d.data().iter().all(|v| v.abs() < 1e-15));

        let (a, d) = dwt1(&row(&[1.0, -1.0, 1.0, -1.0]), &f).unwrap();
        assert!(a.data().iter().all(|v| v.abs() < 1e-15));
        assert!(d.data().iter().all(|v| (v - SQRT2).abs() < 1e-15));
    }

    #[test]
    fn dwt1_odd_length_is_error() {
        let f = filt(WaveletName::Db1);
        assert!(matches!(
            dwt1(&row(&[1.0; 5]), &f),
            Err(GawnoError::Length { .. })
        ));
    }

    #[test]
    fn db6_matches_convolution_oracle() {
        let f = filt(WaveletName::Db6);
        let x = rand_signal(&[1, 1, 64], 3);
        let (a, d) = dwt1(&x, &f).unwrap();
        let ea = conv_decimate_oracle(x.data(), &f.dec_lo);
        let ed = conv_decimate_oracle(x.data(), &f.dec_hi);
        for (u, v) in a.data().iter().zip(&ea).chain(d.data().iter().zip(&ed)) {
            assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn idwt1_examples() {
        let f = filt(WaveletName::Db1);
        let z = idwt1(&row(&[0.0; 3]), &row(&[0.0; 3]), &f).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let x = idwt1(&row(&[SQRT2, SQRT2]), &row(&[0.0, 0.0]), &f).unwrap();
        assert!(x.data().iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(idwt1(&row(&[1.0; 2]), &row(&[1.0; 3]), &f).is_err());
    }

    #[test]
    fn round_trip_all_filters() {
        for name in WaveletName::ALL {
            let f = filt(name);
            let x = rand_signal(&[2, 3, 256], 5);
            let (a, d) = dwt1(&x, &f).unwrap();
            let y = idwt1(&a, &d, &f).unwrap();
            assert!(y.max_abs_diff(&x) <= 1e-10, "{name}");
        }
    }

    #[test]
    fn wavedec_examples() {
        let f6 = filt(WaveletName::Db6);
        let x = rand_signal(&[1, 2, 64], 9);
        let c1 = wavedec(&x, &f6, 1).unwrap();
        let (a, d) = dwt1(&x, &f6).unwrap();
        assert_eq!((c1.approx.clone(), c1.details[0].clone()), (a, d));

        let c2 = wavedec(&x, &f6, 2).unwrap();
        assert!(waverec(&c2, &f6).unwrap().max_abs_diff(&x) <= 1e-10);

        let haar = filt(WaveletName::Db1);
        let c = wavedec(&row(&[3.0; 16]), &haar, 2).unwrap();
        assert!(c.approx.data().iter().all(|v| (v - 6.0).abs() < 1e-14));
        assert!(c.details.iter().flat_map(|d| d.data()).all(|v| v.abs() < 1e-14));
        assert_eq!(c.details[0].dim(2), 4);
        assert_eq!(c.details[1].dim(2), 8);
    }

    #[test]
    fn wavedec_divisibility_error_names_n_and_m() {
        let f = filt(WaveletName::Db1);
        let err = wavedec(&row(&[0.0; 12]), &f, 3).unwrap_err().to_string();
        assert!(err.contains("12") && err.contains("m = 3"), "{err}");
    }

    #[test]
    fn downlift_examples() {
        let haar = filt(WaveletName::Db1);
        let cfg = DecompositionConfig::default();
        let y = downlift(&row(&[1.0; 64]), &haar, &cfg).unwrap();
        assert_eq!(y.dim(2), 32);
        assert!(y.data().iter().all(|v| (v - SQRT2).abs() < 1e-14));

        let z = downlift(&row(&[0.0; 64]), &haar, &cfg).unwrap();
        assert_eq!(z.dim(2), 32);
        assert!(z.data().iter().all(|&v| v == 0.0));

        let bad = DecompositionConfig { m: 2, h: 2 };
        assert!(matches!(
            downlift(&row(&[0.0; 64]), &haar, &bad),
            Err(GawnoError::Config(_))
        ));
    }

    #[test]
    fn downlift_matches_composition() {
        let f = filt(WaveletName::Db6);
        let x = rand_signal(&[1, 1, 64], 21);
        let (a1, _d1) = dwt1(&x, &f).unwrap();
        let (a2, d2) = dwt1(&a1, &f).unwrap();
        let expected = idwt1(&a2, &d2, &f).unwrap();
        let got = downlift(&x, &f, &DecompositionConfig::default()).unwrap();
        assert!(got.max_abs_diff(&expected) <= 1e-12);
    }

    #[test]
    fn uplift_examples() {
        let haar = filt(WaveletName::Db1);
        let cfg = DecompositionConfig::default();
        let y = uplift(&row(&[1.0; 64]), &haar, &cfg).unwrap();
        assert_eq!(y.dim(2), 128);
        assert!(y.data().iter().all(|v| (v - 1.0 / SQRT2).abs() < 1e-14));
        let z = uplift(&row(&[0.0; 64]), &haar, &cfg).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0) && z.dim(2) == 128);
        assert!(uplift(&row(&[0.0; 30]), &haar, &cfg).is_err());
    }

    #[test]
    fn uplift_matches_composition() {
        let f = filt(WaveletName::Db6);
        let x = rand_signal(&[1, 1, 32], 22);
        let rec = waverec(&wavedec(&x, &f, 2).unwrap(), &f).unwrap();
        let zeros = Tensor::zeros(rec.shape());
        let expected = idwt1(&rec, &zeros, &f).unwrap();
        let got = uplift(&x, &f, &DecompositionConfig::default()).unwrap();
        assert!(got.max_abs_diff(&expected) <= 1e-12);
    }

    #[test]
    fn tape_and_plain_forms_agree() {
        let f = filt(WaveletName::Db3);
        let cfg = DecompositionConfig::default();
        let x = rand_signal(&[2, 2, 32], 4);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let d = downlift_var(&mut tape, xv, &f, &cfg).unwrap();
        let u = uplift_var(&mut tape, xv, &f, &cfg).unwrap();
        assert_eq!(tape.value(d), &downlift(&x, &f, &cfg).unwrap());
        assert_eq!(tape.value(u), &uplift(&x, &f, &cfg).unwrap());
    }

    #[test]
    fn short_signals_wrap_long_filters() {
        // db8 has 16 taps; a length-2 signal still reconstructs exactly.
        let f = filt(WaveletName::Db8);
        let x = row(&[0.3, -1.2]);
        let (a, d) = dwt1(&x, &f).unwrap();
        assert!(idwt1(&a, &d, &f).unwrap().max_abs_diff(&x) <= 1e-12);
        assert!(((a.sum_squares() + d.sum_squares()) - x.sum_squares()).abs() < 1e-12);
    }
}
