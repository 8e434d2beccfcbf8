//! Adversarial training and checkpoints.
//!
//! Each batch runs one discriminator step followed by one generator step:
//!
//! - `L_D = BCE(D(x), 1) + BCE(D(G(z)), 0)`, updating only `θ_D`;
//! - `L_G = BCE(D(G(z')), 1)` with fresh noise `z'`, updating only `θ_G`.
//!
//! The partner network is bound as constants, so no gradient reaches it.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::NormStats;
use crate::error::{GawnoError, Result};
use crate::fdi::{Reconstructor, DEFAULT_DRAWS};
use crate::network::{discriminator_forward, generator_forward, DiscriminatorSpec, GeneratorSpec};
use crate::optim::{adam_step, AdamConfig, ParamStore};
use crate::tensor::{Tensor, TimeSeriesBatch};

/// Windows used for the per-epoch probe reconstruction error.
pub const PROBE_WINDOWS: usize = 16;

// Independent random streams derived from the seed.
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const PROBE_SEED_OFFSET: u64 = 0x9e37_79b9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Rescale each network's gradient to at most this norm.
    pub grad_clip: Option<f64>,
    /// Target for real samples in the discriminator loss is `1 − smoothing`.
    pub label_smoothing: f64,
    /// Noise draws for the probe reconstruction error.
    pub probe_draws: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 16,
            seed: 0,
            adam: AdamConfig::default(),
            grad_clip: None,
            label_smoothing: 0.0,
            probe_draws: DEFAULT_DRAWS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(GawnoError::Config("batch_size must be at least 1".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(GawnoError::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(GawnoError::Config("label_smoothing must lie in [0, 1)".into()));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(GawnoError::Config("grad_clip must be positive".into()));
        }
        if self.probe_draws == 0 {
            return Err(GawnoError::Config("probe_draws must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Batch means.
    pub loss_d: f64,
    pub loss_g: f64,
    /// Mean squared error per entry of the best-of-N reconstruction of the
    /// probe windows.
    pub probe_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let map = |e: csv::Error| GawnoError::Data(e.to_string());
        w.write_record(["epoch", "loss_d", "loss_g", "probe_error"]).map_err(map)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.loss_d.to_string(),
                r.loss_g.to_string(),
                r.probe_error.to_string(),
            ])
            .map_err(map)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Generator and discriminator with their specs.
#[derive(Debug, Clone, PartialEq)]
pub struct Gan {
    pub gen_spec: GeneratorSpec,
    pub disc_spec: DiscriminatorSpec,
    pub g: ParamStore,
    pub d: ParamStore,
}

impl Gan {
    /// Fresh parameters drawn from the initialization stream of `seed`.
    pub fn init(gen_spec: &GeneratorSpec, disc_spec: &DiscriminatorSpec, seed: u64) -> Result<Self> {
        if disc_spec.body.features != gen_spec.features || disc_spec.body.n != gen_spec.n {
            return Err(GawnoError::Config(
                "generator and discriminator disagree on features or window length".into(),
            ));
        }
        let mut rng = stream(seed, STREAM_INIT);
        Ok(Gan {
            gen_spec: gen_spec.clone(),
            disc_spec: disc_spec.clone(),
            g: gen_spec.init_params(&mut rng)?,
            d: disc_spec.init_params(&mut rng)?,
        })
    }

    /// One discriminator update on real batch `x` with noise `z`. Returns
    /// `L_D`.
    pub fn discriminator_step(
        &mut self,
        x: &TimeSeriesBatch,
        z: &TimeSeriesBatch,
        cfg: &TrainConfig,
    ) -> Result<f64> {
        let b = x.dim(0);
        let mut tape = Tape::new();
        let dp = self.d.bind(&mut tape);
        let gp = self.g.bind_frozen(&mut tape);
        let zv = tape.constant(z.clone());
        let fake = generator_forward(&mut tape, zv, &self.gen_spec, &gp)?;
        let xv = tape.constant(x.clone());
        let real_p = discriminator_forward(&mut tape, xv, &self.disc_spec, &dp)?.p;
        let fake_p = discriminator_forward(&mut tape, fake, &self.disc_spec, &dp)?.p;
        let l_real = tape.bce(real_p, &vec![1.0 - cfg.label_smoothing; b])?;
        let l_fake = tape.bce(fake_p, &vec![0.0; z.dim(0)])?;
        let loss = tape.add(l_real, l_fake)?;
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(non_finite("discriminator loss"));
        }
        let grads = tape.backward(loss)?;
        self.d.accumulate(&grads, &dp);
        clip(&mut self.d, cfg.grad_clip);
        adam_step(&mut self.d, &cfg.adam)?;
        Ok(value)
    }

    /// One generator update with noise `z`. Returns `L_G`.
    pub fn generator_step(
        &mut self,
        z: &TimeSeriesBatch,
        cfg: &TrainConfig,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let gp = self.g.bind(&mut tape);
        let dp = self.d.bind_frozen(&mut tape);
        let zv = tape.constant(z.clone());
        let fake = generator_forward(&mut tape, zv, &self.gen_spec, &gp)?;
        let p = discriminator_forward(&mut tape, fake, &self.disc_spec, &dp)?.p;
        let loss = tape.bce(p, &vec![1.0; z.dim(0)])?;
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(non_finite("generator loss"));
        }
        let grads = tape.backward(loss)?;
        self.g.accumulate(&grads, &gp);
        clip(&mut self.g, cfg.grad_clip);
        adam_step(&mut self.g, &cfg.adam)?;
        Ok(value)
    }
}

// Placeholder context, filled in by the training loop.
fn non_finite(what: &'static str) -> GawnoError {
    GawnoError::NonFinite {
        epoch: 0,
        batch: 0,
        what,
    }
}

fn with_context(e: GawnoError, epoch: usize, batch: usize) -> GawnoError {
    match e {
        GawnoError::NonFinite { what, .. } => GawnoError::NonFinite { epoch, batch, what },
        other => other,
    }
}

fn clip(store: &mut ParamStore, max_norm: Option<f64>) {
    if let Some(c) = max_norm {
        let norm = store.grad_norm();
        if norm > c {
            store.scale_grads(c / norm);
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Trains from scratch on normalized windows `[K, F, n]`.
pub fn train(
    windows: &TimeSeriesBatch,
    gen_spec: &GeneratorSpec,
    disc_spec: &DiscriminatorSpec,
    cfg: &TrainConfig,
) -> Result<(Gan, TrainLog)> {
    let mut gan = Gan::init(gen_spec, disc_spec, cfg.seed)?;
    let log = train_from(&mut gan, windows, cfg)?;
    Ok((gan, log))
}

/// Continues training `gan` for `cfg.epochs` epochs.
pub fn train_from(gan: &mut Gan, windows: &TimeSeriesBatch, cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    let (k, f, n) = windows.dims3("train")?;
    if f != gan.gen_spec.features || n != gan.gen_spec.n {
        return Err(GawnoError::dim("train", windows.shape(), &[k, gan.gen_spec.features, gan.gen_spec.n]));
    }
    if k == 0 {
        return Err(GawnoError::InsufficientData("no training windows".into()));
    }
    let items: Vec<Tensor> = (0..k).map(|i| windows.batch_item(i)).collect();
    let probe = Tensor::stack(&items[..k.min(PROBE_WINDOWS)])?;
    let mut shuffle = stream(cfg.seed, STREAM_SHUFFLE);
    let mut noise = stream(cfg.seed, STREAM_NOISE);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..k).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut sum_d, mut sum_g, mut batches) = (0.0, 0.0, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let picked: Vec<Tensor> = chunk.iter().map(|&i| items[i].clone()).collect();
            let x = Tensor::stack(&picked)?;
            let shape = [chunk.len(), f, n];
            let z = Tensor::randn(&shape, &mut noise);
            let ld = gan
                .discriminator_step(&x, &z, cfg)
                .map_err(|e| with_context(e, epoch, bi + 1))?;
            let z = Tensor::randn(&shape, &mut noise);
            let lg = gan
                .generator_step(&z, cfg)
                .map_err(|e| with_context(e, epoch, bi + 1))?;
            sum_d += ld;
            sum_g += lg;
            batches += 1;
        }
        let probe_error = probe_error(gan, &probe, cfg)?;
        let rec = EpochRecord {
            epoch,
            loss_d: sum_d / batches as f64,
            loss_g: sum_g / batches as f64,
            probe_error,
        };
        log::info!(
            "epoch {epoch}: L_D {:.5} L_G {:.5} probe {:.5}",
            rec.loss_d,
            rec.loss_g,
            rec.probe_error
        );
        log.records.push(rec);
    }
    Ok(log)
}

/// Mean squared error per entry of the best-of-N reconstruction of `probe`.
pub fn probe_error(gan: &Gan, probe: &TimeSeriesBatch, cfg: &TrainConfig) -> Result<f64> {
    let rec = Reconstructor::new(
        &gan.gen_spec,
        &gan.g,
        cfg.probe_draws,
        cfg.seed.wrapping_add(PROBE_SEED_OFFSET),
    )?;
    let r = rec.reconstruct(probe)?;
    Ok(r.sq_error.iter().sum::<f64>() / probe.numel() as f64)
}

// Checkpoint layout (all integers little-endian):
//   b"GAWN", u16 version,
//   u32 length + UTF-8 TOML block (specs, training config, normalization),
//   u32 tensor count, then per tensor: u32 name length, name, u32 rank,
//   u64 dims, f64 data. Generator tensors precede discriminator tensors
//   and carry `g/` and `d/` name prefixes.

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GAWN";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Everything needed to rebuild a trained model. Optimizer moments are not
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub gan: Gan,
    pub train: TrainConfig,
    pub norm: Option<NormStats>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    generator: GeneratorSpec,
    discriminator: DiscriminatorSpec,
    train: TrainConfig,
    norm: Option<NormStats>,
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut w: W) -> Result<()> {
    let meta = Meta {
        generator: ck.gan.gen_spec.clone(),
        discriminator: ck.gan.disc_spec.clone(),
        train: ck.train.clone(),
        norm: ck.norm.clone(),
    };
    let text = toml::to_string(&meta).map_err(|e| GawnoError::Config(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(text.len() as u32).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    let total = ck.gan.g.len() + ck.gan.d.len();
    w.write_all(&(total as u32).to_le_bytes())?;
    for (prefix, store) in [("g/", &ck.gan.g), ("d/", &ck.gan.d)] {
        for p in store.params() {
            let name = format!("{prefix}{}", p.name);
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(p.value.rank() as u32).to_le_bytes())?;
            for &d in p.value.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in p.value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(GawnoError::CorruptCheckpoint(format!(
                "file truncated while reading {what}"
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Parses a checkpoint; tensors must match the shapes implied by its own
/// specs.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4, "magic").map_err(|_| bad_magic())? != CHECKPOINT_MAGIC {
        return Err(bad_magic());
    }
    let version = u16::from_le_bytes(c.take(2, "version")?.try_into().expect("2 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(GawnoError::CorruptCheckpoint(format!(
            "unsupported format version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let len = c.u32("config length")? as usize;
    let text = std::str::from_utf8(c.take(len, "config block")?)
        .map_err(|_| GawnoError::CorruptCheckpoint("config block is not UTF-8".into()))?;
    let meta: Meta = toml::from_str(text)
        .map_err(|e| GawnoError::CorruptCheckpoint(format!("config block: {e}")))?;
    let mut gan = Gan::init(&meta.generator, &meta.discriminator, 0)?;
    let count = c.u32("tensor count")? as usize;
    let expected = gan.g.len() + gan.d.len();
    let names: Vec<String> = gan
        .g
        .names()
        .map(|n| format!("g/{n}"))
        .chain(gan.d.names().map(|n| format!("d/{n}")))
        .collect();
    for (i, want) in names.iter().enumerate() {
        if i >= count {
            return Err(GawnoError::CorruptCheckpoint(format!("missing tensor `{want}`")));
        }
        let nlen = c.u32("tensor name length")? as usize;
        let name = String::from_utf8(c.take(nlen, "tensor name")?.to_vec())
            .map_err(|_| GawnoError::CorruptCheckpoint("tensor name is not UTF-8".into()))?;
        if &name != want {
            return Err(GawnoError::CorruptCheckpoint(format!(
                "expected tensor `{want}`, found `{name}`"
            )));
        }
        let rank = c.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u64("tensor dims")? as usize);
        }
        let (store, short) = match name.split_once('/') {
            Some(("g", s)) => (&mut gan.g, s),
            Some((_, s)) => (&mut gan.d, s),
            None => unreachable!("names carry a prefix"),
        };
        let slot = store.get_mut(short).expect("name from the same store");
        if slot.shape() != shape.as_slice() {
            return Err(GawnoError::CheckpointShape {
                name,
                expected: slot.shape().to_vec(),
                found: shape,
            });
        }
        let bytes = c.take(slot.numel() * 8, "tensor data")?;
        for (v, chunk) in slot.data_mut().iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    if count != expected || c.pos != buf.len() {
        return Err(GawnoError::CorruptCheckpoint(format!(
            "expected {expected} tensors and no trailing bytes"
        )));
    }
    Ok(Checkpoint {
        gan,
        train: meta.train,
        norm: meta.norm,
    })
}

fn bad_magic() -> GawnoError {
    GawnoError::CorruptCheckpoint("not a checkpoint (bad magic)".into())
}

/// Writes to a temporary sibling file and renames it into place.
pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(ck, &mut buf)?;
    atomic_write(path.as_ref(), &buf)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let f = std::fs::File::open(path.as_ref())?;
    read_checkpoint(std::io::BufReader::new(f))
}

/// Loads a checkpoint and checks its tensors against the given specs.
pub fn load_checkpoint_for(
    path: impl AsRef<Path>,
    gen_spec: &GeneratorSpec,
    disc_spec: &DiscriminatorSpec,
) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    let mut want = Gan::init(gen_spec, disc_spec, 0)?;
    want.g.load_values(&ck.gan.g)?;
    want.d.load_values(&ck.gan.d)?;
    Ok(Checkpoint { gan: want, ..ck })
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| GawnoError::Config(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (GeneratorSpec, DiscriminatorSpec) {
        let g = GeneratorSpec::tiny(2, 64);
        let d = DiscriminatorSpec::new(g.clone());
        (g, d)
    }

    fn data(k: usize) -> Tensor {
        Tensor::randn(&[k, 2, 64], &mut ChaCha8Rng::seed_from_u64(99)).map(|v| 0.3 * v)
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            seed: 3,
            probe_draws: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let (g, d) = tiny();
        let (gan, log) = train(&data(4), &g, &d, &quick(0)).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(gan, Gan::init(&g, &d, 3).unwrap());
    }

    #[test]
    fn constant_half_discriminator_losses() {
        let (g, d) = tiny();
        let mut gan = Gan::init(&g, &d, 1).unwrap();
        gan.d.get_mut("head3.w").unwrap().data_mut().fill(0.0);
        gan.d.get_mut("head3.b").unwrap().data_mut().fill(0.0);
        let x = data(3);
        let z = Tensor::randn(&[3, 2, 64], &mut ChaCha8Rng::seed_from_u64(0));
        let mut probe = gan.clone();
        let lg = probe.generator_step(&z, &quick(1)).unwrap();
        let ld = gan.discriminator_step(&x, &z, &quick(1)).unwrap();
        assert!((ld - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((lg - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn partner_is_frozen_bit_for_bit() {
        let (g, d) = tiny();
        let mut gan = Gan::init(&g, &d, 2).unwrap();
        let z = Tensor::randn(&[2, 2, 64], &mut ChaCha8Rng::seed_from_u64(0));
        let before = gan.clone();
        gan.discriminator_step(&data(2), &z, &quick(1)).unwrap();
        assert_eq!(gan.g, before.g);
        assert_ne!(gan.d, before.d);
        let before = gan.clone();
        gan.generator_step(&z, &quick(1)).unwrap();
        assert_eq!(gan.d, before.d);
        assert_ne!(gan.g, before.g);
    }

    #[test]
    fn same_seed_same_log_and_losses_nonnegative() {
        let (g, d) = tiny();
        let (a, la) = train(&data(6), &g, &d, &quick(2)).unwrap();
        let (b, lb) = train(&data(6), &g, &d, &quick(2)).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
        assert_eq!(la.records.len(), 2);
        assert!(la.records.iter().all(|r| r.loss_d >= 0.0 && r.loss_g >= 0.0));
    }

    #[test]
    fn non_finite_loss_aborts_with_context() {
        let (g, d) = tiny();
        let mut gan = Gan::init(&g, &d, 0).unwrap();
        gan.d.get_mut("head3.b").unwrap().data_mut()[0] = f64::NAN;
        let err = train_from(&mut gan, &data(5), &quick(1)).unwrap_err();
        assert!(
            matches!(err, GawnoError::NonFinite { epoch: 1, batch: 1, .. }),
            "{err}"
        );
    }

    fn checkpoint() -> Checkpoint {
        let (g, d) = tiny();
        Checkpoint {
            gan: Gan::init(&g, &d, 5).unwrap(),
            train: quick(7),
            norm: Some(NormStats {
                mean: vec![0.1, -2.0],
                std: vec![1.5, 0.25],
                min: vec![-3.0, -4.0],
                max: vec![3.0, 1.0 / 3.0],
            }),
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let ck = checkpoint();
        let mut buf = Vec::new();
        write_checkpoint(&ck, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.gan.g.params().iter().zip(ck.gan.g.params()) {
            assert!(a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn checkpoint_errors() {
        let ck = checkpoint();
        let mut buf = Vec::new();
        write_checkpoint(&ck, &mut buf).unwrap();
        let cut = &buf[..buf.len() - 5];
        assert!(matches!(read_checkpoint(cut), Err(GawnoError::CorruptCheckpoint(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(GawnoError::CorruptCheckpoint(_))));
        let mut ver = buf.clone();
        ver[4] = 9;
        let err = read_checkpoint(ver.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.gawn");
        save_checkpoint(&ck, &path).unwrap();
        let (g, _) = tiny();
        let other_g = GeneratorSpec { c0: 8, ..g };
        let other_d = DiscriminatorSpec::new(other_g.clone());
        match load_checkpoint_for(&path, &other_g, &other_d) {
            Err(GawnoError::CheckpointShape { name, .. }) => assert_eq!(name, "P.w"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
