//! End-to-end run on the synthetic process: train a tiny model, then detect
//! and isolate 3σ step faults in two held-out series.
//!
//! `cargo run --release --example desk_experiment -- [seed] [epochs] [stride]`

use std::time::Instant;

use gawno::data::{fit_norm, inject_fault, normalize, synth_process, window, FaultKind, FaultSpec, SynthConfig};
use gawno::fdi::{detect, fit_threshold_on, isolate, metrics, ConfusionCounts, Reconstructor, DEFAULT_DRAWS, DEFAULT_K};
use gawno::network::{DiscriminatorSpec, GeneratorSpec};
use gawno::train::{train, TrainConfig};

fn main() -> gawno::Result<()> {
    let args: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer argument"))
        .collect();
    let seed = args.first().copied().unwrap_or(0);
    let epochs = args.get(1).copied().unwrap_or(200) as usize;
    let (f, n) = (5, 64);
    let stride = args.get(2).copied().unwrap_or(n as u64) as usize;

    // One long series: training rows, a normal validation split, then two
    // held-out stretches that receive the faults.
    let series = synth_process(&SynthConfig::new(f, 4928), seed)?;
    let train_raw = series.slice(0, 2000)?;
    let stats = fit_norm(&train_raw)?;
    let train_set = normalize(&train_raw, &stats)?;
    let val = normalize(&series.slice(2048, 3008)?, &stats)?;

    let g = GeneratorSpec::tiny(f, n);
    let d = DiscriminatorSpec::new(g.clone());
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (gan, log) = train(&window(&train_set, n, stride)?.batch, &g, &d, &cfg)?;
    let probe = |i: usize| log.records.get(i).map_or(f64::NAN, |r| r.probe_error);
    println!(
        "trained {epochs} epochs in {:.1?}; probe error {:.4} -> {:.4}",
        start.elapsed(),
        probe(0),
        probe(log.records.len().saturating_sub(1))
    );

    let rec = Reconstructor::new(&g, &gan.g, DEFAULT_DRAWS, seed)?;
    let model = fit_threshold_on(&rec, &val, DEFAULT_K)?;
    println!("global threshold {:.4}", model.global_threshold());
    for (i, s) in [(0, 3008), (1, 3968)] {
        let target = (seed as usize + i) % f;
        let spec = FaultSpec {
            kind: FaultKind::Step,
            target,
            onset: 160,
            magnitude: 3.0,
        };
        let x = normalize(&inject_fault(&series.slice(s, s + 960)?, &spec, seed)?, &stats)?;
        let rep = detect(&x, &model, &rec)?;
        let c = ConfusionCounts::from_flags(&rep.flags, x.labels().expect("labels"))?;
        let top = isolate(&rep, &model).first().map(|p| p.0);
        println!(
            "held-out {i}: onset {:?} F1 {:.3} (tp {} fp {} fn {}), fault on {target}, top {top:?}",
            rep.onset,
            metrics(&c).f1,
            c.tp,
            c.fp,
            c.fn_
        );
    }
    Ok(())
}
