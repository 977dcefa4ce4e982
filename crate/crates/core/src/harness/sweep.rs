//! Seeded Monte Carlo BER sweeps.
//!
//! A trial is one channel slot: one channel realization, one crossbar
//! programming event, and `symbols_per_slot` received vectors that every
//! detector sees. Slots run in fixed-size chunks; the stopping rule is only
//! checked between chunks and chunk results are reduced in slot order, so
//! the outcome does not depend on the thread count.

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::baselines::{ml_detect_exhaustive, mmse_detect, sphere_decode, zf_detect};
use crate::crossbar::{ChannelModule, HardwareDetector};
use crate::detnet::{ideal_forward, DetNetParams};
use crate::device::ProgramOptions;
use crate::error::{Error, Result};
use crate::harness::config::{DetectorKind, ExperimentConfig};
use crate::mimo::{count_bit_errors, generate_channel, sigma_from_snr, to_real, transmit};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub detector: DetectorKind,
    pub snr_db: f64,
    pub gamma: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fewer than 10 errors: the interval is wide.
    pub low_errors: bool,
    /// Seconds spent inside this detector, summed over threads.
    pub wall_time: f64,
}

/// Bookkeeping for one (SNR, γ) point, shared by all detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStats {
    pub snr_db: f64,
    pub gamma: f64,
    pub slots: u64,
    pub vectors: u64,
    /// Channel crossbar programming events; one per slot when a crossbar
    /// detector is evaluated.
    pub program_events: u64,
    /// Channel-dependent block evaluations served by the crossbars.
    pub crossbar_reads: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub points: Vec<PointStats>,
}

pub const SWEEP_CSV_HEADER: [&str; 10] = [
    "detector", "snr_db", "gamma", "bits", "errors", "ber", "ci_low", "ci_high", "low_errors", "wall_time",
];

impl SweepResult {
    pub fn row(&self, detector: DetectorKind, snr_db: f64, gamma: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.detector == detector && r.snr_db == snr_db && r.gamma == gamma)
    }

    /// Writes the CSV; `wall_time = false` drops the timing column.
    pub fn write_csv<W: Write>(&self, w: W, wall_time: bool) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n = if wall_time { 10 } else { 9 };
        out.write_record(&SWEEP_CSV_HEADER[..n])?;
        for r in &self.rows {
            let mut rec = vec![
                r.detector.name().to_string(),
                r.snr_db.to_string(),
                r.gamma.to_string(),
                r.bits.to_string(),
                r.errors.to_string(),
                r.ber.to_string(),
                r.ci_low.to_string(),
                r.ci_high.to_string(),
                r.low_errors.to_string(),
            ];
            if wall_time {
                rec.push(format!("{:.6}", r.wall_time));
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Default)]
struct SlotCounts {
    errors: Vec<u64>,
    nanos: Vec<u128>,
    program_events: u64,
    reads: u64,
}

impl SlotCounts {
    fn new(n: usize) -> Self {
        Self {
            errors: vec![0; n],
            nanos: vec![0; n],
            ..Self::default()
        }
    }

    fn merge(&mut self, o: &SlotCounts) {
        for (a, b) in self.errors.iter_mut().zip(&o.errors) {
            *a += b;
        }
        for (a, b) in self.nanos.iter_mut().zip(&o.nanos) {
            *a += b;
        }
        self.program_events += o.program_events;
        self.reads += o.reads;
    }
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    detectors: &'a [DetectorKind],
    params: Option<&'a DetNetParams>,
    hardware: Option<HardwareDetector>,
    snr_index: u64,
    point: u64,
    snr_db: f64,
    gamma: f64,
}

/// Stream tags keeping channel/symbol draws independent of crossbar
/// programming draws.
const DATA_STREAM: u64 = 0;
const PROGRAM_STREAM: u64 = 1;

fn run_slot(ctx: &Ctx, trial: u64) -> Result<SlotCounts> {
    let c = &ctx.config.mimo;
    let con = c.constellation();
    let sigma = sigma_from_snr(ctx.snr_db);
    // data depends on the SNR index only, so every γ sees the same symbols
    let mut rng = rng_from_seed(derive_seed(ctx.config.seed, &[DATA_STREAM, ctx.snr_index, trial]));
    let h = to_real(&generate_channel(c, &mut rng));
    let mut counts = SlotCounts::new(ctx.detectors.len());

    let module = match &ctx.hardware {
        Some(_) => {
            let mut prng = rng_from_seed(derive_seed(ctx.config.seed, &[PROGRAM_STREAM, ctx.point, trial]));
            let device = ctx.config.device.with_gamma(ctx.gamma);
            let m = ChannelModule::program(c, &h, &device, ProgramOptions::default(), &mut prng)?;
            counts.program_events += m.program_events() as u64;
            Some(m)
        }
        None => None,
    };

    for _ in 0..ctx.config.sweep.symbols_per_slot {
        let sym = con.random_symbols(&mut rng);
        let y = transmit(&h, &sym.real, sigma, &mut rng)?;
        for (d, kind) in ctx.detectors.iter().enumerate() {
            let start = Instant::now();
            let x_hat: DVector<f64> = match kind {
                DetectorKind::Zf => zf_detect(&h, &y, &con)?.x_hat,
                DetectorKind::Mmse => mmse_detect(&h, &y, sigma, &con)?.x_hat,
                DetectorKind::Ml => ml_detect_exhaustive(&h, &y, c)?.x_hat,
                DetectorKind::Sd => sphere_decode(&h, &y, c)?.x_hat,
                DetectorKind::DetNet => {
                    let p = ctx.params.ok_or_else(|| Error::MissingParams("detnet".into()))?;
                    ideal_forward(p, &h, &y)?.output().clone()
                }
                DetectorKind::DetNetHw => {
                    let hw = ctx.hardware.as_ref().ok_or_else(|| Error::MissingParams("detnet-hw".into()))?;
                    let m = module.as_ref().expect("programmed with hardware detector");
                    hw.forward(m, &y)?.output().clone()
                }
            };
            let bits = con.demodulate(&x_hat)?;
            counts.errors[d] += count_bit_errors(&sym.bits, &bits)? as u64;
            counts.nanos[d] += start.elapsed().as_nanos();
        }
    }
    if let Some(m) = &module {
        counts.reads += m.reads() as u64;
    }
    Ok(counts)
}

/// BER of every detector at every (γ, SNR) point of the sweep.
///
/// Points are enumerated γ-major. Each point draws slots until every
/// detector has at least `min_errors` errors and `min_bits` bits, or
/// `max_trials` slots have been used.
pub fn run_ber_sweep(
    config: &ExperimentConfig,
    detectors: &[DetectorKind],
    params: Option<&DetNetParams>,
) -> Result<SweepResult> {
    config.validate()?;
    if detectors.is_empty() {
        return Err(Error::Config("no detectors requested".into()));
    }
    if let Some(d) = detectors.iter().find(|d| d.needs_params()) {
        let p = params.ok_or_else(|| Error::MissingParams(d.name().into()))?;
        if p.config != config.mimo {
            return Err(Error::Config(format!(
                "parameters trained for {:?} but sweep uses {:?}",
                p.config, config.mimo
            )));
        }
    }
    let hardware = match params {
        Some(p) if detectors.contains(&DetectorKind::DetNetHw) => Some(HardwareDetector::deploy(p, &config.device)),
        _ => None,
    };
    let sweep = &config.sweep;
    let bits_per_slot = (config.mimo.bits_per_vector() * sweep.symbols_per_slot) as u64;
    let mut result = SweepResult::default();
    let mut ctx = Ctx {
        config,
        detectors,
        params,
        hardware,
        snr_index: 0,
        point: 0,
        snr_db: 0.0,
        gamma: 0.0,
    };

    for (gi, &gamma) in sweep.gammas.iter().enumerate() {
        for (si, &snr_db) in sweep.snr_db.iter().enumerate() {
            ctx.snr_index = si as u64;
            ctx.point = (gi * sweep.snr_db.len() + si) as u64;
            ctx.snr_db = snr_db;
            ctx.gamma = gamma;
            let mut total = SlotCounts::new(detectors.len());
            let mut slots = 0u64;
            while slots < sweep.max_trials {
                let n = sweep.chunk.min(sweep.max_trials - slots);
                let chunk: Vec<Result<SlotCounts>> =
                    (slots..slots + n).into_par_iter().map(|t| run_slot(&ctx, t)).collect();
                for r in chunk {
                    total.merge(&r?);
                }
                slots += n;
                let bits = slots * bits_per_slot;
                if bits >= sweep.min_bits && total.errors.iter().all(|&e| e >= sweep.min_errors) {
                    break;
                }
            }
            let bits = slots * bits_per_slot;
            if bits < sweep.min_bits {
                log::warn!("point snr={snr_db} gamma={gamma}: {bits} bits below min_bits (max_trials reached)");
            }
            for (d, &kind) in detectors.iter().enumerate() {
                let errors = total.errors[d];
                let (ci_low, ci_high) = wilson_interval(errors, bits, Z95);
                result.rows.push(SweepRow {
                    detector: kind,
                    snr_db,
                    gamma,
                    bits,
                    errors,
                    ber: errors as f64 / bits as f64,
                    ci_low,
                    ci_high,
                    low_errors: errors < 10,
                    wall_time: total.nanos[d] as f64 * 1e-9,
                });
            }
            result.points.push(PointStats {
                snr_db,
                gamma,
                slots,
                vectors: slots * sweep.symbols_per_slot as u64,
                program_events: total.program_events,
                crossbar_reads: total.reads,
            });
            log::info!("point gamma={gamma} snr={snr_db}: {slots} slots");
        }
    }
    Ok(result)
}
