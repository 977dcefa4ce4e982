//! Mode dispatch and artifact writing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::bound::{eval_bound, BoundInputs, BoundReport};
use crate::analysis::complexity::{
    flops_per_symbol, hardware_complexity, throughput, time_complexity_table, ComplexityReport, CycleModel, CycleRow,
};
use crate::analysis::latency::{computation_latency, programming_latency_bound, ComponentDelays};
use crate::detnet::checkpoint;
use crate::detnet::train::train;
use crate::detnet::DetNetParams;
use crate::device::{channel_programming_latency, map_coefficient, program_cell, target_pair};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Mode};
use crate::harness::sweep::run_ber_sweep;
use crate::mimo::{generate_channel, sigma_from_snr, to_real, MimoConfig};
use crate::rng::{derive_seed, rng_from_seed};

/// Version string recorded in run manifests.
pub fn version_string() -> String {
    match option_env!("IMC_MIMO_GIT_DESCRIBE") {
        Some(d) => d.to_string(),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CHECKPOINT_FILE: &str = "detnet.ckpt";

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub wall_clock: f64,
}

/// Runs `config.mode`, writing its CSV files and a manifest into `out_dir`.
/// `threads = Some(1)` runs serially.
pub fn run_pipeline(config: &ExperimentConfig, out_dir: &Path, threads: Option<usize>) -> Result<RunArtifacts> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let files = match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(config, out_dir))?
        }
        None => dispatch(config, out_dir)?,
    };
    let wall_clock = start.elapsed().as_secs_f64();
    let manifest = out_dir.join(MANIFEST_FILE);
    let mut m = BufWriter::new(File::create(&manifest)?);
    writeln!(m, "version = {}", version_string())?;
    writeln!(m, "mode = {}", config.mode.name())?;
    writeln!(m, "seed = {}", config.seed)?;
    writeln!(m, "threads = {}", threads.map_or("default".to_string(), |n| n.to_string()))?;
    writeln!(m, "wall_clock_s = {wall_clock:.3}")?;
    for f in &files {
        writeln!(m, "output = {}", f.file_name().unwrap_or_default().to_string_lossy())?;
    }
    writeln!(m, "[config]")?;
    write!(m, "{}", config.to_kv())?;
    m.flush()?;
    Ok(RunArtifacts {
        files,
        manifest,
        wall_clock,
    })
}

fn dispatch(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    match config.mode {
        Mode::Train => run_train(config, out),
        Mode::EvalBer => run_eval(config, out),
        Mode::Bounds => run_bounds(config, out),
        Mode::Latency => run_latency(config, out),
        Mode::Complexity => run_complexity(config, out),
        Mode::Program => run_program_sim(config, out),
        Mode::Flops => run_flops(config, out),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn load_params(config: &ExperimentConfig) -> Result<Option<DetNetParams>> {
    config
        .checkpoint
        .as_deref()
        .map(|p| checkpoint::load(p, Some(&config.mimo)))
        .transpose()
}

fn run_train(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut rng = rng_from_seed(derive_seed(config.seed, &[u64::MAX]));
    let outcome = train(&config.mimo, &config.train, &config.device, &mut rng)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    checkpoint::save(&outcome.params, &ckpt)?;
    let loss_path = out.join("train_loss.csv");
    let mut w = csv_writer(&loss_path)?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in outcome.loss_history.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(vec![ckpt, loss_path])
}

fn run_eval(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let params = load_params(config)?;
    let result = run_ber_sweep(config, &config.sweep.detectors, params.as_ref())?;
    let path = out.join("ber.csv");
    result.write_csv(File::create(&path)?, true)?;
    let points = out.join("ber_points.csv");
    let mut w = csv_writer(&points)?;
    w.write_record(["snr_db", "gamma", "slots", "vectors", "program_events", "crossbar_reads"])?;
    for p in &result.points {
        w.write_record([
            p.snr_db.to_string(),
            p.gamma.to_string(),
            p.slots.to_string(),
            p.vectors.to_string(),
            p.program_events.to_string(),
            p.crossbar_reads.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![path, points])
}

/// Bound inputs for one (γ, σ_n) point from a checkpoint or configured step sizes.
pub fn bound_inputs(config: &ExperimentConfig, params: Option<&DetNetParams>, gamma: f64, sigma_n: f64) -> BoundInputs {
    match params {
        Some(p) => BoundInputs::from_params(p, config.device.n_p, gamma, sigma_n),
        None => BoundInputs {
            n_t: config.mimo.n_t,
            n_r: config.mimo.n_r,
            layers: config.mimo.layers,
            hidden: config.mimo.hidden,
            n_p: config.device.n_p,
            gamma,
            sigma_n,
            varpi1: config.varpi.0,
            varpi2: config.varpi.1,
        },
    }
}

fn run_bounds(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let params = load_params(config)?;
    let path = out.join("bounds.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["gamma", "snr_db", "sigma_n"];
    header.extend(BoundReport::CSV_HEADER);
    w.write_record(&header)?;
    for &gamma in &config.sweep.gammas {
        for &snr in &config.sweep.snr_db {
            let sigma = sigma_from_snr(snr);
            let r = eval_bound(&bound_inputs(config, params.as_ref(), gamma, sigma))?;
            let mut rec = vec![gamma.to_string(), snr.to_string(), sigma.to_string()];
            rec.extend(r.csv_row().iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(vec![path])
}

fn run_latency(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let path = out.join("latency.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["n_t", "n_r", "trial", "t_p", "t_p_bound", "t_c", "contained"])?;
    let t_c = computation_latency(config.mimo.layers, &ComponentDelays::default())?;
    for (si, &n) in config.latency.sizes.iter().enumerate() {
        let mc = MimoConfig::new(n, n, config.mimo.modulation, config.mimo.layers, config.mimo.hidden);
        let bound = programming_latency_bound(n, n, &config.device)?;
        for t in 0..config.latency.trials {
            let mut rng = rng_from_seed(derive_seed(config.seed, &[si as u64, t]));
            let h = to_real(&generate_channel(&mc, &mut rng));
            let t_p = channel_programming_latency(&h, &config.device);
            w.write_record([
                n.to_string(),
                n.to_string(),
                t.to_string(),
                t_p.to_string(),
                bound.to_string(),
                t_c.to_string(),
                (t_p <= bound).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(vec![path])
}

fn run_complexity(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let path = out.join("complexity.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["n_t", "n_r", "layers", "hidden", "a_size"];
    header.extend(ComplexityReport::CSV_HEADER);
    w.write_record(&header)?;
    let c = &config.mimo;
    let mut rec: Vec<String> = [c.n_t, c.n_r, c.layers, c.hidden, c.a_size]
        .iter()
        .map(usize::to_string)
        .collect();
    rec.extend(hardware_complexity(c).csv_row().iter().map(u64::to_string));
    w.write_record(&rec)?;
    w.flush()?;

    let time_path = out.join("time_complexity.csv");
    let mut w = csv_writer(&time_path)?;
    w.write_record(CycleRow::CSV_HEADER)?;
    for r in time_complexity_table(&config.complexity_sizes, &CycleModel::default()) {
        w.write_record([
            r.n.to_string(),
            r.zf_mmse.to_string(),
            r.sdr.to_string(),
            r.sd.to_string(),
            r.detnet.to_string(),
            r.proposed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![path, time_path])
}

/// Empirical mean and variance of Δh from pulse-by-pulse programming.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgramSimRow {
    pub h: f64,
    pub gamma: f64,
    pub n_p: u32,
    pub trials: u64,
    pub mean: f64,
    pub variance: f64,
    pub predicted: f64,
}

impl ProgramSimRow {
    pub fn rel_err(&self) -> f64 {
        if self.predicted == 0.0 {
            self.variance
        } else {
            (self.variance - self.predicted).abs() / self.predicted
        }
    }
}

const PROGRAM_CHUNK: u64 = 1024;

pub fn program_sim(config: &ExperimentConfig) -> Result<Vec<ProgramSimRow>> {
    let mut rows = Vec::new();
    let trials = config.program.trials;
    for (gi, &gamma) in config.program.gammas.iter().enumerate() {
        let spec = config.device.with_gamma(gamma);
        spec.validate()?;
        let mu = map_coefficient(&spec);
        for (hi, &h) in config.program.h_values.iter().enumerate() {
            let (_, dg) = target_pair(h, &spec);
            let point = (gi * config.program.h_values.len() + hi) as u64;
            let chunks: Vec<Result<(f64, f64)>> = (0..trials.div_ceil(PROGRAM_CHUNK))
                .into_par_iter()
                .map(|ci| {
                    let mut rng = rng_from_seed(derive_seed(config.seed, &[point, ci]));
                    let (mut s, mut s2) = (0.0, 0.0);
                    for _ in ci * PROGRAM_CHUNK..((ci + 1) * PROGRAM_CHUNK).min(trials) {
                        let (g, _) = program_cell(dg, &spec, false, &mut rng)?;
                        let d = (g - dg) / mu;
                        s += d;
                        s2 += d * d;
                    }
                    Ok((s, s2))
                })
                .collect();
            let (mut s, mut s2) = (0.0, 0.0);
            for c in chunks {
                let (a, b) = c?;
                s += a;
                s2 += b;
            }
            let n = trials as f64;
            let mean = s / n;
            rows.push(ProgramSimRow {
                h,
                gamma,
                n_p: spec.n_p,
                trials,
                mean,
                variance: (s2 - n * mean * mean) / (n - 1.0),
                predicted: crate::device::dh_variance(h, &spec),
            });
        }
    }
    Ok(rows)
}

fn run_program_sim(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let path = out.join("program_sim.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["h", "gamma", "n_p", "trials", "mean_dh", "var_dh", "predicted_var", "rel_err"])?;
    for r in program_sim(config)? {
        w.write_record([
            r.h.to_string(),
            r.gamma.to_string(),
            r.n_p.to_string(),
            r.trials.to_string(),
            r.mean.to_string(),
            r.variance.to_string(),
            r.predicted.to_string(),
            r.rel_err().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![path])
}

fn run_flops(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let path = out.join("flops.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["n_t", "n_r", "layers", "hidden", "flops_per_symbol", "symbols", "latency_s", "throughput_flops"])?;
    let c = &config.mimo;
    let f = flops_per_symbol(c);
    w.write_record([
        c.n_t.to_string(),
        c.n_r.to_string(),
        c.layers.to_string(),
        c.hidden.to_string(),
        f.to_string(),
        config.flops.symbols.to_string(),
        config.flops.latency_s.to_string(),
        throughput(f, config.flops.symbols, config.flops.latency_s).to_string(),
    ])?;
    w.flush()?;
    Ok(vec![path])
}
