//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, keys are dotted (`mimo.n_t`).
//! Lists are comma separated. Unknown and repeated keys are rejected with the
//! offending line number.
//!
//! ```text
//! mode = eval-ber
//! seed = 7
//! mimo.n_t = 4
//! mimo.n_r = 6
//! device.preset = luo2022
//! sweep.snr_db = 0, 4, 8, 12
//! sweep.detectors = zf, mmse, sd, detnet-hw
//! detnet.checkpoint = runs/detnet.ckpt
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::detnet::train::TrainConfig;
use crate::detnet::{LossWeighting, INITIAL_ALPHA};
use crate::device::DeviceSpec;
use crate::error::{Error, Result};
use crate::mimo::{MimoConfig, Modulation};

/// Smallest admissible bit budget for a reported BER point.
pub const MIN_BITS_FLOOR: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    EvalBer,
    Bounds,
    Latency,
    Complexity,
    Program,
    Flops,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Train,
        Mode::EvalBer,
        Mode::Bounds,
        Mode::Latency,
        Mode::Complexity,
        Mode::Program,
        Mode::Flops,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::EvalBer => "eval-ber",
            Mode::Bounds => "bounds",
            Mode::Latency => "latency",
            Mode::Complexity => "complexity",
            Mode::Program => "program-sim",
            Mode::Flops => "flops",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Zf,
    Mmse,
    /// Exhaustive search.
    Ml,
    /// Sphere decoder.
    Sd,
    /// Software DetNet on the exact channel.
    DetNet,
    /// DetNet on the programmed crossbars.
    DetNetHw,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 6] = [
        DetectorKind::Zf,
        DetectorKind::Mmse,
        DetectorKind::Ml,
        DetectorKind::Sd,
        DetectorKind::DetNet,
        DetectorKind::DetNetHw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Zf => "zf",
            DetectorKind::Mmse => "mmse",
            DetectorKind::Ml => "ml",
            DetectorKind::Sd => "sd",
            DetectorKind::DetNet => "detnet",
            DetectorKind::DetNetHw => "detnet-hw",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::UnknownDetector(s.to_string()))
    }

    pub fn needs_params(self) -> bool {
        matches!(self, DetectorKind::DetNet | DetectorKind::DetNetHw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub gammas: Vec<f64>,
    pub min_bits: u64,
    pub min_errors: u64,
    /// Cap on channel slots per point.
    pub max_trials: u64,
    pub symbols_per_slot: usize,
    /// Slots evaluated between stopping-rule checks.
    pub chunk: u64,
    pub detectors: Vec<DetectorKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 4.0, 8.0, 12.0],
            gammas: vec![0.0],
            min_bits: 100_000,
            min_errors: 100,
            max_trials: 200_000,
            symbols_per_slot: 14,
            chunk: 64,
            detectors: vec![DetectorKind::Zf, DetectorKind::Mmse, DetectorKind::Sd],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramSimConfig {
    pub h_values: Vec<f64>,
    pub gammas: Vec<f64>,
    pub trials: u64,
}

impl Default for ProgramSimConfig {
    fn default() -> Self {
        Self {
            h_values: vec![0.5, 1.0, 2.0, 3.0],
            gammas: vec![0.01, 0.0365],
            trials: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyConfig {
    pub sizes: Vec<usize>,
    /// Random channels per size.
    pub trials: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            sizes: vec![4, 8, 16],
            trials: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlopsConfig {
    pub symbols: u64,
    /// Processing latency in seconds used for throughput.
    pub latency_s: f64,
}

impl Default for FlopsConfig {
    fn default() -> Self {
        Self {
            symbols: 14,
            latency_s: 33.91e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub mimo: MimoConfig,
    pub preset: String,
    pub device: DeviceSpec,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub checkpoint: Option<PathBuf>,
    /// Step sizes for the bound when no checkpoint is given.
    pub varpi: (f64, f64),
    pub program: ProgramSimConfig,
    pub latency: LatencyConfig,
    pub complexity_sizes: Vec<usize>,
    pub flops: FlopsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::EvalBer,
            seed: 0,
            mimo: MimoConfig::new(4, 6, Modulation::Qpsk, 10, 64),
            preset: DeviceSpec::DEFAULT_PRESET.to_string(),
            device: DeviceSpec::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            checkpoint: None,
            varpi: (INITIAL_ALPHA, INITIAL_ALPHA),
            program: ProgramSimConfig::default(),
            latency: LatencyConfig::default(),
            complexity_sizes: vec![2, 4, 8, 16, 32, 64],
            flops: FlopsConfig::default(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse '{v}' for {key}"))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(format!("{key} must not be empty"));
    }
    items.into_iter().map(|s| parse_num(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("{key} must be true or false, got '{v}'")),
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// Device overrides are applied after the preset, whatever their order in
/// the file.
#[derive(Default)]
struct DeviceOverrides {
    gamma: Option<f64>,
    n_p: Option<u32>,
    g_on: Option<f64>,
    g_off: Option<f64>,
    dt_w: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut seen: Vec<String> = Vec::new();
        let mut dev = DeviceOverrides::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected 'key = value'")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!("line {line_no}: duplicate key '{key}'")));
            }
            c.set(key, value, &mut dev)
                .map_err(|m| Error::Config(format!("line {line_no}: key '{key}': {m}")))?;
            seen.push(key.to_string());
        }
        c.device = DeviceSpec::preset(&c.preset).ok_or_else(|| {
            Error::Config(format!(
                "unknown device preset '{}' (expected one of {})",
                c.preset,
                DeviceSpec::PRESET_NAMES.join(", ")
            ))
        })?;
        c.apply_overrides(&dev);
        c.validate()?;
        Ok(c)
    }

    fn apply_overrides(&mut self, dev: &DeviceOverrides) {
        let d = &mut self.device;
        d.gamma = dev.gamma.unwrap_or(d.gamma);
        d.n_p = dev.n_p.unwrap_or(d.n_p);
        d.g_on = dev.g_on.unwrap_or(d.g_on);
        d.g_off = dev.g_off.unwrap_or(d.g_off);
        d.dt_w = dev.dt_w.unwrap_or(d.dt_w);
    }

    fn set(&mut self, key: &str, v: &str, dev: &mut DeviceOverrides) -> std::result::Result<(), String> {
        match key {
            "mode" => self.mode = Mode::parse(v).ok_or_else(|| format!("unknown mode '{v}'"))?,
            "seed" => self.seed = parse_num(key, v)?,
            "mimo.n_t" => {
                self.mimo.n_t = parse_num(key, v)?;
                self.mimo.a_size = 4 * self.mimo.n_t;
            }
            "mimo.n_r" => self.mimo.n_r = parse_num(key, v)?,
            "mimo.modulation" => {
                self.mimo.modulation = Modulation::parse(v).ok_or_else(|| format!("unknown modulation '{v}'"))?
            }
            "mimo.layers" => self.mimo.layers = parse_num(key, v)?,
            "mimo.hidden" => self.mimo.hidden = parse_num(key, v)?,
            "mimo.a_size" => self.mimo.a_size = parse_num(key, v)?,
            "device.preset" => self.preset = v.to_string(),
            "device.gamma" => dev.gamma = Some(parse_num(key, v)?),
            "device.n_p" => dev.n_p = Some(parse_num(key, v)?),
            "device.g_on" => dev.g_on = Some(parse_num(key, v)?),
            "device.g_off" => dev.g_off = Some(parse_num(key, v)?),
            "device.dt_w" => dev.dt_w = Some(parse_num(key, v)?),
            "train.epochs" => self.train.epochs = parse_num(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, v)?,
            "train.lr" => self.train.lr = parse_num(key, v)?,
            "train.snr_min_db" => self.train.snr_train_range_db.0 = parse_num(key, v)?,
            "train.snr_max_db" => self.train.snr_train_range_db.1 = parse_num(key, v)?,
            "train.gamma" => self.train.gamma_train = parse_num(key, v)?,
            "train.loss_weighting" => {
                self.train.loss_weighting =
                    LossWeighting::parse(v).ok_or_else(|| format!("unknown loss weighting '{v}'"))?
            }
            "train.lr_decay" => self.train.lr_decay = parse_bool(key, v)?,
            "sweep.snr_db" => self.sweep.snr_db = parse_list(key, v)?,
            "sweep.gammas" => self.sweep.gammas = parse_list(key, v)?,
            "sweep.min_bits" => self.sweep.min_bits = parse_num(key, v)?,
            "sweep.min_errors" => self.sweep.min_errors = parse_num(key, v)?,
            "sweep.max_trials" => self.sweep.max_trials = parse_num(key, v)?,
            "sweep.symbols_per_slot" => self.sweep.symbols_per_slot = parse_num(key, v)?,
            "sweep.chunk" => self.sweep.chunk = parse_num(key, v)?,
            "sweep.detectors" => {
                self.sweep.detectors = parse_list::<String>(key, v)?
                    .iter()
                    .map(|s| DetectorKind::parse(s).map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "detnet.checkpoint" => self.checkpoint = Some(PathBuf::from(v)),
            "bounds.varpi1" => self.varpi.0 = parse_num(key, v)?,
            "bounds.varpi2" => self.varpi.1 = parse_num(key, v)?,
            "program.h_values" => self.program.h_values = parse_list(key, v)?,
            "program.gammas" => self.program.gammas = parse_list(key, v)?,
            "program.trials" => self.program.trials = parse_num(key, v)?,
            "latency.sizes" => self.latency.sizes = parse_list(key, v)?,
            "latency.trials" => self.latency.trials = parse_num(key, v)?,
            "complexity.sizes" => self.complexity_sizes = parse_list(key, v)?,
            "flops.symbols" => self.flops.symbols = parse_num(key, v)?,
            "flops.latency_s" => self.flops.latency_s = parse_num(key, v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.mimo.validate()?;
        self.device.validate()?;
        self.train.validate()?;
        let s = &self.sweep;
        if s.snr_db.is_empty() || s.gammas.is_empty() || s.detectors.is_empty() {
            return Err(Error::Config("sweep lists must be nonempty".into()));
        }
        if s.min_bits < MIN_BITS_FLOOR {
            return Err(Error::Config(format!(
                "sweep.min_bits must be at least {MIN_BITS_FLOOR}, got {}",
                s.min_bits
            )));
        }
        if s.max_trials < 1 || s.symbols_per_slot < 1 || s.chunk < 1 {
            return Err(Error::Config("max_trials, symbols_per_slot and chunk must be at least 1".into()));
        }
        if s.gammas.iter().any(|g| !(*g >= 0.0)) || self.program.gammas.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::Config("gammas must be nonnegative".into()));
        }
        if self.program.trials < 2 || self.latency.trials < 1 {
            return Err(Error::Config("program.trials must be at least 2, latency.trials at least 1".into()));
        }
        if self.latency.sizes.iter().any(|&n| n < 2) {
            return Err(Error::Config("latency.sizes must be at least 2".into()));
        }
        if !(self.flops.latency_s > 0.0) {
            return Err(Error::Config("flops.latency_s must be positive".into()));
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parses back to an equal config
    /// when the device matches its preset plus overrides.
    pub fn to_kv(&self) -> String {
        let mut o = String::new();
        let d = &self.device;
        let t = &self.train;
        let s = &self.sweep;
        let detectors: Vec<&str> = s.detectors.iter().map(|d| d.name()).collect();
        let lines: Vec<(&str, String)> = vec![
            ("mode", self.mode.name().into()),
            ("seed", self.seed.to_string()),
            ("mimo.n_t", self.mimo.n_t.to_string()),
            ("mimo.n_r", self.mimo.n_r.to_string()),
            ("mimo.modulation", self.mimo.modulation.name().into()),
            ("mimo.layers", self.mimo.layers.to_string()),
            ("mimo.hidden", self.mimo.hidden.to_string()),
            ("mimo.a_size", self.mimo.a_size.to_string()),
            ("device.preset", self.preset.clone()),
            ("device.gamma", d.gamma.to_string()),
            ("device.n_p", d.n_p.to_string()),
            ("device.g_on", d.g_on.to_string()),
            ("device.g_off", d.g_off.to_string()),
            ("device.dt_w", d.dt_w.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.snr_min_db", t.snr_train_range_db.0.to_string()),
            ("train.snr_max_db", t.snr_train_range_db.1.to_string()),
            ("train.gamma", t.gamma_train.to_string()),
            ("train.loss_weighting", t.loss_weighting.name().into()),
            ("train.lr_decay", t.lr_decay.to_string()),
            ("sweep.snr_db", join(&s.snr_db)),
            ("sweep.gammas", join(&s.gammas)),
            ("sweep.min_bits", s.min_bits.to_string()),
            ("sweep.min_errors", s.min_errors.to_string()),
            ("sweep.max_trials", s.max_trials.to_string()),
            ("sweep.symbols_per_slot", s.symbols_per_slot.to_string()),
            ("sweep.chunk", s.chunk.to_string()),
            ("sweep.detectors", detectors.join(", ")),
            ("bounds.varpi1", self.varpi.0.to_string()),
            ("bounds.varpi2", self.varpi.1.to_string()),
            ("program.h_values", join(&self.program.h_values)),
            ("program.gammas", join(&self.program.gammas)),
            ("program.trials", self.program.trials.to_string()),
            ("latency.sizes", join(&self.latency.sizes)),
            ("latency.trials", self.latency.trials.to_string()),
            ("complexity.sizes", join(&self.complexity_sizes)),
            ("flops.symbols", self.flops.symbols.to_string()),
            ("flops.latency_s", self.flops.latency_s.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(o, "{k} = {v}");
        }
        if let Some(p) = &self.checkpoint {
            let _ = writeln!(o, "detnet.checkpoint = {}", p.display());
        }
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let c = ExperimentConfig::parse(
            "mode = eval-ber\nseed = 7 # master\nmimo.n_t = 4\nmimo.n_r = 6\n\
             sweep.snr_db = 0, 4, 8\nsweep.detectors = zf, detnet-hw\ndetnet.checkpoint = a.ckpt\n",
        )
        .unwrap();
        assert_eq!(c.mode, Mode::EvalBer);
        assert_eq!(c.seed, 7);
        assert_eq!(c.mimo.a_size, 16);
        assert_eq!(c.sweep.snr_db, vec![0.0, 4.0, 8.0]);
        assert_eq!(c.sweep.detectors, vec![DetectorKind::Zf, DetectorKind::DetNetHw]);
        assert_eq!(c.checkpoint.as_deref(), Some(Path::new("a.ckpt")));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys_with_line() {
        let e = ExperimentConfig::parse("seed = 1\n\nmimo.nt = 4\n").unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("mimo.nt"), "{e}");
        let e = ExperimentConfig::parse("seed = 1\nseed = 2\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("duplicate"), "{e}");
        let e = ExperimentConfig::parse("seed = x\n").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("seed"), "{e}");
        assert!(ExperimentConfig::parse("sweep.detectors = zf, nope\n").is_err());
        assert!(ExperimentConfig::parse("device.preset = nope\n").is_err());
        assert!(ExperimentConfig::parse("no equals sign\n").is_err());
    }

    #[test]
    fn enforces_invariants() {
        assert!(ExperimentConfig::parse("sweep.min_bits = 9999\n").is_err());
        assert!(ExperimentConfig::parse("sweep.snr_db = \n").is_err());
        assert!(ExperimentConfig::parse("mimo.n_t = 8\nmimo.n_r = 6\n").is_err());
    }

    #[test]
    fn device_overrides_apply_after_preset() {
        let c = ExperimentConfig::parse("device.gamma = 0.02\ndevice.preset = jerry2017\n").unwrap();
        assert_eq!(c.device, DeviceSpec::jerry2017().with_gamma(0.02));
    }

    #[test]
    fn canonical_rendering_round_trips() {
        let mut c = ExperimentConfig::parse("seed = 3\nmimo.modulation = 16qam\nsweep.gammas = 0, 0.02\n").unwrap();
        c.checkpoint = Some(PathBuf::from("x/y.ckpt"));
        assert_eq!(ExperimentConfig::parse(&c.to_kv()).unwrap(), c);
    }
}
