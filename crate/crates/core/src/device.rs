//! Behavioral memristor model: open-loop pulse-train programming with
//! cycle-to-cycle (C2C) noise, and the row-by-row programming latency it
//! implies.
//!
//! A signed channel entry `h` is stored on a differential pair
//! `(G⁺, G⁻)`, both starting fully reset at `G_off`. With the mapping
//! coefficient `μ = (G_on − G_off)/3`, a positive entry raises `G⁺` by
//! `μ|h|` and a negative entry raises `G⁻` by the same amount, so only one
//! device of the pair is ever pulsed. Each pulse adds
//! `(G_on − G_off)/N_p + n_w` with `n_w ~ N(0, (γ(G_on − G_off))²)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mimo::{generate_channel, to_real, MimoConfig};

/// Largest |h| representable on a pair: the three-sigma design point.
pub const MAX_ENTRY: f64 = 3.0;

/// Above this C2C coefficient the spec is accepted with a warning.
pub const GAMMA_TYPICAL_MAX: f64 = 0.05;
pub const GAMMA_HARD_MAX: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceSpec {
    /// Maximum conductance (S).
    pub g_on: f64,
    /// Minimum conductance (S).
    pub g_off: f64,
    /// Pulses for a full G_off → G_on sweep.
    pub n_p: u32,
    /// C2C coefficient, as a fraction of the full conductance range.
    pub gamma: f64,
    /// Programming pulse width (s).
    pub dt_w: f64,
}

impl DeviceSpec {
    /// Device of Zeng et al. 2023. Only the potentiation C2C value is used.
    pub fn zeng2023() -> Self {
        Self {
            g_on: 230.99e-6,
            g_off: 79.93e-6,
            n_p: 256,
            gamma: 0.0441,
            dt_w: 10e-9,
        }
    }

    pub fn jerry2017() -> Self {
        Self {
            g_on: 1.79e-6,
            g_off: 0.04e-6,
            n_p: 32,
            gamma: 0.005,
            dt_w: 75e-9,
        }
    }

    pub fn luo2022() -> Self {
        Self {
            g_on: 27.5e-6,
            g_off: 1e-6,
            n_p: 150,
            gamma: 0.0365,
            dt_w: 630e-12,
        }
    }

    pub const PRESET_NAMES: [&'static str; 3] = ["zeng2023", "jerry2017", "luo2022"];
    pub const DEFAULT_PRESET: &'static str = "luo2022";

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "zeng2023" => Some(Self::zeng2023()),
            "jerry2017" => Some(Self::jerry2017()),
            "luo2022" => Some(Self::luo2022()),
            _ => None,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_n_p(mut self, n_p: u32) -> Self {
        self.n_p = n_p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g_off > 0.0 && self.g_on > self.g_off) {
            return Err(Error::Config(format!(
                "need g_on > g_off > 0, got g_on={:e} g_off={:e}",
                self.g_on, self.g_off
            )));
        }
        if self.n_p < 1 {
            return Err(Error::Config("n_p must be at least 1".into()));
        }
        if !(0.0..=GAMMA_HARD_MAX).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma {} outside [0, {GAMMA_HARD_MAX}]",
                self.gamma
            )));
        }
        if self.gamma > GAMMA_TYPICAL_MAX {
            log::warn!(
                "gamma {} exceeds the typical C2C range (0, {GAMMA_TYPICAL_MAX})",
                self.gamma
            );
        }
        if !(self.dt_w > 0.0) {
            return Err(Error::Config("dt_w must be positive".into()));
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.g_on - self.g_off
    }

    /// Nominal conductance step of one pulse.
    pub fn step(&self) -> f64 {
        self.range() / self.n_p as f64
    }

    /// Per-pulse noise standard deviation σ_Δg = γ (G_on − G_off).
    pub fn sigma_dg(&self) -> f64 {
        self.gamma * self.range()
    }
}

impl Default for DeviceSpec {
    fn default() -> Self {
        Self::luo2022()
    }
}

/// Conductance per unit of channel value, μ = (G_on − G_off)/3.
pub fn map_coefficient(spec: &DeviceSpec) -> f64 {
    spec.range() / MAX_ENTRY
}

pub fn clip_entry(h: f64) -> f64 {
    h.clamp(-MAX_ENTRY, MAX_ENTRY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductancePair {
    pub g_plus: f64,
    pub g_minus: f64,
}

impl ConductancePair {
    pub fn difference(&self) -> f64 {
        self.g_plus - self.g_minus
    }
}

/// Target pair and target conductance change for one entry (clipped to ±3).
pub fn target_pair(h: f64, spec: &DeviceSpec) -> (ConductancePair, f64) {
    let h = clip_entry(h);
    let mu = map_coefficient(spec);
    let dg = mu * h.abs();
    let pair = if h > 0.0 {
        ConductancePair {
            g_plus: spec.g_off + dg,
            g_minus: spec.g_off,
        }
    } else if h < 0.0 {
        ConductancePair {
            g_plus: spec.g_off,
            g_minus: spec.g_off + dg,
        }
    } else {
        ConductancePair {
            g_plus: spec.g_off,
            g_minus: spec.g_off,
        }
    };
    (pair, dg)
}

/// Round-to-nearest pulse count for a target conductance change.
pub fn pulse_count(target_dg: f64, spec: &DeviceSpec) -> u32 {
    (target_dg * spec.n_p as f64 / spec.range()).round() as u32
}

/// Applies a pulse train to one reset device and returns the achieved
/// conductance change and the number of pulses.
///
/// Every pulse is simulated individually. With `clip` set the achieved
/// change saturates at the physical range `[0, G_on − G_off]`.
pub fn program_cell<R: Rng + ?Sized>(
    target_dg: f64,
    spec: &DeviceSpec,
    clip: bool,
    rng: &mut R,
) -> Result<(f64, u32)> {
    let range = spec.range();
    // small slack for round-off in mu·|h| at the top of the range
    if !(target_dg >= 0.0 && target_dg <= range * (1.0 + 1e-12)) {
        return Err(Error::TargetOutOfRange {
            target: target_dg,
            range,
        });
    }
    let n = pulse_count(target_dg, spec);
    let step = spec.step();
    let sigma = spec.sigma_dg();
    let mut achieved = 0.0;
    for _ in 0..n {
        let nw: f64 = if sigma > 0.0 {
            sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        achieved += step + nw;
    }
    if clip {
        achieved = achieved.clamp(0.0, range);
    }
    Ok((achieved, n))
}

/// Closed-form draw of the programming error of one entry:
/// `Δh | h ~ N(0, 3γ²N_p|h|)`.
pub fn sample_dh<R: Rng + ?Sized>(h: f64, spec: &DeviceSpec, rng: &mut R) -> f64 {
    let var = dh_variance(h, spec);
    if var == 0.0 {
        return 0.0;
    }
    var.sqrt() * rng.sample::<f64, _>(StandardNormal)
}

/// Conditional variance of the programming error for entry `h` (clipped).
pub fn dh_variance(h: f64, spec: &DeviceSpec) -> f64 {
    3.0 * spec.gamma * spec.gamma * spec.n_p as f64 * clip_entry(h).abs()
}

/// Fast-path realization of a programmed matrix: saturate every entry and
/// add an independent closed-form error draw.
pub fn perturb_channel<R: Rng + ?Sized>(h: &DMatrix<f64>, spec: &DeviceSpec, rng: &mut R) -> DMatrix<f64> {
    h.map(|v| {
        let c = clip_entry(v);
        c + sample_dh(c, spec, rng)
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProgramOptions {
    /// Saturate achieved conductance changes at the physical range.
    pub clip_conductance: bool,
}

#[derive(Debug, Clone)]
pub struct ProgrammingResult {
    pub g_plus: DMatrix<f64>,
    pub g_minus: DMatrix<f64>,
    pub pulse_counts: DMatrix<u32>,
    /// Latency of each row: pulse width times the row's largest pulse count.
    pub latency_per_row: Vec<f64>,
    /// Latency of the whole matrix, T_m = Σ rows.
    pub total_latency: f64,
    pub mu: f64,
}

impl ProgrammingResult {
    /// Represented matrix `(G⁺ − G⁻)/μ`; the common G_off bias cancels.
    pub fn recovered(&self) -> DMatrix<f64> {
        (&self.g_plus - &self.g_minus) / self.mu
    }

    pub fn pair(&self, i: usize, j: usize) -> ConductancePair {
        ConductancePair {
            g_plus: self.g_plus[(i, j)],
            g_minus: self.g_minus[(i, j)],
        }
    }
}

/// Programs every entry of `h` onto its own differential pair, row by row.
///
/// Columns of a row are pulsed in parallel, so a row costs
/// `dt_w · max(pulses in row)`; rows are sequential.
pub fn program_matrix<R: Rng + ?Sized>(
    h: &DMatrix<f64>,
    spec: &DeviceSpec,
    opts: ProgramOptions,
    rng: &mut R,
) -> Result<ProgrammingResult> {
    if h.is_empty() {
        return Err(crate::error::dim_err("non-empty matrix", "0 entries"));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("channel matrix has non-finite entries".into()));
    }
    let (rows, cols) = h.shape();
    let mut g_plus = DMatrix::from_element(rows, cols, spec.g_off);
    let mut g_minus = DMatrix::from_element(rows, cols, spec.g_off);
    let mut pulse_counts = DMatrix::zeros(rows, cols);
    let mut latency_per_row = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut row_max = 0u32;
        for j in 0..cols {
            let hv = clip_entry(h[(i, j)]);
            let (_, target) = target_pair(hv, spec);
            let (achieved, n) = program_cell(target, spec, opts.clip_conductance, rng)?;
            if hv > 0.0 {
                g_plus[(i, j)] += achieved;
            } else if hv < 0.0 {
                g_minus[(i, j)] += achieved;
            }
            pulse_counts[(i, j)] = n;
            row_max = row_max.max(n);
        }
        latency_per_row.push(spec.dt_w * row_max as f64);
    }
    let total_latency = latency_per_row.iter().sum();
    Ok(ProgrammingResult {
        g_plus,
        g_minus,
        pulse_counts,
        latency_per_row,
        total_latency,
        mu: map_coefficient(spec),
    })
}

/// Latency T_m of programming `h` once. Depends only on pulse counts.
pub fn matrix_latency(h: &DMatrix<f64>, spec: &DeviceSpec) -> f64 {
    h.row_iter()
        .map(|row| {
            let max = row
                .iter()
                .map(|&v| pulse_count(target_pair(v, spec).1, spec))
                .max()
                .unwrap_or(0);
            spec.dt_w * max as f64
        })
        .sum()
}

/// Total programming latency T_p for one channel: the HᵀH path programs two
/// copies of H sequentially, and the Hᵀy copy (programmed in parallel) never
/// dominates, so T_p = 2 T_m.
pub fn channel_programming_latency(h_real: &DMatrix<f64>, spec: &DeviceSpec) -> f64 {
    2.0 * matrix_latency(h_real, spec)
}

/// Draws a Rayleigh channel for `config` and returns its T_p.
pub fn total_programming_latency<R: Rng + ?Sized>(config: &MimoConfig, spec: &DeviceSpec, rng: &mut R) -> f64 {
    let h = to_real(&generate_channel(config, rng));
    channel_programming_latency(&h, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mimo::Modulation;
    use crate::rng::rng_from_seed;
    use approx::assert_relative_eq;

    fn unit_spec() -> DeviceSpec {
        // mu = 1 µS, g_off = 1 µS
        DeviceSpec {
            g_on: 4e-6,
            g_off: 1e-6,
            n_p: 150,
            gamma: 0.02,
            dt_w: 1e-9,
        }
    }

    #[test]
    fn presets_validate() {
        for name in DeviceSpec::PRESET_NAMES {
            DeviceSpec::preset(name).unwrap().validate().unwrap();
        }
        assert!(DeviceSpec::preset("nope").is_none());
        assert_eq!(DeviceSpec::default(), DeviceSpec::luo2022());
        assert!(DeviceSpec::luo2022().with_gamma(0.07).validate().is_err());
        assert!(DeviceSpec::luo2022().with_gamma(0.055).validate().is_ok());
    }

    #[test]
    fn mapping_coefficient() {
        assert_relative_eq!(map_coefficient(&DeviceSpec::luo2022()), 8.833_333e-6, epsilon = 1e-11);
        let s = DeviceSpec { g_on: 4.0, g_off: 1.0, ..unit_spec() };
        assert_relative_eq!(map_coefficient(&s), 1.0);
        for spec in DeviceSpec::PRESET_NAMES.map(|n| DeviceSpec::preset(n).unwrap()) {
            assert_relative_eq!(3.0 * map_coefficient(&spec) + spec.g_off, spec.g_on, max_relative = 1e-14);
        }
    }

    #[test]
    fn target_pairs() {
        let spec = unit_spec();
        let (p, dg) = target_pair(-2.0, &spec);
        assert_relative_eq!(p.g_plus, 1e-6);
        assert_relative_eq!(p.g_minus, 3e-6, max_relative = 1e-12);
        assert_relative_eq!(dg, 2e-6, max_relative = 1e-12);

        let (p, dg) = target_pair(0.0, &spec);
        assert_eq!((p.g_plus, p.g_minus, dg), (1e-6, 1e-6, 0.0));

        let (p, _) = target_pair(3.0, &spec);
        assert_relative_eq!(p.g_plus, spec.g_on, max_relative = 1e-12);
        // saturation
        let (p, _) = target_pair(7.5, &spec);
        assert_relative_eq!(p.g_plus, spec.g_on, max_relative = 1e-12);
    }

    #[test]
    fn noiseless_cell_is_quantized_target() {
        let spec = unit_spec().with_gamma(0.0);
        let mut rng = rng_from_seed(1);
        let (dg, n) = program_cell(1.234e-6, &spec, false, &mut rng).unwrap();
        assert_eq!(n, pulse_count(1.234e-6, &spec));
        assert_relative_eq!(dg, n as f64 * spec.step(), max_relative = 1e-12);
        let (_, n) = program_cell(spec.range(), &spec, false, &mut rng).unwrap();
        assert_eq!(n, spec.n_p);
    }

    #[test]
    fn out_of_range_target_rejected() {
        let spec = unit_spec();
        let mut rng = rng_from_seed(1);
        assert!(program_cell(-1e-9, &spec, false, &mut rng).is_err());
        assert!(program_cell(spec.range() * 1.01, &spec, false, &mut rng).is_err());
    }

    #[test]
    fn clip_flag_bounds_achieved_change() {
        let spec = unit_spec().with_gamma(0.06);
        let mut rng = rng_from_seed(4);
        for _ in 0..200 {
            let (dg, _) = program_cell(spec.range(), &spec, true, &mut rng).unwrap();
            assert!((0.0..=spec.range()).contains(&dg));
        }
    }

    #[test]
    fn pulse_train_variance_follows_closed_form() {
        let spec = unit_spec();
        let mu = map_coefficient(&spec);
        let mut rng = rng_from_seed(7);
        let h = 2.0;
        let (_, target) = target_pair(h, &spec);
        let n = 100_000;
        let errs: Vec<f64> = (0..n)
            .map(|_| (program_cell(target, &spec, false, &mut rng).unwrap().0 - target) / mu)
            .collect();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = 3.0 * spec.gamma.powi(2) * spec.n_p as f64 * h;
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn closed_form_draw_edge_cases() {
        let mut rng = rng_from_seed(3);
        let spec = unit_spec();
        for _ in 0..100 {
            assert_eq!(sample_dh(0.0, &spec, &mut rng), 0.0);
            assert_eq!(sample_dh(1.7, &spec.with_gamma(0.0), &mut rng), 0.0);
        }
    }

    #[test]
    fn zero_matrix_costs_nothing() {
        let spec = DeviceSpec::luo2022();
        let r = program_matrix(&DMatrix::zeros(4, 6), &spec, ProgramOptions::default(), &mut rng_from_seed(0)).unwrap();
        assert_eq!(r.total_latency, 0.0);
        assert!(r.pulse_counts.iter().all(|&c| c == 0));
        assert_eq!(r.recovered(), DMatrix::zeros(4, 6));
    }

    #[test]
    fn noiseless_programming_recovers_within_quantization() {
        let spec = DeviceSpec::luo2022().with_gamma(0.0);
        let c = MimoConfig::new(3, 4, Modulation::Qpsk, 1, 1);
        let mut rng = rng_from_seed(5);
        let h = to_real(&generate_channel(&c, &mut rng));
        let r = program_matrix(&h, &spec, ProgramOptions::default(), &mut rng).unwrap();
        let q = spec.range() / (2.0 * spec.n_p as f64 * r.mu);
        let rec = r.recovered();
        for (a, b) in rec.iter().zip(h.iter()) {
            assert!((a - clip_entry(*b)).abs() <= q + 1e-12);
        }
        // at most one device of each pair moves
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                let p = r.pair(i, j);
                assert!(p.g_plus == spec.g_off || p.g_minus == spec.g_off);
            }
        }
    }

    #[test]
    fn row_latency_is_max_in_row() {
        let spec = DeviceSpec::luo2022();
        let h = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 3.0]);
        let r = program_matrix(&h, &spec, ProgramOptions::default(), &mut rng_from_seed(2)).unwrap();
        let counts: Vec<u32> = r.pulse_counts.iter().copied().collect();
        assert_eq!(counts, vec![50, 100, 150]);
        assert_relative_eq!(r.latency_per_row[0], 150.0 * spec.dt_w);
        assert_relative_eq!(r.total_latency, matrix_latency(&h, &spec));
    }

    #[test]
    fn single_pulse_device_latency_cap() {
        let spec = DeviceSpec::luo2022().with_n_p(1);
        let c = MimoConfig::new(4, 6, Modulation::Qpsk, 1, 1);
        let mut rng = rng_from_seed(8);
        for _ in 0..20 {
            let t = total_programming_latency(&c, &spec, &mut rng);
            assert!(t <= 2.0 * 2.0 * c.n_r as f64 * spec.dt_w + 1e-24);
        }
    }

    #[test]
    fn latency_scales_with_rows() {
        let spec = DeviceSpec::luo2022();
        let mut rng = rng_from_seed(9);
        let mean = |n_r: usize, rng: &mut crate::rng::SimRng| {
            let c = MimoConfig::new(8, n_r, Modulation::Qpsk, 1, 1);
            (0..20).map(|_| total_programming_latency(&c, &spec, rng)).sum::<f64>() / 20.0
        };
        let a = mean(16, &mut rng);
        let b = mean(32, &mut rng);
        assert!((b / a - 2.0).abs() < 0.2, "ratio {}", b / a);
    }
}
