//! Behavioral execution of the detector on differential crossbar pairs.
//!
//! Peripherals (TIAs, inverters, adders, rectifiers) are ideal: a TIA with
//! feedback resistance `r` is an exact multiplication by `r`, adders are exact
//! sums, the rectifier is an exact ReLU. All hardware error therefore comes
//! from the programmed channel conductances. Signals are kept in normalized
//! units: every read divides the mapping coefficient back out.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::detnet::{relu, DetNetParams};
use crate::device::{program_matrix, DeviceSpec, ProgramOptions, ProgrammingResult};
use crate::error::{dim_err, Result};
use crate::mimo::MimoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Programmed open-loop from the channel; carries C2C error.
    Channel,
    /// Offline-tuned weights; exact unless weight noise is requested.
    Weight,
}

/// A pair of conductance matrices representing `(G⁺ − G⁻)/μ`.
#[derive(Debug, Clone)]
pub struct RealizedCrossbar {
    pub g_plus: DMatrix<f64>,
    pub g_minus: DMatrix<f64>,
    pub mu: f64,
    pub origin: Origin,
    diff: DMatrix<f64>,
}

impl RealizedCrossbar {
    pub fn new(g_plus: DMatrix<f64>, g_minus: DMatrix<f64>, mu: f64, origin: Origin) -> Self {
        let diff = &g_plus - &g_minus;
        Self {
            g_plus,
            g_minus,
            mu,
            origin,
            diff,
        }
    }

    pub fn from_programming(r: &ProgrammingResult) -> Self {
        Self::new(r.g_plus.clone(), r.g_minus.clone(), r.mu, Origin::Channel)
    }

    /// Maps a weight matrix so that its largest magnitude spans the full
    /// conductance range.
    pub fn from_weights(w: &DMatrix<f64>, spec: &DeviceSpec) -> Self {
        let wmax = w.amax();
        let mu = if wmax > 0.0 { spec.range() / wmax } else { spec.range() };
        let g_plus = w.map(|v| spec.g_off + mu * v.max(0.0));
        let g_minus = w.map(|v| spec.g_off + mu * (-v).max(0.0));
        Self::new(g_plus, g_minus, mu, Origin::Weight)
    }

    /// Weight mapping with open-loop programming error on each pulsed
    /// device, `ΔG ~ N(0, σ_Δg² N_p ΔG_target / (G_on − G_off))`.
    pub fn from_weights_noisy<R: Rng + ?Sized>(w: &DMatrix<f64>, spec: &DeviceSpec, rng: &mut R) -> Self {
        let exact = Self::from_weights(w, spec);
        let var_per_siemens = spec.sigma_dg().powi(2) * spec.n_p as f64 / spec.range();
        let mut perturb = |g: &DMatrix<f64>| {
            g.map(|gv| {
                let target = gv - spec.g_off;
                if target > 0.0 {
                    gv + (var_per_siemens * target).sqrt() * rng.sample::<f64, _>(StandardNormal)
                } else {
                    gv
                }
            })
        };
        let gp = perturb(&exact.g_plus);
        let gm = perturb(&exact.g_minus);
        Self::new(gp, gm, exact.mu, Origin::Weight)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.diff.shape()
    }

    /// Represented real matrix.
    pub fn represented(&self) -> DMatrix<f64> {
        &self.diff / self.mu
    }

    /// Output current `(G⁺ − G⁻) v` for input voltages `v`.
    pub fn analog_mvm(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.diff.ncols() {
            return Err(dim_err(self.diff.ncols(), v.len()));
        }
        Ok(&self.diff * v)
    }

    /// Current read on the other set of lines, `(G⁺ − G⁻)ᵀ v`.
    pub fn analog_mvm_transposed(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.diff.nrows() {
            return Err(dim_err(self.diff.nrows(), v.len()));
        }
        Ok(self.diff.tr_mul(v))
    }

    /// Normalized read: current divided by μ.
    pub fn read(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.analog_mvm(v)? / self.mu)
    }

    pub fn read_transposed(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.analog_mvm_transposed(v)? / self.mu)
    }
}

/// Programmed channel-dependent module. Programmed once per channel
/// realization and then only read, by every block and every received vector
/// of the slot.
#[derive(Debug)]
pub struct ChannelModule {
    pub crossbar: RealizedCrossbar,
    pub programming: ProgrammingResult,
    program_events: usize,
    reads: AtomicUsize,
}

impl ChannelModule {
    pub fn program<R: Rng + ?Sized>(
        config: &MimoConfig,
        h_real: &DMatrix<f64>,
        spec: &DeviceSpec,
        opts: ProgramOptions,
        rng: &mut R,
    ) -> Result<Self> {
        if h_real.shape() != (config.y_len(), config.x_len()) {
            return Err(dim_err(
                format!("{}x{}", config.y_len(), config.x_len()),
                format!("{}x{}", h_real.nrows(), h_real.ncols()),
            ));
        }
        let programming = program_matrix(h_real, spec, opts, rng)?;
        Ok(Self {
            crossbar: RealizedCrossbar::from_programming(&programming),
            programming,
            program_events: 1,
            reads: AtomicUsize::new(0),
        })
    }

    /// Number of times the arrays were programmed (always one).
    pub fn program_events(&self) -> usize {
        self.program_events
    }

    /// Number of channel-dependent block evaluations served.
    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    /// The perturbed channel `H + ΔH` held on the arrays.
    pub fn realized_channel(&self) -> DMatrix<f64> {
        self.crossbar.represented()
    }

    /// T_p for this channel: two sequential copies on the HᵀH path.
    pub fn programming_latency(&self) -> f64 {
        2.0 * self.programming.total_latency
    }
}

/// `s_k = x_{k-1} − α1·H̄ᵀy + α2·H̄ᵀH̄x_{k-1}` on the programmed arrays.
pub fn channel_dependent_block(
    x_prev: &DVector<f64>,
    module: &ChannelModule,
    y: &DVector<f64>,
    alpha1: f64,
    alpha2: f64,
) -> Result<DVector<f64>> {
    module.reads.fetch_add(1, Ordering::Relaxed);
    let cb = &module.crossbar;
    let hty = cb.read_transposed(y)?;
    let hx = cb.read(x_prev)?;
    let hthx = cb.read_transposed(&hx)?;
    Ok(x_prev - alpha1 * hty + alpha2 * hthx)
}

/// Crossbar groups and bias adders of one neural-network block.
#[derive(Debug, Clone)]
pub struct NeuralBlock {
    pub w1: RealizedCrossbar,
    pub b1: DVector<f64>,
    pub w2: RealizedCrossbar,
    pub b2: DVector<f64>,
    pub w3: RealizedCrossbar,
    pub b3: DVector<f64>,
    /// TIA gains of the channel-dependent module for this block.
    pub alpha1: f64,
    pub alpha2: f64,
}

/// `z = relu(W1 u + b1)`, `x = W2 z + b2`, `a = W3 z + b3`.
pub fn neural_block(u: &DVector<f64>, block: &NeuralBlock) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let z = relu(&(block.w1.read(u)? + &block.b1));
    let x = block.w2.read(&z)? + &block.b2;
    let a = block.w3.read(&z)? + &block.b3;
    Ok((z, x, a))
}

/// Trained parameters deployed onto weight crossbars.
#[derive(Debug, Clone)]
pub struct HardwareDetector {
    pub config: MimoConfig,
    pub blocks: Vec<NeuralBlock>,
}

#[derive(Debug, Clone)]
pub struct HardwareTrajectory {
    pub xs: Vec<DVector<f64>>,
}

impl HardwareTrajectory {
    pub fn output(&self) -> &DVector<f64> {
        self.xs.last().expect("at least one block")
    }
}

impl HardwareDetector {
    /// Exact weight mapping.
    pub fn deploy(params: &DetNetParams, spec: &DeviceSpec) -> Self {
        Self::build(params, |w| RealizedCrossbar::from_weights(w, spec))
    }

    /// Weight mapping with programming error, for sensitivity studies.
    pub fn deploy_noisy<R: Rng + ?Sized>(params: &DetNetParams, spec: &DeviceSpec, rng: &mut R) -> Self {
        Self::build(params, |w| RealizedCrossbar::from_weights_noisy(w, spec, rng))
    }

    fn build(params: &DetNetParams, mut map: impl FnMut(&DMatrix<f64>) -> RealizedCrossbar) -> Self {
        let blocks = params
            .blocks
            .iter()
            .map(|b| NeuralBlock {
                w1: map(&b.w1),
                b1: b.b1.clone(),
                w2: map(&b.w2),
                b2: b.b2.clone(),
                w3: map(&b.w3),
                b3: b.b3.clone(),
                alpha1: b.alpha1,
                alpha2: b.alpha2,
            })
            .collect();
        Self {
            config: params.config.clone(),
            blocks,
        }
    }

    /// Runs all L blocks from the zero state against one programmed channel.
    pub fn forward(&self, module: &ChannelModule, y: &DVector<f64>) -> Result<HardwareTrajectory> {
        let c = &self.config;
        if y.len() != c.y_len() {
            return Err(dim_err(c.y_len(), y.len()));
        }
        let mut x = DVector::zeros(c.x_len());
        let mut a = DVector::zeros(c.a_size);
        let mut xs = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let s = channel_dependent_block(&x, module, y, b.alpha1, b.alpha2)?;
            let mut u = DVector::zeros(c.x_len() + c.a_size);
            u.rows_mut(0, c.x_len()).copy_from(&s);
            u.rows_mut(c.x_len(), c.a_size).copy_from(&a);
            let (_, xn, an) = neural_block(&u, b)?;
            xs.push(xn.clone());
            x = xn;
            a = an;
        }
        Ok(HardwareTrajectory { xs })
    }
}
