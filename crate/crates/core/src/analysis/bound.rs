//! Detection-error bound for the crossbar detector.
//!
//! With `Φ = √N_t + √N_r`, `K = √(6·√(2/π)·N_p)` and `ϖ1`, `ϖ2` the largest
//! step sizes over blocks:
//!
//! ```text
//! φ = 2ϖ2Φ²
//! τ = ϖ2Φ²(γΦK + 2)
//! ξ = 2ϖ1·√(N_t+N_r)·(σ_n√(2N_r) + γ(N_t+N_r)·√(3√(2/π)N_p))
//! Ω = √(4S/(3N_r))·e^(−S/8)
//! Γ = 2ϖ1ϖ2γΦ⁵(φ^L − τ^L)K / ((φ−1)(φ−τ))
//! E‖e_L‖ ≤ ξ + Γ + [ξ(1−τL)/(1−τ) + Γ(L − 1/(φ−1))]·Ω + O(Ω²)
//! ```
//!
//! The first-order bound drops the `O(Ω²)` remainder. The un-expanded form
//! that the first-order bound is the Taylor expansion of is reported
//! alongside it.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::detnet::{ideal_forward, DetNetParams};
use crate::device::{perturb_channel, DeviceSpec};
use crate::error::{Error, Result};
use crate::mimo::{generate_channel, to_real};

/// Threshold below which `φ − τ` is treated as zero.
pub const DEGENERATE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub n_t: usize,
    pub n_r: usize,
    pub layers: usize,
    pub hidden: usize,
    pub n_p: u32,
    pub gamma: f64,
    pub sigma_n: f64,
    /// max_k α1k
    pub varpi1: f64,
    /// max_k α2k
    pub varpi2: f64,
}

impl BoundInputs {
    pub fn from_params(params: &DetNetParams, n_p: u32, gamma: f64, sigma_n: f64) -> Self {
        let (varpi1, varpi2) = params.alpha_maxima();
        let c = &params.config;
        Self {
            n_t: c.n_t,
            n_r: c.n_r,
            layers: c.layers,
            hidden: c.hidden,
            n_p,
            gamma,
            sigma_n,
            varpi1,
            varpi2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.n_t > 0 && self.n_r > 0 && self.layers > 0 && self.hidden > 0 && self.n_p > 0;
        let nonneg = self.gamma >= 0.0 && self.sigma_n >= 0.0 && self.varpi1 >= 0.0 && self.varpi2 >= 0.0;
        if !(positive && nonneg) {
            return Err(Error::Config(format!("invalid bound inputs {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    /// Φ = √N_t + √N_r
    pub big_phi: f64,
    pub phi: f64,
    pub tau: f64,
    pub xi: f64,
    pub omega: f64,
    pub gamma_cap: f64,
    /// First-order bound (remainder dropped).
    pub bound: f64,
    /// Un-expanded form, all orders in Ω.
    pub bound_unexpanded: f64,
}

impl BoundReport {
    pub const CSV_HEADER: [&'static str; 8] =
        ["big_phi", "phi", "tau", "xi", "omega", "gamma_cap", "bound", "bound_unexpanded"];

    pub fn csv_row(&self) -> [f64; 8] {
        [
            self.big_phi,
            self.phi,
            self.tau,
            self.xi,
            self.omega,
            self.gamma_cap,
            self.bound,
            self.bound_unexpanded,
        ]
    }
}

/// `(φ^L − τ^L)/(φ − τ)`, with its limit `Lφ^(L−1)` when φ = τ.
fn power_difference_quotient(phi: f64, tau: f64, l: i32) -> f64 {
    if (phi - tau).abs() < DEGENERATE_EPS {
        l as f64 * phi.powi(l - 1)
    } else {
        (phi.powi(l) - tau.powi(l)) / (phi - tau)
    }
}

pub fn eval_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    let nt = inputs.n_t as f64;
    let nr = inputs.n_r as f64;
    let s = inputs.hidden as f64;
    let l = inputs.layers as i32;
    let np = inputs.n_p as f64;
    let g = inputs.gamma;
    let sqrt_2_pi = (2.0 / std::f64::consts::PI).sqrt();

    let big_phi = nt.sqrt() + nr.sqrt();
    let k = (6.0 * sqrt_2_pi * np).sqrt();
    let phi = 2.0 * inputs.varpi2 * big_phi.powi(2);
    let tau = inputs.varpi2 * big_phi.powi(2) * (g * big_phi * k + 2.0);
    let xi = 2.0
        * inputs.varpi1
        * (nt + nr).sqrt()
        * (inputs.sigma_n * (2.0 * nr).sqrt() + g * (nt + nr) * (3.0 * sqrt_2_pi * np).sqrt());
    let omega = (4.0 * s / (3.0 * nr)).sqrt() * (-s / 8.0).exp();

    if (phi - 1.0).abs() < DEGENERATE_EPS {
        return Err(Error::Singular("phi = 1"));
    }
    if (tau - 1.0).abs() < DEGENERATE_EPS {
        return Err(Error::Singular("tau = 1"));
    }
    let c = 2.0 * inputs.varpi1 * inputs.varpi2 * g * k;
    let amplitude = c * big_phi.powi(5) * power_difference_quotient(phi, tau, l);
    let gamma_cap = amplitude / (phi - 1.0);
    let lf = l as f64;
    let bound = xi + gamma_cap + (xi * (1.0 - tau * lf) / (1.0 - tau) + gamma_cap * (lf - 1.0 / (phi - 1.0))) * omega;

    let t = omega + 1.0;
    let first = xi * t * (1.0 - tau * t.powi(l)) / (1.0 - tau * t);
    let second = amplitude * t.powi(l + 1) / (phi * t - 1.0);
    Ok(BoundReport {
        big_phi,
        phi,
        tau,
        xi,
        omega,
        gamma_cap,
        bound,
        bound_unexpanded: first + second,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainmentReport {
    /// Monte Carlo mean of ‖e_L‖.
    pub mean_error: f64,
    pub std_error: f64,
    pub bound: f64,
    /// mean / bound
    pub ratio: f64,
    pub trials: usize,
}

/// Monte Carlo `E‖M(H+ΔH, y0+n) − M(H, y0)‖` for trained parameters, with
/// ΔH drawn from the closed-form programming-error law.
pub fn check_bound_containment<R: Rng + ?Sized>(
    inputs: &BoundInputs,
    params: &DetNetParams,
    trials: usize,
    rng: &mut R,
) -> Result<ContainmentReport> {
    let c = &params.config;
    let device = DeviceSpec::luo2022().with_n_p(inputs.n_p).with_gamma(inputs.gamma);
    let report = eval_bound(inputs)?;
    let con = c.constellation();
    let mut errs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let h = to_real(&generate_channel(c, rng));
        let x = con.random_symbols(rng).real;
        let y0 = &h * &x;
        let n = DVector::from_fn(c.y_len(), |_, _| inputs.sigma_n * rng.sample::<f64, _>(StandardNormal));
        let hp = if inputs.gamma > 0.0 {
            perturb_channel(&h, &device, rng)
        } else {
            h.clone()
        };
        let noisy = ideal_forward(params, &hp, &(&y0 + n))?;
        let clean = ideal_forward(params, &h, &y0)?;
        errs.push((noisy.output() - clean.output()).norm());
    }
    let n = errs.len().max(1) as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(ContainmentReport {
        mean_error: mean,
        std_error: (var / n).sqrt(),
        bound: report.bound,
        ratio: mean / report.bound,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mimo::{MimoConfig, Modulation};
    use crate::rng::rng_from_seed;

    fn base() -> BoundInputs {
        BoundInputs {
            n_t: 4,
            n_r: 6,
            layers: 10,
            hidden: 64,
            n_p: 150,
            gamma: 0.02,
            sigma_n: 0.3,
            varpi1: 0.05,
            varpi2: 0.05,
        }
    }

    #[test]
    fn large_width_limit_drops_omega_terms() {
        let r = eval_bound(&BoundInputs { hidden: 2000, ..base() }).unwrap();
        assert!(r.omega < 1e-100);
        assert_eq!(r.bound, r.xi + r.gamma_cap);
    }

    #[test]
    fn noiseless_bound_is_zero() {
        let r = eval_bound(&BoundInputs { gamma: 0.0, sigma_n: 0.0, ..base() }).unwrap();
        assert_eq!((r.xi, r.gamma_cap, r.bound), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unit_phi_is_singular() {
        // φ = 2ϖ2Φ² = 1
        let phi_sq = (4f64.sqrt() + 6f64.sqrt()).powi(2);
        let r = eval_bound(&BoundInputs { varpi2: 0.5 / phi_sq, ..base() });
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn remainder_is_second_order_in_omega() {
        let mut prev = None;
        for s in [32usize, 48, 64, 96] {
            let r = eval_bound(&BoundInputs { hidden: s, ..base() }).unwrap();
            let rem = (r.bound_unexpanded - r.bound).abs() / r.omega.powi(2);
            if let Some(p) = prev {
                // O(Ω²): normalized remainder stays bounded as Ω shrinks
                assert!(rem <= 2.0 * p + 1e-9, "{rem} vs {p}");
            }
            prev = Some(rem);
        }
    }

    #[test]
    fn containment_is_zero_without_perturbation() {
        let c = MimoConfig::new(2, 3, Modulation::Qpsk, 3, 8);
        let mut rng = rng_from_seed(3);
        let p = DetNetParams::init(&c, &mut rng);
        let inputs = BoundInputs::from_params(&p, 150, 0.0, 0.0);
        let r = check_bound_containment(&inputs, &p, 20, &mut rng).unwrap();
        assert_eq!(r.mean_error, 0.0);
    }
}
