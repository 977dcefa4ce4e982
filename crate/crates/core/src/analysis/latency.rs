//! Programming and computation latency.

use crate::device::DeviceSpec;
use crate::error::{Error, Result};

fn log_factor(n_t: usize) -> Result<f64> {
    if n_t < 2 {
        return Err(Error::Config(format!("latency bound needs n_t >= 2, got {n_t}")));
    }
    let ln = (n_t as f64).ln();
    Ok(ln.sqrt() + 1.0 / (std::f64::consts::PI.sqrt() * ln))
}

/// Upper bound on the expected latency of programming one row.
pub fn row_latency_bound(n_t: usize, spec: &DeviceSpec) -> Result<f64> {
    let lead = 2f64.sqrt() * spec.g_on * spec.n_p as f64 * spec.dt_w / (3.0 * spec.range());
    Ok(lead * log_factor(n_t)?)
}

/// Upper bound on total channel programming latency T_p:
/// `4√2·G_on·N_p·Δt_w·N_r / (3(G_on − G_off)) · (√ln N_t + 1/(√π ln N_t))`.
pub fn programming_latency_bound(n_t: usize, n_r: usize, spec: &DeviceSpec) -> Result<f64> {
    let lead = 4.0 * 2f64.sqrt() * spec.g_on * spec.n_p as f64 * spec.dt_w * n_r as f64 / (3.0 * spec.range());
    Ok(lead * log_factor(n_t)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentDelays {
    pub t_array: f64,
    pub t_adder: f64,
    pub t_relu: f64,
}

impl Default for ComponentDelays {
    fn default() -> Self {
        Self {
            t_array: 1e-9,
            t_adder: 1e-9,
            t_relu: 1e-9,
        }
    }
}

/// T_c = L (t_array + t_adder + t_relu).
pub fn computation_latency(layers: usize, delays: &ComponentDelays) -> Result<f64> {
    if delays.t_array < 0.0 || delays.t_adder < 0.0 || delays.t_relu < 0.0 {
        return Err(Error::Config("component delays must be nonnegative".into()));
    }
    Ok(layers as f64 * (delays.t_array + delays.t_adder + delays.t_relu))
}
