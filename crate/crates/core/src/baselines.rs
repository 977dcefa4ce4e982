//! Classical detectors on the real-valued model: ZF, MMSE, exhaustive ML and
//! a depth-first Schnorr–Euchner sphere decoder.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::mimo::{Constellation, MimoConfig};

/// Upper limit on M^{N_t} for the exhaustive search.
pub const ML_SEARCH_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput {
    pub x_hat: DVector<f64>,
    pub soft: Option<DVector<f64>>,
    /// Tree nodes visited (ML: candidates evaluated).
    pub node_count: usize,
}

fn check_dims(h: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if h.nrows() != y.len() {
        return Err(dim_err(h.nrows(), y.len()));
    }
    Ok(())
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = a.cholesky().ok_or(Error::RankDeficient)?;
    // reject numerically singular Gram matrices
    let l = chol.l_dirty();
    let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_pivot * min_pivot < 1e-13 * scale {
        return Err(Error::RankDeficient);
    }
    Ok(chol.solve(b))
}

/// Zero-forcing: `(HᵀH)⁻¹Hᵀy`, then per-rail slicing.
pub fn zf_detect(h: &DMatrix<f64>, y: &DVector<f64>, constellation: &Constellation) -> Result<DetectorOutput> {
    check_dims(h, y)?;
    let soft = solve_spd(h.tr_mul(h), &h.tr_mul(y))?;
    Ok(DetectorOutput {
        x_hat: constellation.slice(&soft),
        soft: Some(soft),
        node_count: 0,
    })
}

/// Linear MMSE: `(HᵀH + σ²/E_rail · I)⁻¹Hᵀy`, then per-rail slicing.
pub fn mmse_detect(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma_n: f64,
    constellation: &Constellation,
) -> Result<DetectorOutput> {
    check_dims(h, y)?;
    let reg = sigma_n * sigma_n / constellation.rail_energy();
    let mut gram = h.tr_mul(h);
    for i in 0..gram.nrows() {
        gram[(i, i)] += reg;
    }
    let soft = solve_spd(gram, &h.tr_mul(y))?;
    Ok(DetectorOutput {
        x_hat: constellation.slice(&soft),
        soft: Some(soft),
        node_count: 0,
    })
}

/// Brute-force argmin of ‖y − Hx‖² over the full complex product set.
///
/// Candidates are visited in lexicographic symbol-index order (antenna 0
/// most significant) and only a strictly smaller metric replaces the
/// incumbent, so ties resolve to the lexicographically smallest candidate.
pub fn ml_detect_exhaustive(h: &DMatrix<f64>, y: &DVector<f64>, config: &MimoConfig) -> Result<DetectorOutput> {
    check_dims(h, y)?;
    let n_t = config.n_t;
    if h.ncols() != 2 * n_t {
        return Err(dim_err(2 * n_t, h.ncols()));
    }
    let m = config.modulation.order();
    let size = (m as u128).checked_pow(n_t as u32).unwrap_or(u128::MAX);
    if size > ML_SEARCH_LIMIT {
        return Err(Error::SearchSpace {
            size,
            limit: ML_SEARCH_LIMIT,
        });
    }
    let points = config.constellation().points();
    let mut x = DVector::zeros(2 * n_t);
    let mut best = x.clone();
    let mut best_metric = f64::INFINITY;
    let mut digits = vec![0usize; n_t];
    for _ in 0..size as usize {
        for (a, &d) in digits.iter().enumerate() {
            x[a] = points[d].re;
            x[n_t + a] = points[d].im;
        }
        let metric = (y - h * &x).norm_squared();
        if metric < best_metric {
            best_metric = metric;
            best.copy_from(&x);
        }
        // increment base-m counter, last antenna fastest
        for a in (0..n_t).rev() {
            digits[a] += 1;
            if digits[a] < m {
                break;
            }
            digits[a] = 0;
        }
    }
    Ok(DetectorOutput {
        x_hat: best,
        soft: None,
        node_count: size as usize,
    })
}

struct SphereSearch<'a> {
    r: &'a DMatrix<f64>,
    z: &'a DVector<f64>,
    alphabets: Vec<&'a [f64]>,
    x: Vec<f64>,
    best: Vec<f64>,
    radius: f64,
    nodes: usize,
}

impl SphereSearch<'_> {
    fn descend(&mut self, level: usize, dist: f64) {
        let n = self.x.len();
        let rii = self.r[(level, level)];
        let mut acc = self.z[level];
        for j in level + 1..n {
            acc -= self.r[(level, j)] * self.x[j];
        }
        let center = acc / rii;
        // Schnorr–Euchner order: nearest symbol first
        let mut order: Vec<(f64, f64)> = self.alphabets[level]
            .iter()
            .map(|&s| ((center - s).abs(), s))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for (d, s) in order {
            let inc = rii * rii * d * d;
            let nd = dist + inc;
            if nd >= self.radius {
                break;
            }
            self.nodes += 1;
            self.x[level] = s;
            if level == 0 {
                self.radius = nd;
                self.best.copy_from_slice(&self.x);
            } else {
                self.descend(level - 1, nd);
            }
        }
    }
}

/// Depth-first sphere decoder over the 2N_t real rails.
pub fn sphere_decode(h: &DMatrix<f64>, y: &DVector<f64>, config: &MimoConfig) -> Result<DetectorOutput> {
    check_dims(h, y)?;
    let n = config.x_len();
    if h.ncols() != n {
        return Err(dim_err(n, h.ncols()));
    }
    let qr = h.clone().qr();
    let r = qr.r();
    let z = qr.q().tr_mul(y);
    let rmax = r.diagonal().amax();
    if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * rmax.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient);
    }
    let constellation = config.constellation();
    let alphabets = (0..n).map(|i| constellation.rail(i).levels.as_slice()).collect();
    let mut search = SphereSearch {
        r: &r,
        z: &z,
        alphabets,
        x: vec![0.0; n],
        best: vec![0.0; n],
        radius: f64::INFINITY,
        nodes: 0,
    };
    search.descend(n - 1, 0.0);
    Ok(DetectorOutput {
        x_hat: DVector::from_vec(search.best),
        soft: None,
        node_count: search.nodes,
    })
}
