//! Software model of the unfolded projected-gradient detector.
//!
//! Block `k` maps `(x_{k-1}, a_{k-1})` to `(x_k, a_k)`:
//!
//! ```text
//! s_k = x_{k-1} - α1k·Hᵀy + α2k·HᵀH·x_{k-1}
//! u_k = [s_k; a_{k-1}]
//! z_k = relu(W1k·u_k + b1k)
//! x_k = W2k·z_k + b2k
//! a_k = W3k·z_k + b3k
//! ```
//!
//! starting from `x_0 = 0`, `a_0 = 0`. This module holds the exact-arithmetic
//! forward pass with a cache for manual backpropagation; the crossbar model
//! in [`crate::crossbar`] re-implements the same recursion on conductances.

pub mod checkpoint;
pub mod train;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{dim_err, Result};
use crate::mimo::MimoConfig;

pub const INITIAL_ALPHA: f64 = 1e-2;
pub const MIN_ALPHA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w3: DMatrix<f64>,
    pub b3: DVector<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Block {
    fn zeros(config: &MimoConfig) -> Self {
        let (x, s, a) = (config.x_len(), config.hidden, config.a_size);
        Self {
            w1: DMatrix::zeros(s, x + a),
            b1: DVector::zeros(s),
            w2: DMatrix::zeros(x, s),
            b2: DVector::zeros(x),
            w3: DMatrix::zeros(a, s),
            b3: DVector::zeros(a),
            alpha1: 0.0,
            alpha2: 0.0,
        }
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
            self.w3.as_mut_slice(),
            self.b3.as_mut_slice(),
            std::slice::from_mut(&mut self.alpha1),
            std::slice::from_mut(&mut self.alpha2),
        ]
    }

    fn slices(&self) -> [&[f64]; 8] {
        [
            self.w1.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
            self.w3.as_slice(),
            self.b3.as_slice(),
            std::slice::from_ref(&self.alpha1),
            std::slice::from_ref(&self.alpha2),
        ]
    }
}

/// Names of the per-block parameter groups, in [`Block`] slice order.
pub const GROUP_NAMES: [&str; 8] = ["w1", "b1", "w2", "b2", "w3", "b3", "alpha1", "alpha2"];

/// Trainable parameters for all L blocks. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct DetNetParams {
    pub config: MimoConfig,
    pub blocks: Vec<Block>,
}

impl DetNetParams {
    pub fn zeros(config: &MimoConfig) -> Self {
        Self {
            config: config.clone(),
            blocks: (0..config.layers).map(|_| Block::zeros(config)).collect(),
        }
    }

    /// He-initialized weights, zero biases, and step sizes of 1e-2.
    pub fn init<R: Rng + ?Sized>(config: &MimoConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(config);
        let he = |fan_in: usize| Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let d1 = he(config.x_len() + config.a_size);
        let d23 = he(config.hidden);
        for b in &mut p.blocks {
            b.w1.iter_mut().for_each(|v| *v = d1.sample(rng));
            b.w2.iter_mut().for_each(|v| *v = d23.sample(rng));
            b.w3.iter_mut().for_each(|v| *v = d23.sample(rng));
            b.alpha1 = INITIAL_ALPHA;
            b.alpha2 = INITIAL_ALPHA;
        }
        p
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.slices().iter().map(|s| s.len()).sum::<usize>()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every scalar parameter in a fixed order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for b in &self.blocks {
            for s in b.slices() {
                out.extend_from_slice(s);
            }
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for b in &mut self.blocks {
            for s in b.slices_mut() {
                for v in s.iter_mut() {
                    *v = *it.next().expect("flat length matches");
                }
            }
        }
    }

    pub fn for_each_group_mut(&mut self, mut f: impl FnMut(usize, &'static str, &mut [f64])) {
        for (k, b) in self.blocks.iter_mut().enumerate() {
            for (name, s) in GROUP_NAMES.iter().zip(b.slices_mut()) {
                f(k, name, s);
            }
        }
    }

    pub fn groups(&self) -> Vec<(usize, &'static str, &[f64])> {
        let mut out = Vec::new();
        for (k, b) in self.blocks.iter().enumerate() {
            for (name, s) in GROUP_NAMES.iter().zip(b.slices()) {
                out.push((k, *name, s));
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (sa, sb) in a.slices_mut().into_iter().zip(b.slices()) {
                sa.iter_mut().zip(sb).for_each(|(x, y)| *x += y);
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for b in &mut self.blocks {
            for s in b.slices_mut() {
                s.iter_mut().for_each(|v| *v *= c);
            }
        }
    }

    /// Largest α1k and α2k over blocks.
    pub fn alpha_maxima(&self) -> (f64, f64) {
        self.blocks.iter().fold((0.0f64, 0.0f64), |(m1, m2), b| {
            (m1.max(b.alpha1), m2.max(b.alpha2))
        })
    }

    pub fn all_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }
}

/// Block weighting of the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossWeighting {
    /// `ln(k)`, so block 1 carries zero weight.
    #[default]
    LnK,
    /// `ln(k + 1)`.
    LnK1,
}

impl LossWeighting {
    pub fn weight(self, k: usize) -> f64 {
        match self {
            LossWeighting::LnK => (k as f64).ln(),
            LossWeighting::LnK1 => (k as f64 + 1.0).ln(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ln_k" | "lnk" => Some(Self::LnK),
            "ln_k1" | "lnk1" => Some(Self::LnK1),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::LnK => "ln_k",
            Self::LnK1 => "ln_k1",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    pub x_prev: DVector<f64>,
    /// `HᵀH x_{k-1}`.
    pub hth_x_prev: DVector<f64>,
    pub u: DVector<f64>,
    pub pre: DVector<f64>,
    pub z: DVector<f64>,
    pub x: DVector<f64>,
    pub a: DVector<f64>,
}

impl BlockCache {
    pub fn s(&self, x_len: usize) -> DVector<f64> {
        self.u.rows(0, x_len).into_owned()
    }

    /// ReLU activity mask, 1 where the pre-activation is positive.
    pub fn mask(&self) -> DVector<f64> {
        self.pre.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `Hᵀy`.
    pub hty: DVector<f64>,
    /// `HᵀH`.
    pub hth: DMatrix<f64>,
    pub blocks: Vec<BlockCache>,
}

impl ForwardPass {
    pub fn trajectory(&self) -> Vec<DVector<f64>> {
        self.blocks.iter().map(|b| b.x.clone()).collect()
    }

    pub fn output(&self) -> &DVector<f64> {
        &self.blocks.last().expect("at least one block").x
    }
}

pub fn relu(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x.max(0.0))
}

/// Exact-arithmetic forward pass on channel `h` (2N_r × 2N_t) and `y`.
pub fn ideal_forward(params: &DetNetParams, h: &DMatrix<f64>, y: &DVector<f64>) -> Result<ForwardPass> {
    let c = &params.config;
    if h.shape() != (c.y_len(), c.x_len()) {
        return Err(dim_err(
            format!("{}x{}", c.y_len(), c.x_len()),
            format!("{}x{}", h.nrows(), h.ncols()),
        ));
    }
    if y.len() != c.y_len() {
        return Err(dim_err(c.y_len(), y.len()));
    }
    let hty = h.tr_mul(y);
    let hth = h.tr_mul(h);
    let mut x = DVector::zeros(c.x_len());
    let mut a = DVector::zeros(c.a_size);
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for b in &params.blocks {
        let hth_x = &hth * &x;
        let s = &x - b.alpha1 * &hty + b.alpha2 * &hth_x;
        let mut u = DVector::zeros(c.x_len() + c.a_size);
        u.rows_mut(0, c.x_len()).copy_from(&s);
        u.rows_mut(c.x_len(), c.a_size).copy_from(&a);
        let pre = &b.w1 * &u + &b.b1;
        let z = relu(&pre);
        let x_next = &b.w2 * &z + &b.b2;
        let a_next = &b.w3 * &z + &b.b3;
        blocks.push(BlockCache {
            x_prev: x,
            hth_x_prev: hth_x,
            u,
            pre,
            z,
            x: x_next.clone(),
            a: a_next.clone(),
        });
        x = x_next;
        a = a_next;
    }
    Ok(ForwardPass { hty, hth, blocks })
}

/// `Σ_k w(k)·‖x − x̂_k‖²` over a trajectory (k is 1-based).
pub fn loss(trajectory: &[DVector<f64>], x_true: &DVector<f64>, weighting: LossWeighting) -> f64 {
    trajectory
        .iter()
        .enumerate()
        .map(|(i, xk)| weighting.weight(i + 1) * (x_true - xk).norm_squared())
        .sum()
}

/// Loss and exact gradients for one sample.
pub fn backward(
    params: &DetNetParams,
    pass: &ForwardPass,
    x_true: &DVector<f64>,
    weighting: LossWeighting,
) -> (f64, DetNetParams) {
    let mut grads = DetNetParams::zeros(&params.config);
    let l = backward_accumulate(params, pass, x_true, weighting, &mut grads);
    (l, grads)
}

/// Adds one sample's gradients into `grads` and returns its loss.
pub fn backward_accumulate(
    params: &DetNetParams,
    pass: &ForwardPass,
    x_true: &DVector<f64>,
    weighting: LossWeighting,
    grads: &mut DetNetParams,
) -> f64 {
    let c = &params.config;
    let nx = c.x_len();
    let mut total = 0.0;
    // gradients flowing into x_k and a_k from later blocks
    let mut gx_next: DVector<f64> = DVector::zeros(nx);
    let mut ga_next: DVector<f64> = DVector::zeros(c.a_size);
    for k in (0..params.blocks.len()).rev() {
        let b = &params.blocks[k];
        let cache = &pass.blocks[k];
        let w = weighting.weight(k + 1);
        let err = &cache.x - x_true;
        total += w * err.norm_squared();
        let gx = gx_next + 2.0 * w * err;
        let ga = ga_next;

        let g = &mut grads.blocks[k];
        g.w2.ger(1.0, &gx, &cache.z, 1.0);
        g.b2 += &gx;
        g.w3.ger(1.0, &ga, &cache.z, 1.0);
        g.b3 += &ga;

        let mut gpre = b.w2.tr_mul(&gx);
        gpre.gemv_tr(1.0, &b.w3, &ga, 1.0);
        gpre.zip_apply(&cache.pre, |g, p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
        g.w1.ger(1.0, &gpre, &cache.u, 1.0);
        g.b1 += &gpre;

        let gu = b.w1.tr_mul(&gpre);
        let gs = gu.rows(0, nx);
        ga_next = gu.rows(nx, c.a_size).into_owned();
        g.alpha1 -= gs.dot(&pass.hty);
        g.alpha2 += gs.dot(&cache.hth_x_prev);
        // HᵀH is symmetric
        let mut gx_prev = gs.into_owned();
        gx_prev.gemv(b.alpha2, &pass.hth, &gs, 1.0);
        gx_next = gx_prev;
    }
    total
}
