//! Noise-aware training: every sample sees a fresh channel, AWGN at a random
//! SNR in the training range, and a programming-error draw `ΔH` from the
//! closed-form conditional Gaussian, so the detector learns on `H + ΔH`
//! while `y = Hx + n` is produced by the clean channel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::{backward_accumulate, ideal_forward, DetNetParams, LossWeighting, MIN_ALPHA};
use crate::device::{perturb_channel, DeviceSpec};
use crate::error::{Error, Result};
use crate::mimo::{generate_channel, sigma_from_snr, to_real, MimoConfig};
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// SNR range in dB; `+inf` gives noiseless training.
    pub snr_train_range_db: (f64, f64),
    /// C2C coefficient injected through ΔH; 0 gives standard training.
    pub gamma_train: f64,
    pub loss_weighting: LossWeighting,
    /// Multiply the learning rate by 0.97 every 1000 epochs.
    pub lr_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 25_000,
            batch_size: 500,
            lr: 8e-4,
            snr_train_range_db: (8.0, 13.0),
            gamma_train: 0.02,
            loss_weighting: LossWeighting::LnK,
            lr_decay: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        let (lo, hi) = self.snr_train_range_db;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Config(format!("invalid SNR range [{lo}, {hi}]")));
        }
        if self.gamma_train < 0.0 {
            return Err(Error::Config("gamma_train must be nonnegative".into()));
        }
        Ok(())
    }

    fn learning_rate(&self, epoch: usize) -> f64 {
        if self.lr_decay {
            self.lr * 0.97f64.powi((epoch / 1000) as i32)
        } else {
            self.lr
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub x: DVector<f64>,
    pub h: DMatrix<f64>,
    /// Noise-free received vector `Hx`.
    pub y0: DVector<f64>,
    pub n: DVector<f64>,
    pub dh: DMatrix<f64>,
}

impl TrainSample {
    pub fn draw<R: Rng + ?Sized>(config: &MimoConfig, device: &DeviceSpec, snr_db: f64, rng: &mut R) -> Self {
        let h = to_real(&generate_channel(config, rng));
        let x = config.constellation().random_symbols(rng).real;
        let y0 = &h * &x;
        let sigma = sigma_from_snr(snr_db);
        let n = DVector::from_fn(config.y_len(), |_, _| {
            if sigma > 0.0 {
                sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        });
        // γ = 0 is standard training on the exact channel
        let dh = if device.gamma > 0.0 {
            perturb_channel(&h, device, rng) - &h
        } else {
            DMatrix::zeros(h.nrows(), h.ncols())
        };
        Self { x, h, y0, n, dh }
    }

    /// Channel seen by the detector.
    pub fn h_detector(&self) -> DMatrix<f64> {
        &self.h + &self.dh
    }

    pub fn y(&self) -> DVector<f64> {
        &self.y0 + &self.n
    }
}

pub fn draw_snr<R: Rng + ?Sized>(range: (f64, f64), rng: &mut R) -> f64 {
    let (lo, hi) = range;
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Adam with bias correction over the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Samples per work unit of the batch gradient.
const GRADIENT_CHUNK: usize = 32;

/// Mean loss and mean gradient over a batch. Fixed-size chunks of samples
/// are processed in parallel and summed in chunk order, so the result does
/// not depend on the thread count.
pub fn batch_gradient(
    params: &DetNetParams,
    batch: &[TrainSample],
    weighting: LossWeighting,
) -> Result<(f64, DetNetParams)> {
    let partial: Vec<Result<(f64, DetNetParams)>> = batch
        .par_chunks(GRADIENT_CHUNK)
        .map(|chunk| {
            let mut g = DetNetParams::zeros(&params.config);
            let mut l = 0.0;
            for s in chunk {
                let pass = ideal_forward(params, &s.h_detector(), &s.y())?;
                l += backward_accumulate(params, &pass, &s.x, weighting, &mut g);
            }
            Ok((l, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = DetNetParams::zeros(&params.config);
    for r in partial {
        let (l, g) = r?;
        total += l;
        grads.add_assign(&g);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((total * inv, grads))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: DetNetParams,
    /// Mean batch loss of every epoch.
    pub loss_history: Vec<f64>,
}

pub fn clamp_alphas(params: &mut DetNetParams) {
    for b in &mut params.blocks {
        b.alpha1 = b.alpha1.max(MIN_ALPHA);
        b.alpha2 = b.alpha2.max(MIN_ALPHA);
    }
}

pub fn train<R: Rng + ?Sized>(
    config: &MimoConfig,
    train_config: &TrainConfig,
    device: &DeviceSpec,
    rng: &mut R,
) -> Result<TrainOutcome> {
    let params = DetNetParams::init(config, rng);
    train_from(params, train_config, device, rng)
}

/// Continues training from existing parameters.
pub fn train_from<R: Rng + ?Sized>(
    mut params: DetNetParams,
    train_config: &TrainConfig,
    device: &DeviceSpec,
    rng: &mut R,
) -> Result<TrainOutcome> {
    let config = params.config.clone();
    config.validate()?;
    train_config.validate()?;
    let noise_device = device.with_gamma(train_config.gamma_train);
    let mut adam = Adam::new(params.len());
    let mut history = Vec::with_capacity(train_config.epochs);
    let mut flat = params.flat();
    for epoch in 0..train_config.epochs {
        let batch: Vec<TrainSample> = (0..train_config.batch_size)
            .map(|_| {
                let snr = draw_snr(train_config.snr_train_range_db, rng);
                TrainSample::draw(&config, &noise_device, snr, rng)
            })
            .collect();
        let (loss, grads) = batch_gradient(&params, &batch, train_config.loss_weighting)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        history.push(loss);
        adam.step(&mut flat, &grads.flat(), train_config.learning_rate(epoch));
        params.set_flat(&flat);
        clamp_alphas(&mut params);
        flat = params.flat();
        if epoch % 500 == 0 {
            log::debug!("epoch {epoch}: loss {loss:.5}");
        }
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mimo::Modulation;
    use crate::rng::rng_from_seed;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut adam = Adam::new(2);
        let mut p = vec![3.0, -2.0];
        for _ in 0..3000 {
            let g = vec![2.0 * p[0], 4.0 * p[1]];
            adam.step(&mut p, &g, 0.01);
        }
        assert!(p[0].abs() < 1e-3 && p[1].abs() < 1e-3, "{p:?}");
    }

    #[test]
    fn sample_parts_are_consistent() {
        let c = MimoConfig::new(2, 3, Modulation::Qpsk, 1, 4);
        let s = TrainSample::draw(&c, &DeviceSpec::luo2022().with_gamma(0.0), 10.0, &mut rng_from_seed(1));
        assert_eq!(s.y0, &s.h * &s.x);
        // gamma 0 and |h| < 3 almost surely → ΔH only from saturation
        assert!(s.dh.iter().zip(s.h.iter()).all(|(d, h)| *d == 0.0 || h.abs() > 3.0));
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let c = MimoConfig::new(2, 3, Modulation::Qpsk, 3, 16);
        let tc = TrainConfig {
            epochs: 200,
            batch_size: 32,
            lr: 3e-3,
            ..TrainConfig::default()
        };
        let dev = DeviceSpec::luo2022();
        let a = train(&c, &tc, &dev, &mut rng_from_seed(5)).unwrap();
        let b = train(&c, &tc, &dev, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_history, b.loss_history);
        let head: f64 = a.loss_history[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = a.loss_history[190..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "{head} -> {tail}");
        assert!(a.params.blocks.iter().all(|b| b.alpha1 >= MIN_ALPHA && b.alpha2 >= MIN_ALPHA));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut tc = TrainConfig::default();
        tc.snr_train_range_db = (13.0, 8.0);
        assert!(tc.validate().is_err());
        tc = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(tc.validate().is_err());
    }

    #[test]
    fn nan_loss_aborts() {
        let c = MimoConfig::new(2, 3, Modulation::Qpsk, 2, 4);
        let mut p = DetNetParams::init(&c, &mut rng_from_seed(2));
        p.blocks[1].b2[0] = f64::NAN;
        let tc = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
        let r = train_from(p, &tc, &DeviceSpec::luo2022(), &mut rng_from_seed(2));
        assert!(matches!(r, Err(Error::Diverged { epoch: 0, .. })));
    }
}
