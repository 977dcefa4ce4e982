//! Complex MIMO system model and its real-valued embedding.
//!
//! The complex model is `ỹ = H̃x̃ + ñ` with `H̃` i.i.d. `CN(0, 2)` entries.
//! Everything downstream (detectors, crossbars, training) works on the real
//! embedding
//!
//! ```text
//! H = [ Re H̃  -Im H̃ ]     x = [ Re x̃ ]
//!     [ Im H̃   Re H̃ ]         [ Im x̃ ]
//! ```
//!
//! so rail `i` of `x` is the in-phase part of antenna `i` and rail `n_t + i`
//! its quadrature part.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, Error, Result};

pub type Complex64 = Complex<f64>;
pub type ComplexChannel = DMatrix<Complex64>;
pub type RealChannel = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Qam16,
}

impl Modulation {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Some(Modulation::Bpsk),
            "qpsk" => Some(Modulation::Qpsk),
            "16qam" | "qam16" => Some(Modulation::Qam16),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
        }
    }

    /// Constellation size M.
    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }

    /// Bits carried by the in-phase and quadrature rails respectively.
    fn rail_bits(self) -> (usize, usize) {
        match self {
            Modulation::Bpsk => (1, 0),
            Modulation::Qpsk => (1, 1),
            Modulation::Qam16 => (2, 2),
        }
    }

    /// Mean energy of the unscaled constellation.
    pub fn unscaled_energy(self) -> f64 {
        match self {
            Modulation::Bpsk => 1.0,
            Modulation::Qpsk => 2.0,
            Modulation::Qam16 => 10.0,
        }
    }

    /// Mean energy of one active unscaled rail.
    fn unscaled_rail_energy(self) -> f64 {
        match self {
            Modulation::Bpsk | Modulation::Qpsk => 1.0,
            Modulation::Qam16 => 5.0,
        }
    }
}

/// Gray-coded unscaled level for a rail carrying `nbits` bits.
/// The first bit selects the sign (0 → positive), the second the magnitude.
fn gray_level(nbits: usize, pattern: u32) -> f64 {
    match nbits {
        0 => 0.0,
        1 => {
            if pattern == 0 {
                1.0
            } else {
                -1.0
            }
        }
        2 => {
            let sign = if pattern & 0b10 == 0 { 1.0 } else { -1.0 };
            let mag = if pattern & 0b01 == 0 { 1.0 } else { 3.0 };
            sign * mag
        }
        _ => unreachable!("at most two bits per rail"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimoConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub modulation: Modulation,
    /// Number of unfolded blocks L.
    pub layers: usize,
    /// Hidden width S.
    pub hidden: usize,
    /// Length of the auxiliary vector a_k.
    pub a_size: usize,
}

impl MimoConfig {
    /// Builds a config with the default auxiliary width `4 n_t`.
    pub fn new(n_t: usize, n_r: usize, modulation: Modulation, layers: usize, hidden: usize) -> Self {
        Self {
            n_t,
            n_r,
            modulation,
            layers,
            hidden,
            a_size: 4 * n_t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t < 1 {
            return Err(Error::Config("n_t must be at least 1".into()));
        }
        if self.n_r < self.n_t {
            return Err(Error::Config(format!(
                "n_r ({}) must be at least n_t ({})",
                self.n_r, self.n_t
            )));
        }
        if self.layers < 1 || self.hidden < 1 || self.a_size < 1 {
            return Err(Error::Config("layers, hidden and a_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Length of the real symbol vector, 2 n_t.
    pub fn x_len(&self) -> usize {
        2 * self.n_t
    }

    pub fn y_len(&self) -> usize {
        2 * self.n_r
    }

    pub fn bits_per_vector(&self) -> usize {
        self.n_t * self.modulation.bits_per_symbol()
    }

    pub fn constellation(&self) -> Constellation {
        Constellation::new(self.modulation, self.n_t)
    }
}

/// One real rail's alphabet: levels in ascending order with their bit labels.
#[derive(Debug, Clone)]
pub struct RailAlphabet {
    pub levels: Vec<f64>,
    pub labels: Vec<u32>,
    pub nbits: usize,
}

impl RailAlphabet {
    fn new(nbits: usize, scale: f64) -> Self {
        let mut pairs: Vec<(f64, u32)> = (0..1u32 << nbits)
            .map(|p| (gray_level(nbits, p) * scale, p))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            levels: pairs.iter().map(|p| p.0).collect(),
            labels: pairs.iter().map(|p| p.1).collect(),
            nbits,
        }
    }

    /// Index of the nearest level; exact midpoints go to the smaller label.
    pub fn nearest(&self, v: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &l) in self.levels.iter().enumerate() {
            let d = (v - l).abs();
            if d < best_d || (d == best_d && self.labels[i] < self.labels[best]) {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn decide(&self, v: f64) -> f64 {
        self.levels[self.nearest(v)]
    }
}

/// Scaled constellation shared by all antennas of one configuration.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub modulation: Modulation,
    pub n_t: usize,
    /// Amplitude scale 1/sqrt(n_t · E_avg).
    pub scale: f64,
    pub in_phase: RailAlphabet,
    pub quadrature: RailAlphabet,
}

impl Constellation {
    pub fn new(modulation: Modulation, n_t: usize) -> Self {
        let scale = 1.0 / (n_t as f64 * modulation.unscaled_energy()).sqrt();
        let (bi, bq) = modulation.rail_bits();
        Self {
            modulation,
            n_t,
            scale,
            in_phase: RailAlphabet::new(bi, scale),
            quadrature: RailAlphabet::new(bq, scale),
        }
    }

    /// Alphabet of real rail `rail` in the embedded vector (length 2 n_t).
    pub fn rail(&self, rail: usize) -> &RailAlphabet {
        if rail < self.n_t {
            &self.in_phase
        } else {
            &self.quadrature
        }
    }

    /// Energy of one real rail of the scaled constellation.
    pub fn rail_energy(&self) -> f64 {
        self.scale * self.scale * self.modulation.unscaled_rail_energy()
    }

    /// Complex point for a symbol index whose binary expansion (MSB first)
    /// is the symbol's bit pattern.
    pub fn point(&self, index: u32) -> Complex64 {
        let (bi, bq) = self.modulation.rail_bits();
        let i_bits = index >> bq;
        let q_bits = index & ((1 << bq) - 1);
        Complex64::new(
            gray_level(bi, i_bits) * self.scale,
            gray_level(bq, q_bits) * self.scale,
        )
    }

    /// All points in symbol-index order.
    pub fn points(&self) -> Vec<Complex64> {
        (0..self.modulation.order() as u32).map(|i| self.point(i)).collect()
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<SymbolVector> {
        let bps = self.modulation.bits_per_symbol();
        let expected = self.n_t * bps;
        if bits.len() != expected {
            return Err(Error::BitLength {
                expected,
                got: bits.len(),
            });
        }
        let complex: Vec<Complex64> = bits
            .chunks(bps)
            .map(|chunk| {
                let index = chunk.iter().fold(0u32, |acc, &b| (acc << 1) | (b & 1) as u32);
                self.point(index)
            })
            .collect();
        Ok(SymbolVector {
            real: embed_vector(&complex),
            complex,
            bits: bits.to_vec(),
        })
    }

    /// Nearest-point decision per complex symbol, then Gray demapping.
    ///
    /// The constellations are separable grids, so the per-rail decision is
    /// the Euclidean nearest point.
    pub fn demodulate(&self, x_real: &DVector<f64>) -> Result<Vec<u8>> {
        if x_real.len() != 2 * self.n_t {
            return Err(dim_err(2 * self.n_t, x_real.len()));
        }
        let (bi, bq) = self.modulation.rail_bits();
        let mut bits = Vec::with_capacity(self.n_t * (bi + bq));
        for a in 0..self.n_t {
            let li = self.in_phase.labels[self.in_phase.nearest(x_real[a])];
            let lq = self.quadrature.labels[self.quadrature.nearest(x_real[self.n_t + a])];
            push_bits(&mut bits, li, bi);
            push_bits(&mut bits, lq, bq);
        }
        Ok(bits)
    }

    /// Hard decision of every rail onto its alphabet.
    pub fn slice(&self, soft: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            soft.len(),
            soft.iter().enumerate().map(|(r, &v)| self.rail(r).decide(v)),
        )
    }

    pub fn random_bits<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u8> {
        (0..self.n_t * self.modulation.bits_per_symbol())
            .map(|_| rng.random::<bool>() as u8)
            .collect()
    }

    pub fn random_symbols<R: Rng + ?Sized>(&self, rng: &mut R) -> SymbolVector {
        let bits = self.random_bits(rng);
        self.modulate(&bits).expect("bit length matches by construction")
    }
}

fn push_bits(out: &mut Vec<u8>, label: u32, nbits: usize) {
    for k in (0..nbits).rev() {
        out.push(((label >> k) & 1) as u8);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolVector {
    pub complex: Vec<Complex64>,
    pub real: DVector<f64>,
    pub bits: Vec<u8>,
}

pub fn generate_channel<R: Rng + ?Sized>(config: &MimoConfig, rng: &mut R) -> ComplexChannel {
    DMatrix::from_fn(config.n_r, config.n_t, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn to_real(h: &ComplexChannel) -> RealChannel {
    let (nr, nt) = h.shape();
    let mut out = DMatrix::zeros(2 * nr, 2 * nt);
    for i in 0..nr {
        for j in 0..nt {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i, nt + j)] = -z.im;
            out[(nr + i, j)] = z.im;
            out[(nr + i, nt + j)] = z.re;
        }
    }
    out
}

/// Inverse of [`to_real`], read from the left block column.
pub fn to_complex(h: &RealChannel) -> Result<ComplexChannel> {
    let (r, c) = h.shape();
    if r % 2 != 0 || c % 2 != 0 {
        return Err(dim_err("even dimensions", format!("{r}x{c}")));
    }
    let (nr, nt) = (r / 2, c / 2);
    Ok(DMatrix::from_fn(nr, nt, |i, j| {
        Complex64::new(h[(i, j)], h[(nr + i, j)])
    }))
}

pub fn embed_vector(v: &[Complex64]) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

pub fn unembed_vector(v: &DVector<f64>) -> Vec<Complex64> {
    let n = v.len() / 2;
    (0..n).map(|i| Complex64::new(v[i], v[n + i])).collect()
}

/// `y = Hx + n` with i.i.d. `N(0, sigma_n²)` noise per real dimension.
pub fn transmit<R: Rng + ?Sized>(
    h: &RealChannel,
    x: &DVector<f64>,
    sigma_n: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if h.ncols() != x.len() {
        return Err(dim_err(h.ncols(), x.len()));
    }
    let mut y = h * x;
    if sigma_n > 0.0 {
        for v in y.iter_mut() {
            *v += sigma_n * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(y)
}

pub fn count_bit_errors(tx: &[u8], rx: &[u8]) -> Result<usize> {
    if tx.len() != rx.len() {
        return Err(dim_err(tx.len(), rx.len()));
    }
    Ok(tx.iter().zip(rx).filter(|(a, b)| a != b).count())
}

pub fn ber(tx: &[u8], rx: &[u8]) -> Result<f64> {
    let errors = count_bit_errors(tx, rx)?;
    if tx.is_empty() {
        return Ok(0.0);
    }
    Ok(errors as f64 / tx.len() as f64)
}

/// Per-real-dimension noise standard deviation for a nominal SNR.
///
/// SNR is `E‖H̃x̃‖² / E‖ñ‖²`, which equals `1/σ²` under unit transmit power
/// and `E|h̃|² = 2`.
pub fn sigma_from_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}
