//! Hardware component counts, per-symbol FLOPs, throughput, and the abstract
//! cycle-count model used to compare detectors across MIMO sizes.

use nalgebra::{DMatrix, DVector};

use crate::crossbar::HardwareDetector;
use crate::detnet::DetNetParams;
use crate::mimo::MimoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityReport {
    pub memristors: u64,
    pub inverters: u64,
    pub tias: u64,
    pub adders: u64,
    pub relu_circuits: u64,
}

impl ComplexityReport {
    pub const CSV_HEADER: [&'static str; 5] = ["memristors", "inverters", "tias", "adders", "relu_circuits"];

    pub fn csv_row(&self) -> [u64; 5] {
        [self.memristors, self.inverters, self.tias, self.adders, self.relu_circuits]
    }
}

/// Component counts of the full detector (channel module plus L neural
/// blocks). `layers = 0` leaves the channel-dependent module only.
pub fn hardware_complexity(config: &MimoConfig) -> ComplexityReport {
    let nt = config.n_t as u64;
    let nr = config.n_r as u64;
    let l = config.layers as u64;
    let s = config.hidden as u64;
    let a = config.a_size as u64;
    ComplexityReport {
        memristors: 24 * nr * nt + 2 * l * (s * (2 * nr + a) + 2 * nt * s + s * a),
        inverters: 4 * nr + 2 * nt + l * (2 * nr + 2 * s + a),
        tias: 2 * nr + 4 * nt + l * (4 * nt + 2 * nr + s + a),
        adders: l * (4 * nt + s + a),
        relu_circuits: s * l,
    }
}

/// Per-symbol FLOPs:
/// `16N_t²N_r − 4N_t² + 8N_tN_r − 2N_t + L(8N_t² + 6N_t + 24N_tS)`.
pub fn flops_per_symbol(config: &MimoConfig) -> u64 {
    flops_constant_term(config) + config.layers as u64 * flops_block_term(config)
}

/// Channel-dependent preprocessing, `HᵀH` and `Hᵀy`.
pub fn flops_constant_term(config: &MimoConfig) -> u64 {
    let nt = config.n_t as u64;
    let nr = config.n_r as u64;
    16 * nt * nt * nr - 4 * nt * nt + 8 * nt * nr - 2 * nt
}

pub fn flops_block_term(config: &MimoConfig) -> u64 {
    let nt = config.n_t as u64;
    let s = config.hidden as u64;
    8 * nt * nt + 6 * nt + 24 * nt * s
}

/// FLOPS achieved when `symbols` symbols cost `flops` each in `latency` s.
pub fn throughput(flops: u64, symbols: u64, latency: f64) -> f64 {
    flops as f64 * symbols as f64 / latency
}

/// Counts from an explicit walk over one forward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopTally {
    pub mul: u64,
    pub add: u64,
    /// ReLU comparisons; not floating-point arithmetic.
    pub cmp: u64,
}

impl FlopTally {
    pub fn flops(&self) -> u64 {
        self.mul + self.add
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountedForward {
    pub output: DVector<f64>,
    pub constant: FlopTally,
    pub per_block: Vec<FlopTally>,
}

impl CountedForward {
    pub fn total(&self) -> u64 {
        self.constant.flops() + self.per_block.iter().map(FlopTally::flops).sum::<u64>()
    }
}

struct Counter<'a>(&'a mut FlopTally);

impl Counter<'_> {
    fn dot(&mut self, a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
        let mut acc = 0.0;
        for (i, (x, y)) in a.zip(b).enumerate() {
            self.0.mul += 1;
            if i > 0 {
                self.0.add += 1;
            }
            acc += x * y;
        }
        acc
    }

    fn matvec(&mut self, m: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(m.nrows(), |i, _| self.dot(m.row(i).iter().copied(), v.iter().copied()))
    }

    fn scale(&mut self, c: f64, v: &DVector<f64>) -> DVector<f64> {
        self.0.mul += v.len() as u64;
        v * c
    }

    fn add(&mut self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        self.0.add += a.len() as u64;
        a + b
    }

    fn sub(&mut self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        self.0.add += a.len() as u64;
        a - b
    }

    fn relu(&mut self, v: &DVector<f64>) -> DVector<f64> {
        self.0.cmp += v.len() as u64;
        v.map(|x| x.max(0.0))
    }
}

/// Re-executes the detector's forward pass element by element, tallying
/// every multiply and add. An inner product of length n costs n multiplies
/// and n − 1 adds; bias additions cost one add per element.
pub fn counted_forward(params: &DetNetParams, h: &DMatrix<f64>, y: &DVector<f64>) -> CountedForward {
    let c = &params.config;
    let mut constant = FlopTally::default();
    let (hth, hty) = {
        let mut k = Counter(&mut constant);
        let n = h.ncols();
        let hth = DMatrix::from_fn(n, n, |i, j| k.dot(h.column(i).iter().copied(), h.column(j).iter().copied()));
        let hty = DVector::from_fn(n, |i, _| k.dot(h.column(i).iter().copied(), y.iter().copied()));
        (hth, hty)
    };
    let mut x = DVector::zeros(c.x_len());
    let mut a = DVector::zeros(c.a_size);
    let mut per_block = Vec::with_capacity(params.blocks.len());
    for b in &params.blocks {
        let mut tally = FlopTally::default();
        let mut k = Counter(&mut tally);
        let gx = k.matvec(&hth, &x);
        let t2 = k.scale(b.alpha2, &gx);
        let t1 = k.scale(b.alpha1, &hty);
        let s = k.sub(&x, &t1);
        let s = k.add(&s, &t2);
        let u = DVector::from_iterator(c.x_len() + c.a_size, s.iter().chain(a.iter()).copied());
        let w1u = k.matvec(&b.w1, &u);
        let pre = k.add(&w1u, &b.b1);
        let z = k.relu(&pre);
        let w2z = k.matvec(&b.w2, &z);
        let xn = k.add(&w2z, &b.b2);
        let w3z = k.matvec(&b.w3, &z);
        let an = k.add(&w3z, &b.b3);
        x = xn;
        a = an;
        per_block.push(tally);
    }
    CountedForward {
        output: x,
        constant,
        per_block,
    }
}

/// Memristor and rectifier counts read off a deployed detector: three
/// differential pairs of the channel shape plus every weight array pair.
pub fn walk_hardware(detector: &HardwareDetector) -> (u64, u64) {
    let c = &detector.config;
    let channel = 3 * 2 * (c.y_len() * c.x_len()) as u64;
    let mut weights = 0u64;
    let mut relu = 0u64;
    for b in &detector.blocks {
        for cb in [&b.w1, &b.w2, &b.w3] {
            let (r, k) = cb.shape();
            weights += 2 * (r * k) as u64;
        }
        relu += b.b1.len() as u64;
    }
    (channel + weights, relu)
}

/// Unit constants of the abstract cycle-count model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleModel {
    pub c_linear: f64,
    pub c_sdr: f64,
    pub sdr_iterations: f64,
    pub c_sd: f64,
    /// Modulation order M.
    pub order: f64,
    /// Pruning exponent β ∈ (0, 1].
    pub beta: f64,
    pub c_detnet: f64,
    pub layers: f64,
    /// Programming term coefficient of the crossbar detector.
    pub c1: f64,
    /// Per-block computation coefficient of the crossbar detector.
    pub c2: f64,
}

impl Default for CycleModel {
    fn default() -> Self {
        Self {
            c_linear: 1.0,
            c_sdr: 1.0,
            sdr_iterations: 10.0,
            c_sd: 1.0,
            order: 4.0,
            beta: 0.5,
            c_detnet: 1.0,
            layers: 10.0,
            c1: 1.0,
            c2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRow {
    pub n: usize,
    pub zf_mmse: f64,
    pub sdr: f64,
    pub sd: f64,
    pub detnet: f64,
    pub proposed: f64,
}

impl CycleRow {
    pub const CSV_HEADER: [&'static str; 6] = ["n", "zf_mmse", "sdr", "sd", "detnet", "imc_detnet"];
}

/// Cycle counts per detector for symmetric N × N systems.
pub fn time_complexity_table(sizes: &[usize], model: &CycleModel) -> Vec<CycleRow> {
    sizes
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let ln = if n > 1 { nf.ln() } else { 0.0 };
            CycleRow {
                n,
                zf_mmse: model.c_linear * nf.powi(3),
                sdr: model.c_sdr * nf.powi(3) * model.sdr_iterations,
                sd: model.c_sd * model.order.powf(model.beta * nf),
                detnet: model.c_detnet * nf * nf * model.layers,
                proposed: model.c1 * nf * ln.sqrt() + model.c2 * model.layers,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detnet::ideal_forward;
    use crate::device::DeviceSpec;
    use crate::mimo::{generate_channel, to_real, Modulation};
    use crate::rng::rng_from_seed;
    use approx::assert_relative_eq;

    fn paper() -> MimoConfig {
        MimoConfig {
            a_size: 80,
            ..MimoConfig::new(20, 30, Modulation::Qpsk, 30, 480)
        }
    }

    #[test]
    fn paper_config_counts() {
        let r = hardware_complexity(&paper());
        assert_eq!(r.memristors, 7_502_400);
        assert_eq!(r.relu_circuits, 14_400);
        let none = hardware_complexity(&MimoConfig { layers: 0, ..paper() });
        assert_eq!(none.memristors, 24 * 30 * 20);
        assert_eq!(none.adders, 0);
    }

    #[test]
    fn paper_flops_and_throughput() {
        assert_eq!(flops_per_symbol(&paper()), 7_206_760);
        let t = throughput(7_206_760, 14, 33.91e-6);
        assert!((t / 1e12 - 2.98).abs() <= 0.01, "{t}");
        let tiny = MimoConfig { layers: 0, ..MimoConfig::new(1, 1, Modulation::Qpsk, 1, 1) };
        assert_eq!(flops_per_symbol(&tiny), 18);
    }

    #[test]
    fn counted_forward_matches_formula_and_forward_pass() {
        let c = MimoConfig::new(3, 5, Modulation::Qpsk, 4, 12);
        let mut rng = rng_from_seed(1);
        let p = DetNetParams::init(&c, &mut rng);
        let h = to_real(&generate_channel(&c, &mut rng));
        let y = DVector::from_fn(10, |i, _| (i as f64 * 0.37).sin());
        let counted = counted_forward(&p, &h, &y);
        let ideal = ideal_forward(&p, &h, &y).unwrap();
        assert!((&counted.output - ideal.output()).amax() < 1e-12);
        assert_eq!(counted.constant.flops(), flops_constant_term(&c));
        for t in &counted.per_block {
            assert_eq!(t.flops(), flops_block_term(&c));
            assert_eq!(t.cmp, 12);
        }
        assert_eq!(counted.total(), flops_per_symbol(&c));
    }

    #[test]
    fn walked_memristors_match_table_for_square_systems() {
        let c = MimoConfig::new(4, 4, Modulation::Qpsk, 3, 16);
        let det = HardwareDetector::deploy(&DetNetParams::zeros(&c), &DeviceSpec::luo2022());
        let (mem, relu) = walk_hardware(&det);
        let r = hardware_complexity(&c);
        assert_eq!(mem, r.memristors);
        assert_eq!(relu, r.relu_circuits);
    }

    #[test]
    fn cycle_model_ordering() {
        let m = CycleModel::default();
        let rows = time_complexity_table(&[1, 4, 8, 16, 32, 64], &m);
        assert_relative_eq!(rows[0].proposed, m.c2 * m.layers);
        for r in rows.iter().filter(|r| r.n >= 4) {
            assert!(r.proposed < r.detnet);
        }
        let r32 = rows.iter().find(|r| r.n == 32).unwrap();
        assert!(r32.sd > 1e3 * r32.sdr);
        assert!(r32.sdr > r32.zf_mmse && r32.zf_mmse > r32.detnet && r32.detnet > r32.proposed);
    }
}
