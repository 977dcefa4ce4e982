use imc_mimo::analysis::bound::{eval_bound, BoundInputs};
use imc_mimo::analysis::complexity::{
    counted_forward, flops_per_symbol, hardware_complexity, throughput, walk_hardware,
};
use imc_mimo::analysis::latency::programming_latency_bound;
use imc_mimo::crossbar::HardwareDetector;
use imc_mimo::detnet::DetNetParams;
use imc_mimo::device::{channel_programming_latency, DeviceSpec};
use imc_mimo::mimo::{generate_channel, to_real, MimoConfig, Modulation};
use imc_mimo::rng::rng_from_seed;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

/// Independent evaluation of the first-order bound via expanded identities:
/// `Φ² = N_t + N_r + 2√(N_tN_r)`, the power quotient as a finite sum, and
/// `(1 − τL)/(1 − τ) = 1 − τ(L−1)/(1 − τ)`.
pub fn bound_oracle(i: &BoundInputs) -> (f64, f64, f64, f64, f64) {
    let (nt, nr, s, np) = (i.n_t as f64, i.n_r as f64, i.hidden as f64, i.n_p as f64);
    let l = i.layers;
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let phi_sq = nt + nr + 2.0 * (nt * nr).sqrt();
    let phi_big = phi_sq.sqrt();
    let k = (6.0 * c * np).sqrt();
    let phi = 2.0 * i.varpi2 * phi_sq;
    let tau = i.varpi2 * phi_sq * (i.gamma * phi_big * k + 2.0);
    let xi = 2.0 * i.varpi1 * (nt + nr).sqrt() * (i.sigma_n * (2.0 * nr).sqrt())
        + 2.0 * i.varpi1 * (nt + nr).powf(1.5) * i.gamma * (3.0 * c * np).sqrt();
    let omega = (0.5 * (4.0 * s / (3.0 * nr)).ln() - s / 8.0).exp();
    let quotient: f64 = (0..l).map(|j| phi.powi(j as i32) * tau.powi((l - 1 - j) as i32)).sum();
    let gamma_cap = 2.0 * i.varpi1 * i.varpi2 * i.gamma * phi_sq * phi_sq * phi_big * k * quotient / (phi - 1.0);
    let lf = l as f64;
    let ratio = 1.0 - tau * (lf - 1.0) / (1.0 - tau);
    let bound = xi + gamma_cap + (xi * ratio + gamma_cap * (lf - 1.0 / (phi - 1.0))) * omega;
    (phi, tau, xi, gamma_cap, bound)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

pub fn random_inputs<R: Rng>(rng: &mut R) -> BoundInputs {
    BoundInputs {
        n_t: rng.random_range(2..=32),
        n_r: rng.random_range(32..=48),
        layers: rng.random_range(1..=30),
        hidden: rng.random_range(16..=512),
        n_p: rng.random_range(16..=256),
        gamma: rng.random_range(0.0..0.06),
        sigma_n: rng.random_range(0.0..1.0),
        varpi1: rng.random_range(1e-4..0.2),
        varpi2: rng.random_range(1e-4..0.05),
    }
}

#[test]
fn bound_matches_independent_recomputation() {
    let mut rng = rng_from_seed(77);
    let mut checked = 0;
    while checked < 100 {
        let i = random_inputs(&mut rng);
        let Ok(r) = eval_bound(&i) else { continue };
        let (phi, tau, xi, g, b) = bound_oracle(&i);
        assert!(close(r.phi, phi, 1e-12), "{i:?}");
        assert!(close(r.tau, tau, 1e-12), "{i:?}");
        assert!(close(r.xi, xi, 1e-12), "{i:?}");
        // the finite sum and the closed quotient differ by cancellation
        // error when φ ≈ τ; compare on the scale of the summands
        assert!(close(r.gamma_cap, g, 1e-9), "{i:?}: {} vs {g}", r.gamma_cap);
        assert!(close(r.bound, b, 1e-9) || (r.bound - b).abs() < 1e-12 * (r.xi.abs() + r.gamma_cap.abs()), "{i:?}");
        checked += 1;
    }
}

#[test]
fn equal_phi_tau_uses_the_limit() {
    // γ = 0 gives τ = φ exactly; the quotient limit L·φ^(L−1) must be finite
    let i = BoundInputs {
        n_t: 4,
        n_r: 6,
        layers: 10,
        hidden: 64,
        n_p: 150,
        gamma: 0.0,
        sigma_n: 0.1,
        varpi1: 0.05,
        varpi2: 0.05,
    };
    let r = eval_bound(&i).unwrap();
    assert_eq!(r.phi, r.tau);
    assert!(r.bound.is_finite());
}

#[test]
fn table_counts_match_independent_arithmetic() {
    let mut rng = rng_from_seed(3);
    for _ in 0..20 {
        let n_t: u64 = rng.random_range(1..=32);
        let n_r: u64 = rng.random_range(n_t..=64);
        let l: u64 = rng.random_range(0..=40);
        let s: u64 = rng.random_range(1..=512);
        let a: u64 = rng.random_range(1..=128);
        let c = MimoConfig {
            n_t: n_t as usize,
            n_r: n_r as usize,
            modulation: Modulation::Qpsk,
            layers: l as usize,
            hidden: s as usize,
            a_size: a as usize,
        };
        let r = hardware_complexity(&c);
        // expanded term by term
        let mem = 24 * n_r * n_t + 4 * l * s * n_r + 2 * l * s * a + 4 * l * n_t * s + 2 * l * s * a;
        assert_eq!(r.memristors, mem);
        assert_eq!(r.inverters, 4 * n_r + 2 * n_t + 2 * l * n_r + 2 * l * s + l * a);
        assert_eq!(r.tias, 2 * n_r + 4 * n_t + 4 * l * n_t + 2 * l * n_r + l * s + l * a);
        assert_eq!(r.adders, 4 * l * n_t + l * s + l * a);
        assert_eq!(r.relu_circuits, l * s);
    }
}

#[test]
fn flops_golden_values() {
    let c = MimoConfig {
        a_size: 80,
        ..MimoConfig::new(20, 30, Modulation::Qpsk, 30, 480)
    };
    assert_eq!(flops_per_symbol(&c), 7_206_760);
    let t = throughput(7_206_760, 14, 33.91e-6);
    assert!((t / 1e12 - 2.98).abs() <= 0.01);
    assert_eq!(hardware_complexity(&c).memristors, 7_502_400);
}

#[test]
fn counted_walk_reproduces_flop_formula() {
    let c = MimoConfig::new(4, 6, Modulation::Qpsk, 5, 32);
    let mut rng = rng_from_seed(8);
    let p = DetNetParams::init(&c, &mut rng);
    let h = to_real(&generate_channel(&c, &mut rng));
    let y = DVector::from_fn(12, |i, _| i as f64 * 0.1 - 0.5);
    assert_eq!(counted_forward(&p, &h, &y).total(), flops_per_symbol(&c));
}

#[test]
fn walked_memristors_differ_from_table_when_receive_exceeds_transmit() {
    // the table sizes W1 with 2N_r inputs; the real input is 2N_t + a_size
    let c = MimoConfig::new(4, 6, Modulation::Qpsk, 3, 16);
    let det = HardwareDetector::deploy(&DetNetParams::zeros(&c), &DeviceSpec::luo2022());
    let (walked, _) = walk_hardware(&det);
    let table = hardware_complexity(&c).memristors;
    let delta = table as i64 - walked as i64;
    assert_eq!(delta, 2 * 3 * 16 * (2 * 6 - 2 * 4));
}

#[test]
fn simulated_latency_stays_under_bound() {
    let spec = DeviceSpec::luo2022();
    for n in [4usize, 8, 16] {
        let c = MimoConfig::new(n, n, Modulation::Qpsk, 1, 1);
        let bound = programming_latency_bound(n, n, &spec).unwrap();
        let mut rng = rng_from_seed(n as u64);
        for _ in 0..50 {
            let h = to_real(&generate_channel(&c, &mut rng));
            let t = channel_programming_latency(&h, &spec);
            assert!(t <= bound, "N={n}: {t} > {bound}");
        }
    }
    let b = programming_latency_bound(20, 30, &spec).unwrap();
    assert!((b - 10.6e-6).abs() < 0.05e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flops_scale_linearly_in_layers(n_t in 1usize..16, extra in 0usize..16, l in 0usize..20, s in 1usize..256) {
        let c = MimoConfig::new(n_t, n_t + extra, Modulation::Qpsk, l, s);
        let c1 = MimoConfig { layers: l + 1, ..c.clone() };
        let nt = n_t as u64;
        prop_assert_eq!(flops_per_symbol(&c1) - flops_per_symbol(&c), 8 * nt * nt + 6 * nt + 24 * nt * s as u64);
    }
}
