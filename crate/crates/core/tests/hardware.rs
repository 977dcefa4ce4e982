use imc_mimo::crossbar::{channel_dependent_block, ChannelModule, HardwareDetector};
use imc_mimo::detnet::{ideal_forward, DetNetParams};
use imc_mimo::device::{DeviceSpec, ProgramOptions};
use imc_mimo::mimo::{generate_channel, to_real, transmit, MimoConfig, Modulation};
use imc_mimo::rng::rng_from_seed;
use nalgebra::DVector;

#[test]
fn zero_variation_hardware_tracks_ideal_forward() {
    let config = MimoConfig::new(4, 6, Modulation::Qpsk, 10, 64);
    let spec = DeviceSpec::luo2022().with_gamma(0.0);
    let mut rng = rng_from_seed(9);
    let params = DetNetParams::init(&config, &mut rng);
    let hw = HardwareDetector::deploy(&params, &spec);
    for _ in 0..20 {
        let h = to_real(&generate_channel(&config, &mut rng));
        let x = config.constellation().random_symbols(&mut rng).real;
        let y = transmit(&h, &x, 0.3, &mut rng).unwrap();
        let module = ChannelModule::program(&config, &h, &spec, ProgramOptions::default(), &mut rng).unwrap();
        let hw_x = hw.forward(&module, &y).unwrap();
        // same network on the quantized channel held by the arrays
        let on_arrays = ideal_forward(&params, &module.realized_channel(), &y).unwrap();
        assert!((hw_x.output() - on_arrays.output()).amax() < 1e-9);
        assert_eq!(module.program_events(), 1);
        assert_eq!(module.reads(), config.layers);
    }
}

#[test]
fn channel_block_reductions() {
    let config = MimoConfig::new(2, 3, Modulation::Qpsk, 1, 4);
    let spec = DeviceSpec::luo2022().with_gamma(0.0);
    let mut rng = rng_from_seed(2);
    let h = to_real(&generate_channel(&config, &mut rng));
    let m = ChannelModule::program(&config, &h, &spec, ProgramOptions::default(), &mut rng).unwrap();
    let y = DVector::from_fn(6, |i, _| i as f64 - 2.0);
    let x = DVector::from_fn(4, |i, _| 0.3 * i as f64);
    assert_eq!(channel_dependent_block(&x, &m, &y, 0.0, 0.0).unwrap(), x);
    let s = channel_dependent_block(&DVector::zeros(4), &m, &y, 0.2, 0.7).unwrap();
    let expect = -0.2 * m.realized_channel().tr_mul(&y);
    assert!((s - expect).amax() < 1e-12);
}
