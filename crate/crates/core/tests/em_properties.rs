mod common;

use std::f64::consts::PI;

use blind_ofdm::bits::Constellation;
use blind_ofdm::em::{e_step, init_estimate, log_likelihood, m_step, refine, ChannelEstimate, EmEstimator, SymbolProbs};
use blind_ofdm::harness::SimConfig;
use blind_ofdm::numerics::{sample_cgn, Dft, RngStream};
use blind_ofdm::ofdm::FreqGrid;
use blind_ofdm::Complex64;
use common::{max_diff, receive};
use proptest::prelude::*;

fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

#[test]
fn likelihood_never_decreases_without_refinement() {
    let cfg = SimConfig::default();
    let mut em = EmEstimator::new(256, 4, 3).unwrap();
    em.refine = false;
    let con = Constellation::psk(4).unwrap();
    for frame in 0..50u64 {
        let snr = [0.0, 4.0, 8.0, 12.0, 20.0][frame as usize % 5];
        let rx = receive(&cfg, snr, 2.0 * PI * frame as f64 / 50.0, 100 + frame);
        let priors = SymbolProbs::uniform(4, rx.grid.as_slice().len());
        let mut h = init_estimate(&rx.grid);
        let mut ll = log_likelihood(&rx.grid, &h, &priors, rx.noise_var(), &con).unwrap();
        for it in 0..15 {
            h = em.iterate(&rx.grid, &h, &priors, rx.noise_var()).unwrap();
            let next = log_likelihood(&rx.grid, &h, &priors, rx.noise_var(), &con).unwrap();
            assert!(next >= ll - 1e-9, "frame {frame} iteration {it}: {ll} -> {next}");
            ll = next;
        }
    }
}

#[test]
fn zero_iterations_return_the_start() {
    let rx = receive(&SimConfig::default(), 6.0, 0.4, 3);
    let em = EmEstimator::new(256, 4, 3).unwrap();
    let start = init_estimate(&rx.grid);
    let priors = SymbolProbs::uniform(4, 2560);
    let out = em.run(&rx.grid, &start, &priors, rx.noise_var(), 0).unwrap();
    assert_eq!(out.estimate, start);
    assert!(out.history.is_empty());
    let expected = e_step(&rx.grid, &start, &priors, rx.noise_var(), &em.constellation).unwrap();
    assert_eq!(out.posteriors, expected);
}

#[test]
fn true_channel_is_a_fixed_point_without_noise() {
    let rx = receive(&SimConfig::default(), f64::INFINITY, 1.1, 8);
    let em = EmEstimator::new(256, 4, 3).unwrap();
    let priors = SymbolProbs::uniform(4, 2560);
    for iters in [1, 5, 20] {
        let out = em.run(&rx.grid, &rx.truth, &priors, 1e-8, iters).unwrap();
        assert!(max_diff(out.estimate.response(), rx.truth.response()) < 1e-9);
    }
}

#[test]
fn estimates_are_equivariant_under_a_global_phase() {
    let rx = receive(&SimConfig::default(), 8.0, 0.0, 21);
    let con = Constellation::psk(4).unwrap();
    let h = init_estimate(&rx.grid);
    let priors = con.map_soft(&blind_ofdm::fec::BitProbs::new(
        (0..5120).map(|k| 0.2 + 0.6 * ((k * 37) % 11) as f64 / 10.0).collect(),
    ))
    .unwrap();
    for alpha in [0.3, PI / 2.0, 2.9, -1.7] {
        let rot = Complex64::from_polar(1.0, alpha);
        let y_rot = rx.grid.map(|_, _, v| v * rot);
        let h_rot = h.rotated(alpha);
        let post = e_step(&rx.grid, &h, &priors, rx.noise_var(), &con).unwrap();
        let post_rot = e_step(&y_rot, &h_rot, &priors, rx.noise_var(), &con).unwrap();
        for (a, b) in post.as_slice().iter().zip(post_rot.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let next = m_step(&rx.grid, &post, &con).unwrap();
        let next_rot = m_step(&y_rot, &post_rot, &con).unwrap();
        let expected: Vec<Complex64> = next.response().iter().map(|v| v * rot).collect();
        assert!(max_diff(next_rot.response(), &expected) < 1e-12);
    }
}

#[test]
fn e_step_survives_adversarial_inputs() {
    let con = Constellation::psk(4).unwrap();
    let y = FreqGrid::from_column_major(
        2,
        2,
        vec![
            Complex64::new(1e8, -1e8),
            Complex64::new(0.0, 0.0),
            Complex64::new(-3e-9, 1e-300),
            Complex64::new(4e5, 2.0),
        ],
    )
    .unwrap();
    let h = ChannelEstimate::new(vec![Complex64::new(1e-7, 0.0), Complex64::new(3e4, -2e4)], 0);
    let hot = con.one_hot(&[0, 3, 1, 2]).unwrap();
    for priors in [SymbolProbs::uniform(4, 4), hot] {
        for var in [1e-300, 1e-12, 1.0, 1e12] {
            let post = e_step(&y, &h, &priors, var, &con).unwrap();
            assert!(post.invariant_violation() < 1e-9, "var {var}");
        }
    }
}

fn l_tap_response(taps: &[Complex64], m: usize, dft: &Dft) -> ChannelEstimate {
    let mut t = taps.to_vec();
    t.resize(m, Complex64::new(0.0, 0.0));
    ChannelEstimate::new(dft.forward(&t).unwrap(), 0)
}

proptest! {
    #[test]
    fn refine_is_a_projection(seed in any::<u64>(), len in 1usize..8, log_m in 3u32..9) {
        let m = 1usize << log_m;
        prop_assume!(len <= m);
        let dft = Dft::new(m).unwrap();
        let mut rng = RngStream::new(seed);
        let taps = sample_cgn(len, 1.0, &mut rng).unwrap();
        let h = l_tap_response(&taps, m, &dft);
        let fixed = refine(&h, len, &dft).unwrap();
        prop_assert!(max_diff(fixed.response(), h.response()) < 1e-10);

        let noise = ChannelEstimate::new(sample_cgn(m, 1.0, &mut rng).unwrap(), 0);
        let once = refine(&noise, len, &dft).unwrap();
        let twice = refine(&once, len, &dft).unwrap();
        prop_assert!(max_diff(once.response(), twice.response()) < 1e-12);
        prop_assert!(energy(once.response()) <= energy(noise.response()) * (1.0 + 1e-12));
    }
}
