#![allow(dead_code)]

use blind_ofdm::channel::{apply_channel, freq_response};
use blind_ofdm::em::ChannelEstimate;
use blind_ofdm::harness::{run_transmitter, PhasePolicy, SimConfig, TxFrame};
use blind_ofdm::numerics::{Dft, RngStream};
use blind_ofdm::ofdm::{ofdm_demodulate, FreqGrid};
use blind_ofdm::receiver::Receiver;
use blind_ofdm::Complex64;

/// One received frame with the ground truth it was generated from.
pub struct Received {
    pub cfg: SimConfig,
    pub tx: TxFrame,
    pub samples: Vec<Complex64>,
    pub grid: FreqGrid,
    pub truth: ChannelEstimate,
}

impl Received {
    pub fn noise_var(&self) -> f64 {
        self.tx.channel.noise_var
    }

    pub fn receiver(&self, noise_var: f64) -> Receiver<blind_ofdm::fec::CodeSpec> {
        Receiver::new(
            self.cfg.frame.clone(),
            self.tx.interleaver.clone(),
            self.cfg.frame.code,
            noise_var,
        )
        .unwrap()
    }
}

/// Default frame at `snr_db` with a fixed channel phase. Infinite SNR means no noise.
pub fn receive(cfg: &SimConfig, snr_db: f64, theta: f64, seed: u64) -> Received {
    let mut cfg = cfg.clone();
    cfg.phase = PhasePolicy::Fixed(theta);
    let mut tx = run_transmitter(&cfg, snr_db, seed).unwrap();
    if snr_db.is_infinite() {
        tx.channel.noise_var = 0.0;
    }
    let samples = apply_channel(&tx.samples, &tx.channel, &mut RngStream::new(seed ^ 0x5eed)).unwrap();
    let grid = ofdm_demodulate(&samples, &cfg.frame, &Dft::new(cfg.frame.subcarriers).unwrap()).unwrap();
    let truth = freq_response(&tx.channel, cfg.frame.subcarriers).unwrap();
    Received {
        cfg,
        tx,
        samples,
        grid,
        truth,
    }
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
