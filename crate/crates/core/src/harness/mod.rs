//! Monte Carlo driver: transmitter, channel, receiver and per-run records.
//!
//! Each run draws everything from a child seed hashed from
//! `(master seed, SNR index, run index)`, so results do not depend on how
//! runs are scheduled across workers, and any single run can be replayed
//! from the seed stored in its CSV rows.

mod config;
mod metrics;
mod output;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{Constellation, Interleaver};
use crate::channel::{apply_channel, freq_response, snr_to_noise_variance, ChannelSpec};
use crate::em::ChannelEstimate;
use crate::fec::conv_encode;
use crate::numerics::{derive_seed, Dft, RngStream};
use crate::ofdm::{ofdm_modulate, FrameConfig, FreqGrid};
use crate::phase_detect::DetectionOutcome;
use crate::receiver::{Receiver, ReceiverMode, ReceiverOutput};
use crate::{Error, Result};

pub use config::SimOptions;
pub use metrics::{
    angular_distance, best_rotation, compute_mse, equalize, failure_rate, fraction_within_angle, median,
    percentile, MetricsCell, MetricsTable, FAILURE_MSE,
};
pub use output::{
    dump_constellation, parse_record_row, write_results_csv, write_results_file, write_summary_json, ResultRow,
};

const STREAM_PHASE: u64 = 0;
const STREAM_BITS: u64 = 1;
const STREAM_NOISE: u64 = 2;
const INTERLEAVER_SALT: u64 = 0x696c_7672;

/// How the global channel phase `θ` is chosen per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhasePolicy {
    /// `θ ~ U(0, 2π)`.
    Uniform,
    /// `θ = 2πk/4` with `k` uniform on `0..4`.
    QuarterTurns,
    Fixed(f64),
}

impl PhasePolicy {
    fn draw(&self, rng: &mut RngStream) -> f64 {
        match *self {
            PhasePolicy::Uniform => 2.0 * PI * rng.uniform(),
            PhasePolicy::QuarterTurns => PI / 2.0 * rng.below(4) as f64,
            PhasePolicy::Fixed(theta) => theta.rem_euclid(2.0 * PI),
        }
    }
}

impl std::str::FromStr for PhasePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "quarter" => Ok(Self::QuarterTurns),
            other => other
                .parse::<f64>()
                .map(Self::Fixed)
                .map_err(|_| Error::arg(format!("theta must be `uniform`, `quarter` or radians, got `{other}`"))),
        }
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub frame: FrameConfig,
    pub taps: Vec<Complex64>,
    pub phase: PhasePolicy,
    pub snr_db: Vec<f64>,
    pub runs: usize,
    pub mode: ReceiverMode,
    pub seed: u64,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            taps: ChannelSpec::proakis_b().taps,
            phase: PhasePolicy::Uniform,
            snr_db: vec![0.0, 2.0, 4.0, 6.0, 12.0, 20.0],
            runs: 200,
            mode: ReceiverMode::PhaseAware,
            seed: 42,
            workers: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("SNR list is empty".into()));
        }
        if self.taps.is_empty() || self.taps.len() > self.frame.cyclic_prefix + 1 {
            return Err(Error::Config(format!(
                "{} channel taps do not fit a cyclic prefix of {}",
                self.taps.len(),
                self.frame.cyclic_prefix
            )));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Child seed of run `run` at SNR index `snr_index`.
    pub fn run_seed(&self, snr_index: usize, run: usize) -> u64 {
        derive_seed(self.seed, &[snr_index as u64, run as u64])
    }
}

/// Transmitted frame and the ground truth needed to score the receiver.
#[derive(Debug, Clone)]
pub struct TxFrame {
    pub info_bits: Vec<u8>,
    pub coded_bits: Vec<u8>,
    pub interleaver: Interleaver,
    /// Constellation index of every grid entry, column-major.
    pub symbol_indices: Vec<usize>,
    pub grid: FreqGrid,
    pub samples: Vec<Complex64>,
    pub channel: ChannelSpec,
}

/// Random info bits → encode → interleave → map → OFDM modulate, and draw the
/// run's channel phase. `channel.noise_var` is set from `snr_db`.
pub fn run_transmitter(cfg: &SimConfig, snr_db: f64, seed: u64) -> Result<TxFrame> {
    let frame = &cfg.frame;
    let info_len = frame.info_len()?;
    let mut bit_rng = RngStream::with_stream(seed, STREAM_BITS);
    let info_bits: Vec<u8> = (0..info_len).map(|_| bit_rng.bit()).collect();
    let coded_bits = conv_encode(&info_bits, &frame.code)?;
    let interleaver = Interleaver::from_seed(coded_bits.len(), derive_seed(seed, &[INTERLEAVER_SALT]));
    let constellation = Constellation::psk(frame.order)?;
    let symbol_indices = constellation.map_indices(&interleaver.interleave(&coded_bits)?)?;
    let symbols = symbol_indices.iter().map(|&i| constellation.point(i)).collect();
    let grid = FreqGrid::from_column_major(frame.subcarriers, frame.symbols, symbols)?;
    let samples = ofdm_modulate(&grid, frame, &Dft::new(frame.subcarriers)?)?;
    let phase = cfg.phase.draw(&mut RngStream::with_stream(seed, STREAM_PHASE));
    Ok(TxFrame {
        info_bits,
        coded_bits,
        interleaver,
        symbol_indices,
        grid,
        samples,
        channel: ChannelSpec {
            taps: cfg.taps.clone(),
            phase,
            noise_var: snr_to_noise_variance(snr_db),
        },
    })
}

/// Outcome of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub snr_db: f64,
    pub mode: ReceiverMode,
    pub seed: u64,
    pub theta: f64,
    /// MSE after each EM iteration.
    pub mse: Vec<f64>,
    /// 1-based iteration whose snapshot carries the phase correction.
    pub phase_corrected_at: Option<usize>,
    pub detection: Option<DetectionOutcome>,
    pub failed: bool,
}

/// A run with its transmitted frame and full receiver output, for replay.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub record: RunRecord,
    pub tx: TxFrame,
    pub truth: ChannelEstimate,
    pub rx: ReceiverOutput,
}

/// Transmit, pass through the channel and receive one frame from `seed`.
pub fn simulate_seeded(
    cfg: &SimConfig,
    mode: ReceiverMode,
    snr_db: f64,
    run_id: usize,
    seed: u64,
) -> Result<RunArtifacts> {
    let tx = run_transmitter(cfg, snr_db, seed)?;
    let received = apply_channel(&tx.samples, &tx.channel, &mut RngStream::with_stream(seed, STREAM_NOISE))?;
    let truth = freq_response(&tx.channel, cfg.frame.subcarriers)?;
    let receiver = Receiver::new(
        cfg.frame.clone(),
        tx.interleaver.clone(),
        cfg.frame.code,
        tx.channel.noise_var,
    )?;
    let rx = receiver.run(&received, &truth, mode)?;
    let mse = rx.trace.mse();
    let final_mse = mse.last().copied().unwrap_or_else(|| compute_mse(&rx.estimate, &truth).unwrap_or(f64::INFINITY));
    let record = RunRecord {
        run_id,
        snr_db,
        mode,
        seed,
        theta: tx.channel.phase,
        phase_corrected_at: rx
            .trace
            .iterations
            .iter()
            .position(|r| r.phase_corrected)
            .map(|p| p + 1),
        detection: rx.detection.clone(),
        failed: final_mse > FAILURE_MSE,
        mse,
    };
    Ok(RunArtifacts { record, tx, truth, rx })
}

/// Run `run` at SNR index `snr_index` of `cfg`.
pub fn simulate_run(cfg: &SimConfig, mode: ReceiverMode, snr_index: usize, run: usize) -> Result<RunArtifacts> {
    let snr = *cfg
        .snr_db
        .get(snr_index)
        .ok_or_else(|| Error::arg(format!("SNR index {snr_index} out of range")))?;
    simulate_seeded(cfg, mode, snr, run, cfg.run_seed(snr_index, run))
}

/// A run that returned an error instead of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub snr_db: f64,
    pub run_id: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    /// Ordered by SNR index, then run id.
    pub records: Vec<RunRecord>,
    pub errors: Vec<RunError>,
    pub table: MetricsTable,
}

/// Runs every (SNR, run) pair of `cfg` in parallel and aggregates.
pub fn monte_carlo(cfg: &SimConfig) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.snr_db.len())
        .flat_map(|s| (0..cfg.runs).map(move |r| (s, r)))
        .collect();
    let work = || -> Vec<std::result::Result<RunRecord, RunError>> {
        jobs.par_iter()
            .map(|&(s, r)| {
                simulate_run(cfg, cfg.mode, s, r).map(|a| a.record).map_err(|e| RunError {
                    snr_db: cfg.snr_db[s],
                    run_id: r,
                    seed: cfg.run_seed(s, r),
                    message: e.to_string(),
                })
            })
            .collect()
    };
    let outcomes = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut records = Vec::with_capacity(outcomes.len());
    let mut errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(e) => errors.push(e),
        }
    }
    let table = aggregate(&records, &cfg.snr_db, errors.len());
    Ok(MonteCarloResult { records, errors, table })
}

/// Builds the per-(SNR, mode, iteration) table from run records.
pub fn aggregate(records: &[RunRecord], snrs: &[f64], errored_runs: usize) -> MetricsTable {
    let mut cells = Vec::new();
    for &snr in snrs {
        for mode in ReceiverMode::ALL {
            let group: Vec<&RunRecord> = records.iter().filter(|r| r.snr_db == snr && r.mode == mode).collect();
            let Some(iters) = group.iter().map(|r| r.mse.len()).min() else {
                continue;
            };
            for it in 0..iters {
                let values: Vec<f64> = group.iter().map(|r| r.mse[it]).collect();
                cells.push(MetricsCell::from_values(snr, mode, it + 1, &values));
            }
        }
    }
    MetricsTable { cells, errored_runs }
}
