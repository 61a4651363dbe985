use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bits::Constellation;
use crate::em::ChannelEstimate;
use crate::receiver::ReceiverMode;
use crate::{Error, Result};

/// A run fails when its channel MSE exceeds this.
pub const FAILURE_MSE: f64 = 1e-1;

/// `(1/M) Σ_m |Ĥ_m - H_m|²`.
pub fn compute_mse(estimate: &ChannelEstimate, truth: &ChannelEstimate) -> Result<f64> {
    if estimate.len() != truth.len() || estimate.is_empty() {
        return Err(Error::arg(format!(
            "estimate has {} bins, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    let sum: f64 = estimate
        .response()
        .iter()
        .zip(truth.response())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(sum / estimate.len() as f64)
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 0.5)
}

/// Fraction of values strictly above [`FAILURE_MSE`].
pub fn failure_rate(mses: &[f64]) -> f64 {
    if mses.is_empty() {
        return f64::NAN;
    }
    mses.iter().filter(|&&m| m > FAILURE_MSE).count() as f64 / mses.len() as f64
}

/// Statistics of one (SNR, mode, iteration) cell over all runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsCell {
    pub snr_db: f64,
    pub mode: ReceiverMode,
    /// 1-based EM iteration.
    pub iteration: usize,
    pub runs: usize,
    pub mean_mse: f64,
    pub median_mse: f64,
    pub p15_mse: f64,
    pub p85_mse: f64,
    pub failure_rate: f64,
}

impl MetricsCell {
    pub fn from_values(snr_db: f64, mode: ReceiverMode, iteration: usize, values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            snr_db,
            mode,
            iteration,
            runs: values.len(),
            mean_mse: values.iter().sum::<f64>() / values.len() as f64,
            median_mse: percentile(&sorted, 0.5),
            p15_mse: percentile(&sorted, 0.15),
            p85_mse: percentile(&sorted, 0.85),
            failure_rate: failure_rate(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub cells: Vec<MetricsCell>,
    /// Runs excluded from aggregation because they returned an error.
    pub errored_runs: usize,
}

impl MetricsTable {
    pub fn cell(&self, snr_db: f64, mode: ReceiverMode, iteration: usize) -> Option<&MetricsCell> {
        self.cells
            .iter()
            .find(|c| c.snr_db == snr_db && c.mode == mode && c.iteration == iteration)
    }

    /// Failure rate at the last iteration recorded for `(snr_db, mode)`.
    pub fn final_failure_rate(&self, snr_db: f64, mode: ReceiverMode) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.snr_db == snr_db && c.mode == mode)
            .max_by_key(|c| c.iteration)
            .map(|c| c.failure_rate)
    }
}

/// Zero-forcing equalization `Y_{m,n} / Ĥ_m`.
pub fn equalize(y: &crate::ofdm::FreqGrid, estimate: &ChannelEstimate) -> crate::ofdm::FreqGrid {
    y.map(|m, _, v| v / estimate.response()[m])
}

/// Angular distance between `z` and constellation point `index`.
pub fn angular_distance(z: Complex64, point: Complex64) -> f64 {
    (z * point.conj()).arg().abs()
}

/// Fraction of equalized symbols within `tol` radians of their transmitted point.
pub fn fraction_within_angle(
    equalized: &[Complex64],
    transmitted: &[usize],
    constellation: &Constellation,
    tol: f64,
) -> f64 {
    let hits = equalized
        .iter()
        .zip(transmitted)
        .filter(|(z, &i)| angular_distance(**z, constellation.point(i)) <= tol)
        .count();
    hits as f64 / equalized.len() as f64
}

/// Rotation `k` (in units of `2π/C`) that best maps transmitted labels onto the
/// equalized hard decisions, with the fraction of symbols it explains.
pub fn best_rotation(equalized: &[Complex64], transmitted: &[usize], constellation: &Constellation) -> (usize, f64) {
    let c = constellation.order();
    let mut counts = vec![0usize; c];
    for (z, &i) in equalized.iter().zip(transmitted) {
        let d = constellation.nearest(*z);
        counts[(d + c - i) % c] += 1;
    }
    let (k, &n) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("nonempty constellation");
    (k, n as f64 / equalized.len() as f64)
}
