//! Per-subcarrier EM channel estimation.
//!
//! Each iteration runs the E-step (symbol posteriors under the current
//! estimate and priors), the M-step (weighted least squares per subcarrier)
//! and, unless disabled, a projection of the estimate onto impulse responses
//! of the assumed length. The expected complete-data log-likelihood is only
//! implicit in the E/M pair; [`log_likelihood`] exposes the incomplete-data
//! likelihood that EM is guaranteed not to decrease.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::bits::Constellation;
use crate::numerics::{log_sum_exp, Dft};
use crate::ofdm::FreqGrid;
use crate::{Error, Result, PROB_EPS};

/// Per-symbol probability vectors over the `C` constellation points, one
/// slice per grid entry in column-major order.
///
/// Every slice sums to one and every entry is at least `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolProbs {
    order: usize,
    data: Vec<f64>,
}

impl SymbolProbs {
    pub fn uniform(order: usize, num_symbols: usize) -> Self {
        Self {
            order,
            data: vec![1.0 / order as f64; order * num_symbols],
        }
    }

    /// Normalizes every slice of nonnegative weights, then mixes in the `ε` floor
    /// as `(1 - Cε)·p + ε` so the slice still sums to one.
    pub fn from_normalized(order: usize, mut data: Vec<f64>) -> Result<Self> {
        if order == 0 || data.len() % order != 0 {
            return Err(Error::arg(format!(
                "{} probabilities do not split into slices of {order}",
                data.len()
            )));
        }
        let keep = 1.0 - order as f64 * PROB_EPS;
        for (t, slice) in data.chunks_mut(order).enumerate() {
            let total: f64 = slice.iter().sum();
            if !(total > 0.0 && total.is_finite()) || slice.iter().any(|p| *p < 0.0) {
                return Err(Error::arg(format!("symbol {t} has invalid weights {slice:?}")));
            }
            slice.iter_mut().for_each(|p| *p = keep * (*p / total) + PROB_EPS);
        }
        Ok(Self { order, data })
    }

    #[cfg(test)]
    pub(crate) fn from_raw_unchecked(order: usize, data: Vec<f64>) -> Self {
        Self { order, data }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_symbols(&self) -> usize {
        self.data.len() / self.order
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        &self.data[t * self.order..(t + 1) * self.order]
    }

    pub fn slices(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.order)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest deviation from the slice invariants (sum to one, entries ≥ ε).
    pub fn invariant_violation(&self) -> f64 {
        self.slices()
            .map(|s| {
                let sum_err = (s.iter().sum::<f64>() - 1.0).abs();
                let floor_err = s.iter().map(|&p| (PROB_EPS - p).max(0.0)).fold(0.0, f64::max);
                let nan = if s.iter().all(|p| p.is_finite()) { 0.0 } else { f64::INFINITY };
                sum_err.max(floor_err).max(nan)
            })
            .fold(0.0, f64::max)
    }
}

/// Frequency response estimate `Ĥ` and the EM iteration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    response: Vec<Complex64>,
    pub iteration: usize,
}

impl ChannelEstimate {
    pub fn new(response: Vec<Complex64>, iteration: usize) -> Self {
        Self { response, iteration }
    }

    pub fn response(&self) -> &[Complex64] {
        &self.response
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    /// `Fᴴ·Ĥ` under the unitary DFT.
    pub fn impulse_response(&self, dft: &Dft) -> Result<Vec<Complex64>> {
        dft.inverse(&self.response)
    }

    /// Every bin multiplied by `e^{jφ}`.
    pub fn rotated(&self, phase: f64) -> Self {
        let rot = Complex64::from_polar(1.0, phase);
        Self {
            response: self.response.iter().map(|h| h * rot).collect(),
            iteration: self.iteration,
        }
    }
}

/// Hard decision used to seed EM: the real axis wins ties.
pub fn hard_decision(y: Complex64) -> Complex64 {
    if y.re.abs() >= y.im.abs() {
        Complex64::new(sign(y.re), 0.0)
    } else {
        Complex64::new(0.0, sign(y.im))
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `Ĥ_m = Σ_n Y_{m,n} X̃*_{m,n} / Σ_n |X̃_{m,n}|²` with QPSK-axis hard decisions.
pub fn init_estimate(y: &FreqGrid) -> ChannelEstimate {
    let response = (0..y.rows())
        .map(|m| {
            let (num, den) = (0..y.cols()).fold((Complex64::new(0.0, 0.0), 0.0), |(num, den), n| {
                let v = y.get(m, n);
                let x = hard_decision(v);
                (num + v * x.conj(), den + x.norm_sqr())
            });
            num / den
        })
        .collect();
    ChannelEstimate::new(response, 0)
}

fn check_shapes(y: &FreqGrid, h: &ChannelEstimate, priors: &SymbolProbs, order: usize) -> Result<()> {
    if h.len() != y.rows() {
        return Err(Error::arg(format!("estimate has {} bins, grid has {} rows", h.len(), y.rows())));
    }
    if priors.num_symbols() != y.rows() * y.cols() || priors.order() != order {
        return Err(Error::arg(format!(
            "priors cover {} symbols of order {}, grid needs {} of order {order}",
            priors.num_symbols(),
            priors.order(),
            y.rows() * y.cols()
        )));
    }
    Ok(())
}

/// Posterior symbol probabilities `∝ p_pri(s_i)·exp(-|Y - Ĥ s_i|²/σ²)`.
pub fn e_step(
    y: &FreqGrid,
    h: &ChannelEstimate,
    priors: &SymbolProbs,
    noise_var: f64,
    constellation: &Constellation,
) -> Result<SymbolProbs> {
    if !(noise_var > 0.0) {
        return Err(Error::arg(format!("noise variance must be positive, got {noise_var}")));
    }
    let c = constellation.order();
    check_shapes(y, h, priors, c)?;
    let mut dist = vec![0.0; c];
    let mut logs = vec![0.0; c];
    let mut data = Vec::with_capacity(priors.as_slice().len());
    let rows = y.rows();
    for (t, prior) in priors.slices().enumerate() {
        let (m, n) = (t % rows, t / rows);
        let obs = y.get(m, n);
        let hm = h.response()[m];
        for (i, d) in dist.iter_mut().enumerate() {
            *d = (obs - hm * constellation.point(i)).norm_sqr();
        }
        // shifting by the closest distance keeps one term finite for tiny σ²
        let closest = dist.iter().copied().fold(f64::INFINITY, f64::min);
        for ((l, &p), &d) in logs.iter_mut().zip(prior).zip(&dist) {
            *l = p.ln() - (d - closest) / noise_var;
        }
        let norm = log_sum_exp(&logs);
        data.extend(logs.iter().map(|l| (l - norm).exp()));
    }
    SymbolProbs::from_normalized(c, data)
}

/// Weighted least squares `Σ_n Σ_i w·Y s_i* / Σ_n Σ_i w·|s_i|²` per subcarrier.
pub fn m_step(y: &FreqGrid, posteriors: &SymbolProbs, constellation: &Constellation) -> Result<ChannelEstimate> {
    if posteriors.num_symbols() != y.rows() * y.cols() || posteriors.order() != constellation.order() {
        return Err(Error::arg("posteriors do not match the grid"));
    }
    let rows = y.rows();
    let mut num = vec![Complex64::new(0.0, 0.0); rows];
    let mut den = vec![0.0; rows];
    for (t, w) in posteriors.slices().enumerate() {
        let (m, n) = (t % rows, t / rows);
        let obs = y.get(m, n);
        for (&wi, s) in w.iter().zip(constellation.points()) {
            num[m] += wi * obs * s.conj();
            den[m] += wi * s.norm_sqr();
        }
    }
    Ok(ChannelEstimate::new(
        num.iter().zip(&den).map(|(n, d)| n / d).collect(),
        0,
    ))
}

/// Projects `H̃` onto responses of `channel_len` taps: IDFT, keep indices
/// `0..channel_len`, DFT.
pub fn refine(h: &ChannelEstimate, channel_len: usize, dft: &Dft) -> Result<ChannelEstimate> {
    if channel_len == 0 || channel_len > h.len() {
        return Err(Error::arg(format!(
            "channel length {channel_len} outside 1..={}",
            h.len()
        )));
    }
    let mut taps = dft.inverse(h.response())?;
    taps[channel_len..].fill(Complex64::new(0.0, 0.0));
    dft.forward_in_place(&mut taps)?;
    Ok(ChannelEstimate::new(taps, h.iteration))
}

/// `Σ_{m,n} ln Σ_i p_pri(s_i)·CN(Y_{m,n}; Ĥ_m s_i, σ²)`.
pub fn log_likelihood(
    y: &FreqGrid,
    h: &ChannelEstimate,
    priors: &SymbolProbs,
    noise_var: f64,
    constellation: &Constellation,
) -> Result<f64> {
    check_shapes(y, h, priors, constellation.order())?;
    let log_norm = -(PI * noise_var).ln();
    let rows = y.rows();
    let mut logs = vec![0.0; constellation.order()];
    let mut total = 0.0;
    for (t, prior) in priors.slices().enumerate() {
        let obs = y.get(t % rows, t / rows);
        let hm = h.response()[t % rows];
        for (i, (l, &p)) in logs.iter_mut().zip(prior).enumerate() {
            *l = p.ln() + log_norm - (obs - hm * constellation.point(i)).norm_sqr() / noise_var;
        }
        total += log_sum_exp(&logs);
    }
    Ok(total)
}

/// Result of a block of EM iterations.
#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub estimate: ChannelEstimate,
    /// E-step output at the final estimate.
    pub posteriors: SymbolProbs,
    /// Estimate after each iteration, in order.
    pub history: Vec<ChannelEstimate>,
}

/// EM estimator with a fixed constellation and truncation length.
#[derive(Debug, Clone)]
pub struct EmEstimator {
    pub constellation: Constellation,
    pub channel_len: usize,
    /// Apply the tap-length projection after every M-step.
    pub refine: bool,
    /// Stop when `‖Ĥ' - Ĥ‖ / ‖Ĥ‖` falls below this; remaining iterations repeat the estimate.
    pub early_stop: Option<f64>,
    dft: Dft,
}

impl EmEstimator {
    pub fn new(subcarriers: usize, order: usize, channel_len: usize) -> Result<Self> {
        Ok(Self {
            constellation: Constellation::psk(order)?,
            channel_len,
            refine: true,
            early_stop: None,
            dft: Dft::new(subcarriers)?,
        })
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    /// One E-step, M-step and (optionally) refinement.
    pub fn iterate(
        &self,
        y: &FreqGrid,
        h: &ChannelEstimate,
        priors: &SymbolProbs,
        noise_var: f64,
    ) -> Result<ChannelEstimate> {
        let post = e_step(y, h, priors, noise_var, &self.constellation)?;
        let mut next = m_step(y, &post, &self.constellation)?;
        if self.refine {
            next = refine(&next, self.channel_len, &self.dft)?;
        }
        next.iteration = h.iteration + 1;
        Ok(next)
    }

    pub fn run(
        &self,
        y: &FreqGrid,
        start: &ChannelEstimate,
        priors: &SymbolProbs,
        noise_var: f64,
        iters: usize,
    ) -> Result<EmOutcome> {
        let mut current = start.clone();
        let mut history = Vec::with_capacity(iters);
        let mut converged = false;
        for _ in 0..iters {
            if converged {
                current.iteration += 1;
            } else {
                let next = self.iterate(y, &current, priors, noise_var)?;
                if let Some(tol) = self.early_stop {
                    converged = relative_change(&current, &next) < tol;
                }
                current = next;
            }
            history.push(current.clone());
        }
        let posteriors = e_step(y, &current, priors, noise_var, &self.constellation)?;
        Ok(EmOutcome {
            estimate: current,
            posteriors,
            history,
        })
    }
}

fn relative_change(old: &ChannelEstimate, new: &ChannelEstimate) -> f64 {
    let diff: f64 = old.response().iter().zip(new.response()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let base: f64 = old.response().iter().map(|a| a.norm_sqr()).sum();
    (diff / base.max(f64::MIN_POSITIVE)).sqrt()
}
