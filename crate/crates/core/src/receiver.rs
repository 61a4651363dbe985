//! Receiver schedules: conventional EM, code-aided EM and phase-aware
//! code-aided EM.
//!
//! All modes start with the hard-decision estimate and `init_iters` EM
//! iterations under uniform priors. Phase-aware mode then runs the evidence
//! detector once and corrects the estimate. The code-aided modes follow with
//! `turbo_iters` rounds of decoder feedback, each followed by `em_per_turbo`
//! EM iterations under the fed-back priors. Conventional mode keeps iterating
//! plain EM for the same number of iterations.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bits::Interleaver;
use crate::em::{init_estimate, e_step, ChannelEstimate, EmEstimator, SymbolProbs};
use crate::fec::{BitProbs, SisoDecoder};
use crate::harness::compute_mse;
use crate::numerics::Dft;
use crate::ofdm::{ofdm_demodulate, FrameConfig, FreqGrid};
use crate::phase_detect::{apply_phase, detect_phase, DetectionOutcome};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverMode {
    Conventional,
    CodeAided,
    PhaseAware,
}

impl ReceiverMode {
    pub const ALL: [ReceiverMode; 3] = [Self::Conventional, Self::CodeAided, Self::PhaseAware];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Conventional => "conventional",
            Self::CodeAided => "code-aided",
            Self::PhaseAware => "phase-aware",
        }
    }

    fn uses_decoder(&self) -> bool {
        !matches!(self, Self::Conventional)
    }
}

impl fmt::Display for ReceiverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReceiverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown receiver mode `{s}`")))
    }
}

/// Snapshot after one EM iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub estimate: ChannelEstimate,
    pub mse: f64,
    /// The phase correction was applied to this snapshot.
    pub phase_corrected: bool,
    /// This iteration is the first to use fresh decoder priors.
    pub turbo_feedback: bool,
}

/// Per-iteration trace of one receiver run; `init_iters + em_per_turbo·turbo_iters` entries.
#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    pub iterations: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn mse(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.mse).collect()
    }

    pub fn final_mse(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.mse)
    }
}

/// Everything a run produces besides the trace.
#[derive(Debug, Clone)]
pub struct ReceiverOutput {
    pub trace: IterationTrace,
    pub grid: FreqGrid,
    pub initial: ChannelEstimate,
    pub estimate: ChannelEstimate,
    pub detection: Option<DetectionOutcome>,
    /// Decoder coded-bit posteriors from the last turbo round.
    pub coded_posteriors: Option<BitProbs>,
}

/// Output of one demodulator–decoder exchange.
#[derive(Debug, Clone)]
pub struct TurboRound {
    /// Symbol priors for the next EM block, built from decoder extrinsics.
    pub priors: SymbolProbs,
    pub coded_posteriors: BitProbs,
    pub log_evidence: f64,
}

/// Element-wise `p_pos / p_pri`, renormalized per symbol.
pub fn demod_extrinsic(posteriors: &SymbolProbs, priors: &SymbolProbs) -> Result<SymbolProbs> {
    if posteriors.order() != priors.order() || posteriors.num_symbols() != priors.num_symbols() {
        return Err(Error::arg("posterior and prior tensors differ in shape"));
    }
    let data = posteriors
        .as_slice()
        .iter()
        .zip(priors.as_slice())
        .map(|(p, q)| p / q)
        .collect();
    SymbolProbs::from_normalized(posteriors.order(), data)
}

/// Receiver for one frame configuration and interleaver.
#[derive(Debug, Clone)]
pub struct Receiver<D> {
    pub cfg: FrameConfig,
    pub em: EmEstimator,
    pub interleaver: Interleaver,
    pub decoder: D,
    pub noise_var: f64,
    dft: Dft,
}

impl<D: SisoDecoder> Receiver<D> {
    pub fn new(cfg: FrameConfig, interleaver: Interleaver, decoder: D, noise_var: f64) -> Result<Self> {
        cfg.validate()?;
        if interleaver.len() != cfg.coded_len() {
            return Err(Error::arg(format!(
                "interleaver length {} != coded length {}",
                interleaver.len(),
                cfg.coded_len()
            )));
        }
        let mut em = EmEstimator::new(cfg.subcarriers, cfg.order, cfg.channel_len)?;
        em.early_stop = cfg.early_stop;
        Ok(Self {
            dft: Dft::new(cfg.subcarriers)?,
            cfg,
            em,
            interleaver,
            decoder,
            noise_var,
        })
    }

    pub fn uniform_priors(&self) -> SymbolProbs {
        SymbolProbs::uniform(self.cfg.order, self.cfg.num_symbols())
    }

    /// Demodulator extrinsics at `h`: the normalized channel likelihoods.
    ///
    /// Equal to [`demod_extrinsic`] of the posterior and its prior, without
    /// the division that loses everything once both sit at the `ε` floor.
    pub fn detection_input(&self, grid: &FreqGrid, h: &ChannelEstimate) -> Result<SymbolProbs> {
        e_step(grid, h, &self.uniform_priors(), self.noise_var, &self.em.constellation)
    }

    /// Demodulator extrinsic → demap → deinterleave → decode → extrinsic →
    /// interleave → soft map.
    ///
    /// Both extrinsics are formed without dividing floored probabilities:
    /// the demodulator side from the likelihoods alone and the decoder side
    /// straight from the trellis. `priors` only shapes the EM block that follows.
    pub fn turbo_round(&self, grid: &FreqGrid, h: &ChannelEstimate, priors: &SymbolProbs) -> Result<TurboRound> {
        let con = &self.em.constellation;
        if priors.order() != con.order() || priors.num_symbols() != self.cfg.num_symbols() {
            return Err(Error::arg("prior tensor does not match the frame"));
        }
        let ext = self.detection_input(grid, h)?;
        let coded_in = self.interleaver.deinterleave_probs(&con.demap_soft(&ext)?)?;
        let info_priors = BitProbs::uniform(self.decoder.code().info_len(coded_in.len())?);
        let decoded = self.decoder.decode(&coded_in, &info_priors)?;
        let priors = con.map_soft(&self.interleaver.interleave_probs(&decoded.coded_extrinsics)?)?;
        Ok(TurboRound {
            priors,
            coded_posteriors: decoded.coded_posteriors,
            log_evidence: decoded.log_evidence,
        })
    }

    /// Full schedule on one serialized frame; MSE is measured against `truth`.
    pub fn run(&self, samples: &[Complex64], truth: &ChannelEstimate, mode: ReceiverMode) -> Result<ReceiverOutput> {
        let grid = ofdm_demodulate(samples, &self.cfg, &self.dft)?;
        self.run_grid(grid, truth, mode)
    }

    pub fn run_grid(&self, grid: FreqGrid, truth: &ChannelEstimate, mode: ReceiverMode) -> Result<ReceiverOutput> {
        let cfg = &self.cfg;
        let mut trace = IterationTrace::default();
        let push = |trace: &mut IterationTrace, history: Vec<ChannelEstimate>, feedback: bool| -> Result<()> {
            for (k, estimate) in history.into_iter().enumerate() {
                trace.iterations.push(IterationRecord {
                    mse: compute_mse(&estimate, truth)?,
                    estimate,
                    phase_corrected: false,
                    turbo_feedback: feedback && k == 0,
                });
            }
            Ok(())
        };

        let initial = init_estimate(&grid);
        let uniform = self.uniform_priors();
        let init = self.em.run(&grid, &initial, &uniform, self.noise_var, cfg.init_iters)?;
        let mut estimate = init.estimate;
        push(&mut trace, init.history, false)?;

        let mut detection = None;
        if mode == ReceiverMode::PhaseAware {
            let ext = self.detection_input(&grid, &estimate)?;
            let (outcome, _) = detect_phase(&ext, &self.em.constellation, &self.decoder, &self.interleaver)?;
            if outcome.confident {
                estimate = apply_phase(&estimate, &outcome);
                if let Some(last) = trace.iterations.last_mut() {
                    last.mse = compute_mse(&estimate, truth)?;
                    last.estimate = estimate.clone();
                    last.phase_corrected = true;
                }
            }
            detection = Some(outcome);
        }

        let mut coded_posteriors = None;
        if mode.uses_decoder() {
            let mut priors = uniform;
            for _ in 0..cfg.turbo_iters {
                let round = self.turbo_round(&grid, &estimate, &priors)?;
                priors = round.priors;
                coded_posteriors = Some(round.coded_posteriors);
                let block = self.em.run(&grid, &estimate, &priors, self.noise_var, cfg.em_per_turbo)?;
                estimate = block.estimate;
                push(&mut trace, block.history, true)?;
            }
        } else {
            let rest = cfg.em_per_turbo * cfg.turbo_iters;
            let block = self.em.run(&grid, &estimate, &uniform, self.noise_var, rest)?;
            estimate = block.estimate;
            push(&mut trace, block.history, false)?;
        }

        Ok(ReceiverOutput {
            trace,
            grid,
            initial,
            estimate,
            detection,
            coded_posteriors,
        })
    }
}
