//! Phase ambiguity detection by decoder model evidence.
//!
//! A blind estimate can only be trusted up to a rotation by a multiple of
//! `2π/C`. Each hypothesis `l` re-labels the demodulator's extrinsic symbol
//! probabilities by `l` positions, runs the deinterleaver and the MAP decoder,
//! and is scored by the decoder's log evidence. Shifting mass from `s_i` to
//! `s_{i+l}` undoes an estimate rotated by `e^{j2πl/C}`, so the matching
//! correction is `Ĥ·e^{-j2πl/C}`.

use std::f64::consts::PI;

use crate::bits::{Constellation, Interleaver};
use crate::em::{ChannelEstimate, SymbolProbs};
use crate::fec::{BitProbs, SisoDecoder};
use crate::Result;

/// Log-evidence margin (nats) the winner needs over every other candidate:
/// a likelihood ratio of at least 10³.
pub fn confidence_threshold() -> f64 {
    1e3f64.ln()
}

/// One scored hypothesis.
#[derive(Debug, Clone)]
pub struct PhaseCandidate {
    pub shift: usize,
    pub log_evidence: f64,
    pub coded_posteriors: BitProbs,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectionOutcome {
    pub shift: usize,
    /// `2π·shift/C`.
    pub phase: f64,
    pub confident: bool,
    /// Best minus runner-up log evidence.
    pub evidence_gap: f64,
}

impl DetectionOutcome {
    /// Argmax over `evidences` (ties go to the smallest shift) plus the gap rule.
    pub fn from_evidences(evidences: &[f64]) -> Self {
        let order = evidences.len();
        let mut best = 0;
        for (l, &e) in evidences.iter().enumerate() {
            if e > evidences[best] {
                best = l;
            }
        }
        let runner_up = evidences
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != best)
            .map(|(_, &e)| e)
            .fold(f64::NEG_INFINITY, f64::max);
        let gap = evidences[best] - runner_up;
        Self {
            shift: best,
            phase: 2.0 * PI * best as f64 / order as f64,
            confident: gap >= confidence_threshold(),
            evidence_gap: gap,
        }
    }
}

/// Candidate `l` moves the mass of `s_i` to `s_{(i+l) mod C}`.
pub fn shift_symbols(ext: &SymbolProbs, shift: usize) -> Result<SymbolProbs> {
    let c = ext.order();
    let mut data = vec![0.0; ext.as_slice().len()];
    for (slice, out) in ext.slices().zip(data.chunks_mut(c)) {
        for (i, &p) in slice.iter().enumerate() {
            out[(i + shift) % c] = p;
        }
    }
    SymbolProbs::from_normalized(c, data)
}

/// All `C` candidates, `l = 0` first.
pub fn shift_candidates(ext: &SymbolProbs) -> Result<Vec<SymbolProbs>> {
    (0..ext.order()).map(|l| shift_symbols(ext, l)).collect()
}

/// Scores every shift of `ext` with `decoder` and selects the best.
///
/// Exactly `C` decoder calls, evaluated in shift order.
pub fn detect_phase<D: SisoDecoder + ?Sized>(
    ext: &SymbolProbs,
    constellation: &Constellation,
    decoder: &D,
    interleaver: &Interleaver,
) -> Result<(DetectionOutcome, Vec<PhaseCandidate>)> {
    let candidates = shift_candidates(ext)?
        .into_iter()
        .enumerate()
        .map(|(shift, cand)| {
            let bits = constellation.demap_soft(&cand)?;
            let coded = interleaver.deinterleave_probs(&bits)?;
            let priors = BitProbs::uniform(decoder.code().info_len(coded.len())?);
            let res = decoder.decode(&coded, &priors)?;
            Ok(PhaseCandidate {
                shift,
                log_evidence: res.log_evidence,
                coded_posteriors: res.coded_posteriors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let evidences: Vec<f64> = candidates.iter().map(|c| c.log_evidence).collect();
    Ok((DetectionOutcome::from_evidences(&evidences), candidates))
}

/// `Ĥ·e^{-jφ̂}` for a confident detection, otherwise `Ĥ` unchanged.
pub fn apply_phase(h: &ChannelEstimate, outcome: &DetectionOutcome) -> ChannelEstimate {
    if outcome.confident {
        h.rotated(-outcome.phase)
    } else {
        h.clone()
    }
}
