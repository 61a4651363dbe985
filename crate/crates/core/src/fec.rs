//! Feed-forward convolutional code and its soft-input soft-output MAP decoder.
//!
//! The decoder runs the forward–backward (BCJR) recursions in the log domain.
//! Every forward step is normalized and the normalization constants are summed
//! into [`DecodeResult::log_evidence`], the log of the total probability of the
//! channel observations under the code constraint and the info-bit priors.

use crate::numerics::log_add;
use crate::{Error, Result, PROB_EPS};

/// Per-position probability that a bit equals one, clamped to `[ε, 1-ε]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BitProbs(Vec<f64>);

impl BitProbs {
    /// Clamps every entry into `[ε, 1-ε]`. NaN entries become 0.5.
    pub fn new(probs: Vec<f64>) -> Self {
        Self(probs.into_iter().map(clamp_prob).collect())
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![0.5; len])
    }

    /// Near-certain probabilities for a known bit sequence.
    pub fn from_bits(bits: &[u8]) -> Self {
        Self(
            bits.iter()
                .map(|&b| if b != 0 { 1.0 - PROB_EPS } else { PROB_EPS })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn hard_decisions(&self) -> Vec<u8> {
        self.0.iter().map(|&p| u8::from(p > 0.5)).collect()
    }
}

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    if p.is_nan() {
        0.5
    } else {
        p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    }
}

/// Convolutional code description: two octal generators, rate 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CodeSpec {
    /// Octal generator polynomials; the MSB taps the current input bit.
    pub generators: [u32; 2],
    pub constraint_length: usize,
    /// Append `constraint_length - 1` zero tail bits so the trellis ends in state 0.
    pub terminated: bool,
}

impl Default for CodeSpec {
    fn default() -> Self {
        Self {
            generators: [0o5, 0o7],
            constraint_length: 3,
            terminated: true,
        }
    }
}

/// Result of one MAP decoding pass.
#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub coded_posteriors: BitProbs,
    /// Coded-bit posteriors with each bit's own likelihood left out.
    pub coded_extrinsics: BitProbs,
    pub info_posteriors: BitProbs,
    /// Natural log of the total observation likelihood.
    pub log_evidence: f64,
}

/// Anything that can turn coded-bit likelihoods into posteriors and evidence.
pub trait SisoDecoder {
    fn code(&self) -> &CodeSpec;

    fn decode(&self, coded_likelihoods: &BitProbs, info_priors: &BitProbs) -> Result<DecodeResult>;
}

impl SisoDecoder for CodeSpec {
    fn code(&self) -> &CodeSpec {
        self
    }

    fn decode(&self, coded_likelihoods: &BitProbs, info_priors: &BitProbs) -> Result<DecodeResult> {
        bcjr_decode(coded_likelihoods, info_priors, self)
    }
}

struct Branch {
    next: usize,
    out: [u8; 2],
}

impl CodeSpec {
    pub fn validate(&self) -> Result<()> {
        let lc = self.constraint_length;
        if !(2..=16).contains(&lc) {
            return Err(Error::Config(format!("constraint length {lc} out of range 2..=16")));
        }
        for &g in &self.generators {
            if g == 0 || g >= (1 << lc) {
                return Err(Error::Config(format!(
                    "generator {g:o} (octal) does not fit constraint length {lc}"
                )));
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        1 << (self.constraint_length - 1)
    }

    pub fn tail_len(&self) -> usize {
        if self.terminated {
            self.constraint_length - 1
        } else {
            0
        }
    }

    pub fn coded_len(&self, info_len: usize) -> usize {
        2 * (info_len + self.tail_len())
    }

    /// Info length that fills exactly `coded_len` coded bits.
    pub fn info_len(&self, coded_len: usize) -> Result<usize> {
        if coded_len % 2 != 0 || coded_len / 2 <= self.tail_len() {
            return Err(Error::Config(format!(
                "{coded_len} coded bits cannot hold a rate-1/2 frame with {} tail bits",
                self.tail_len()
            )));
        }
        Ok(coded_len / 2 - self.tail_len())
    }

    /// Register holds the input bit in its MSB and past inputs below it.
    fn branch(&self, state: usize, input: u8) -> Branch {
        let lc = self.constraint_length;
        let reg = ((input as u32) << (lc - 1)) | state as u32;
        let out = self.generators.map(|g| ((reg & g).count_ones() & 1) as u8);
        Branch {
            next: (reg >> 1) as usize,
            out,
        }
    }

    fn trellis(&self) -> Vec<[Branch; 2]> {
        (0..self.num_states())
            .map(|s| [self.branch(s, 0), self.branch(s, 1)])
            .collect()
    }
}

/// Encodes `info_bits` (0/1 values), appending the zero tail if terminated.
pub fn conv_encode(info_bits: &[u8], spec: &CodeSpec) -> Result<Vec<u8>> {
    spec.validate()?;
    if info_bits.is_empty() {
        return Err(Error::arg("cannot encode an empty info sequence"));
    }
    let mut state = 0usize;
    let mut out = Vec::with_capacity(spec.coded_len(info_bits.len()));
    let tail = std::iter::repeat_n(0u8, spec.tail_len());
    for b in info_bits.iter().map(|&b| b & 1).chain(tail) {
        let br = spec.branch(state, b);
        out.extend_from_slice(&br.out);
        state = br.next;
    }
    Ok(out)
}

/// MAP decoding from per-coded-bit probabilities of a one.
pub fn bcjr_decode(
    coded_likelihoods: &BitProbs,
    info_priors: &BitProbs,
    spec: &CodeSpec,
) -> Result<DecodeResult> {
    let pairs: Vec<[f64; 2]> = coded_likelihoods
        .as_slice()
        .iter()
        .map(|&p| [1.0 - p, p])
        .collect();
    bcjr_decode_pairs(&pairs, info_priors, spec)
}

/// MAP decoding from unnormalized likelihood pairs `[p(r|c=0), p(r|c=1)]`.
///
/// `info_priors` covers the info bits only; tail bits are known zeros.
/// Scaling every pair by `s > 0` leaves the posteriors unchanged and adds
/// `K·ln s` to the evidence, `K` being the number of coded bits.
pub fn bcjr_decode_pairs(
    likelihoods: &[[f64; 2]],
    info_priors: &BitProbs,
    spec: &CodeSpec,
) -> Result<DecodeResult> {
    spec.validate()?;
    let n_info = spec.info_len(likelihoods.len())?;
    if info_priors.len() != n_info {
        return Err(Error::arg(format!(
            "{} info priors for a trellis with {n_info} info bits",
            info_priors.len()
        )));
    }
    if let Some(bad) = likelihoods.iter().flatten().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::arg(format!("likelihood {bad} is not positive and finite")));
    }

    let trellis = spec.trellis();
    let ns = spec.num_states();
    let steps = likelihoods.len() / 2;
    let log_lik: Vec<[f64; 2]> = likelihoods.iter().map(|l| [l[0].ln(), l[1].ln()]).collect();
    let log_prior: Vec<[f64; 2]> = info_priors
        .as_slice()
        .iter()
        .map(|&p| [(1.0 - p).ln(), p.ln()])
        .collect();

    let gamma = |t: usize, br: &Branch, input: usize| -> f64 {
        let prior = if t < n_info {
            log_prior[t][input]
        } else if input == 0 {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        prior + log_lik[2 * t][br.out[0] as usize] + log_lik[2 * t + 1][br.out[1] as usize]
    };

    let neg_inf = f64::NEG_INFINITY;
    let mut alpha = vec![neg_inf; (steps + 1) * ns];
    alpha[0] = 0.0;
    let mut log_evidence = 0.0;
    for t in 0..steps {
        let (cur, next) = alpha.split_at_mut((t + 1) * ns);
        let cur = &cur[t * ns..];
        let next = &mut next[..ns];
        for (s, branches) in trellis.iter().enumerate() {
            if cur[s] == neg_inf {
                continue;
            }
            for (input, br) in branches.iter().enumerate() {
                let m = cur[s] + gamma(t, br, input);
                next[br.next] = log_add(next[br.next], m);
            }
        }
        let norm = next.iter().copied().fold(neg_inf, log_add);
        next.iter_mut().for_each(|a| *a -= norm);
        log_evidence += norm;
    }
    let last = &alpha[steps * ns..];
    log_evidence += if spec.terminated {
        last[0]
    } else {
        last.iter().copied().fold(neg_inf, log_add)
    };

    let mut beta = vec![neg_inf; (steps + 1) * ns];
    if spec.terminated {
        beta[steps * ns] = 0.0;
    } else {
        beta[steps * ns..].fill(0.0);
    }
    for t in (0..steps).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * ns);
        let cur = &mut cur[t * ns..];
        for (s, branches) in trellis.iter().enumerate() {
            let mut acc = neg_inf;
            for (input, br) in branches.iter().enumerate() {
                acc = log_add(acc, gamma(t, br, input) + next[br.next]);
            }
            cur[s] = acc;
        }
        let norm = cur.iter().copied().fold(neg_inf, log_add);
        cur.iter_mut().for_each(|b| *b -= norm);
    }

    let mut coded = Vec::with_capacity(2 * steps);
    let mut extrinsic = Vec::with_capacity(2 * steps);
    let mut info = Vec::with_capacity(n_info);
    for t in 0..steps {
        let mut c0 = [neg_inf; 2];
        let mut c1 = [neg_inf; 2];
        let mut b = [neg_inf; 2];
        for (s, branches) in trellis.iter().enumerate() {
            let a = alpha[t * ns + s];
            if a == neg_inf {
                continue;
            }
            for (input, br) in branches.iter().enumerate() {
                let m = a + gamma(t, br, input) + beta[(t + 1) * ns + br.next];
                let o = br.out;
                c0[o[0] as usize] = log_add(c0[o[0] as usize], m);
                c1[o[1] as usize] = log_add(c1[o[1] as usize], m);
                b[input] = log_add(b[input], m);
            }
        }
        coded.push(log_odds_to_prob(c0));
        coded.push(log_odds_to_prob(c1));
        for (k, c) in [(2 * t, c0), (2 * t + 1, c1)] {
            extrinsic.push(log_odds_to_prob([c[0] - log_lik[k][0], c[1] - log_lik[k][1]]));
        }
        if t < n_info {
            info.push(log_odds_to_prob(b));
        }
    }

    if !log_evidence.is_finite() {
        return Err(Error::arg("decoder evidence is not finite"));
    }
    Ok(DecodeResult {
        coded_posteriors: BitProbs::new(coded),
        coded_extrinsics: BitProbs::new(extrinsic),
        info_posteriors: BitProbs::new(info),
        log_evidence,
    })
}

/// `p(1)` from log-domain masses `[ln m0, ln m1]`.
fn log_odds_to_prob(m: [f64; 2]) -> f64 {
    match (m[0] == f64::NEG_INFINITY, m[1] == f64::NEG_INFINITY) {
        (true, true) => 0.5,
        (true, false) => 1.0,
        (false, true) => 0.0,
        _ => 1.0 / (1.0 + (m[0] - m[1]).exp()),
    }
}

/// Odds division `posterior / incoming`, renormalized to a probability.
pub fn extrinsic_divide(posterior: &BitProbs, incoming: &BitProbs) -> Result<BitProbs> {
    if posterior.len() != incoming.len() {
        return Err(Error::arg(format!(
            "posterior length {} != incoming length {}",
            posterior.len(),
            incoming.len()
        )));
    }
    let out = posterior
        .as_slice()
        .iter()
        .zip(incoming.as_slice())
        .map(|(&p, &q)| {
            let one = p * (1.0 - q);
            let zero = (1.0 - p) * q;
            one / (one + zero)
        })
        .collect();
    Ok(BitProbs::new(out))
}

/// True when the hard-decided info bits re-encode to the hard-decided codeword.
pub fn reencodes_consistently(result: &DecodeResult, spec: &CodeSpec) -> Result<bool> {
    let info = result.info_posteriors.hard_decisions();
    let coded = result.coded_posteriors.hard_decisions();
    Ok(conv_encode(&info, spec)? == coded)
}
