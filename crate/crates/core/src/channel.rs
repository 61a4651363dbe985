//! Frequency-selective FIR channel with a global phase rotation and AWGN.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::em::ChannelEstimate;
use crate::numerics::{sample_cgn, RngStream};
use crate::{Error, Result};

/// Ground-truth channel for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub taps: Vec<Complex64>,
    /// Global phase `θ` in radians applied to every tap.
    pub phase: f64,
    pub noise_var: f64,
}

impl ChannelSpec {
    /// The `[0.5, 0.7, 0.5]` test channel, no rotation, no noise.
    pub fn proakis_b() -> Self {
        Self {
            taps: [0.5, 0.7, 0.5].map(|t| Complex64::new(t, 0.0)).to_vec(),
            phase: 0.0,
            noise_var: 0.0,
        }
    }

    pub fn tap_energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    /// Taps including the global phase, `h·e^{jθ}`.
    pub fn rotated_taps(&self) -> Vec<Complex64> {
        let rot = Complex64::from_polar(1.0, self.phase);
        self.taps.iter().map(|&t| t * rot).collect()
    }
}

/// Linear convolution with `h·e^{jθ}` (zero initial state, output truncated
/// to the input length) plus CN(0, σ²) noise drawn from `rng`.
pub fn apply_channel(
    x: &[Complex64],
    spec: &ChannelSpec,
    rng: &mut RngStream,
) -> Result<Vec<Complex64>> {
    if spec.taps.is_empty() {
        return Err(Error::arg("channel needs at least one tap"));
    }
    let taps = spec.rotated_taps();
    let noise = sample_cgn(x.len(), spec.noise_var, rng)?;
    Ok((0..x.len())
        .map(|t| {
            let conv: Complex64 = taps
                .iter()
                .enumerate()
                .take(t + 1)
                .map(|(l, &h)| h * x[t - l])
                .sum();
            conv + noise[t]
        })
        .collect())
}

/// `H_m = e^{jθ} Σ_l h_l e^{-j2πml/M}` for `m = 0..M-1`.
pub fn freq_response(spec: &ChannelSpec, subcarriers: usize) -> Result<ChannelEstimate> {
    if subcarriers < spec.taps.len() {
        return Err(Error::arg(format!(
            "{} taps do not fit {subcarriers} subcarriers",
            spec.taps.len()
        )));
    }
    let taps = spec.rotated_taps();
    let step = -2.0 * std::f64::consts::PI / subcarriers as f64;
    let response = (0..subcarriers)
        .map(|m| {
            taps.iter()
                .enumerate()
                .map(|(l, &h)| h * Complex64::from_polar(1.0, step * ((m * l) % subcarriers) as f64))
                .sum()
        })
        .collect();
    Ok(ChannelEstimate::new(response, 0))
}

/// `σ_w² = 10^(-SNR/10)` for unit-energy PSK symbols.
pub fn snr_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Parses a tap list such as `0.5,0.7,0.5` or `0.5+0.1j,0.7,-0.2j`.
pub fn parse_taps(literal: &str) -> Result<Vec<Complex64>> {
    let taps = literal
        .split(',')
        .map(|tok| parse_complex(tok.trim()))
        .collect::<Result<Vec<_>>>()?;
    if taps.is_empty() {
        return Err(Error::arg("empty tap list"));
    }
    Ok(taps)
}

fn parse_complex(tok: &str) -> Result<Complex64> {
    let bad = || Error::arg(format!("cannot parse tap `{tok}`"));
    let s: String = tok.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(bad());
    }
    let Some(body) = s.strip_suffix(['j', 'i']) else {
        return s.parse::<f64>().map(|r| Complex64::new(r, 0.0)).map_err(|_| bad());
    };
    // split at the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    let re: f64 = re.parse().map_err(|_| bad())?;
    let im: f64 = im.trim_start_matches('+').parse().map_err(|_| bad())?;
    Ok(Complex64::new(re, im))
}
