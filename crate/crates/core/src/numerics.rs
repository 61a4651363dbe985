//! Shared numerics: unitary DFT pair, seeded random streams and
//! circularly symmetric complex Gaussian sampling.
//!
//! The DFT is unitary in both directions (`1/√M` scaling), so
//! `idft(dft(v)) == v` and Parseval holds without extra factors.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Planned forward/inverse unitary transform of a fixed power-of-two size.
#[derive(Clone)]
pub struct Dft {
    len: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("len", &self.len).finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Config(format!(
                "DFT length must be a nonzero power of two, got {len}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            scale: 1.0 / (len as f64).sqrt(),
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `F·v` under the unitary convention.
    pub fn forward(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = v.to_vec();
        self.forward_in_place(&mut out)?;
        Ok(out)
    }

    /// `Fᴴ·v` under the unitary convention.
    pub fn inverse(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = v.to_vec();
        self.inverse_in_place(&mut out)?;
        Ok(out)
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) -> Result<()> {
        self.check(buf.len())?;
        self.forward.process(buf);
        buf.iter_mut().for_each(|x| *x *= self.scale);
        Ok(())
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) -> Result<()> {
        self.check(buf.len())?;
        self.inverse.process(buf);
        buf.iter_mut().for_each(|x| *x *= self.scale);
        Ok(())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.len {
            return Err(Error::arg(format!(
                "DFT planned for length {}, got {len}",
                self.len
            )));
        }
        Ok(())
    }
}

/// One-shot unitary DFT. Plans a transform on every call; use [`Dft`] in loops.
pub fn dft(v: &[Complex64]) -> Result<Vec<Complex64>> {
    Dft::new(v.len())?.forward(v)
}

/// One-shot unitary inverse DFT.
pub fn idft(v: &[Complex64]) -> Result<Vec<Complex64>> {
    Dft::new(v.len())?.inverse(v)
}

/// SplitMix64 finalizer, used to derive independent child seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a master seed and a path of indices into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &idx| splitmix64(acc ^ splitmix64(idx)))
}

/// Seeded ChaCha8 stream. ChaCha output is specified bit-for-bit, so a given
/// `(seed, stream)` pair yields the same samples on every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream `stream` under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bit(&mut self) -> u8 {
        (self.rng.next_u32() & 1) as u8
    }

    pub fn below(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Draws `count` samples of CN(0, `variance`): each of the real and imaginary
/// parts has variance `variance / 2`.
pub fn sample_cgn(count: usize, variance: f64, rng: &mut RngStream) -> Result<Vec<Complex64>> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::arg(format!(
            "noise variance must be finite and nonnegative, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); count]);
    }
    let sd = (variance / 2.0).sqrt();
    Ok((0..count)
        .map(|_| {
            let re = rng.standard_normal();
            let im = rng.standard_normal();
            Complex64::new(sd * re, sd * im)
        })
        .collect())
}

/// `ln Σ exp(x)`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Two-argument Jacobian logarithm `ln(e^a + e^b)`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_dft(v: &[Complex64]) -> Vec<Complex64> {
        let m = v.len();
        let scale = 1.0 / (m as f64).sqrt();
        (0..m)
            .map(|k| {
                v.iter()
                    .enumerate()
                    .map(|(t, &x)| x * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / m as f64))
                    .sum::<Complex64>()
                    * scale
            })
            .collect()
    }

    fn random_vec(len: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = RngStream::new(seed);
        sample_cgn(len, 1.0, &mut rng).unwrap()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn impulse_transforms_to_flat() {
        let v = [1.0, 0.0, 0.0, 0.0].map(|r| Complex64::new(r, 0.0));
        let out = dft(&v).unwrap();
        for x in &out {
            assert!((x - out[0]).norm() < 1e-15);
        }
        assert!((out[0].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bin_zero_is_scaled_tap_sum() {
        let m = 256;
        let mut h = vec![Complex64::new(0.0, 0.0); m];
        h[0].re = 0.5;
        h[1].re = 0.7;
        h[2].re = 0.5;
        // unitary convention: bin 0 carries the tap sum divided by √M
        let oracle: Complex64 = h.iter().sum();
        let out = dft(&h).unwrap();
        assert!((oracle.re - 1.7).abs() < 1e-15);
        assert!((out[0] * (m as f64).sqrt() - oracle).norm() < 1e-12);
    }

    #[test]
    fn matches_naive_oracle() {
        for &m in &[4usize, 64, 256] {
            let v = random_vec(m, 7 + m as u64);
            assert!(max_err(&dft(&v).unwrap(), &naive_dft(&v)) < 1e-12);
        }
    }

    #[test]
    fn roundtrip_and_parseval() {
        for &m in &[4usize, 64, 256] {
            let v = random_vec(m, m as u64);
            let f = dft(&v).unwrap();
            assert!(max_err(&idft(&f).unwrap(), &v) < 1e-12);
            let e_t: f64 = v.iter().map(|x| x.norm_sqr()).sum();
            let e_f: f64 = f.iter().map(|x| x.norm_sqr()).sum();
            assert!(((e_t - e_f) / e_t).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_inverts_to_scaled_impulse() {
        let v = vec![Complex64::new(2.0, -1.0); 16];
        let out = idft(&v).unwrap();
        assert!((out[0] - Complex64::new(8.0, -4.0)).norm() < 1e-12);
        assert!(out[1..].iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn idft_is_linear() {
        let u = random_vec(64, 1);
        let v = random_vec(64, 2);
        let a = Complex64::new(0.3, -1.2);
        let b = Complex64::new(-2.0, 0.5);
        let comb: Vec<_> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = idft(&comb).unwrap();
        let iu = idft(&u).unwrap();
        let iv = idft(&v).unwrap();
        let rhs: Vec<_> = iu.iter().zip(&iv).map(|(x, y)| a * x + b * y).collect();
        assert!(max_err(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(Dft::new(0), Err(Error::Config(_))));
        assert!(matches!(Dft::new(48), Err(Error::Config(_))));
        let d = Dft::new(8).unwrap();
        assert!(d.forward(&[Complex64::new(0.0, 0.0); 4]).is_err());
    }

    #[test]
    fn noise_statistics() {
        let mut rng = RngStream::new(123);
        let w = sample_cgn(1_000_000, 1.0, &mut rng).unwrap();
        let n = w.len() as f64;
        let power = w.iter().map(|x| x.norm_sqr()).sum::<f64>() / n;
        assert!((0.99..=1.01).contains(&power), "power {power}");
        let cov = w.iter().map(|x| x.re * x.im).sum::<f64>() / n;
        assert!(cov.abs() < 3e-3, "cov {cov}");
    }

    #[test]
    fn zero_variance_and_errors() {
        let mut rng = RngStream::new(1);
        assert!(sample_cgn(5, 0.0, &mut rng)
            .unwrap()
            .iter()
            .all(|x| x.norm() == 0.0));
        assert!(sample_cgn(5, -1.0, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_samples() {
        let a = sample_cgn(32, 0.5, &mut RngStream::new(9)).unwrap();
        let b = sample_cgn(32, 0.5, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
        let c = sample_cgn(32, 0.5, &mut RngStream::with_stream(9, 1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(42, &[0, 0]);
        assert_eq!(a, derive_seed(42, &[0, 0]));
        assert_ne!(a, derive_seed(42, &[0, 1]));
        assert_ne!(a, derive_seed(42, &[1, 0]));
        assert_ne!(a, derive_seed(43, &[0, 0]));
    }

    #[test]
    fn log_sum_exp_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_add(-1.0, -2.0) - log_sum_exp(&[-1.0, -2.0])).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, 3.0), 3.0);
    }
}
