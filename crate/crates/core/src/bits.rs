//! Bit interleaving and PSK mapping between bit and symbol domains.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::em::SymbolProbs;
use crate::fec::BitProbs;
use crate::numerics::RngStream;
use crate::{Error, Result};

/// Fixed permutation: `interleave(c)[k] = c[perm[k]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    seed: u64,
}

impl Interleaver {
    /// Fisher–Yates shuffle driven by a ChaCha stream seeded with `seed`.
    pub fn from_seed(len: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let mut perm: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            let j = rng.below(i + 1);
            perm.swap(i, j);
        }
        Self { perm, seed }
    }

    pub fn identity(len: usize) -> Self {
        Self {
            perm: (0..len).collect(),
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Copy>(&self, seq: &[T]) -> Result<Vec<T>> {
        self.check(seq.len())?;
        Ok(self.perm.iter().map(|&p| seq[p]).collect())
    }

    pub fn deinterleave<T: Copy>(&self, seq: &[T]) -> Result<Vec<T>> {
        self.check(seq.len())?;
        let mut out = seq.to_vec();
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = seq[k];
        }
        Ok(out)
    }

    pub fn interleave_probs(&self, probs: &BitProbs) -> Result<BitProbs> {
        Ok(BitProbs::new(self.interleave(probs.as_slice())?))
    }

    pub fn deinterleave_probs(&self, probs: &BitProbs) -> Result<BitProbs> {
        Ok(BitProbs::new(self.deinterleave(probs.as_slice())?))
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.perm.len() {
            return Err(Error::arg(format!(
                "interleaver of length {} applied to {len} entries",
                self.perm.len()
            )));
        }
        Ok(())
    }
}

/// C-PSK constellation `s_i = exp(j2πi/C)` with binary-reflected Gray labels.
///
/// Point `i` carries label `i ^ (i >> 1)`, most significant bit first. For
/// QPSK: `1 ↦ 00`, `j ↦ 01`, `-1 ↦ 11`, `-j ↦ 10`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
    labels: Vec<usize>,
    /// Inverse of `labels`.
    by_label: Vec<usize>,
}

impl Constellation {
    pub fn psk(order: usize) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::Config(format!(
                "PSK order must be a power of two >= 2, got {order}"
            )));
        }
        let points = (0..order)
            .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / order as f64))
            .collect();
        let labels: Vec<usize> = (0..order).map(|i| i ^ (i >> 1)).collect();
        let mut by_label = vec![0; order];
        for (i, &l) in labels.iter().enumerate() {
            by_label[l] = i;
        }
        Ok(Self {
            order,
            bits_per_symbol: order.trailing_zeros() as usize,
            points,
            labels,
            by_label,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    /// Bit `b` (0 = most significant) of point `index`'s label.
    fn label_bit(&self, index: usize, b: usize) -> bool {
        (self.labels[index] >> (self.bits_per_symbol - 1 - b)) & 1 == 1
    }

    /// Index of the point nearest in angle to `z`.
    pub fn nearest(&self, z: Complex64) -> usize {
        let step = 2.0 * PI / self.order as f64;
        let k = (z.arg() / step).round() as i64;
        k.rem_euclid(self.order as i64) as usize
    }

    fn check_bits(&self, len: usize) -> Result<()> {
        if len % self.bits_per_symbol != 0 {
            return Err(Error::arg(format!(
                "{len} bits is not a multiple of {} bits per symbol",
                self.bits_per_symbol
            )));
        }
        Ok(())
    }

    /// Symbol indices for a hard bit sequence.
    pub fn map_indices(&self, bits: &[u8]) -> Result<Vec<usize>> {
        self.check_bits(bits.len())?;
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|group| {
                let label = group.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
                self.by_label[label]
            })
            .collect())
    }

    pub fn map_hard(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        Ok(self
            .map_indices(bits)?
            .into_iter()
            .map(|i| self.points[i])
            .collect())
    }

    /// Bit marginals `p(b = 1) = Σ_{i: label_b(i) = 1} p(s_i)`.
    pub fn demap_soft(&self, probs: &SymbolProbs) -> Result<BitProbs> {
        if probs.order() != self.order {
            return Err(Error::arg(format!(
                "tensor order {} does not match constellation order {}",
                probs.order(),
                self.order
            )));
        }
        let mut out = Vec::with_capacity(probs.num_symbols() * self.bits_per_symbol);
        for (t, slice) in probs.slices().enumerate() {
            let total: f64 = slice.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::arg(format!(
                    "symbol {t} probabilities sum to {total}, expected 1"
                )));
            }
            for b in 0..self.bits_per_symbol {
                let p: f64 = slice
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| self.label_bit(*i, b))
                    .map(|(_, &p)| p)
                    .sum();
                out.push(p);
            }
        }
        Ok(BitProbs::new(out))
    }

    /// Symbol probabilities from independent bit probabilities.
    pub fn map_soft(&self, bits: &BitProbs) -> Result<SymbolProbs> {
        self.check_bits(bits.len())?;
        let mut data = Vec::with_capacity(bits.len() / self.bits_per_symbol * self.order);
        for group in bits.as_slice().chunks(self.bits_per_symbol) {
            let start = data.len();
            for i in 0..self.order {
                let p: f64 = group
                    .iter()
                    .enumerate()
                    .map(|(b, &p1)| if self.label_bit(i, b) { p1 } else { 1.0 - p1 })
                    .product();
                data.push(p);
            }
            let total: f64 = data[start..].iter().sum();
            data[start..].iter_mut().for_each(|p| *p /= total);
        }
        SymbolProbs::from_normalized(self.order, data)
    }

    /// One-hot (up to the ε floor) tensor on the given symbol indices.
    pub fn one_hot(&self, indices: &[usize]) -> Result<SymbolProbs> {
        let mut data = vec![0.0; indices.len() * self.order];
        for (t, &i) in indices.iter().enumerate() {
            data[t * self.order + i] = 1.0;
        }
        SymbolProbs::from_normalized(self.order, data)
    }
}
