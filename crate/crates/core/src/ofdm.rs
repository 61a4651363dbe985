//! OFDM framing: per-symbol IDFT, cyclic prefix, serialization and the
//! inverse chain at the receiver.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fec::CodeSpec;
use crate::numerics::Dft;
use crate::{Error, Result};

/// Frame-level constants shared by transmitter and receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Subcarriers (DFT size).
    pub subcarriers: usize,
    /// OFDM symbols per frame.
    pub symbols: usize,
    pub cyclic_prefix: usize,
    /// PSK order `C`.
    pub order: usize,
    /// Assumed channel length used by the truncation step.
    pub channel_len: usize,
    pub code: CodeSpec,
    /// EM iterations before the turbo loop starts.
    pub init_iters: usize,
    /// EM iterations per turbo round.
    pub em_per_turbo: usize,
    pub turbo_iters: usize,
    /// Relative-change threshold for stopping EM early; `None` runs the fixed schedule.
    pub early_stop: Option<f64>,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            subcarriers: 256,
            symbols: 10,
            cyclic_prefix: 8,
            order: 4,
            channel_len: 3,
            code: CodeSpec::default(),
            init_iters: 20,
            em_per_turbo: 5,
            turbo_iters: 6,
            early_stop: None,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.subcarriers;
        if m == 0 || !m.is_power_of_two() {
            return Err(Error::Config(format!("subcarriers must be a power of two, got {m}")));
        }
        if self.symbols == 0 {
            return Err(Error::Config("at least one OFDM symbol per frame".into()));
        }
        if self.order < 2 || !self.order.is_power_of_two() {
            return Err(Error::Config(format!("PSK order must be a power of two, got {}", self.order)));
        }
        if self.channel_len == 0 || self.channel_len > m {
            return Err(Error::Config(format!(
                "assumed channel length {} outside 1..={m}",
                self.channel_len
            )));
        }
        if self.cyclic_prefix + 1 < self.channel_len {
            return Err(Error::Config(format!(
                "cyclic prefix {} too short for channel length {}",
                self.cyclic_prefix, self.channel_len
            )));
        }
        if self.cyclic_prefix > m {
            return Err(Error::Config("cyclic prefix longer than the OFDM symbol".into()));
        }
        self.code.validate()?;
        self.code.info_len(self.coded_len())?;
        Ok(())
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// `T = M·N` PSK symbols per frame.
    pub fn num_symbols(&self) -> usize {
        self.subcarriers * self.symbols
    }

    /// Coded bits per frame, `M·N·log2 C`.
    pub fn coded_len(&self) -> usize {
        self.num_symbols() * self.bits_per_symbol()
    }

    pub fn info_len(&self) -> Result<usize> {
        self.code.info_len(self.coded_len())
    }

    /// Serialized frame length `N·(M + N_cp)`.
    pub fn frame_len(&self) -> usize {
        self.symbols * (self.subcarriers + self.cyclic_prefix)
    }

    /// Number of EM iterations in a full receiver trace.
    pub fn total_em_iters(&self) -> usize {
        self.init_iters + self.em_per_turbo * self.turbo_iters
    }
}

/// `M × N` complex grid stored column by column (one column per OFDM symbol).
///
/// Linear index `n·M + m` is also the position of the symbol in the frame's
/// PSK sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl FreqGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    /// Reshapes a column-major sequence of `rows·cols` values.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::arg(format!(
                "{} values cannot fill a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.data[n * self.rows + m]
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, v: Complex64) {
        self.data[n * self.rows + m] = v;
    }

    pub fn column(&self, n: usize) -> &[Complex64] {
        &self.data[n * self.rows..(n + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(usize, usize, Complex64) -> Complex64) -> Self {
        let mut out = self.clone();
        for n in 0..self.cols {
            for m in 0..self.rows {
                out.set(m, n, f(m, n, self.get(m, n)));
            }
        }
        out
    }

    pub fn mean_power(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }
}

/// IDFT per column, prepend the last `N_cp` samples, concatenate columns.
pub fn ofdm_modulate(grid: &FreqGrid, cfg: &FrameConfig, dft: &Dft) -> Result<Vec<Complex64>> {
    let (m, cp) = (cfg.subcarriers, cfg.cyclic_prefix);
    if grid.rows() != m || grid.cols() != cfg.symbols || dft.len() != m {
        return Err(Error::arg(format!(
            "grid {}x{} does not match frame {m}x{}",
            grid.rows(),
            grid.cols(),
            cfg.symbols
        )));
    }
    let mut out = Vec::with_capacity(cfg.frame_len());
    for n in 0..grid.cols() {
        let time = dft.inverse(grid.column(n))?;
        out.extend_from_slice(&time[m - cp..]);
        out.extend_from_slice(&time);
    }
    Ok(out)
}

/// Drop each cyclic prefix and DFT the remaining `M` samples.
pub fn ofdm_demodulate(samples: &[Complex64], cfg: &FrameConfig, dft: &Dft) -> Result<FreqGrid> {
    let (m, cp) = (cfg.subcarriers, cfg.cyclic_prefix);
    if samples.len() != cfg.frame_len() {
        return Err(Error::arg(format!(
            "frame has {} samples, expected {}",
            samples.len(),
            cfg.frame_len()
        )));
    }
    let mut data = Vec::with_capacity(cfg.num_symbols());
    for block in samples.chunks(m + cp) {
        let mut sym = block[cp..].to_vec();
        dft.forward_in_place(&mut sym)?;
        data.extend(sym);
    }
    FreqGrid::from_column_major(m, cfg.symbols, data)
}
