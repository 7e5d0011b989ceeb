//! Square-QAM mapping and CO-OFDM baseband modulation.
//!
//! # Gray map
//!
//! Each axis of a `Q`-QAM constellation is an `L = sqrt(Q)`-level PAM with
//! `log2(L)` bits. Level index `i` (0-based) has amplitude `(L - 1) - 2i` and
//! carries the Gray word `i ^ (i >> 1)`, most significant bit first. The
//! first half of a symbol's bits selects the in-phase level, the second half
//! the quadrature level. Amplitudes are scaled by `1 / sqrt(2 (Q - 1) / 3)`
//! so the alphabet has unit average power.
//!
//! For 4-QAM this gives
//!
//! | bits | symbol          |
//! |------|-----------------|
//! | 00   | ( 1 + 1j) / √2  |
//! | 01   | ( 1 - 1j) / √2  |
//! | 10   | (-1 + 1j) / √2  |
//! | 11   | (-1 - 1j) / √2  |
//!
//! Bits fill the grid symbol by symbol, subcarrier-major inside each OFDM
//! symbol: grid cell `(k, m)` takes bits starting at
//! `(m * N + k) * log2(Q)`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CpaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub n_subcarriers: usize,
    pub cp_len: usize,
    pub n_symbols: usize,
    pub qam_order: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            n_subcarriers: 64,
            cp_len: 8,
            n_symbols: 64,
            qam_order: 4,
        }
    }
}

impl FrameConfig {
    pub fn new(
        n_subcarriers: usize,
        cp_len: usize,
        n_symbols: usize,
        qam_order: usize,
    ) -> Result<Self> {
        let cfg = FrameConfig {
            n_subcarriers,
            cp_len,
            n_symbols,
            qam_order,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 || self.n_symbols == 0 {
            return Err(CpaError::InvalidConfig(
                "n_subcarriers and n_symbols must be positive".into(),
            ));
        }
        if self.cp_len >= self.n_subcarriers {
            return Err(CpaError::InvalidConfig(format!(
                "cp_len {} must be smaller than n_subcarriers {}",
                self.cp_len, self.n_subcarriers
            )));
        }
        if !matches!(self.qam_order, 4 | 16 | 64) {
            return Err(CpaError::InvalidConfig(format!(
                "qam_order {} not in {{4, 16, 64}}",
                self.qam_order
            )));
        }
        Ok(())
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.qam_order.trailing_zeros() as usize
    }

    pub fn bits_per_sample(&self) -> usize {
        self.n_subcarriers * self.n_symbols * self.bits_per_symbol()
    }

    pub fn block_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }

    pub fn series_len(&self) -> usize {
        self.n_symbols * self.block_len()
    }

    fn levels_per_axis(&self) -> usize {
        1 << (self.bits_per_symbol() / 2)
    }

    fn amplitude_scale(&self) -> f64 {
        (2.0 * (self.qam_order as f64 - 1.0) / 3.0).sqrt().recip()
    }
}

/// Frequency-domain symbols, `n_subcarriers` × `n_symbols`, stored symbol-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    n_subcarriers: usize,
    n_symbols: usize,
    entries: Vec<Complex64>,
}

impl SymbolGrid {
    pub fn from_entries(
        n_subcarriers: usize,
        n_symbols: usize,
        entries: Vec<Complex64>,
    ) -> Result<Self> {
        if entries.len() != n_subcarriers * n_symbols {
            return Err(CpaError::InputSize {
                expected: n_subcarriers * n_symbols,
                got: entries.len(),
            });
        }
        Ok(SymbolGrid {
            n_subcarriers,
            n_symbols,
            entries,
        })
    }

    pub fn zeros(n_subcarriers: usize, n_symbols: usize) -> Self {
        SymbolGrid {
            n_subcarriers,
            n_symbols,
            entries: vec![Complex64::new(0.0, 0.0); n_subcarriers * n_symbols],
        }
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn get(&self, subcarrier: usize, symbol: usize) -> Complex64 {
        self.entries[symbol * self.n_subcarriers + subcarrier]
    }

    pub fn set(&mut self, subcarrier: usize, symbol: usize, value: Complex64) {
        self.entries[symbol * self.n_subcarriers + subcarrier] = value;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Subcarriers of one OFDM symbol.
    pub fn symbol(&self, symbol: usize) -> &[Complex64] {
        let n = self.n_subcarriers;
        &self.entries[symbol * n..(symbol + 1) * n]
    }

    fn check_shape(&self, cfg: &FrameConfig) -> Result<()> {
        if self.n_subcarriers != cfg.n_subcarriers || self.n_symbols != cfg.n_symbols {
            return Err(CpaError::ShapeMismatch(format!(
                "grid is {}x{}, frame expects {}x{}",
                self.n_subcarriers, self.n_symbols, cfg.n_subcarriers, cfg.n_symbols
            )));
        }
        Ok(())
    }
}

/// Unit-spaced discrete-time complex baseband samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexSeries(pub Vec<Complex64>);

impl ComplexSeries {
    pub fn new(samples: Vec<Complex64>) -> Self {
        ComplexSeries(samples)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&self, factor: f64) -> ComplexSeries {
        ComplexSeries(self.0.iter().map(|z| z * factor).collect())
    }
}

fn gray_to_index(gray: usize) -> usize {
    let mut index = gray;
    let mut shift = gray >> 1;
    while shift != 0 {
        index ^= shift;
        shift >>= 1;
    }
    index
}

fn bits_to_word(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b != 0))
}

fn write_word(word: usize, out: &mut [u8]) {
    let n = out.len();
    for (i, bit) in out.iter_mut().enumerate() {
        *bit = ((word >> (n - 1 - i)) & 1) as u8;
    }
}

/// Maps a single symbol's bits to its constellation point.
pub fn qam_symbol(bits: &[u8], cfg: &FrameConfig) -> Complex64 {
    let half = cfg.bits_per_symbol() / 2;
    let levels = cfg.levels_per_axis() as f64;
    let amp = |word: usize| (levels - 1.0) - 2.0 * gray_to_index(word) as f64;
    let scale = cfg.amplitude_scale();
    Complex64::new(
        amp(bits_to_word(&bits[..half])) * scale,
        amp(bits_to_word(&bits[half..])) * scale,
    )
}

/// Hard-decision inverse of [`qam_symbol`]; writes `bits_per_symbol` bits.
pub fn qam_decide(symbol: Complex64, cfg: &FrameConfig, out: &mut [u8]) {
    let half = cfg.bits_per_symbol() / 2;
    let levels = cfg.levels_per_axis();
    let scale = cfg.amplitude_scale();
    let decide = |value: f64| -> usize {
        let raw = ((levels as f64 - 1.0) - value / scale) / 2.0;
        let index = raw.round().clamp(0.0, levels as f64 - 1.0) as usize;
        index ^ (index >> 1)
    };
    write_word(decide(symbol.re), &mut out[..half]);
    write_word(decide(symbol.im), &mut out[half..]);
}

pub fn qam_modulate(bits: &[u8], cfg: &FrameConfig) -> Result<SymbolGrid> {
    cfg.validate()?;
    if bits.len() != cfg.bits_per_sample() {
        return Err(CpaError::InputSize {
            expected: cfg.bits_per_sample(),
            got: bits.len(),
        });
    }
    let entries = bits
        .chunks_exact(cfg.bits_per_symbol())
        .map(|chunk| qam_symbol(chunk, cfg))
        .collect();
    SymbolGrid::from_entries(cfg.n_subcarriers, cfg.n_symbols, entries)
}

pub fn qam_demodulate(grid: &SymbolGrid, cfg: &FrameConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    grid.check_shape(cfg)?;
    let bps = cfg.bits_per_symbol();
    let mut bits = vec![0u8; cfg.bits_per_sample()];
    for (symbol, out) in grid.entries.iter().zip(bits.chunks_exact_mut(bps)) {
        qam_decide(*symbol, cfg, out);
    }
    Ok(bits)
}

/// Unitary inverse DFT of every OFDM symbol, each block prefixed by its
/// last `cp_len` samples.
pub fn ofdm_modulate(grid: &SymbolGrid, cfg: &FrameConfig) -> Result<ComplexSeries> {
    grid.check_shape(cfg)?;
    let n = cfg.n_subcarriers;
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let norm = (n as f64).sqrt().recip();
    let mut out = Vec::with_capacity(cfg.series_len());
    let mut block = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..cfg.n_symbols {
        block.copy_from_slice(grid.symbol(m));
        ifft.process(&mut block);
        block.iter_mut().for_each(|z| *z *= norm);
        out.extend_from_slice(&block[n - cfg.cp_len..]);
        out.extend_from_slice(&block);
    }
    Ok(ComplexSeries(out))
}

/// Prefixes each `n_subcarriers`-long block with its tail.
pub fn add_cp(series: &ComplexSeries, cfg: &FrameConfig) -> Result<ComplexSeries> {
    let n = cfg.n_subcarriers;
    if series.len() % n != 0 {
        return Err(CpaError::InputSize {
            expected: (series.len() / n + 1) * n,
            got: series.len(),
        });
    }
    let mut out = Vec::with_capacity(series.len() / n * cfg.block_len());
    for block in series.0.chunks_exact(n) {
        out.extend_from_slice(&block[n - cfg.cp_len..]);
        out.extend_from_slice(block);
    }
    Ok(ComplexSeries(out))
}

pub fn remove_cp(series: &ComplexSeries, cfg: &FrameConfig) -> Result<ComplexSeries> {
    let block = cfg.block_len();
    if series.len() % block != 0 {
        return Err(CpaError::InputSize {
            expected: (series.len() / block + 1) * block,
            got: series.len(),
        });
    }
    let out = series
        .0
        .chunks_exact(block)
        .flat_map(|b| b[cfg.cp_len..].iter().copied())
        .collect();
    Ok(ComplexSeries(out))
}

/// Forward unitary DFT per CP-free block followed by single-tap
/// equalization `Y(k) / h_est`.
pub fn ofdm_demodulate(
    series: &ComplexSeries,
    h_est: Complex64,
    cfg: &FrameConfig,
) -> Result<SymbolGrid> {
    if h_est.norm_sqr() == 0.0 {
        return Err(CpaError::DegenerateEqualizer);
    }
    let n = cfg.n_subcarriers;
    if series.len() != n * cfg.n_symbols {
        return Err(CpaError::InputSize {
            expected: n * cfg.n_symbols,
            got: series.len(),
        });
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    let gain = (n as f64).sqrt().recip() / h_est;
    let mut entries = series.0.clone();
    for block in entries.chunks_exact_mut(n) {
        fft.process(block);
        block.iter_mut().for_each(|z| *z *= gain);
    }
    SymbolGrid::from_entries(n, cfg.n_symbols, entries)
}

/// Fraction of positions at which the two bit sequences differ.
pub fn compute_ber(tx_bits: &[u8], rx_bits: &[u8]) -> Result<f64> {
    if tx_bits.len() != rx_bits.len() {
        return Err(CpaError::InputSize {
            expected: tx_bits.len(),
            got: rx_bits.len(),
        });
    }
    if tx_bits.is_empty() {
        return Ok(0.0);
    }
    let errors = tx_bits
        .iter()
        .zip(rx_bits)
        .filter(|(a, b)| (**a != 0) != (**b != 0))
        .count();
    Ok(errors as f64 / tx_bits.len() as f64)
}
