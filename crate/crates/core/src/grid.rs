//! OFDM slot layout: numerology, QPSK mapping, comb pilots and the
//! normalized time-frequency coordinates fed to the coordinate network.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
}

/// Numerology of one slot. Defaults follow a 30 kHz NR carrier at 5.9 GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotConfig {
    pub fft_size: usize,
    pub active_subcarriers: usize,
    pub symbols_per_slot: usize,
    pub subcarrier_spacing: f64,
    pub carrier_frequency: f64,
    pub cp_length: usize,
    pub pilot_interval: usize,
    pub modulation: Modulation,
}

impl Default for SlotConfig {
    fn default() -> Self {
        Self {
            fft_size: 512,
            active_subcarriers: 288,
            symbols_per_slot: 14,
            subcarrier_spacing: 30e3,
            carrier_frequency: 5.9e9,
            cp_length: 36,
            pilot_interval: 8,
            modulation: Modulation::Qpsk,
        }
    }
}

impl SlotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.active_subcarriers == 0 || self.symbols_per_slot == 0 {
            return Err(Error::Config("empty resource grid".into()));
        }
        if self.active_subcarriers > self.fft_size {
            return Err(Error::Config(format!(
                "{} active subcarriers exceed FFT size {}",
                self.active_subcarriers, self.fft_size
            )));
        }
        if self.pilot_interval == 0 || self.pilot_interval > self.active_subcarriers {
            return Err(Error::Config(format!(
                "pilot interval {} must lie in 1..={}",
                self.pilot_interval, self.active_subcarriers
            )));
        }
        if !(self.subcarrier_spacing > 0.0) || !(self.carrier_frequency > 0.0) {
            return Err(Error::Config("spacing and carrier must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.fft_size as f64 * self.subcarrier_spacing
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn symbol_samples(&self) -> usize {
        self.fft_size + self.cp_length
    }

    pub fn slot_samples(&self) -> usize {
        self.symbols_per_slot * self.symbol_samples()
    }

    /// Duration of one OFDM symbol including its cyclic prefix, in seconds.
    pub fn symbol_duration(&self) -> f64 {
        self.symbol_samples() as f64 / self.sample_rate()
    }

    pub fn pilots_per_symbol(&self) -> usize {
        self.active_subcarriers.div_ceil(self.pilot_interval)
    }

    pub fn pilot_count(&self) -> usize {
        self.pilots_per_symbol() * self.symbols_per_slot
    }

    pub fn data_count(&self) -> usize {
        self.active_subcarriers * self.symbols_per_slot - self.pilot_count()
    }

    /// Signed FFT bin of active subcarrier `k`; the active block is centred on DC.
    pub fn fft_bin(&self, k: usize) -> i64 {
        k as i64 - (self.active_subcarriers / 2) as i64
    }

    /// Index into an FFT buffer of length `fft_size` for active subcarrier `k`.
    pub fn fft_index(&self, k: usize) -> usize {
        self.fft_bin(k).rem_euclid(self.fft_size as i64) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Transmitted,
    Received,
}

/// A K x N slot of symbols, subcarriers along rows and OFDM symbols along columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub symbols: DMatrix<Complex64>,
    pub pilot_mask: DMatrix<bool>,
    pub kind: GridKind,
}

impl ResourceGrid {
    pub fn subcarriers(&self) -> usize {
        self.symbols.nrows()
    }

    pub fn ofdm_symbols(&self) -> usize {
        self.symbols.ncols()
    }

    pub fn is_pilot(&self, k: usize, n: usize) -> bool {
        self.pilot_mask[(k, n)]
    }

    /// Positions `(k, n)` of every pilot, symbol-major then subcarrier.
    pub fn pilot_positions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for n in 0..self.ofdm_symbols() {
            for k in 0..self.subcarriers() {
                if self.pilot_mask[(k, n)] {
                    out.push((k, n));
                }
            }
        }
        out
    }

    pub(crate) fn check_shape(&self, k: usize, n: usize) -> Result<()> {
        if self.symbols.shape() != (k, n) || self.pilot_mask.shape() != (k, n) {
            return Err(Error::dims(
                format!("{k}x{n} grid"),
                format!("{}x{}", self.symbols.nrows(), self.symbols.ncols()),
            ));
        }
        Ok(())
    }
}

/// Gray-mapped unit-energy QPSK: bit 0 drives the in-phase sign, bit 1 the quadrature sign.
pub fn qpsk_modulate(bits: [u8; 2]) -> Complex64 {
    let level = |b: u8| if b == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(level(bits[0]), level(bits[1]))
}

pub fn qpsk_demodulate(symbol: Complex64) -> [u8; 2] {
    let (point, _) = qpsk_hard_decision(symbol);
    [(point.re < 0.0) as u8, (point.im < 0.0) as u8]
}

/// Nearest QPSK point and its Euclidean distance. Zero components resolve to
/// the positive half-plane.
pub fn qpsk_hard_decision(symbol: Complex64) -> (Complex64, f64) {
    let re = if symbol.re >= 0.0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if symbol.im >= 0.0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let point = Complex64::new(re, im);
    (point, (symbol - point).norm())
}

/// Comb pilots on subcarriers `k % pilot_interval == 0` of every OFDM symbol.
pub fn build_pilot_mask(cfg: &SlotConfig) -> Result<DMatrix<bool>> {
    cfg.validate()?;
    Ok(DMatrix::from_fn(
        cfg.active_subcarriers,
        cfg.symbols_per_slot,
        |k, _| k % cfg.pilot_interval == 0,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinate {
    pub f: f64,
    pub t: f64,
}

fn normalize_index(i: usize, len: usize) -> f64 {
    2.0 * i as f64 / (len - 1) as f64 - 1.0
}

/// Maps every resource element onto `[-1, 1]^2`; entry `(k, n)` holds `(f_k, t_n)`.
pub fn normalize_coordinates(cfg: &SlotConfig) -> Result<DMatrix<Coordinate>> {
    let (k_len, n_len) = (cfg.active_subcarriers, cfg.symbols_per_slot);
    if k_len < 2 || n_len < 2 {
        return Err(Error::Config(format!(
            "coordinate grid needs at least 2x2 elements, got {k_len}x{n_len}"
        )));
    }
    Ok(DMatrix::from_fn(k_len, n_len, |k, n| Coordinate {
        f: normalize_index(k, k_len),
        t: normalize_index(n, n_len),
    }))
}

/// Random QPSK slot: bits for every element (pilots included) and the modulated grid.
pub fn random_slot<R: rand::Rng>(cfg: &SlotConfig, rng: &mut R) -> Result<(ResourceGrid, Vec<[u8; 2]>)> {
    let pilot_mask = build_pilot_mask(cfg)?;
    let (k_len, n_len) = (cfg.active_subcarriers, cfg.symbols_per_slot);
    let mut bits = Vec::with_capacity(k_len * n_len);
    let mut symbols = DMatrix::zeros(k_len, n_len);
    // column-major, matching DMatrix storage
    for n in 0..n_len {
        for k in 0..k_len {
            let b = [rng.gen_range(0..2u8), rng.gen_range(0..2u8)];
            symbols[(k, n)] = qpsk_modulate(b);
            bits.push(b);
        }
    }
    Ok((
        ResourceGrid {
            symbols,
            pilot_mask,
            kind: GridKind::Transmitted,
        },
        bits,
    ))
}
