use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::baseline::stabilize;
use crate::channel::{build_all_matrices, generate_realization, tridiagonal_energy_ratio, ChannelTapGrid, TdlProfile};
use crate::error::{Error, Result};
use crate::grid::{qpsk_demodulate, SlotConfig};

/// Reported in place of minus infinity for an exact estimate.
pub const NMSE_FLOOR_DB: f64 = -100.0;

/// `sum |est - truth|^2 / sum |truth|^2` over the main taps.
pub fn nmse_linear(est: &ChannelTapGrid, truth: &ChannelTapGrid) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(Error::dims(format!("{:?}", truth.shape()), format!("{:?}", est.shape())));
    }
    let energy = truth.h0.norm_squared();
    if energy == 0.0 {
        return Err(Error::Numerical("reference channel has zero energy".into()));
    }
    Ok((&est.h0 - &truth.h0).norm_squared() / energy)
}

pub fn to_db(linear: f64) -> f64 {
    if linear > 0.0 {
        (10.0 * linear.log10()).max(NMSE_FLOOR_DB)
    } else {
        NMSE_FLOOR_DB
    }
}

pub fn nmse(est: &ChannelTapGrid, truth: &ChannelTapGrid) -> Result<f64> {
    nmse_linear(est, truth).map(to_db)
}

/// Bits of the data elements in column-major order, pilots skipped.
pub fn data_bits(bits: &[[u8; 2]], pilot_mask: &DMatrix<bool>) -> Result<Vec<[u8; 2]>> {
    if bits.len() != pilot_mask.len() {
        return Err(Error::dims(pilot_mask.len(), bits.len()));
    }
    Ok(bits.iter().zip(pilot_mask.iter()).filter(|(_, &p)| !p).map(|(b, _)| *b).collect())
}

/// Hard-decided bits of the data elements of an equalized grid.
pub fn detect_data_bits(equalized: &DMatrix<Complex64>, pilot_mask: &DMatrix<bool>) -> Result<Vec<[u8; 2]>> {
    if equalized.shape() != pilot_mask.shape() {
        return Err(Error::dims(format!("{:?}", pilot_mask.shape()), format!("{:?}", equalized.shape())));
    }
    Ok(equalized
        .iter()
        .zip(pilot_mask.iter())
        .filter(|(_, &p)| !p)
        .map(|(&x, _)| qpsk_demodulate(x))
        .collect())
}

pub fn bit_errors(decided: &[[u8; 2]], truth: &[[u8; 2]]) -> Result<u64> {
    if decided.len() != truth.len() {
        return Err(Error::dims(truth.len(), decided.len()));
    }
    Ok(decided
        .iter()
        .zip(truth)
        .map(|(a, b)| (a[0] != b[0]) as u64 + (a[1] != b[1]) as u64)
        .sum())
}

pub fn ber(decided: &[[u8; 2]], truth: &[[u8; 2]]) -> Result<f64> {
    let errors = bit_errors(decided, truth)?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    Ok(errors as f64 / (2 * truth.len()) as f64)
}

/// Genie receiver: removes the adjacent-subcarrier leakage computed from the
/// true taps and transmitted symbols, then zero-forces with the true main tap.
pub fn perfect_csi_equalize(
    rx: &DMatrix<Complex64>,
    truth: &ChannelTapGrid,
    tx: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if rx.shape() != truth.shape() || tx.shape() != truth.shape() {
        return Err(Error::dims(format!("{:?}", truth.shape()), format!("{:?}", rx.shape())));
    }
    let (k_len, n_len) = rx.shape();
    Ok(DMatrix::from_fn(k_len, n_len, |k, n| {
        let mut y = rx[(k, n)];
        if k > 0 {
            y -= truth.hm1[(k, n)] * tx[(k - 1, n)];
        }
        if k + 1 < k_len {
            y -= truth.hp1[(k, n)] * tx[(k + 1, n)];
        }
        y / stabilize(truth.h0[(k, n)])
    }))
}

/// Average over realizations of the share of channel-matrix energy on the
/// main and first off diagonals.
pub fn mean_tridiagonal_ratio(
    profile: &TdlProfile,
    max_doppler: f64,
    cfg: &SlotConfig,
    realizations: usize,
    seed: u64,
) -> Result<f64> {
    if realizations == 0 {
        return Err(Error::Config("need at least one realization".into()));
    }
    let mut total = 0.0;
    for r in 0..realizations {
        let real = generate_realization(profile, max_doppler, cfg, crate::seed::mix(&[seed, r as u64]))?;
        total += tridiagonal_energy_ratio(&build_all_matrices(&real, cfg)?);
    }
    Ok(total / realizations as f64)
}
