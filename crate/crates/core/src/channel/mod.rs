//! Doubly-selective channel: Jakes-faded TDL taps, time-domain OFDM link and
//! the genie frequency-domain channel matrices used as ground truth.

mod tdl;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{GridKind, ResourceGrid, SlotConfig};
use crate::seed;

pub use tdl::{TdlProfile, DEFAULT_RMS_DELAY_SPREAD};

pub const SPEED_OF_LIGHT: f64 = 2.998e8;
pub const SINUSOIDS_PER_TAP: usize = 64;

pub fn max_doppler(velocity: f64, carrier: f64) -> f64 {
    velocity * carrier / SPEED_OF_LIGHT
}

pub fn kmh_to_ms(speed_kmh: f64) -> f64 {
    speed_kmh / 3.6
}

/// Per-element triplet of the main tap and the two adjacent ICI taps.
///
/// `hm1[(k, n)]` couples `X[k-1, n]` into `Y[k, n]` and `hp1[(k, n)]` couples
/// `X[k+1, n]`; both vanish where the neighbour falls outside the active band.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTapGrid {
    pub h0: DMatrix<Complex64>,
    pub hm1: DMatrix<Complex64>,
    pub hp1: DMatrix<Complex64>,
}

impl ChannelTapGrid {
    pub fn zeros(k: usize, n: usize) -> Self {
        Self {
            h0: DMatrix::zeros(k, n),
            hm1: DMatrix::zeros(k, n),
            hp1: DMatrix::zeros(k, n),
        }
    }

    /// Main-tap-only grid, as produced by the ICI-blind baselines.
    pub fn from_main(h0: DMatrix<Complex64>) -> Self {
        let (k, n) = h0.shape();
        Self {
            h0,
            hm1: DMatrix::zeros(k, n),
            hp1: DMatrix::zeros(k, n),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.h0.shape()
    }

    /// Noise-free reception under the tri-diagonal model for the given symbols.
    pub fn reconstruct(&self, symbols: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let (k_len, n_len) = self.shape();
        DMatrix::from_fn(k_len, n_len, |k, n| {
            let mut y = self.h0[(k, n)] * symbols[(k, n)];
            if k > 0 {
                y += self.hm1[(k, n)] * symbols[(k - 1, n)];
            }
            if k + 1 < k_len {
                y += self.hp1[(k, n)] * symbols[(k + 1, n)];
            }
            y
        })
    }
}

/// Time-domain tap trajectories over one slot, cyclic prefixes included.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// L x S complex gains, one row per tap.
    pub tap_gains: DMatrix<Complex64>,
    /// Tap delays rounded to whole samples.
    pub delays: Vec<usize>,
    pub max_doppler: f64,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn taps(&self) -> usize {
        self.tap_gains.nrows()
    }

    pub fn samples(&self) -> usize {
        self.tap_gains.ncols()
    }

    /// Time-invariant single-tap channel with gain `h`.
    pub fn static_flat(cfg: &SlotConfig, h: Complex64) -> Self {
        Self {
            tap_gains: DMatrix::from_element(1, cfg.slot_samples(), h),
            delays: vec![0],
            max_doppler: 0.0,
            seed: 0,
        }
    }

    /// Cheap fingerprint for checking that two consumers saw the same channel.
    pub fn checksum(&self) -> u64 {
        let words: Vec<u64> = self
            .tap_gains
            .iter()
            .flat_map(|h| [h.re.to_bits(), h.im.to_bits()])
            .chain(self.delays.iter().map(|&d| d as u64))
            .collect();
        seed::mix(&words)
    }
}

/// Sum-of-sinusoids Rayleigh fading with a Jakes Doppler spectrum.
///
/// Each tap is `sqrt(p/M) * sum_m a_m exp(j(2 pi f_d cos(alpha_m) t + phi_m))`
/// with complex Gaussian weights `a_m`, uniform arrival angles and phases.
pub fn generate_realization(
    profile: &TdlProfile,
    max_doppler: f64,
    cfg: &SlotConfig,
    seed: u64,
) -> Result<ChannelRealization> {
    profile.validate()?;
    cfg.validate()?;
    if !(max_doppler >= 0.0) {
        return Err(Error::Channel(format!("Doppler {max_doppler} Hz must be non-negative")));
    }
    if max_doppler >= cfg.subcarrier_spacing / 2.0 {
        return Err(Error::Channel(format!(
            "Doppler {max_doppler} Hz violates the half-spacing validity bound {} Hz",
            cfg.subcarrier_spacing / 2.0
        )));
    }
    let fs = cfg.sample_rate();
    let delays = profile.quantized_delays(fs);
    let samples = cfg.slot_samples();
    let block = cfg.symbol_samples();
    let mut rng = seed::rng(seed);
    let mut gains = DMatrix::zeros(profile.len(), samples);

    for (l, &power) in profile.tap_powers.iter().enumerate() {
        let scale = (power / SINUSOIDS_PER_TAP as f64).sqrt();
        let mut weights = [Complex64::new(0.0, 0.0); SINUSOIDS_PER_TAP];
        let mut omegas = [0.0; SINUSOIDS_PER_TAP];
        for m in 0..SINUSOIDS_PER_TAP {
            let amp = seed::complex_normal(&mut rng, 1.0);
            let alpha: f64 = rng.gen_range(-PI..PI);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            weights[m] = amp * Complex64::from_polar(scale, phase);
            omegas[m] = 2.0 * PI * max_doppler * alpha.cos() / fs;
        }
        // phasor recursion, re-anchored at each symbol boundary to bound drift
        for start in (0..samples).step_by(block) {
            let end = (start + block).min(samples);
            let mut phasors: Vec<Complex64> = (0..SINUSOIDS_PER_TAP)
                .map(|m| weights[m] * Complex64::from_polar(1.0, omegas[m] * start as f64))
                .collect();
            let steps: Vec<Complex64> = omegas.iter().map(|&w| Complex64::from_polar(1.0, w)).collect();
            for s in start..end {
                let mut acc = Complex64::new(0.0, 0.0);
                for (p, step) in phasors.iter_mut().zip(&steps) {
                    acc += *p;
                    *p *= step;
                }
                gains[(l, s)] = acc;
            }
        }
    }

    Ok(ChannelRealization {
        tap_gains: gains,
        delays,
        max_doppler,
        seed,
    })
}

/// Noise variance per active subcarrier for a given SNR; zero for infinite SNR.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// OFDM modulation, time-varying convolution, AWGN and demodulation.
///
/// The SNR is defined per active subcarrier after the receive FFT for a
/// unit-power channel; pass `f64::INFINITY` for a noise-free link.
pub fn apply_channel(
    tx: &ResourceGrid,
    real: &ChannelRealization,
    snr_db: f64,
    cfg: &SlotConfig,
    noise_seed: u64,
) -> Result<ResourceGrid> {
    cfg.validate()?;
    if tx.kind != GridKind::Transmitted {
        return Err(Error::Config("apply_channel expects a transmitted grid".into()));
    }
    tx.check_shape(cfg.active_subcarriers, cfg.symbols_per_slot)?;
    if real.samples() != cfg.slot_samples() {
        return Err(Error::dims(format!("{} channel samples", cfg.slot_samples()), real.samples()));
    }
    if let Some(&d) = real.delays.iter().find(|&&d| d > cfg.cp_length) {
        return Err(Error::Channel(format!(
            "tap delay of {d} samples exceeds the {}-sample cyclic prefix",
            cfg.cp_length
        )));
    }

    let nfft = cfg.fft_size;
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(nfft);
    let fft = planner.plan_fft_forward(nfft);

    let samples = cfg.slot_samples();
    let mut tx_time = vec![Complex64::new(0.0, 0.0); samples];
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for n in 0..cfg.symbols_per_slot {
        buf.fill(Complex64::new(0.0, 0.0));
        for k in 0..cfg.active_subcarriers {
            buf[cfg.fft_index(k)] = tx.symbols[(k, n)];
        }
        ifft.process(&mut buf);
        let start = n * cfg.symbol_samples();
        let scale = 1.0 / nfft as f64;
        for i in 0..cfg.cp_length {
            tx_time[start + i] = buf[nfft - cfg.cp_length + i] * scale;
        }
        for i in 0..nfft {
            tx_time[start + cfg.cp_length + i] = buf[i] * scale;
        }
    }

    let mut rx_time = vec![Complex64::new(0.0, 0.0); samples];
    for (l, &d) in real.delays.iter().enumerate() {
        for s in d..samples {
            rx_time[s] += real.tap_gains[(l, s)] * tx_time[s - d];
        }
    }

    let sigma2 = noise_variance(snr_db);
    if sigma2 > 0.0 {
        let mut rng = seed::rng(noise_seed);
        let per_sample = sigma2 / nfft as f64;
        for r in rx_time.iter_mut() {
            *r += seed::complex_normal(&mut rng, per_sample);
        }
    }

    let mut symbols = DMatrix::zeros(cfg.active_subcarriers, cfg.symbols_per_slot);
    for n in 0..cfg.symbols_per_slot {
        let start = n * cfg.symbol_samples() + cfg.cp_length;
        buf.copy_from_slice(&rx_time[start..start + nfft]);
        fft.process(&mut buf);
        for k in 0..cfg.active_subcarriers {
            symbols[(k, n)] = buf[cfg.fft_index(k)];
        }
    }

    Ok(ResourceGrid {
        symbols,
        pilot_mask: tx.pilot_mask.clone(),
        kind: GridKind::Received,
    })
}

/// Spectrum of each tap trajectory over the FFT window of symbol `n`, scaled by `1/N`.
fn window_spectra(real: &ChannelRealization, cfg: &SlotConfig, n: usize, fft: &dyn Fft<f64>) -> Vec<Vec<Complex64>> {
    let nfft = cfg.fft_size;
    let start = n * cfg.symbol_samples() + cfg.cp_length;
    (0..real.taps())
        .map(|l| {
            let mut buf: Vec<Complex64> = (0..nfft).map(|s| real.tap_gains[(l, start + s)]).collect();
            fft.process(&mut buf);
            let scale = 1.0 / nfft as f64;
            buf.iter_mut().for_each(|c| *c *= scale);
            buf
        })
        .collect()
}

/// Delay phase ramp `exp(-j 2 pi b d / N)` for every active bin `b` and tap delay `d`.
fn delay_phases(real: &ChannelRealization, cfg: &SlotConfig) -> Vec<Vec<Complex64>> {
    let nfft = cfg.fft_size as f64;
    real.delays
        .iter()
        .map(|&d| {
            (0..cfg.active_subcarriers)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * cfg.fft_bin(k) as f64 * d as f64 / nfft))
                .collect()
        })
        .collect()
}

struct MatrixBuilder<'a> {
    real: &'a ChannelRealization,
    cfg: &'a SlotConfig,
    fft: std::sync::Arc<dyn Fft<f64>>,
    phases: Vec<Vec<Complex64>>,
}

impl<'a> MatrixBuilder<'a> {
    fn new(real: &'a ChannelRealization, cfg: &'a SlotConfig) -> Result<Self> {
        cfg.validate()?;
        if real.samples() != cfg.slot_samples() {
            return Err(Error::dims(format!("{} channel samples", cfg.slot_samples()), real.samples()));
        }
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            real,
            cfg,
            fft,
            phases: delay_phases(real, cfg),
        })
    }

    /// Entry `(k, k')` of the channel matrix of symbol `n` given its window spectra.
    fn entry(&self, spectra: &[Vec<Complex64>], k: usize, kp: usize) -> Complex64 {
        let nfft = self.cfg.fft_size as i64;
        let m = (self.cfg.fft_bin(k) - self.cfg.fft_bin(kp)).rem_euclid(nfft) as usize;
        spectra
            .iter()
            .zip(&self.phases)
            .map(|(c, ph)| c[m] * ph[kp])
            .sum()
    }

    fn spectra(&self, n: usize) -> Vec<Vec<Complex64>> {
        window_spectra(self.real, self.cfg, n, self.fft.as_ref())
    }
}

/// Exact K x K frequency-domain channel matrix of OFDM symbol `n`:
/// `Y_n = H_n X_n + Z_n` over the active band.
pub fn build_full_matrix(real: &ChannelRealization, cfg: &SlotConfig, n: usize) -> Result<DMatrix<Complex64>> {
    if n >= cfg.symbols_per_slot {
        return Err(Error::dims(format!("symbol index < {}", cfg.symbols_per_slot), n));
    }
    let builder = MatrixBuilder::new(real, cfg)?;
    let spectra = builder.spectra(n);
    let k_len = cfg.active_subcarriers;
    Ok(DMatrix::from_fn(k_len, k_len, |k, kp| builder.entry(&spectra, k, kp)))
}

pub fn build_all_matrices(real: &ChannelRealization, cfg: &SlotConfig) -> Result<Vec<DMatrix<Complex64>>> {
    (0..cfg.symbols_per_slot)
        .map(|n| build_full_matrix(real, cfg, n))
        .collect()
}

/// Main and adjacent diagonals of the per-symbol channel matrices.
pub fn extract_taps(matrices: &[DMatrix<Complex64>]) -> Result<ChannelTapGrid> {
    let n_len = matrices.len();
    let k_len = matrices.first().map_or(0, |m| m.nrows());
    if n_len == 0 || matrices.iter().any(|m| m.shape() != (k_len, k_len)) {
        return Err(Error::dims("N square matrices of equal size", "ragged or empty input"));
    }
    let mut taps = ChannelTapGrid::zeros(k_len, n_len);
    for (n, h) in matrices.iter().enumerate() {
        for k in 0..k_len {
            taps.h0[(k, n)] = h[(k, k)];
            if k > 0 {
                taps.hm1[(k, n)] = h[(k, k - 1)];
            }
            if k + 1 < k_len {
                taps.hp1[(k, n)] = h[(k, k + 1)];
            }
        }
    }
    Ok(taps)
}

/// Ground-truth tap triplets, computing only the three diagonals needed.
/// Equal to `extract_taps(build_all_matrices(..))`.
pub fn genie_taps(real: &ChannelRealization, cfg: &SlotConfig) -> Result<ChannelTapGrid> {
    let builder = MatrixBuilder::new(real, cfg)?;
    let (k_len, n_len) = (cfg.active_subcarriers, cfg.symbols_per_slot);
    let mut taps = ChannelTapGrid::zeros(k_len, n_len);
    for n in 0..n_len {
        let spectra = builder.spectra(n);
        for k in 0..k_len {
            taps.h0[(k, n)] = builder.entry(&spectra, k, k);
            if k > 0 {
                taps.hm1[(k, n)] = builder.entry(&spectra, k, k - 1);
            }
            if k + 1 < k_len {
                taps.hp1[(k, n)] = builder.entry(&spectra, k, k + 1);
            }
        }
    }
    Ok(taps)
}

/// Fraction of matrix energy on the main diagonal and its two neighbours,
/// pooled over all supplied matrices.
pub fn tridiagonal_energy_ratio(matrices: &[DMatrix<Complex64>]) -> f64 {
    let mut band = 0.0;
    let mut total = 0.0;
    for h in matrices {
        for ((i, j), v) in h.iter().enumerate().map(|(idx, v)| ((idx % h.nrows(), idx / h.nrows()), v)) {
            let e = v.norm_sqr();
            total += e;
            if i.abs_diff(j) <= 1 {
                band += e;
            }
        }
    }
    if total == 0.0 {
        1.0
    } else {
        band / total
    }
}
