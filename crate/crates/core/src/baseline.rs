//! Classical pilot-aided estimators: least squares with bilinear
//! interpolation, LMMSE with genie second-order statistics, and the
//! DFT-basis robust LMMSE designed for worst-case delay and Doppler spreads.
//! All of them estimate the main tap only.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{kmh_to_ms, max_doppler, ChannelTapGrid, TdlProfile};
use crate::error::{Error, Result};
use crate::grid::{ResourceGrid, SlotConfig};
use crate::special::bessel_j0;

/// Stabilizer for every division by a channel coefficient or pilot symbol.
pub const EPSILON: f64 = 1e-8;

/// Worst-case design point of the robust estimator.
pub const ROBUST_MAX_DELAY: f64 = 3e-6;
pub const ROBUST_MAX_SPEED_KMH: f64 = 500.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Replaces denominators smaller than `EPSILON` in magnitude by one of
/// magnitude `EPSILON` with the same phase.
pub fn stabilize(d: Complex64) -> Complex64 {
    stabilize_with(d, EPSILON)
}

pub fn stabilize_with(d: Complex64, epsilon: f64) -> Complex64 {
    let mag = d.norm();
    if mag >= epsilon {
        d
    } else if mag == 0.0 {
        Complex64::new(epsilon, 0.0)
    } else {
        d * (epsilon / mag)
    }
}

/// Known pilot symbols of a slot; zero away from pilot positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    pub mask: DMatrix<bool>,
    pub symbols: DMatrix<Complex64>,
}

impl PilotSet {
    pub fn from_grid(tx: &ResourceGrid) -> Self {
        let symbols = DMatrix::from_fn(tx.subcarriers(), tx.ofdm_symbols(), |k, n| {
            if tx.pilot_mask[(k, n)] {
                tx.symbols[(k, n)]
            } else {
                ZERO
            }
        });
        Self {
            mask: tx.pilot_mask.clone(),
            symbols,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    pub fn positions(&self) -> Vec<(usize, usize)> {
        let (k_len, n_len) = self.shape();
        (0..n_len)
            .flat_map(|n| (0..k_len).map(move |k| (k, n)))
            .filter(|&(k, n)| self.mask[(k, n)])
            .collect()
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, rx: &ResourceGrid) -> Result<()> {
        if rx.symbols.shape() != self.shape() {
            return Err(Error::dims(format!("{:?} received grid", self.shape()), format!("{:?}", rx.symbols.shape())));
        }
        if self.is_empty() {
            return Err(Error::Config("no pilots".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationSource {
    GenieAnalytic,
    WorstCase,
}

/// Separable channel correlation `E[H(k,n) H*(k-dk, n-dn)] = r_f(dk) r_t(dn)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationModel {
    /// `r_f` at lags `0..K`; negative lags are conjugates.
    pub freq_corr: Vec<Complex64>,
    /// `r_t` at lags `0..N`; symmetric.
    pub time_corr: Vec<f64>,
    pub source: CorrelationSource,
}

impl CorrelationModel {
    /// Statistics of the simulated channel: the tap delays as applied (whole
    /// samples) and a Jakes time correlation at the true Doppler.
    pub fn genie(profile: &TdlProfile, max_doppler: f64, cfg: &SlotConfig) -> Result<Self> {
        profile.validate()?;
        let fs = cfg.sample_rate();
        let delays: Vec<f64> = profile.quantized_delays(fs).iter().map(|&d| d as f64 / fs).collect();
        let freq_corr = (0..cfg.active_subcarriers)
            .map(|dk| {
                delays
                    .iter()
                    .zip(&profile.tap_powers)
                    .map(|(&tau, &p)| Complex64::from_polar(p, -2.0 * PI * dk as f64 * cfg.subcarrier_spacing * tau))
                    .sum()
            })
            .collect();
        Ok(Self {
            freq_corr,
            time_corr: jakes_time_corr(max_doppler, cfg),
            source: CorrelationSource::GenieAnalytic,
        })
    }

    /// Uniform delay profile over `[0, tau_max]` and Jakes at the design speed.
    pub fn worst_case(cfg: &SlotConfig) -> Self {
        let tau = robust_delay_support(cfg) as f64 / (cfg.active_subcarriers as f64 * cfg.subcarrier_spacing);
        let freq_corr = (0..cfg.active_subcarriers)
            .map(|dk| uniform_delay_corr(dk as f64 * cfg.subcarrier_spacing * tau))
            .collect();
        let fd = max_doppler(kmh_to_ms(ROBUST_MAX_SPEED_KMH), cfg.carrier_frequency);
        Self {
            freq_corr,
            time_corr: jakes_time_corr(fd, cfg),
            source: CorrelationSource::WorstCase,
        }
    }

    pub fn freq(&self, dk: i64) -> Complex64 {
        let r = self.freq_corr[dk.unsigned_abs() as usize];
        if dk < 0 {
            r.conj()
        } else {
            r
        }
    }

    pub fn time(&self, dn: i64) -> f64 {
        self.time_corr[dn.unsigned_abs() as usize]
    }
}

fn jakes_time_corr(fd: f64, cfg: &SlotConfig) -> Vec<f64> {
    let t_sym = cfg.symbol_duration();
    (0..cfg.symbols_per_slot)
        .map(|dn| bessel_j0(2.0 * PI * fd * dn as f64 * t_sym))
        .collect()
}

/// `(1/tau) * integral_0^tau exp(-j 2 pi f t) dt` with `x = f * tau`.
fn uniform_delay_corr(x: f64) -> Complex64 {
    if x == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let sinc = (PI * x).sin() / (PI * x);
    Complex64::from_polar(sinc, -PI * x)
}

/// Number of K-point delay bins spanned by the worst-case delay spread.
pub fn robust_delay_support(cfg: &SlotConfig) -> usize {
    let bins = ROBUST_MAX_DELAY * cfg.sample_rate() * cfg.active_subcarriers as f64 / cfg.fft_size as f64;
    // guard against representation error in exact products
    (bins - 1e-9).ceil().max(1.0) as usize
}

/// Scalar Wiener gain `g / (g + sigma^2)`; a noise-free observation passes unchanged.
fn wiener_gain(g: f64, sigma2: f64) -> f64 {
    if sigma2 == 0.0 {
        1.0
    } else {
        g / (g + sigma2)
    }
}

fn linear(a: Complex64, b: Complex64, w: f64) -> Complex64 {
    a * (1.0 - w) + b * w
}

/// Fills a full grid from values at pilot positions: linear along frequency on
/// every pilot-bearing symbol, then linear along time, with constant
/// extrapolation beyond the outermost pilots.
pub fn interpolate_pilots(values: &DMatrix<Complex64>, mask: &DMatrix<bool>) -> DMatrix<Complex64> {
    let (k_len, n_len) = mask.shape();
    let mut out = DMatrix::zeros(k_len, n_len);
    let mut filled_symbols = Vec::new();
    for n in 0..n_len {
        let pilots: Vec<usize> = (0..k_len).filter(|&k| mask[(k, n)]).collect();
        if pilots.is_empty() {
            continue;
        }
        filled_symbols.push(n);
        fill_line(&pilots, |k| values[(k, n)], |k, v| out[(k, n)] = v, k_len);
    }
    if filled_symbols.is_empty() {
        return out;
    }
    for k in 0..k_len {
        let column: Vec<Complex64> = (0..n_len).map(|n| out[(k, n)]).collect();
        fill_line(&filled_symbols, |n| column[n], |n, v| out[(k, n)] = v, n_len);
    }
    out
}

fn fill_line(
    anchors: &[usize],
    get: impl Fn(usize) -> Complex64,
    mut set: impl FnMut(usize, Complex64),
    len: usize,
) {
    let first = anchors[0];
    let last = anchors[anchors.len() - 1];
    for i in 0..len {
        let v = if i <= first {
            get(first)
        } else if i >= last {
            get(last)
        } else {
            let right = anchors.partition_point(|&a| a < i);
            let (a, b) = (anchors[right - 1], anchors[right]);
            if a == i {
                get(a)
            } else if b == i {
                get(b)
            } else {
                linear(get(a), get(b), (i - a) as f64 / (b - a) as f64)
            }
        };
        set(i, v);
    }
}

/// Raw `Y / X` at pilot positions, zero elsewhere.
pub fn ls_at_pilots(rx: &ResourceGrid, pilots: &PilotSet) -> Result<DMatrix<Complex64>> {
    pilots.check(rx)?;
    let (k_len, n_len) = pilots.shape();
    Ok(DMatrix::from_fn(k_len, n_len, |k, n| {
        if pilots.mask[(k, n)] {
            rx.symbols[(k, n)] / stabilize(pilots.symbols[(k, n)])
        } else {
            ZERO
        }
    }))
}

/// Least squares at the pilots followed by bilinear interpolation.
pub fn ls_estimate(rx: &ResourceGrid, pilots: &PilotSet) -> Result<ChannelTapGrid> {
    let raw = ls_at_pilots(rx, pilots)?;
    Ok(ChannelTapGrid::from_main(interpolate_pilots(&raw, &pilots.mask)))
}

/// Two-dimensional Wiener interpolator from the pilot positions of a fixed
/// mask to the whole grid, precomputed for one correlation model and noise level.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    positions: Vec<(usize, usize)>,
    shape: (usize, usize),
    /// Cholesky factor of `R_pp + sigma^2 (X_p X_p^H)^-1`.
    chol: nalgebra::Cholesky<Complex64, nalgebra::Dyn>,
    corr: CorrelationModel,
}

impl LmmseFilter {
    pub fn new(corr: &CorrelationModel, noise_var: f64, pilots: &PilotSet) -> Result<Self> {
        let (k_len, n_len) = pilots.shape();
        if corr.freq_corr.len() < k_len || corr.time_corr.len() < n_len {
            return Err(Error::dims(
                format!("correlation lags {k_len}x{n_len}"),
                format!("{}x{}", corr.freq_corr.len(), corr.time_corr.len()),
            ));
        }
        let positions = pilots.positions();
        if positions.is_empty() {
            return Err(Error::Config("no pilots".into()));
        }
        let np = positions.len();
        let mut r = DMatrix::from_fn(np, np, |i, j| {
            let (ki, ni) = positions[i];
            let (kj, nj) = positions[j];
            corr.freq(ki as i64 - kj as i64) * corr.time(ni as i64 - nj as i64)
        });
        for (i, &(k, n)) in positions.iter().enumerate() {
            r[(i, i)] += noise_var.max(0.0) / pilots.symbols[(k, n)].norm_sqr().max(EPSILON);
        }
        let chol = factor_with_jitter(r)?;
        Ok(Self {
            positions,
            shape: (k_len, n_len),
            chol,
            corr: corr.clone(),
        })
    }

    /// Smooths and interpolates raw pilot LS values (laid out on the full grid).
    pub fn apply(&self, ls_pilots: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let rhs = DVector::from_iterator(self.positions.len(), self.positions.iter().map(|&(k, n)| ls_pilots[(k, n)]));
        let z = self.chol.solve(&rhs);
        let (k_len, n_len) = self.shape;
        // Cross-correlation is separable: out(k, n) = sum_p r_f(k - k_p) r_t(n - n_p) z_p.
        // Contract the pilot index per symbol first, then over symbols.
        let mut by_symbol = vec![DVector::<Complex64>::zeros(k_len); n_len];
        for (p, &(kp, np)) in self.positions.iter().enumerate() {
            let acc = &mut by_symbol[np];
            for k in 0..k_len {
                acc[k] += self.corr.freq(k as i64 - kp as i64) * z[p];
            }
        }
        DMatrix::from_fn(k_len, n_len, |k, n| {
            (0..n_len)
                .map(|np| by_symbol[np][k] * self.corr.time(n as i64 - np as i64))
                .sum()
        })
    }
}

/// Cholesky factorization, retrying with `1e-10` added to the diagonal when the
/// matrix is numerically singular.
fn factor_with_jitter(r: DMatrix<Complex64>) -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    if let Some(c) = r.clone().cholesky() {
        return Ok(c);
    }
    let n = r.nrows();
    let mut jitter = 1e-10;
    for _ in 0..6 {
        let mut m = r.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok(c);
        }
        jitter *= 100.0;
    }
    Err(Error::Numerical("correlation matrix is not positive definite".into()))
}

/// LMMSE with statistics supplied by `corr` (genie-analytic for the ideal baseline).
pub fn ideal_lmmse_estimate(
    rx: &ResourceGrid,
    pilots: &PilotSet,
    corr: &CorrelationModel,
    noise_var: f64,
) -> Result<ChannelTapGrid> {
    let filter = LmmseFilter::new(corr, noise_var, pilots)?;
    let raw = ls_at_pilots(rx, pilots)?;
    Ok(ChannelTapGrid::from_main(filter.apply(&raw)))
}

/// DFT-basis robust LMMSE `F Lambda F^H` along frequency followed by a
/// worst-case Jakes Wiener smoother along time, applied to the interpolated LS grid.
#[derive(Debug, Clone)]
pub struct RobustLmmse {
    /// `F Lambda F^H`, K x K.
    freq_filter: DMatrix<Complex64>,
    /// `R_t (R_t + sigma^2 I)^-1`, N x N.
    time_filter: DMatrix<f64>,
    /// Worst-case transform-domain powers `g_i`.
    pub bin_powers: Vec<f64>,
    pub shrinkage: Vec<f64>,
}

impl RobustLmmse {
    pub fn new(cfg: &SlotConfig, noise_var: f64) -> Result<Self> {
        cfg.validate()?;
        let corr = CorrelationModel::worst_case(cfg);
        let k_len = cfg.active_subcarriers;
        let n_len = cfg.symbols_per_slot;
        let sigma2 = noise_var.max(0.0);

        // g_i = [F^H R F]_ii = sum_d (1 - |d|/K) r(d) exp(j 2 pi d i / K)
        let bin_powers: Vec<f64> = (0..k_len)
            .map(|i| {
                let mut g = corr.freq(0).re;
                for d in 1..k_len {
                    let w = 1.0 - d as f64 / k_len as f64;
                    let phase = Complex64::from_polar(1.0, 2.0 * PI * (d * i) as f64 / k_len as f64);
                    g += 2.0 * w * (corr.freq(d as i64) * phase).re;
                }
                g.max(0.0)
            })
            .collect();
        let shrinkage: Vec<f64> = bin_powers.iter().map(|&g| wiener_gain(g, sigma2)).collect();

        let scale = 1.0 / k_len as f64;
        let freq_filter = DMatrix::from_fn(k_len, k_len, |k, kp| {
            let diff = k as i64 - kp as i64;
            shrinkage
                .iter()
                .enumerate()
                .map(|(i, &l)| Complex64::from_polar(l * scale, -2.0 * PI * (diff * i as i64) as f64 / k_len as f64))
                .sum()
        });

        // The time smoother sees the white-noise share left by the frequency
        // stage. R_t (R_t + s^2 I)^-1 is formed in the eigenbasis of R_t, which
        // is numerically rank deficient at the design Doppler.
        let residual = sigma2 * shrinkage.iter().map(|l| l * l).sum::<f64>() / k_len as f64;
        let rt = DMatrix::from_fn(n_len, n_len, |a, b| corr.time(a as i64 - b as i64));
        let eig = rt.symmetric_eigen();
        let gains = eig.eigenvalues.map(|mu| wiener_gain(mu.max(0.0), residual));
        let time_filter = &eig.eigenvectors * DMatrix::from_diagonal(&gains) * eig.eigenvectors.transpose();

        Ok(Self {
            freq_filter,
            time_filter,
            bin_powers,
            shrinkage,
        })
    }

    pub fn apply(&self, interpolated: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let freq = &self.freq_filter * interpolated;
        let time = self.time_filter.map(|w| Complex64::new(w, 0.0));
        freq * time.transpose()
    }
}

pub fn robust_lmmse_estimate(
    rx: &ResourceGrid,
    pilots: &PilotSet,
    noise_var: f64,
    cfg: &SlotConfig,
) -> Result<ChannelTapGrid> {
    let robust = RobustLmmse::new(cfg, noise_var)?;
    let ls = ls_estimate(rx, pilots)?;
    Ok(ChannelTapGrid::from_main(robust.apply(&ls.h0)))
}

/// Zero-forcing on the main tap: `Y / H0`.
pub fn zf_equalize(rx: &ResourceGrid, taps: &ChannelTapGrid) -> Result<DMatrix<Complex64>> {
    if rx.symbols.shape() != taps.shape() {
        return Err(Error::dims(format!("{:?}", taps.shape()), format!("{:?}", rx.symbols.shape())));
    }
    Ok(rx.symbols.zip_map(&taps.h0, |y, h| y / stabilize(h)))
}
