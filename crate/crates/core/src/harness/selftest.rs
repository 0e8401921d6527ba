//! Quick numerical self-checks exposed through the command line.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{apply_channel, build_all_matrices, generate_realization, kmh_to_ms, max_doppler, TdlProfile};
use crate::error::Result;
use crate::grid::{random_slot, SlotConfig};
use crate::net::{flatten, FourierMapping, Matrix, SirenNetwork};
use crate::seed;
use crate::sirius::{reconstruction_loss, ActiveSet};

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const FD_STEP: f64 = 1e-5;

/// Worst relative error of a gradient against central differences.
fn compare(analytic: &[f64], mut loss_at: impl FnMut(usize, f64) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let numeric = (loss_at(i, FD_STEP) - loss_at(i, -FD_STEP)) / (2.0 * FD_STEP);
        let scale = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

/// Small sine network under a squared-error loss.
pub fn network_gradient_error(seed: u64) -> Result<f64> {
    let mut net = SirenNetwork::new(&[2, 8, 6], 30.0, 30.0)?;
    net.siren_init(seed);
    let mut rng = seed::rng(seed::mix(&[seed, 1]));
    let x = Matrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
    let target = Matrix::from_fn(4, 6, |_, _| rng.gen_range(-1.0..1.0));
    let loss = |net: &SirenNetwork| -> Result<(f64, Matrix)> {
        let out = net.forward_batch(&x)?.output;
        let mut grad = Matrix::zeros(4, 6);
        let mut l = 0.0;
        for (i, (o, t)) in out.as_slice().iter().zip(target.as_slice()).enumerate() {
            l += 0.5 * (o - t) * (o - t);
            grad.as_mut_slice()[i] = o - t;
        }
        Ok((l, grad))
    };
    let fwd = net.forward_batch(&x)?;
    let analytic = flatten(&net.backward(&x, &fwd, &loss(&net)?.1)?);
    let mut probe = net.clone();
    Ok(compare(&analytic, |i, h| {
        let orig = *probe.parameter_mut(i);
        *probe.parameter_mut(i) = orig + h;
        let l = loss(&probe).map(|r| r.0).unwrap_or(f64::NAN);
        *probe.parameter_mut(i) = orig;
        l
    }))
}

/// Full training objective on a 4 x 3 grid, differentiated through the
/// network down to every weight.
pub fn loss_gradient_error(seed: u64) -> Result<f64> {
    let (k_len, n_len) = (4, 3);
    let mut rng = seed::rng(seed);
    let c = |r: &mut rand_chacha::ChaCha8Rng| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
    let symbols = DMatrix::from_fn(k_len, n_len, |_, _| c(&mut rng));
    let rx = DMatrix::from_fn(k_len, n_len, |_, _| c(&mut rng));
    let mask = DMatrix::from_fn(k_len, n_len, |k, _| k % 2 == 0);
    let weights = DMatrix::from_fn(k_len, n_len, |k, n| if mask[(k, n)] { 2.0 } else if n != 1 { 0.5 } else { 0.0 });
    let active = ActiveSet::from_weights(&symbols, &weights, &mask)?;

    let mapping = FourierMapping::new(8, 0.5, &mut rng);
    let coords: Vec<_> = (0..n_len)
        .flat_map(|n| {
            (0..k_len).map(move |k| crate::grid::Coordinate {
                f: 2.0 * k as f64 / (k_len - 1) as f64 - 1.0,
                t: 2.0 * n as f64 / (n_len - 1) as f64 - 1.0,
            })
        })
        .collect();
    let x = mapping.map_batch(&coords);
    let mut net = SirenNetwork::new(&[16, 8, 8, 6], 30.0, 30.0)?;
    net.siren_init(seed);
    let fwd = net.forward_batch(&x)?;
    let (_, upstream) = reconstruction_loss(&fwd.output, &active, &rx, 1.0)?;
    let analytic = flatten(&net.backward(&x, &fwd, &upstream)?);
    let mut probe = net.clone();
    Ok(compare(&analytic, |i, h| {
        let orig = *probe.parameter_mut(i);
        *probe.parameter_mut(i) = orig + h;
        let l = probe
            .forward_batch(&x)
            .and_then(|f| reconstruction_loss(&f.output, &active, &rx, 1.0))
            .map(|r| r.0)
            .unwrap_or(f64::NAN);
        *probe.parameter_mut(i) = orig;
        l
    }))
}

/// Relative Frobenius gap between time-domain reception and the
/// frequency-domain channel matrices, noise-free.
pub fn reception_error(speed_kmh: f64, seed: u64) -> Result<f64> {
    let cfg = SlotConfig::default();
    let profile = TdlProfile::tdl_c(crate::channel::DEFAULT_RMS_DELAY_SPREAD);
    let fd = max_doppler(kmh_to_ms(speed_kmh), cfg.carrier_frequency);
    let real = generate_realization(&profile, fd, &cfg, seed)?;
    let (tx, _) = random_slot(&cfg, &mut seed::rng(seed::mix(&[seed, 2])))?;
    let rx = apply_channel(&tx, &real, f64::INFINITY, &cfg, 0)?;
    let matrices = build_all_matrices(&real, &cfg)?;
    let mut diff = 0.0;
    let mut energy = 0.0;
    for (n, h) in matrices.iter().enumerate() {
        let y = h * tx.symbols.column(n);
        diff += (y - rx.symbols.column(n)).norm_squared();
        energy += rx.symbols.column(n).norm_squared();
    }
    Ok((diff / energy).sqrt())
}

pub fn run_all() -> Vec<SelfCheck> {
    let mut checks = Vec::new();
    let mut record = |name: &'static str, value: Result<f64>, ok: &dyn Fn(f64) -> bool, unit: &str| {
        let (passed, detail) = match value {
            Ok(v) => (ok(v), format!("{v:.3e}{unit}")),
            Err(e) => (false, e.to_string()),
        };
        checks.push(SelfCheck { name, passed, detail });
    };
    let worst = |f: fn(u64) -> Result<f64>| -> Result<f64> {
        (0..5).map(f).try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))
    };
    record("network gradient", worst(network_gradient_error), &|v| v < 1e-4, " max relative error");
    record("loss gradient", worst(loss_gradient_error), &|v| v < 1e-4, " max relative error");
    record(
        "reception oracle",
        reception_error(200.0, 1).and_then(|a| reception_error(100.0, 2).map(|b| a.max(b))),
        &|v| v < 1e-6,
        " relative Frobenius error",
    );
    let cfg = SlotConfig::default();
    record(
        "tri-diagonal energy",
        super::mean_tridiagonal_ratio(
            &TdlProfile::tdl_c(crate::channel::DEFAULT_RMS_DELAY_SPREAD),
            max_doppler(kmh_to_ms(200.0), cfg.carrier_frequency),
            &cfg,
            3,
            7,
        ),
        &|v| v >= 0.98,
        " of channel energy at 200 km/h",
    );
    checks
}
