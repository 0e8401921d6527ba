//! Online coordinate-network channel estimator: warm start from LS, then
//! decision-directed training under the tri-diagonal reception model.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baseline::{ls_estimate, stabilize_with, zf_equalize, PilotSet};
use crate::channel::ChannelTapGrid;
use crate::error::{Error, Result};
use crate::grid::{qpsk_hard_decision, Coordinate, ResourceGrid, FRAC_1_SQRT_2};
use crate::net::{AdamState, FourierMapping, Matrix, SirenNetwork};
use crate::seed;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiriusConfig {
    pub i_max: usize,
    pub steps_per_iter: Vec<usize>,
    pub tau_th: f64,
    pub lambda: f64,
    pub w_p: f64,
    pub w_d: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub mapping_size: usize,
    pub rff_scale: f64,
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub omega_first: f64,
    pub omega_hidden: f64,
    pub seed: u64,
}

impl Default for SiriusConfig {
    fn default() -> Self {
        Self {
            i_max: 2,
            steps_per_iter: vec![150, 50],
            tau_th: 0.5,
            lambda: 1.0,
            w_p: 2.0,
            w_d: 0.5,
            epsilon: crate::baseline::EPSILON,
            learning_rate: 5e-4,
            mapping_size: 128,
            rff_scale: 0.5,
            hidden_dim: 64,
            hidden_layers: 4,
            omega_first: 30.0,
            omega_hidden: 30.0,
            seed: 0,
        }
    }
}

impl SiriusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.i_max == 0 {
            return Err(Error::Config("i_max must be at least 1".into()));
        }
        if self.steps_per_iter.len() != self.i_max {
            return Err(Error::Config(format!(
                "steps_per_iter has {} entries, expected i_max = {}",
                self.steps_per_iter.len(),
                self.i_max
            )));
        }
        // tau_th = 0 is allowed as the "admit nothing" switch
        if !(0.0..=FRAC_1_SQRT_2).contains(&self.tau_th) {
            return Err(Error::Config(format!("tau_th {} outside [0, 1/sqrt(2)]", self.tau_th)));
        }
        let positive = [
            ("w_p", self.w_p),
            ("w_d", self.w_d),
            ("epsilon", self.epsilon),
            ("learning_rate", self.learning_rate),
            ("rff_scale", self.rff_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.mapping_size == 0 || self.hidden_dim == 0 || self.hidden_layers == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![2 * self.mapping_size];
        dims.extend(std::iter::repeat(self.hidden_dim).take(self.hidden_layers));
        dims.push(6);
        dims
    }
}

/// Supervised resource elements: pilots first, then harvested pseudo-pilots.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    pub positions: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    /// `[X[k-1], X[k], X[k+1]]`, zero beyond the band edges.
    pub symbols: Vec<[Complex64; 3]>,
    pilot_count: usize,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn pilot_count(&self) -> usize {
        self.pilot_count
    }

    pub fn pseudo_pilot_count(&self) -> usize {
        self.len() - self.pilot_count
    }

    /// Every element with a positive weight, pilots (per `pilot_mask`) first.
    pub fn from_weights(
        symbols: &DMatrix<Complex64>,
        weights: &DMatrix<f64>,
        pilot_mask: &DMatrix<bool>,
    ) -> Result<Self> {
        if symbols.shape() != weights.shape() || symbols.shape() != pilot_mask.shape() {
            return Err(Error::dims(format!("{:?}", symbols.shape()), format!("{:?}", weights.shape())));
        }
        let mut set = ActiveSet {
            positions: vec![],
            weights: vec![],
            symbols: vec![],
            pilot_count: 0,
        };
        let (k_len, n_len) = symbols.shape();
        for pilots in [true, false] {
            for n in 0..n_len {
                for k in 0..k_len {
                    if pilot_mask[(k, n)] == pilots && weights[(k, n)] > 0.0 {
                        set.push(k, n, weights[(k, n)], symbols);
                    }
                }
            }
            if pilots {
                set.pilot_count = set.len();
            }
        }
        Ok(set)
    }

    fn push(&mut self, k: usize, n: usize, weight: f64, decisions: &DMatrix<Complex64>) {
        self.positions.push((k, n));
        self.weights.push(weight);
        self.symbols.push(neighbourhood(decisions, k, n));
    }
}

fn neighbourhood(x: &DMatrix<Complex64>, k: usize, n: usize) -> [Complex64; 3] {
    let below = if k > 0 { x[(k - 1, n)] } else { ZERO };
    let above = if k + 1 < x.nrows() { x[(k + 1, n)] } else { ZERO };
    [below, x[(k, n)], above]
}

/// Hard decisions on data elements with the known symbols on pilots, plus
/// each element's distance to its decided constellation point.
pub fn decide(equalized: &DMatrix<Complex64>, pilots: &PilotSet) -> (DMatrix<Complex64>, DMatrix<f64>) {
    let (k_len, n_len) = equalized.shape();
    let mut decisions = DMatrix::zeros(k_len, n_len);
    let mut distance = DMatrix::zeros(k_len, n_len);
    for n in 0..n_len {
        for k in 0..k_len {
            if pilots.mask[(k, n)] {
                decisions[(k, n)] = pilots.symbols[(k, n)];
            } else {
                let (point, d) = qpsk_hard_decision(equalized[(k, n)]);
                decisions[(k, n)] = point;
                distance[(k, n)] = d;
            }
        }
    }
    (decisions, distance)
}

#[derive(Debug, Clone)]
pub struct WarmStart {
    pub taps: ChannelTapGrid,
    pub equalized: DMatrix<Complex64>,
    pub decisions: DMatrix<Complex64>,
    pub distance: DMatrix<f64>,
    pub active: ActiveSet,
}

/// Interpolated LS, zero-forcing, hard decisions, and a pilot-only active set.
pub fn warm_start(rx: &ResourceGrid, pilots: &PilotSet, w_p: f64) -> Result<WarmStart> {
    let taps = ls_estimate(rx, pilots)?;
    let equalized = zf_equalize(rx, &taps)?;
    let (decisions, distance) = decide(&equalized, pilots);
    let mut active = ActiveSet {
        positions: Vec::with_capacity(pilots.len()),
        weights: Vec::with_capacity(pilots.len()),
        symbols: Vec::with_capacity(pilots.len()),
        pilot_count: 0,
    };
    for (k, n) in pilots.positions() {
        active.push(k, n, w_p, &decisions);
    }
    active.pilot_count = active.len();
    Ok(WarmStart {
        taps,
        equalized,
        decisions,
        distance,
        active,
    })
}

/// Rebuilds the pseudo-pilot part of `active` from fresh decisions. Pilot
/// entries keep their position, weight and own symbol; their neighbour
/// symbols follow the latest decisions.
pub fn harvest_pseudo_pilots(
    decisions: &DMatrix<Complex64>,
    distance: &DMatrix<f64>,
    pilots: &PilotSet,
    active: &mut ActiveSet,
    tau_th: f64,
    w_d: f64,
) -> Result<()> {
    if decisions.shape() != pilots.shape() || distance.shape() != pilots.shape() {
        return Err(Error::dims(format!("{:?}", pilots.shape()), format!("{:?}", decisions.shape())));
    }
    active.positions.truncate(active.pilot_count);
    active.weights.truncate(active.pilot_count);
    active.symbols.truncate(active.pilot_count);
    for (pos, sym) in active.positions.iter().zip(active.symbols.iter_mut()) {
        let fresh = neighbourhood(decisions, pos.0, pos.1);
        sym[0] = fresh[0];
        sym[2] = fresh[2];
    }
    let (k_len, n_len) = decisions.shape();
    for n in 0..n_len {
        for k in 0..k_len {
            if !pilots.mask[(k, n)] && distance[(k, n)] < tau_th {
                active.push(k, n, w_d, decisions);
            }
        }
    }
    Ok(())
}

/// Network outputs for the whole grid, row `k + n K`:
/// `[Re h0, Im h0, Re hm1, Im hm1, Re hp1, Im hp1]`.
fn row_index(k: usize, n: usize, k_len: usize) -> usize {
    k + n * k_len
}

fn tap(out: &Matrix, row: usize, which: usize) -> Complex64 {
    Complex64::new(out.get(row, 2 * which), out.get(row, 2 * which + 1))
}

fn add_tap_grad(grad: &mut Matrix, row: usize, which: usize, g: Complex64) {
    let r = grad.row_mut(row);
    r[2 * which] += g.re;
    r[2 * which + 1] += g.im;
}

/// Weighted reconstruction error over the active set plus the ICI-tap energy
/// penalty over the full grid. Returns the loss and its gradient with respect
/// to every network output; `out` holds one row per grid element.
pub fn reconstruction_loss(
    out: &Matrix,
    active: &ActiveSet,
    rx: &DMatrix<Complex64>,
    lambda: f64,
) -> Result<(f64, Matrix)> {
    let (k_len, n_len) = rx.shape();
    if out.rows() != k_len * n_len || out.cols() != 6 {
        return Err(Error::dims(format!("{}x6 outputs", k_len * n_len), format!("{}x{}", out.rows(), out.cols())));
    }
    if active.is_empty() {
        return Err(Error::Config("active set is empty".into()));
    }
    let mut grad = Matrix::zeros(out.rows(), 6);
    let norm = 1.0 / active.len() as f64;
    let mut data = 0.0;
    for ((&(k, n), &w), x) in active.positions.iter().zip(&active.weights).zip(&active.symbols) {
        let row = row_index(k, n, k_len);
        let y_hat = tap(out, row, 0) * x[1] + tap(out, row, 1) * x[0] + tap(out, row, 2) * x[2];
        let e = y_hat - rx[(k, n)];
        data += w * e.norm_sqr();
        // d/d(re, im) of w|e|^2 for a tap multiplying symbol s is 2 w e conj(s)
        let scale = 2.0 * w * norm;
        add_tap_grad(&mut grad, row, 0, e * x[1].conj() * scale);
        add_tap_grad(&mut grad, row, 1, e * x[0].conj() * scale);
        add_tap_grad(&mut grad, row, 2, e * x[2].conj() * scale);
    }
    let reg_norm = lambda / (k_len * n_len) as f64;
    let mut reg = 0.0;
    for row in 0..out.rows() {
        let r = out.row(row);
        reg += r[2] * r[2] + r[3] * r[3] + r[4] * r[4] + r[5] * r[5];
        let g = grad.row_mut(row);
        for c in 2..6 {
            g[c] += 2.0 * reg_norm * r[c];
        }
    }
    Ok((data * norm + reg_norm * reg, grad))
}

fn assemble_taps(out: &Matrix, k_len: usize, n_len: usize) -> ChannelTapGrid {
    let mut taps = ChannelTapGrid::zeros(k_len, n_len);
    for n in 0..n_len {
        for k in 0..k_len {
            let row = row_index(k, n, k_len);
            taps.h0[(k, n)] = tap(out, row, 0);
            if k > 0 {
                taps.hm1[(k, n)] = tap(out, row, 1);
            }
            if k + 1 < k_len {
                taps.hp1[(k, n)] = tap(out, row, 2);
            }
        }
    }
    taps
}

/// Per-slot diagnostics of one estimator run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiriusTrace {
    /// Training loss evaluated before each step, then once after the last.
    pub losses: Vec<f64>,
    /// Active set size during each outer iteration.
    pub active_sizes: Vec<usize>,
    pub harvest_passes: usize,
    pub gradient_steps: usize,
}

#[derive(Debug, Clone)]
pub struct SiriusOutput {
    pub taps: ChannelTapGrid,
    pub trace: SiriusTrace,
}

/// Fits a fresh network to one received slot and returns the predicted taps.
pub fn estimate_slot(rx: &ResourceGrid, pilots: &PilotSet, cfg: &SiriusConfig) -> Result<SiriusOutput> {
    cfg.validate()?;
    let (k_len, n_len) = rx.symbols.shape();
    if pilots.shape() != (k_len, n_len) {
        return Err(Error::dims(format!("{:?}", (k_len, n_len)), format!("{:?}", pilots.shape())));
    }
    if k_len < 2 || n_len < 2 {
        return Err(Error::Config(format!("grid {k_len}x{n_len} too small")));
    }

    let mut rng = seed::rng(cfg.seed);
    let mapping = FourierMapping::new(cfg.mapping_size, cfg.rff_scale, &mut rng);
    let coords = normalize_grid(k_len, n_len);
    let features = mapping.map_batch(&coords);

    let mut net = SirenNetwork::new(&cfg.layer_dims(), cfg.omega_first, cfg.omega_hidden)?;
    net.siren_init(seed::mix(&[cfg.seed, 1]));
    let mut adam = AdamState::new(&net.layers, cfg.learning_rate);

    let start = warm_start(rx, pilots, cfg.w_p)?;
    let mut active = start.active;
    let mut trace = SiriusTrace::default();

    for (i, &steps) in cfg.steps_per_iter.iter().enumerate() {
        trace.active_sizes.push(active.len());
        for _ in 0..steps {
            let fwd = net.forward_batch(&features)?;
            let (loss, upstream) = reconstruction_loss(&fwd.output, &active, &rx.symbols, cfg.lambda)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("training loss became {loss}")));
            }
            trace.losses.push(loss);
            let grads = net.backward(&features, &fwd, &upstream)?;
            adam.step(&mut net.layers, &grads)?;
            trace.gradient_steps += 1;
        }
        if i + 1 < cfg.i_max {
            let out = net.forward_batch(&features)?.output;
            let equalized = DMatrix::from_fn(k_len, n_len, |k, n| {
                rx.symbols[(k, n)] / stabilize_with(tap(&out, row_index(k, n, k_len), 0), cfg.epsilon)
            });
            let (decisions, distance) = decide(&equalized, pilots);
            harvest_pseudo_pilots(&decisions, &distance, pilots, &mut active, cfg.tau_th, cfg.w_d)?;
            trace.harvest_passes += 1;
        }
    }

    let out = net.forward_batch(&features)?.output;
    trace.losses.push(reconstruction_loss(&out, &active, &rx.symbols, cfg.lambda)?.0);
    Ok(SiriusOutput {
        taps: assemble_taps(&out, k_len, n_len),
        trace,
    })
}

/// Grid coordinates in network row order.
fn normalize_grid(k_len: usize, n_len: usize) -> Vec<Coordinate> {
    let at = |i: usize, len: usize| 2.0 * i as f64 / (len - 1) as f64 - 1.0;
    let mut coords = Vec::with_capacity(k_len * n_len);
    for n in 0..n_len {
        for k in 0..k_len {
            coords.push(Coordinate {
                f: at(k, k_len),
                t: at(n, n_len),
            });
        }
    }
    coords
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, generate_realization, ChannelRealization, TdlProfile};
    use crate::grid::{random_slot, SlotConfig};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn small_cfg() -> SlotConfig {
        SlotConfig {
            fft_size: 64,
            active_subcarriers: 40,
            symbols_per_slot: 6,
            cp_length: 8,
            pilot_interval: 4,
            ..SlotConfig::default()
        }
    }

    fn flat_slot(cfg: &SlotConfig, snr_db: f64, seed: u64) -> (ResourceGrid, ResourceGrid, PilotSet) {
        let (tx, _) = random_slot(cfg, &mut seed::rng(seed)).unwrap();
        let real = ChannelRealization::static_flat(cfg, Complex64::new(0.6, -0.8));
        let rx = apply_channel(&tx, &real, snr_db, cfg, seed + 1).unwrap();
        let pilots = PilotSet::from_grid(&tx);
        (tx, rx, pilots)
    }

    fn quick(seed: u64) -> SiriusConfig {
        SiriusConfig {
            steps_per_iter: vec![30, 10],
            seed,
            ..SiriusConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(SiriusConfig::default().validate().is_ok());
        let bad = SiriusConfig {
            steps_per_iter: vec![150],
            ..SiriusConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = SiriusConfig {
            tau_th: 0.8,
            ..SiriusConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(SiriusConfig::default().layer_dims(), vec![256, 64, 64, 64, 64, 6]);
    }

    #[test]
    fn warm_start_on_clean_flat_channel() {
        let cfg = SlotConfig::default();
        let (tx, rx, pilots) = flat_slot(&cfg, f64::INFINITY, 3);
        let ws = warm_start(&rx, &pilots, 2.0).unwrap();
        assert_eq!(ws.decisions, tx.symbols);
        assert_eq!(ws.active.len(), 504);
        assert_eq!(ws.active.pilot_count(), 504);
        assert!(ws.active.weights.iter().all(|&w| w == 2.0));
        for (&(k, n), sym) in ws.active.positions.iter().zip(&ws.active.symbols) {
            assert!(pilots.mask[(k, n)]);
            assert_eq!(sym[1], tx.symbols[(k, n)]);
        }
    }

    #[test]
    fn loss_is_zero_for_exact_taps() {
        let cfg = small_cfg();
        let (tx, _) = random_slot(&cfg, &mut seed::rng(4)).unwrap();
        let mut rng = seed::rng(5);
        let (k_len, n_len) = tx.symbols.shape();
        let mut taps = ChannelTapGrid::zeros(k_len, n_len);
        let mut out = Matrix::zeros(k_len * n_len, 6);
        for n in 0..n_len {
            for k in 0..k_len {
                let row = row_index(k, n, k_len);
                for c in 0..6 {
                    out.set(row, c, rng.gen_range(-1.0..1.0));
                }
                taps.h0[(k, n)] = tap(&out, row, 0);
                taps.hm1[(k, n)] = tap(&out, row, 1);
                taps.hp1[(k, n)] = tap(&out, row, 2);
            }
        }
        let rx = taps.reconstruct(&tx.symbols);
        let pilots = PilotSet::from_grid(&tx);
        let mut ws = warm_start(&ResourceGrid { symbols: rx.clone(), ..tx.clone() }, &pilots, 2.0).unwrap();
        let dist = DMatrix::zeros(k_len, n_len);
        harvest_pseudo_pilots(&tx.symbols, &dist, &pilots, &mut ws.active, 0.5, 0.5).unwrap();
        let (loss, _) = reconstruction_loss(&out, &ws.active, &rx, 0.0).unwrap();
        assert!(loss < 1e-28, "data term {loss}");
    }

    #[test]
    fn loss_of_zero_prediction_is_weighted_power() {
        let cfg = small_cfg();
        let (_, rx, pilots) = flat_slot(&cfg, 10.0, 6);
        let mut ws = warm_start(&rx, &pilots, 2.0).unwrap();
        harvest_pseudo_pilots(&ws.decisions, &ws.distance, &pilots, &mut ws.active, 0.5, 0.5).unwrap();
        let out = Matrix::zeros(rx.symbols.len(), 6);
        let (loss, grad) = reconstruction_loss(&out, &ws.active, &rx.symbols, 1.0).unwrap();
        let expected: f64 = ws
            .active
            .positions
            .iter()
            .zip(&ws.active.weights)
            .map(|(&p, w)| w * rx.symbols[p].norm_sqr())
            .sum::<f64>()
            / ws.active.len() as f64;
        assert!((loss - expected).abs() < 1e-12 * expected);
        // inactive elements only feel the regularizer, which is flat at zero
        let k_len = rx.symbols.nrows();
        let active: std::collections::HashSet<_> = ws.active.positions.iter().map(|&(k, n)| row_index(k, n, k_len)).collect();
        for r in (0..grad.rows()).filter(|r| !active.contains(r)) {
            assert!(grad.row(r).iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        // 4 x 3 toy grid, every element active with mixed weights
        let (k_len, n_len) = (4, 3);
        let mut rng = seed::rng(11);
        let mut c = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let x = DMatrix::from_fn(k_len, n_len, |_, _| c());
        let rx = DMatrix::from_fn(k_len, n_len, |_, _| c());
        let mut active = ActiveSet {
            positions: vec![],
            weights: vec![],
            symbols: vec![],
            pilot_count: 0,
        };
        for n in 0..n_len {
            for k in 0..k_len {
                active.push(k, n, if (k + n) % 3 == 0 { 2.0 } else { 0.5 }, &x);
            }
        }
        let mut out = Matrix::from_fn(k_len * n_len, 6, |r, col| ((r * 7 + col * 3) % 11) as f64 / 11.0 - 0.5);
        let (_, grad) = reconstruction_loss(&out, &active, &rx, 0.7).unwrap();
        let h = 1e-5;
        for r in 0..out.rows() {
            for col in 0..6 {
                let orig = out.get(r, col);
                out.set(r, col, orig + h);
                let lp = reconstruction_loss(&out, &active, &rx, 0.7).unwrap().0;
                out.set(r, col, orig - h);
                let lm = reconstruction_loss(&out, &active, &rx, 0.7).unwrap().0;
                out.set(r, col, orig);
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grad.get(r, col);
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(rel < 1e-4, "row {r} col {col}: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn harvest_thresholds() {
        let cfg = small_cfg();
        let (tx, rx, pilots) = flat_slot(&cfg, f64::INFINITY, 8);
        let mut ws = warm_start(&rx, &pilots, 2.0).unwrap();
        let pilot_entries = ws.active.clone();
        harvest_pseudo_pilots(&ws.decisions, &ws.distance, &pilots, &mut ws.active, 0.0, 0.5).unwrap();
        assert_eq!(ws.active, pilot_entries);
        harvest_pseudo_pilots(&ws.decisions, &ws.distance, &pilots, &mut ws.active, 0.5, 0.5).unwrap();
        let data = tx.symbols.len() - pilots.len();
        assert_eq!(ws.active.pseudo_pilot_count(), data);
        assert_eq!(ws.active.positions[..pilots.len()], pilot_entries.positions[..]);
        assert!(ws.active.weights[pilots.len()..].iter().all(|&w| w == 0.5));
        // a second pass rebuilds instead of appending
        harvest_pseudo_pilots(&ws.decisions, &ws.distance, &pilots, &mut ws.active, 0.5, 0.5).unwrap();
        assert_eq!(ws.active.len(), tx.symbols.len());
        let mut seen = ws.active.positions.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), ws.active.len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn admission_grows_with_threshold(seed in 0u64..1000, lo in 0.0f64..0.7, hi in 0.0f64..0.7) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let cfg = small_cfg();
            let (_, rx, pilots) = flat_slot(&cfg, 5.0, seed);
            let ws = warm_start(&rx, &pilots, 2.0).unwrap();
            let count = |tau| {
                let mut a = ws.active.clone();
                harvest_pseudo_pilots(&ws.decisions, &ws.distance, &pilots, &mut a, tau, 0.5).unwrap();
                prop_assert!(a.len() >= pilots.len());
                prop_assert_eq!(&a.positions[..pilots.len()], &ws.active.positions[..]);
                Ok(a.len())
            };
            prop_assert!(count(lo)? <= count(hi)?);
        }
    }

    #[test]
    fn default_schedule_counts() {
        let cfg = small_cfg();
        let (_, rx, pilots) = flat_slot(&cfg, 20.0, 12);
        let run = estimate_slot(&rx, &pilots, &SiriusConfig::default()).unwrap();
        assert_eq!(run.trace.gradient_steps, 200);
        assert_eq!(run.trace.harvest_passes, 1);
        assert_eq!(run.trace.losses.len(), 201);
        assert_eq!(run.trace.active_sizes[0], pilots.len());
        assert!(run.trace.active_sizes[1] >= pilots.len());
        assert!(run.trace.losses[150] < run.trace.losses[0]);
        let (k_len, _) = run.taps.shape();
        assert!(run.taps.hm1.row(0).iter().all(|v| *v == ZERO));
        assert!(run.taps.hp1.row(k_len - 1).iter().all(|v| *v == ZERO));
    }

    #[test]
    fn single_iteration_never_harvests() {
        let cfg = small_cfg();
        let (_, rx, pilots) = flat_slot(&cfg, 20.0, 13);
        let sc = SiriusConfig {
            i_max: 1,
            steps_per_iter: vec![20],
            ..quick(1)
        };
        let run = estimate_slot(&rx, &pilots, &sc).unwrap();
        assert_eq!(run.trace.harvest_passes, 0);
        assert_eq!(run.trace.active_sizes, vec![pilots.len()]);
    }

    #[test]
    fn zero_threshold_keeps_pilots_only() {
        let cfg = small_cfg();
        let (_, rx, pilots) = flat_slot(&cfg, 20.0, 14);
        let sc = SiriusConfig { tau_th: 0.0, ..quick(2) };
        let run = estimate_slot(&rx, &pilots, &sc).unwrap();
        assert_eq!(run.trace.active_sizes, vec![pilots.len(), pilots.len()]);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = small_cfg();
        let profile = TdlProfile::tdl_c(crate::channel::DEFAULT_RMS_DELAY_SPREAD);
        let real = generate_realization(&profile, 900.0, &cfg, 4).unwrap();
        let (tx, _) = random_slot(&cfg, &mut seed::rng(15)).unwrap();
        let rx = apply_channel(&tx, &real, 15.0, &cfg, 16).unwrap();
        let pilots = PilotSet::from_grid(&tx);
        let a = estimate_slot(&rx, &pilots, &quick(9)).unwrap();
        let b = estimate_slot(&rx, &pilots, &quick(9)).unwrap();
        let c = estimate_slot(&rx, &pilots, &quick(10)).unwrap();
        assert_eq!(a.taps, b.taps);
        assert_eq!(a.trace, b.trace);
        assert_ne!(a.taps, c.taps);
    }

    #[test]
    fn rejects_mismatched_pilots() {
        let (_, rx, _) = flat_slot(&small_cfg(), 20.0, 17);
        let other = PilotSet::from_grid(&random_slot(&SlotConfig::default(), &mut seed::rng(1)).unwrap().0);
        assert!(matches!(estimate_slot(&rx, &other, &quick(1)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn grid_order_matches_coordinates() {
        let cfg = small_cfg();
        let grid = crate::grid::normalize_coordinates(&cfg).unwrap();
        let flat = normalize_grid(cfg.active_subcarriers, cfg.symbols_per_slot);
        for n in 0..cfg.symbols_per_slot {
            for k in 0..cfg.active_subcarriers {
                assert_eq!(grid[(k, n)], flat[row_index(k, n, cfg.active_subcarriers)]);
            }
        }
    }
}
