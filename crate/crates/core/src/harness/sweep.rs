use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{bit_errors, data_bits, detect_data_bits, nmse_linear, perfect_csi_equalize, to_db};
use super::EstimatorKind;
use crate::baseline::{ls_estimate, ls_at_pilots, zf_equalize, CorrelationModel, LmmseFilter, PilotSet, RobustLmmse};
use crate::channel::{
    apply_channel, generate_realization, genie_taps, kmh_to_ms, max_doppler, noise_variance, ChannelTapGrid,
    TdlProfile, DEFAULT_RMS_DELAY_SPREAD,
};
use crate::error::{Error, Result};
use crate::grid::{build_pilot_mask, random_slot, SlotConfig, FRAC_1_SQRT_2};
use crate::seed::{self, Stream};
use crate::sirius::{self, SiriusConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub snr_grid: Vec<f64>,
    /// km/h
    pub velocities: Vec<f64>,
    pub slots_per_point: usize,
    pub estimators: Vec<EstimatorKind>,
    pub master_seed: u64,
    pub workers: usize,
    pub rms_delay_spread: f64,
    pub slot: SlotConfig,
    /// Per-slot seeds override `sirius.seed`.
    pub sirius: SiriusConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_grid: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            velocities: vec![100.0, 200.0],
            slots_per_point: 50,
            estimators: EstimatorKind::ALL.to_vec(),
            master_seed: 1,
            workers: 1,
            rms_delay_spread: DEFAULT_RMS_DELAY_SPREAD,
            slot: SlotConfig::default(),
            sirius: SiriusConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.slot.validate()?;
        self.sirius.validate()?;
        if self.slots_per_point == 0 {
            return Err(Error::Config("slots per point must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        if self.snr_grid.is_empty() || self.velocities.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config("SNR grid, speeds and estimators must be non-empty".into()));
        }
        if self.snr_grid.iter().any(|s| s.is_nan()) || self.snr_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("SNR grid {:?} is not strictly increasing", self.snr_grid)));
        }
        for (i, e) in self.estimators.iter().enumerate() {
            if self.estimators[..i].contains(e) {
                return Err(Error::Config(format!("estimator `{e}` listed twice")));
            }
        }
        for &v in &self.velocities {
            let fd = max_doppler(kmh_to_ms(v), self.slot.carrier_frequency);
            if !(v >= 0.0 && fd < self.slot.subcarrier_spacing / 2.0) {
                return Err(Error::Config(format!("speed {v} km/h is out of range")));
            }
        }
        Ok(())
    }

    /// Seed of one slot, shared by every estimator at that point.
    pub fn slot_seed(&self, snr_idx: usize, vel_idx: usize, slot: usize) -> u64 {
        seed::mix(&[self.master_seed, snr_idx as u64, vel_idx as u64, slot as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub estimator: EstimatorKind,
    pub snr_db: f64,
    pub speed_kmh: f64,
    pub slots: usize,
    pub nmse_db: f64,
    pub ber: f64,
    pub bit_count: u64,
    pub bit_errors: u64,
    /// Combined checksum of the channel realizations behind this point.
    pub channel_checksum: u64,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub estimator: EstimatorKind,
    pub snr_db: f64,
    pub speed_kmh: f64,
    pub slot: usize,
    pub seed: u64,
    pub channel_checksum: u64,
    pub nmse_db: f64,
    pub bit_errors: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub results: Vec<RunResult>,
    /// Points dropped because a slot produced a non-finite metric.
    pub diagnostics: Vec<String>,
    pub slot_records: Vec<SlotRecord>,
}

/// What one estimator achieved on one slot.
enum SlotMetric {
    Ok { nmse: f64, errors: u64 },
    Failed(String),
}

struct SlotResult {
    checksum: u64,
    seed: u64,
    metrics: Vec<SlotMetric>,
}

/// Statistics shared by every slot of one sweep point.
struct PointModels {
    ideal: Option<LmmseFilter>,
    robust: Option<RobustLmmse>,
}

/// Runs every (speed, SNR) point and hands each finished result to `sink`
/// in a fixed order: speeds outer, SNRs inner, estimators as configured.
pub fn run_sweep(cfg: &SweepConfig, fingerprint: &str, mut sink: impl FnMut(&RunResult) -> Result<()>) -> Result<SweepOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let profile = TdlProfile::tdl_c(cfg.rms_delay_spread);
    let mask = build_pilot_mask(&cfg.slot)?;
    let data_positions = mask.iter().filter(|&&p| !p).count() as u64;
    let reference_pilots = PilotSet {
        mask: mask.clone(),
        symbols: mask.map(|p| if p { Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2) } else { Complex64::new(0.0, 0.0) }),
    };

    let mut outcome = SweepOutcome::default();
    for (vi, &speed) in cfg.velocities.iter().enumerate() {
        let fd = max_doppler(kmh_to_ms(speed), cfg.slot.carrier_frequency);
        for (si, &snr) in cfg.snr_grid.iter().enumerate() {
            let noise_var = noise_variance(snr);
            let models = PointModels {
                ideal: match cfg.estimators.contains(&EstimatorKind::IdealLmmse) {
                    true => {
                        let corr = CorrelationModel::genie(&profile, fd, &cfg.slot)?;
                        Some(LmmseFilter::new(&corr, noise_var, &reference_pilots)?)
                    }
                    false => None,
                },
                robust: match cfg.estimators.contains(&EstimatorKind::RobustLmmse) {
                    true => Some(RobustLmmse::new(&cfg.slot, noise_var)?),
                    false => None,
                },
            };
            let slots: Vec<Result<SlotResult>> = pool.install(|| {
                (0..cfg.slots_per_point)
                    .into_par_iter()
                    .map(|slot| run_slot(cfg, &profile, fd, snr, &models, cfg.slot_seed(si, vi, slot)))
                    .collect()
            });
            let slots = slots.into_iter().collect::<Result<Vec<_>>>()?;
            let checksum = seed::mix(&slots.iter().map(|s| s.checksum).collect::<Vec<_>>());

            for (ei, &estimator) in cfg.estimators.iter().enumerate() {
                let mut nmse_sum = 0.0;
                let mut errors = 0u64;
                let mut failure = None;
                for (slot, s) in slots.iter().enumerate() {
                    match &s.metrics[ei] {
                        SlotMetric::Ok { nmse, errors: e } => {
                            nmse_sum += nmse;
                            errors += e;
                            outcome.slot_records.push(SlotRecord {
                                estimator,
                                snr_db: snr,
                                speed_kmh: speed,
                                slot,
                                seed: s.seed,
                                channel_checksum: s.checksum,
                                nmse_db: to_db(*nmse),
                                bit_errors: *e,
                            });
                        }
                        SlotMetric::Failed(why) => {
                            failure.get_or_insert_with(|| format!("slot {slot}: {why}"));
                        }
                    }
                }
                if let Some(why) = failure {
                    outcome
                        .diagnostics
                        .push(format!("{estimator} at {snr} dB, {speed} km/h dropped ({why})"));
                    continue;
                }
                let bit_count = cfg.slots_per_point as u64 * data_positions * 2;
                let result = RunResult {
                    estimator,
                    snr_db: snr,
                    speed_kmh: speed,
                    slots: cfg.slots_per_point,
                    nmse_db: to_db(nmse_sum / cfg.slots_per_point as f64),
                    ber: errors as f64 / bit_count as f64,
                    bit_count,
                    bit_errors: errors,
                    channel_checksum: checksum,
                    fingerprint: fingerprint.to_string(),
                };
                sink(&result)?;
                outcome.results.push(result);
            }
        }
    }
    Ok(outcome)
}

fn run_slot(
    cfg: &SweepConfig,
    profile: &TdlProfile,
    fd: f64,
    snr: f64,
    models: &PointModels,
    slot_seed: u64,
) -> Result<SlotResult> {
    let (tx, bits) = random_slot(&cfg.slot, &mut seed::rng(seed::derive(slot_seed, Stream::Bits)))?;
    let real = generate_realization(profile, fd, &cfg.slot, seed::derive(slot_seed, Stream::Channel))?;
    let rx = apply_channel(&tx, &real, snr, &cfg.slot, seed::derive(slot_seed, Stream::Noise))?;
    let truth = genie_taps(&real, &cfg.slot)?;
    let pilots = PilotSet::from_grid(&tx);
    let truth_bits = data_bits(&bits, &tx.pilot_mask)?;

    let score = |taps: &ChannelTapGrid, equalized: &DMatrix<Complex64>| -> Result<SlotMetric> {
        let nmse = nmse_linear(taps, &truth)?;
        if !nmse.is_finite() || equalized.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Ok(SlotMetric::Failed(format!("non-finite result (NMSE {nmse})")));
        }
        let errors = bit_errors(&detect_data_bits(equalized, &tx.pilot_mask)?, &truth_bits)?;
        Ok(SlotMetric::Ok { nmse, errors })
    };
    let zf = |taps: ChannelTapGrid| -> Result<SlotMetric> {
        let eq = zf_equalize(&rx, &taps)?;
        score(&taps, &eq)
    };

    let mut metrics = Vec::with_capacity(cfg.estimators.len());
    for &estimator in &cfg.estimators {
        let metric = match estimator {
            EstimatorKind::Ls => zf(ls_estimate(&rx, &pilots)?)?,
            EstimatorKind::IdealLmmse => {
                let filter = models.ideal.as_ref().expect("ideal filter prepared");
                zf(ChannelTapGrid::from_main(filter.apply(&ls_at_pilots(&rx, &pilots)?)))?
            }
            EstimatorKind::RobustLmmse => {
                let robust = models.robust.as_ref().expect("robust filter prepared");
                zf(ChannelTapGrid::from_main(robust.apply(&ls_estimate(&rx, &pilots)?.h0)))?
            }
            EstimatorKind::Sirius => {
                let sc = SiriusConfig {
                    seed: seed::derive(slot_seed, Stream::Estimator),
                    ..cfg.sirius.clone()
                };
                match sirius::estimate_slot(&rx, &pilots, &sc) {
                    Ok(out) => zf(out.taps)?,
                    Err(Error::Numerical(why)) => SlotMetric::Failed(why),
                    Err(e) => return Err(e),
                }
            }
            EstimatorKind::PerfectCsi => {
                let eq = perfect_csi_equalize(&rx.symbols, &truth, &tx.symbols)?;
                score(&truth, &eq)?
            }
        };
        metrics.push(metric);
    }
    Ok(SlotResult {
        checksum: real.checksum(),
        seed: slot_seed,
        metrics,
    })
}
