use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sweep::SweepConfig;
use super::EstimatorKind;
use crate::error::{Error, Result};
use crate::grid::SlotConfig;
use crate::seed;
use crate::sirius::SiriusConfig;

/// Run description shared by the config file, the command line and the
/// manifest. Every field is optional so that layers can be overlaid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speeds: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorKind>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_slots: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_delay_spread: Option<f64>,
    /// Written to manifests; ignored when read back.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifact_version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot: Option<SlotConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sirius: Option<SiriusConfig>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Fields set in `top` win.
    pub fn overlay(mut self, top: RunFile) -> RunFile {
        overlay_fields!(self, top; snr_min, snr_max, snr_step, speeds, slots, estimators, seed, out_dir,
            workers, dump_slots, rms_delay_spread, artifact_version, fingerprint, slot, sirius);
        self
    }

    /// Every field filled in: explicit values first, defaults for the rest.
    pub fn resolved(&self) -> RunFile {
        let defaults = SweepConfig::default();
        RunFile {
            snr_min: Some(self.snr_min.unwrap_or(defaults.snr_grid[0])),
            snr_max: Some(self.snr_max.unwrap_or(defaults.snr_grid[defaults.snr_grid.len() - 1])),
            snr_step: Some(self.snr_step.unwrap_or(5.0)),
            speeds: Some(self.speeds.clone().unwrap_or(defaults.velocities)),
            slots: Some(self.slots.unwrap_or(defaults.slots_per_point)),
            estimators: Some(self.estimators.clone().unwrap_or(defaults.estimators)),
            seed: Some(self.seed.unwrap_or(defaults.master_seed)),
            out_dir: Some(self.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"))),
            workers: Some(self.workers.unwrap_or_else(default_workers)),
            dump_slots: Some(self.dump_slots.unwrap_or(false)),
            rms_delay_spread: Some(self.rms_delay_spread.unwrap_or(defaults.rms_delay_spread)),
            artifact_version: None,
            fingerprint: None,
            slot: Some(self.slot.clone().unwrap_or(defaults.slot)),
            sirius: Some(self.sirius.clone().unwrap_or(defaults.sirius)),
        }
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let r = self.resolved();
        let cfg = SweepConfig {
            snr_grid: snr_grid(r.snr_min.unwrap(), r.snr_max.unwrap(), r.snr_step.unwrap())?,
            velocities: r.speeds.unwrap(),
            slots_per_point: r.slots.unwrap(),
            estimators: r.estimators.unwrap(),
            master_seed: r.seed.unwrap(),
            workers: r.workers.unwrap(),
            rms_delay_spread: r.rms_delay_spread.unwrap(),
            slot: r.slot.unwrap(),
            sirius: r.sirius.unwrap(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// `min, min + step, ...` up to `max` inclusive.
pub fn snr_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) || max < min {
        return Err(Error::Config(format!("invalid SNR range {min}..{max}")));
    }
    if step <= 0.0 {
        return Err(Error::Config(format!("SNR step must be positive, got {step}")));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| min + i as f64 * step).collect())
}

/// Stable hash of everything that influences the numbers in `results.csv`.
/// Worker count and output location are excluded.
pub fn fingerprint(cfg: &SweepConfig) -> String {
    let canonical = SweepConfig {
        workers: 1,
        ..cfg.clone()
    };
    let text = toml::to_string(&canonical).expect("sweep config serializes");
    let words: Vec<u64> = text
        .as_bytes()
        .chunks(8)
        .map(|c| {
            let mut w = [0u8; 8];
            w[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(w)
        })
        .chain(std::iter::once(text.len() as u64))
        .collect();
    format!("{:016x}", seed::mix(&words))
}
