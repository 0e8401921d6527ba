//! Monte-Carlo sweeps over SNR and speed, metrics, and result persistence.

mod config;
mod metrics;
mod output;
pub mod selftest;
mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use config::{fingerprint, snr_grid, RunFile};
pub use metrics::{
    ber, bit_errors, data_bits, detect_data_bits, mean_tridiagonal_ratio, nmse, nmse_linear, perfect_csi_equalize,
    to_db, NMSE_FLOOR_DB,
};
pub use output::{
    format_sig, read_results, write_manifest, write_results, write_slot_dump, CsvRow, ResultsWriter, RESULTS_HEADER,
};
pub use sweep::{run_sweep, RunResult, SlotRecord, SweepConfig, SweepOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ls,
    IdealLmmse,
    RobustLmmse,
    Sirius,
    PerfectCsi,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Ls,
        EstimatorKind::IdealLmmse,
        EstimatorKind::RobustLmmse,
        EstimatorKind::Sirius,
        EstimatorKind::PerfectCsi,
    ];

    pub fn id(self) -> &'static str {
        match self {
            EstimatorKind::Ls => "ls",
            EstimatorKind::IdealLmmse => "ideal_lmmse",
            EstimatorKind::RobustLmmse => "robust_lmmse",
            EstimatorKind::Sirius => "sirius",
            EstimatorKind::PerfectCsi => "perfect_csi",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        EstimatorKind::ALL
            .into_iter()
            .find(|e| e.id() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}
