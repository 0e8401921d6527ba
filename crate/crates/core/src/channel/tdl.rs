use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// TDL-C normalized delays and tap powers in dB (3GPP TR 38.901, Table 7.7.2-3).
const TDL_C: [(f64, f64); 24] = [
    (0.0, -4.4),
    (0.2099, -1.2),
    (0.2219, -3.5),
    (0.2329, -5.2),
    (0.2176, -2.5),
    (0.6366, 0.0),
    (0.6448, -2.2),
    (0.6560, -3.9),
    (0.6584, -7.4),
    (0.7935, -7.1),
    (0.8213, -10.7),
    (0.9336, -11.1),
    (1.2285, -5.1),
    (1.3083, -6.8),
    (2.1704, -8.7),
    (2.7105, -13.2),
    (4.2589, -13.9),
    (4.6003, -13.9),
    (5.4902, -15.8),
    (5.6077, -17.1),
    (6.3065, -16.0),
    (6.6374, -15.7),
    (7.0427, -21.6),
    (8.6523, -22.8),
];

pub const DEFAULT_RMS_DELAY_SPREAD: f64 = 93e-9;

/// Power-delay profile of a tapped delay line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdlProfile {
    pub tap_delays: Vec<f64>,
    pub tap_powers: Vec<f64>,
    pub rms_delay_spread: f64,
}

impl TdlProfile {
    pub fn tdl_c(rms_delay_spread: f64) -> Self {
        let mut taps: Vec<(f64, f64)> = TDL_C
            .iter()
            .map(|&(d, p_db)| (d * rms_delay_spread, 10f64.powf(p_db / 10.0)))
            .collect();
        taps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = taps.iter().map(|t| t.1).sum();
        Self {
            tap_delays: taps.iter().map(|t| t.0).collect(),
            tap_powers: taps.iter().map(|t| t.1 / total).collect(),
            rms_delay_spread,
        }
    }

    /// A single unit-power tap at zero delay.
    pub fn flat() -> Self {
        Self {
            tap_delays: vec![0.0],
            tap_powers: vec![1.0],
            rms_delay_spread: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.tap_delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tap_delays.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tap_delays.is_empty() || self.tap_delays.len() != self.tap_powers.len() {
            return Err(Error::Channel("profile needs matching, non-empty delay and power lists".into()));
        }
        let total: f64 = self.tap_powers.iter().sum();
        if (total - 1.0).abs() > 1e-12 || self.tap_powers.iter().any(|&p| p < 0.0) {
            return Err(Error::Channel(format!("tap powers must be non-negative and sum to 1, got {total}")));
        }
        if self.tap_delays[0] < 0.0 || self.tap_delays.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Channel("tap delays must be non-negative and ascending".into()));
        }
        Ok(())
    }

    /// Delays rounded to the nearest sample at `sample_rate`.
    pub fn quantized_delays(&self, sample_rate: f64) -> Vec<usize> {
        self.tap_delays
            .iter()
            .map(|&d| (d * sample_rate).round() as usize)
            .collect()
    }

    pub fn measured_rms_delay_spread(&self) -> f64 {
        let mean: f64 = self.tap_delays.iter().zip(&self.tap_powers).map(|(d, p)| d * p).sum();
        let second: f64 = self.tap_delays.iter().zip(&self.tap_powers).map(|(d, p)| d * d * p).sum();
        (second - mean * mean).sqrt()
    }
}
