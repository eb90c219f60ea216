//! Initial-access timing: one beam-sweep (PBCH) opportunity per radio frame.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingModel {
    pub frame_length_s: f64,
    /// Start of the PBCH slot relative to the frame boundary.
    pub pbch_offset_s: f64,
    /// Extra time the 5G sweep itself takes once the slot is reached.
    pub ia_sweep_duration_s: f64,
    /// Inference delay of the bandit at the waking AP.
    pub dcb_processing_delay_s: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            frame_length_s: 0.010,
            pbch_offset_s: 0.0,
            ia_sweep_duration_s: 0.0,
            dcb_processing_delay_s: 0.0,
        }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_length_s > 0.0) {
            return Err(Error::InvalidConfig(
                "timing: frame_length_s must be positive".into(),
            ));
        }
        if !(0.0 <= self.pbch_offset_s && self.pbch_offset_s < self.frame_length_s) {
            return Err(Error::InvalidConfig(
                "timing: need 0 <= pbch_offset_s < frame_length_s".into(),
            ));
        }
        if !(self.ia_sweep_duration_s >= 0.0 && self.dcb_processing_delay_s >= 0.0) {
            return Err(Error::InvalidConfig(
                "timing: durations must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// First PBCH start at or after `t` (frame boundaries at multiples of
    /// the frame length).
    pub fn next_pbch(&self, t: f64) -> f64 {
        let k = ((t - self.pbch_offset_s) / self.frame_length_s).ceil();
        self.pbch_offset_s + k * self.frame_length_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IaSystem {
    /// Neighbor-aided prediction by the bandit.
    Dcb,
    /// Beam sweep in the next PBCH slot.
    FiveG,
}

/// Time from waking at `wake_t` until the AP can serve.
pub fn ia_wait_time(wake_t: f64, tm: &TimingModel, system: IaSystem) -> Result<f64> {
    if !(wake_t >= 0.0 && wake_t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "wake time {wake_t} must be finite and nonnegative"
        )));
    }
    Ok(match system {
        IaSystem::Dcb => tm.dcb_processing_delay_s,
        IaSystem::FiveG => tm.next_pbch(wake_t) - wake_t + tm.ia_sweep_duration_s,
    })
}
