//! Per-sample early termination of training based on running prediction
//! accuracy at scheduled update points.

use crate::error::{Error, Result};
use crate::schedule::UpdateSchedule;
use serde::{Deserialize, Serialize};

/// How "correct prediction" is judged against the running spike counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EarlyStopMode {
    /// Target class holds a strict majority of all output spikes:
    /// `A(t) > threshold` with the 0.5 default.
    Majority,
    /// Target count strictly greater than every other class.
    Plurality,
}

/// State of the early-stop monitor for one training-sample presentation.
#[derive(Clone, Debug)]
pub struct EarlyStopState {
    /// Correct-prediction counter `C`.
    pub counter: usize,
    /// Cumulative output spikes per class.
    pub spike_counts: Vec<f64>,
    /// Total number of scheduled update points `N`.
    pub n_points: usize,
    pub threshold: f64,
    pub mode: EarlyStopMode,
    pub enabled: bool,
}

impl EarlyStopState {
    pub fn new(n_classes: usize, n_points: usize, threshold: f64, mode: EarlyStopMode, enabled: bool) -> Self {
        EarlyStopState {
            counter: 0,
            spike_counts: vec![0.0; n_classes],
            n_points,
            threshold,
            mode,
            enabled,
        }
    }

    /// Fold in one step's output spikes.
    pub fn observe(&mut self, output_spikes: &[f64]) {
        for (c, o) in self.spike_counts.iter_mut().zip(output_spikes) {
            *c += o;
        }
    }
}

/// Target-class share of all output spikes so far; 0 when nothing has
/// spiked yet (no credit before evidence).
pub fn accuracy_fraction(spike_counts: &[f64], target: usize) -> f64 {
    let total: f64 = spike_counts.iter().sum();
    if total <= 0.0 {
        0.0
    } else {
        spike_counts[target] / total
    }
}

/// Evaluate the monitor at update point `t`. Increments `C` on a correct
/// prediction and reports `stop` once `2C >= N`.
pub fn early_stop_step(
    state: &mut EarlyStopState,
    t: usize,
    schedule: &UpdateSchedule,
    target: usize,
) -> Result<bool> {
    if !schedule.is_update_point(t) {
        return Err(Error::Sequencing(format!(
            "early stop evaluated at t = {t}, which is not an update point"
        )));
    }
    if !state.enabled {
        return Ok(false);
    }
    let correct = match state.mode {
        EarlyStopMode::Majority => accuracy_fraction(&state.spike_counts, target) > state.threshold,
        EarlyStopMode::Plurality => {
            let mine = state.spike_counts[target];
            mine > 0.0
                && state
                    .spike_counts
                    .iter()
                    .enumerate()
                    .all(|(k, &c)| k == target || c < mine)
        }
    };
    if correct {
        state.counter += 1;
    }
    Ok(2 * state.counter >= state.n_points)
}
