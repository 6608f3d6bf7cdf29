//! Scheduled weight update: gradient-magnitude logging across an epoch and
//! the update-point selection loop.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Ordered set of time indices at which accumulated gradients are applied.
/// Always contains the sequence end (`seq_len - 1`, zero-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateSchedule {
    points: Vec<usize>,
    n_target: usize,
}

impl UpdateSchedule {
    /// Schedule holding only the sequence end; the "unscheduled" degenerate
    /// case when `n_target` is 0.
    pub fn end_only(seq_len: usize, n_target: usize) -> Result<Self> {
        if seq_len == 0 {
            return Err(Error::Config("sequence length must be positive".into()));
        }
        Ok(UpdateSchedule {
            points: vec![seq_len - 1],
            n_target,
        })
    }

    pub fn from_points(mut points: Vec<usize>, seq_len: usize, n_target: usize) -> Result<Self> {
        points.sort_unstable();
        points.dedup();
        match points.last() {
            Some(&last) if last == seq_len - 1 => {}
            _ => {
                return Err(Error::Config(
                    "schedule must contain the sequence end index".into(),
                ))
            }
        }
        if points.iter().any(|&p| p >= seq_len) {
            return Err(Error::Config("schedule point beyond sequence length".into()));
        }
        Ok(UpdateSchedule { points, n_target })
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn is_update_point(&self, t: usize) -> bool {
        self.points.binary_search(&t).is_ok()
    }

    /// Plain JSON integer array, the on-disk interchange format.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.points)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path, seq_len: usize, n_target: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let points: Vec<usize> = serde_json::from_str(&text)?;
        Self::from_points(points, seq_len, n_target)
    }
}

/// Which set the selection loop returns: the grown schedule `X` (one argmax
/// insertion per epoch) or the final top-N working schedule `x0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleSource {
    X,
    X0,
}

/// Averages per-index gradient magnitudes over all sequences of an epoch.
/// Variable-length sequences align by absolute index.
#[derive(Clone, Debug, Default)]
pub struct GradientLogAccumulator {
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl GradientLogAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_sequence(&mut self, g: &[f64]) {
        if g.len() > self.sums.len() {
            self.sums.resize(g.len(), 0.0);
            self.counts.resize(g.len(), 0);
        }
        for (i, &v) in g.iter().enumerate() {
            self.sums[i] += v;
            self.counts[i] += 1;
        }
    }

    pub fn averages(&self) -> Vec<f64> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect()
    }
}

/// Indices of the `n` largest values, ties broken toward smaller index.
fn top_n_indices(g: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| g[b].partial_cmp(&g[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Update-point selection. `train_epoch` runs one full training epoch under
/// the given working schedule and returns the epoch-averaged `g_t` series;
/// the loop inserts one argmax index per epoch until the schedule holds more
/// than `n_target` points. Duplicate argmax indices fall back to the highest
/// not-yet-selected index so that the loop always terminates.
pub fn build_update_schedule<F>(
    seq_len: usize,
    n_target: usize,
    source: ScheduleSource,
    mut train_epoch: F,
) -> Result<UpdateSchedule>
where
    F: FnMut(&UpdateSchedule) -> Result<Vec<f64>>,
{
    if n_target < 1 {
        return Err(Error::Config("update-point count must be at least 1".into()));
    }
    if n_target >= seq_len {
        return Err(Error::Config(format!(
            "update-point count {n_target} must be below the sequence length {seq_len}"
        )));
    }
    let i_end = seq_len - 1;
    let mut x: BTreeSet<usize> = BTreeSet::from([i_end]);
    let mut x0 = UpdateSchedule::end_only(seq_len, n_target)?;

    while x.len() <= n_target {
        let g = train_epoch(&x0)?;
        if g.is_empty() {
            return Err(Error::Sequencing("training epoch recorded no gradients".into()));
        }
        let top = top_n_indices(&g, n_target);
        let mut pts = top.clone();
        pts.push(i_end);
        x0 = UpdateSchedule::from_points(pts, seq_len, n_target)?;

        let i_max = top_n_indices(&g, 1)[0];
        if !x.insert(i_max) {
            // Argmax already selected; take the best remaining index.
            let order = top_n_indices(&g, g.len());
            match order.into_iter().find(|i| !x.contains(i)) {
                Some(next) => {
                    x.insert(next);
                }
                None => break, // every index exhausted
            }
        }
    }

    match source {
        ScheduleSource::X => UpdateSchedule::from_points(x.into_iter().collect(), seq_len, n_target),
        ScheduleSource::X0 => Ok(x0),
    }
}
