//! Run metrics: per-epoch CSV rows plus a final JSON summary.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean time step at which training of a sample stopped (equals the
    /// mean sequence end when early stop never fires).
    pub mean_stop_point: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<EpochRow>,
    /// Epoch-averaged gradient-magnitude trace from the schedule phase.
    pub g_trace: Vec<f64>,
    pub schedule: Vec<usize>,
    pub final_train_accuracy: f64,
    pub final_test_accuracy: f64,
    pub total_wall_seconds: f64,
}

impl RunMetrics {
    pub fn csv(&self) -> String {
        let mut out = String::from("epoch,train_accuracy,test_accuracy,mean_stop_point,wall_seconds,seed,config_hash\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch, r.train_accuracy, r.test_accuracy, r.mean_stop_point, r.wall_seconds,
                self.seed, self.config_hash
            )
            .unwrap();
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), self.csv())?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_carries_seed_and_hash() {
        let metrics = RunMetrics {
            seed: 9,
            config_hash: "abc123".into(),
            rows: vec![EpochRow {
                epoch: 0,
                train_accuracy: 0.5,
                test_accuracy: 0.25,
                mean_stop_point: 99.0,
                wall_seconds: 0.1,
            }],
            ..Default::default()
        };
        let csv = metrics.csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("epoch,"));
        let row = lines.next().unwrap();
        assert!(row.contains(",9,abc123"));
    }
}
