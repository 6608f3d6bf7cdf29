//! Run configuration: algorithm selection, hyperparameters, data source and
//! the feature matrix behind the SOLSA ablation variants.

use crate::data::SyntheticSpec;
use crate::early_stop::EarlyStopMode;
use crate::error::{Error, Result};
use crate::schedule::ScheduleSource;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Solsa,
    SolsaVariant1,
    SolsaVariant2,
    SolsaVariant3,
    Bptt,
    Tbptt,
}

/// Feature set of one learning-algorithm column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Features {
    pub synapse_filter: bool,
    pub adaptive_weight: bool,
    pub adaptive_kernel: bool,
    pub impact_of_reset: bool,
    pub scheduled_updates: bool,
    pub early_stop: bool,
}

impl Algorithm {
    pub fn features(self) -> Features {
        match self {
            Algorithm::Solsa => Features {
                synapse_filter: true,
                adaptive_weight: true,
                adaptive_kernel: true,
                impact_of_reset: true,
                scheduled_updates: true,
                early_stop: true,
            },
            Algorithm::SolsaVariant1 => Features {
                synapse_filter: true,
                adaptive_weight: true,
                adaptive_kernel: false,
                impact_of_reset: true,
                scheduled_updates: true,
                early_stop: false,
            },
            Algorithm::SolsaVariant2 => Features {
                synapse_filter: true,
                adaptive_weight: true,
                adaptive_kernel: true,
                impact_of_reset: true,
                scheduled_updates: true,
                early_stop: false,
            },
            Algorithm::SolsaVariant3 => Features {
                synapse_filter: true,
                adaptive_weight: true,
                adaptive_kernel: false,
                impact_of_reset: true,
                scheduled_updates: true,
                early_stop: true,
            },
            Algorithm::Bptt | Algorithm::Tbptt => Features {
                synapse_filter: true,
                adaptive_weight: true,
                adaptive_kernel: true,
                impact_of_reset: true,
                scheduled_updates: false,
                early_stop: false,
            },
        }
    }

    pub fn is_solsa_family(self) -> bool {
        matches!(
            self,
            Algorithm::Solsa | Algorithm::SolsaVariant1 | Algorithm::SolsaVariant2 | Algorithm::SolsaVariant3
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Path { path: String },
    Synthetic { synthetic: SyntheticSpec },
}

fn default_lambda() -> f64 {
    0.9
}
fn default_v_th() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    0.4
}
fn default_gamma() -> f64 {
    0.9
}
fn default_kernel_init() -> f64 {
    0.9
}
fn default_lr_w() -> f64 {
    1e-3
}
fn default_lr_kernel() -> f64 {
    1e-4
}
fn default_k_trunc() -> usize {
    20
}
fn default_lr_decay() -> f64 {
    1.0
}
fn default_threshold() -> f64 {
    0.5
}
fn default_mode() -> EarlyStopMode {
    EarlyStopMode::Majority
}
fn default_schedule_source() -> ScheduleSource {
    ScheduleSource::X
}
fn default_precision() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Hidden layer sizes; input/output widths come from the dataset.
    pub hidden: Vec<usize>,
    pub algorithm: Algorithm,
    pub epochs: usize,
    pub seed: u64,
    pub dataset: DataSource,

    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_v_th")]
    pub v_th: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_kernel_init")]
    pub alpha_init: f64,
    #[serde(default = "default_kernel_init")]
    pub beta_init: f64,
    #[serde(default = "default_lr_w")]
    pub lr_w: f64,
    #[serde(default = "default_lr_kernel")]
    pub lr_kernel: f64,
    /// Per-epoch multiplicative decay applied to both learning rates.
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,

    /// Number of update points N. `None`: the 1:50 rule `max(1, T/50)`;
    /// `Some(0)`: unscheduled (end-of-sequence updates only).
    #[serde(default)]
    pub update_points: Option<usize>,
    #[serde(default = "default_schedule_source")]
    pub schedule_from: ScheduleSource,

    /// Truncation window for `tbptt`.
    #[serde(default = "default_k_trunc")]
    pub k_trunc: usize,

    #[serde(default = "default_threshold")]
    pub early_stop_threshold: f64,
    #[serde(default = "default_mode")]
    pub early_stop_mode: EarlyStopMode,

    /// Value width in bits for the analytic memory model (32 or 64).
    #[serde(default = "default_precision")]
    pub precision_bits: usize,

    #[serde(default)]
    pub out_dir: Option<String>,
}

impl RunConfig {
    /// Validate everything up front; all problems are reported at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            problems.push(format!("lambda must be in (0,1), got {}", self.lambda));
        }
        if self.v_th <= 0.0 {
            problems.push(format!("v_th must be > 0, got {}", self.v_th));
        }
        if self.sigma <= 0.0 {
            problems.push(format!("sigma must be > 0, got {}", self.sigma));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            problems.push(format!("gamma must be in (0,1), got {}", self.gamma));
        }
        if !(0.0..1.0).contains(&self.alpha_init) {
            problems.push(format!("alpha_init must be in [0,1), got {}", self.alpha_init));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            problems.push(format!("lr_decay must be in (0,1], got {}", self.lr_decay));
        }
        if self.algorithm == Algorithm::Tbptt && self.k_trunc == 0 {
            problems.push("k_trunc must be at least 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.early_stop_threshold) {
            problems.push(format!(
                "early_stop_threshold must be in [0,1], got {}",
                self.early_stop_threshold
            ));
        }
        if self.precision_bits != 32 && self.precision_bits != 64 {
            problems.push(format!("precision_bits must be 32 or 64, got {}", self.precision_bits));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Effective update-point count for sequences of length `t_max`.
    pub fn effective_n_points(&self, t_max: usize) -> usize {
        match self.update_points {
            Some(n) => n,
            None => (t_max / 50).max(1),
        }
    }

    /// Full layer-size chain for a dataset with the given geometry.
    pub fn shape(&self, input_dim: usize, n_classes: usize) -> Vec<usize> {
        let mut shape = Vec::with_capacity(self.hidden.len() + 2);
        shape.push(input_dim);
        shape.extend_from_slice(&self.hidden);
        shape.push(n_classes);
        shape
    }

    /// Hash of the canonical JSON encoding; stamped into metrics rows.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Apply a `key=value` override onto the JSON representation. Nested
    /// keys use dots (`synthetic.steps=200` targets the dataset spec).
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
        let mut root = serde_json::to_value(self)?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            node = node
                .get_mut(part)
                .ok_or_else(|| Error::Config(format!("unknown config key '{key}'")))?;
        }
        let leaf = parts.last().unwrap();
        let parsed: serde_json::Value = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        match node {
            serde_json::Value::Object(map) => {
                map.insert(leaf.to_string(), parsed);
            }
            _ => return Err(Error::Config(format!("config key '{key}' is not settable"))),
        }
        let config: RunConfig = serde_json::from_value(root)
            .map_err(|e| Error::Config(format!("override '{assignment}' rejected: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SyntheticTask, SyntheticSpec};

    fn base_config() -> RunConfig {
        RunConfig {
            hidden: vec![20, 20],
            algorithm: Algorithm::Solsa,
            epochs: 5,
            seed: 1,
            dataset: DataSource::Synthetic {
                synthetic: SyntheticSpec {
                    task: SyntheticTask::Order,
                    dim: 4,
                    classes: 2,
                    steps: 100,
                    train: 20,
                    test: 10,
                    noise: 0.2,
                },
            },
            lambda: default_lambda(),
            v_th: default_v_th(),
            sigma: default_sigma(),
            gamma: default_gamma(),
            alpha_init: default_kernel_init(),
            beta_init: default_kernel_init(),
            lr_w: default_lr_w(),
            lr_kernel: default_lr_kernel(),
            lr_decay: default_lr_decay(),
            update_points: None,
            schedule_from: default_schedule_source(),
            k_trunc: default_k_trunc(),
            early_stop_threshold: default_threshold(),
            early_stop_mode: default_mode(),
            precision_bits: 64,
            out_dir: None,
        }
    }

    #[test]
    fn feature_matrix_matches_algorithm_columns() {
        // Six columns: SOLSA, E-prop, OTTT, variants 1-3. The reference
        // algorithms are not implemented here but their feature rows pin
        // down the variant semantics.
        let full = Algorithm::Solsa.features();
        assert!(full.synapse_filter && full.adaptive_kernel && full.impact_of_reset);
        assert!(full.scheduled_updates && full.early_stop && full.adaptive_weight);

        let eprop = Features {
            synapse_filter: false,
            adaptive_weight: true,
            adaptive_kernel: false,
            impact_of_reset: true,
            scheduled_updates: false,
            early_stop: false,
        };
        let ottt = Features {
            synapse_filter: false,
            adaptive_weight: true,
            adaptive_kernel: false,
            impact_of_reset: false,
            scheduled_updates: false,
            early_stop: false,
        };
        assert_ne!(eprop, ottt);

        let v1 = Algorithm::SolsaVariant1.features();
        assert!(v1.synapse_filter && !v1.adaptive_kernel && !v1.early_stop && v1.scheduled_updates);
        let v2 = Algorithm::SolsaVariant2.features();
        assert!(v2.adaptive_kernel && !v2.early_stop && v2.scheduled_updates);
        let v3 = Algorithm::SolsaVariant3.features();
        assert!(!v3.adaptive_kernel && v3.early_stop && v3.scheduled_updates);
        assert!(v1.impact_of_reset && v2.impact_of_reset && v3.impact_of_reset);
    }

    #[test]
    fn validation_collects_all_problems() {
        let mut config = base_config();
        config.lambda = 1.5;
        config.sigma = -1.0;
        let err = config.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lambda") && msg.contains("sigma"));
    }

    #[test]
    fn one_in_fifty_default() {
        let config = base_config();
        assert_eq!(config.effective_n_points(100), 2);
        assert_eq!(config.effective_n_points(30), 1);
        assert_eq!(config.effective_n_points(1000), 20);
        let mut config = config;
        config.update_points = Some(7);
        assert_eq!(config.effective_n_points(100), 7);
    }

    #[test]
    fn overrides_and_hash() {
        let config = base_config();
        let tweaked = config.with_override("lr_w=0.01").unwrap();
        assert_eq!(tweaked.lr_w, 0.01);
        assert_ne!(config.hash(), tweaked.hash());
        let nested = config.with_override("dataset.synthetic.steps=200").unwrap();
        match nested.dataset {
            DataSource::Synthetic { synthetic } => assert_eq!(synthetic.steps, 200),
            _ => panic!("dataset type changed"),
        }
        assert!(config.with_override("lambda=7").is_err());
        assert!(config.with_override("nonsense").is_err());
    }
}
