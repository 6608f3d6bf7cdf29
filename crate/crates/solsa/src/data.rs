//! Dataset loading, synthetic task generation and input framing.
//!
//! On-disk layout: a directory holding `meta.json` (keys `dim`, `classes`,
//! `format`, `class_names`) plus `train.csv` / `test.csv` where each row is
//! `label,v(0,0),...,v(0,D-1),v(1,0),...` -- time-major flattened floats,
//! UTF-8, LF line endings. Rows may differ in sequence length.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Current,
    Spikes,
}

/// A `T x D` sequence of input currents (or spikes) with a class label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    values: Vec<f64>, // time-major, length T * D
    dim: usize,
    pub label: usize,
    pub id: String,
}

impl LabeledSequence {
    pub fn new(values: Vec<f64>, dim: usize, label: usize, id: String) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("sequence dimension must be positive".into()));
        }
        if values.len() % dim != 0 {
            return Err(Error::Data(format!(
                "sequence {id}: {} values not divisible by dimension {dim}",
                values.len()
            )));
        }
        Ok(LabeledSequence {
            values,
            dim,
            label,
            id,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Meta {
    dim: usize,
    classes: usize,
    format: InputFormat,
    class_names: Vec<String>,
}

/// Train/test partitions plus the shared geometry.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<LabeledSequence>,
    pub test: Vec<LabeledSequence>,
    pub dim: usize,
    pub classes: usize,
    pub format: InputFormat,
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Longest training sequence.
    pub fn t_max(&self) -> usize {
        self.train.iter().map(|s| s.len()).max().unwrap_or(0)
    }

    /// Amplitude-normalisation scale from the train split only:
    /// `1 / max |v|`, or 1 when the split is silent or spike-formatted.
    pub fn normalization_scale(&self) -> f64 {
        if self.format == InputFormat::Spikes {
            return 1.0;
        }
        let max = self
            .train
            .iter()
            .flat_map(|s| s.values.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        if max > 0.0 {
            1.0 / max
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (split, seqs) in [("train", &self.train), ("test", &self.test)] {
            for s in seqs {
                if s.dim != self.dim {
                    return Err(Error::Data(format!(
                        "{split} sequence {}: dimension {} != dataset dimension {}",
                        s.id, s.dim, self.dim
                    )));
                }
                if s.label >= self.classes {
                    return Err(Error::Data(format!(
                        "{split} sequence {}: label {} out of range for {} classes",
                        s.id, s.label, self.classes
                    )));
                }
                if self.format == InputFormat::Spikes {
                    if let Some(v) = s.values.iter().find(|v| **v != 0.0 && **v != 1.0) {
                        return Err(Error::Data(format!(
                            "{split} sequence {}: non-binary value {v} under spikes format",
                            s.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = Meta {
            dim: self.dim,
            classes: self.classes,
            format: self.format,
            class_names: self.class_names.clone(),
        };
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        for (name, seqs) in [("train.csv", &self.train), ("test.csv", &self.test)] {
            let mut out = String::new();
            for s in seqs {
                write!(out, "{}", s.label).unwrap();
                for v in &s.values {
                    write!(out, ",{v}").unwrap();
                }
                out.push('\n');
            }
            std::fs::write(dir.join(name), out)?;
        }
        Ok(())
    }
}

fn parse_split(path: &Path, dim: usize, classes: usize, split: &str) -> Result<Vec<LabeledSequence>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut seqs = Vec::new();
    for (row, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let label: usize = parts
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|e| Error::Data(format!("{split} row {row}: bad label ({e})")))?;
        if label >= classes {
            return Err(Error::Data(format!(
                "{split} row {row}: label {label} >= class count {classes}"
            )));
        }
        let values: Vec<f64> = parts
            .enumerate()
            .map(|(col, p)| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("{split} row {row} column {}: bad float ({e})", col + 1)))
            })
            .collect::<Result<_>>()?;
        if values.len() % dim != 0 {
            return Err(Error::Data(format!(
                "{split} row {row}: {} values not divisible by dimension {dim}",
                values.len()
            )));
        }
        seqs.push(LabeledSequence::new(values, dim, label, format!("{split}-{row}"))?);
    }
    Ok(seqs)
}

/// Load a dataset directory (see module docs for the layout).
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join("meta.json");
    let text = std::fs::read_to_string(&meta_path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta: Meta =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("bad meta.json: {e}")))?;
    if meta.dim == 0 || meta.classes == 0 {
        return Err(Error::Data("meta.json: dim and classes must be positive".into()));
    }
    let dataset = Dataset {
        train: parse_split(&dir.join("train.csv"), meta.dim, meta.classes, "train")?,
        test: parse_split(&dir.join("test.csv"), meta.dim, meta.classes, "test")?,
        dim: meta.dim,
        classes: meta.classes,
        format: meta.format,
        class_names: meta.class_names,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Scale a raw frame into input currents. `spikes` frames pass through but
/// must be binary.
pub fn encode_input_frame(raw: &[f64], format: InputFormat, scale: f64) -> Result<Vec<f64>> {
    match format {
        InputFormat::Current => Ok(raw.iter().map(|v| v * scale).collect()),
        InputFormat::Spikes => {
            if let Some(v) = raw.iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(Error::Data(format!("non-binary value {v} under spikes format")));
            }
            Ok(raw.to_vec())
        }
    }
}

/// Synthetic task families. Desk-scale stand-ins for the multivariate
/// time-series benchmarks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticTask {
    /// Class-identifying pulse burst inside the first 20% of the sequence,
    /// noise after; rewards early stopping.
    EarlyCue,
    /// Context burst on channels 0/1 at 70% of the sequence, cue burst on
    /// channels 2/3 inside the last 20%; class = parity of the channel
    /// pair, so neither burst alone is informative and the gap between
    /// them is wider than a 20-step truncation window.
    LateCue,
    /// Two bursts on two channels; class = their temporal order.
    Order,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub task: SyntheticTask,
    pub dim: usize,
    pub classes: usize,
    pub steps: usize,
    pub train: usize,
    pub test: usize,
    /// Uniform noise amplitude outside the informative bursts.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_noise() -> f64 {
    0.2
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dim == 0 {
            problems.push("dim must be positive".to_string());
        }
        if self.classes < 2 {
            problems.push("classes must be at least 2".to_string());
        }
        if self.steps < 20 {
            problems.push("steps must be at least 20".to_string());
        }
        if self.train == 0 || self.test == 0 {
            problems.push("train and test sizes must be positive".to_string());
        }
        match self.task {
            SyntheticTask::LateCue | SyntheticTask::Order => {
                let need = if self.task == SyntheticTask::LateCue { 4 } else { 2 };
                if self.dim < need {
                    problems.push(format!("this task needs dim >= {need}"));
                }
                if self.classes != 2 {
                    problems.push("late-cue and order tasks are binary".to_string());
                }
            }
            SyntheticTask::EarlyCue => {}
        }
        if self.task == SyntheticTask::LateCue && self.steps < 150 {
            problems.push("late-cue needs steps >= 150 to fit the long gap".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

const BURST_AMP: f64 = 2.0;

fn early_cue_sample(spec: &SyntheticSpec, class: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (t_len, d) = (spec.steps, spec.dim);
    let mut values = vec![0.0; t_len * d];
    let cue_zone = t_len / 5;
    let width = (t_len / 20).max(3);
    let start = rng.gen_range(0..cue_zone.saturating_sub(width).max(1));
    let channel = class % d;
    for t in start..(start + width).min(t_len) {
        values[t * d + channel] = BURST_AMP;
    }
    if spec.noise > 0.0 {
        for t in cue_zone..t_len {
            for j in 0..d {
                values[t * d + j] = rng.gen_range(0.0..spec.noise);
            }
        }
    }
    values
}

fn late_cue_sample(spec: &SyntheticSpec, class: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (t_len, d) = (spec.steps, spec.dim);
    let mut values = vec![0.0; t_len * d];
    let zone = 4 * t_len / 5;
    let width = (t_len / 40).max(3);
    // The context burst A (channels 0/1) sits at 70% of the sequence; the
    // decisive cue burst B (channels 2/3) falls in the last fifth with a
    // readout tail before the sequence ends. The gap between the bursts is
    // wider than a 20-step truncation window plus the burst width, and the
    // class is the parity of the channel pair: neither burst alone carries
    // any label information.
    let a_start = rng.gen_range(7 * t_len / 10..7 * t_len / 10 + 3);
    let b_start = rng.gen_range(zone + 21..zone + 24);
    debug_assert!(b_start > a_start + width + 20);
    debug_assert!(b_start + width < t_len);
    let ch_a = rng.gen_range(0..2usize);
    let ch_b = 2 + if class == 0 { ch_a } else { 1 - ch_a };
    for t in a_start..a_start + width {
        values[t * d + ch_a] = BURST_AMP;
    }
    for t in b_start..b_start + width {
        values[t * d + ch_b] = BURST_AMP;
    }
    if spec.noise > 0.0 {
        // Additive background noise on every channel at every step: it is
        // negligible at burst time but drowns the faint decayed residue of
        // burst A in any direct linear readout taken at the end of the
        // sequence.
        for t in 0..t_len {
            for j in 0..d {
                values[t * d + j] += rng.gen_range(-spec.noise..spec.noise);
            }
        }
    }
    values
}

fn order_sample(spec: &SyntheticSpec, class: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (t_len, d) = (spec.steps, spec.dim);
    let mut values = vec![0.0; t_len * d];
    let width = (t_len / 20).max(3);
    let first = rng.gen_range(t_len / 10..3 * t_len / 10);
    let second = rng.gen_range(11 * t_len / 20..3 * t_len / 4);
    let (ch_first, ch_second) = if class == 0 { (0, 1) } else { (1, 0) };
    for t in first..(first + width).min(t_len) {
        values[t * d + ch_first] = BURST_AMP;
    }
    for t in second..(second + width).min(t_len) {
        values[t * d + ch_second] = BURST_AMP;
    }
    if spec.noise > 0.0 {
        for t in 0..t_len {
            for j in 2..d {
                values[t * d + j] = rng.gen_range(0.0..spec.noise);
            }
        }
    }
    values
}

/// Deterministic synthetic dataset with balanced classes.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |count: usize, split: &str| -> Result<Vec<LabeledSequence>> {
        (0..count)
            .map(|s| {
                let class = s % spec.classes;
                let values = match spec.task {
                    SyntheticTask::EarlyCue => early_cue_sample(spec, class, &mut rng),
                    SyntheticTask::LateCue => late_cue_sample(spec, class, &mut rng),
                    SyntheticTask::Order => order_sample(spec, class, &mut rng),
                };
                LabeledSequence::new(values, spec.dim, class, format!("{split}-{s}"))
            })
            .collect()
    };
    let dataset = Dataset {
        train: make(spec.train, "train")?,
        test: make(spec.test, "test")?,
        dim: spec.dim,
        classes: spec.classes,
        format: InputFormat::Current,
        class_names: (0..spec.classes).map(|k| format!("class-{k}")).collect(),
    };
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn order_spec() -> SyntheticSpec {
        SyntheticSpec {
            task: SyntheticTask::Order,
            dim: 4,
            classes: 2,
            steps: 100,
            train: 20,
            test: 10,
            noise: 0.2,
        }
    }

    #[test]
    fn same_seed_identical_datasets() {
        let a = generate_synthetic(&order_spec(), 42).unwrap();
        let b = generate_synthetic(&order_spec(), 42).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = generate_synthetic(&order_spec(), 43).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn early_cue_zero_noise_is_count_separable() {
        // With zero noise a count-threshold classifier over the first 20%
        // of input frames is perfect: the cue channel identifies the class.
        let spec = SyntheticSpec {
            task: SyntheticTask::EarlyCue,
            dim: 4,
            classes: 3,
            steps: 100,
            train: 30,
            test: 30,
            noise: 0.0,
        };
        let data = generate_synthetic(&spec, 7).unwrap();
        for s in data.train.iter().chain(&data.test) {
            let mut counts = vec![0.0; spec.dim];
            for t in 0..spec.steps / 5 {
                for j in 0..spec.dim {
                    counts[j] += s.frame(t)[j];
                }
            }
            let best = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(best, s.label % spec.dim, "sequence {}", s.id);
        }
    }

    #[test]
    fn late_cue_bursts_sit_in_last_fifth_with_long_gap() {
        let spec = SyntheticSpec {
            task: SyntheticTask::LateCue,
            dim: 4,
            classes: 2,
            steps: 200,
            train: 40,
            test: 20,
            noise: 0.0,
        };
        let data = generate_synthetic(&spec, 3).unwrap();
        for s in data.train.iter().chain(&data.test) {
            let active: Vec<usize> = (0..s.len())
                .filter(|&t| s.frame(t).iter().any(|&v| v >= BURST_AMP))
                .collect();
            // Two bursts separated by a gap longer than the 20-step window;
            // the decisive second burst sits in the last fifth.
            let first_end = active.iter().zip(active.iter().skip(1)).find(|(a, b)| **b - **a > 1);
            let (a_end, b_start) = first_end.map(|(a, b)| (*a, *b)).expect("single blob");
            assert!(b_start >= 160, "cue burst outside last fifth");
            assert!(b_start - a_end > 20, "gap too short: {a_end}..{b_start}");
        }
    }

    #[test]
    fn round_trip_save_load() {
        let data = generate_synthetic(&order_spec(), 5).unwrap();
        let dir = tempdir().unwrap();
        data.save(dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.dim, data.dim);
        assert_eq!(loaded.classes, data.classes);
        assert_eq!(loaded.train.len(), data.train.len());
        for (a, b) in data.train.iter().zip(&loaded.train) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn loader_reports_bad_rows() {
        let dir = tempdir().unwrap();
        std::fs::write(
            dir.path().join("meta.json"),
            r#"{"dim":2,"classes":2,"format":"current","class_names":["a","b"]}"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("train.csv"), "0,0.1,0.2\n1,0.3\n").unwrap();
        std::fs::write(dir.path().join("test.csv"), "0,0.5,0.5\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");

        std::fs::write(dir.path().join("train.csv"), "2,0.1,0.2\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("label 2"), "{err}");

        // Variable sequence lengths are fine when divisible by dim.
        std::fs::write(dir.path().join("train.csv"), "0,0.1,0.2\n1,0.3,0.4,0.5,0.6\n").unwrap();
        let data = load_dataset(dir.path()).unwrap();
        assert_eq!(data.train[0].len(), 1);
        assert_eq!(data.train[1].len(), 2);
    }

    #[test]
    fn encode_frame_rules() {
        assert_eq!(
            encode_input_frame(&[2.0, -4.0], InputFormat::Current, 0.25).unwrap(),
            vec![0.5, -1.0]
        );
        assert!(encode_input_frame(&[0.5], InputFormat::Spikes, 1.0).is_err());
        assert_eq!(
            encode_input_frame(&[1.0, 0.0], InputFormat::Spikes, 1.0).unwrap(),
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn normalization_from_train_split_only() {
        let mut data = generate_synthetic(&order_spec(), 5).unwrap();
        // Plant a huge value in the test split; the scale must not move.
        let scale_before = data.normalization_scale();
        let mut values = data.test[0].values().to_vec();
        values[0] = 100.0;
        data.test[0] = LabeledSequence::new(values, data.dim, data.test[0].label, "t".into()).unwrap();
        assert_eq!(data.normalization_scale(), scale_before);
        assert_eq!(scale_before, 1.0 / BURST_AMP);
    }
}
