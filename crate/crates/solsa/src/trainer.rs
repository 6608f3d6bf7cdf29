//! End-to-end training and evaluation orchestration.
//!
//! Training is strictly online (batch size 1, sequential in time).
//! Evaluation runs full-length forward passes against immutable parameters
//! and parallelises over sequences when the `parallel` feature is on.

use crate::bptt::{bptt_gradients, truncated_bptt_gradients, unrolled_forward};
use crate::config::{Algorithm, DataSource, RunConfig};
use crate::data::{encode_input_frame, generate_synthetic, load_dataset, Dataset, LabeledSequence};
use crate::dynamics::{network_forward_step, NetworkParams, NetworkState};
use crate::early_stop::{early_stop_step, EarlyStopState};
use crate::error::{Error, Result};
use crate::learner::{apply_update, per_step_loss, LearnerState, ALPHA_MAX};
use crate::metrics::{EpochRow, RunMetrics};
use crate::schedule::{build_update_schedule, GradientLogAccumulator, UpdateSchedule};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub struct TrainOutcome {
    pub params: NetworkParams,
    pub metrics: RunMetrics,
    pub schedule: Option<UpdateSchedule>,
}

/// Materialise the configured data source.
pub fn load_data(config: &RunConfig) -> Result<Dataset> {
    let data = match &config.dataset {
        DataSource::Path { path } => load_dataset(std::path::Path::new(path))?,
        DataSource::Synthetic { synthetic } => generate_synthetic(synthetic, config.seed)?,
    };
    data.validate()?;
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Data("both train and test partitions must be non-empty".into()));
    }
    Ok(data)
}

/// Pre-encode a split into network input currents.
fn encode_split(seqs: &[LabeledSequence], data: &Dataset, scale: f64) -> Result<Vec<LabeledSequence>> {
    seqs.iter()
        .map(|s| {
            let mut values = Vec::with_capacity(s.values().len());
            for frame in s.frames() {
                values.extend(encode_input_frame(frame, data.format, scale)?);
            }
            LabeledSequence::new(values, s.dim(), s.label, s.id.clone())
        })
        .collect()
}

/// Predicted class: argmax of cumulative output spike counts over the full
/// sequence, ties broken toward the smallest class index.
pub fn predict(params: &NetworkParams, seq: &LabeledSequence) -> Result<usize> {
    let mut state = NetworkState::new(params);
    let mut counts = vec![0.0; params.output_dim()];
    for frame in seq.frames() {
        network_forward_step(&mut state, frame, params)?;
        for (c, o) in counts.iter_mut().zip(state.output_spikes()) {
            *c += o;
        }
    }
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Fraction of correctly classified sequences.
pub fn evaluate(params: &NetworkParams, seqs: &[LabeledSequence]) -> Result<f64> {
    if seqs.is_empty() {
        return Ok(0.0);
    }
    let correct: usize = map_sequences(seqs, |s| Ok(usize::from(predict(params, s)? == s.label)))?
        .into_iter()
        .sum();
    Ok(correct as f64 / seqs.len() as f64)
}

#[cfg(feature = "parallel")]
fn map_sequences<T: Send>(
    seqs: &[LabeledSequence],
    f: impl Fn(&LabeledSequence) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    seqs.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_sequences<T>(
    seqs: &[LabeledSequence],
    f: impl Fn(&LabeledSequence) -> Result<T>,
) -> Result<Vec<T>> {
    seqs.iter().map(f).collect()
}

/// Always-sequential evaluation; the benchmark baseline for the parallel
/// path.
pub fn evaluate_sequential(params: &NetworkParams, seqs: &[LabeledSequence]) -> Result<f64> {
    if seqs.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for s in seqs {
        correct += usize::from(predict(params, s)? == s.label);
    }
    Ok(correct as f64 / seqs.len() as f64)
}

/// Train on one sequence presentation with the SOLSA rule. Returns the step
/// index at which processing stopped and the recorded `g_t` series.
#[allow(clippy::too_many_arguments)]
fn solsa_sample(
    params: &mut NetworkParams,
    state: &mut NetworkState,
    learner: &mut LearnerState,
    seq: &LabeledSequence,
    schedule: &UpdateSchedule,
    config: &RunConfig,
    lr_w: f64,
    lr_kernel: f64,
    early_stop_enabled: bool,
) -> Result<(usize, Vec<f64>)> {
    state.reset();
    learner.reset_sequence();
    let n_classes = params.output_dim();
    let t_end = seq.len();
    let mut monitor = EarlyStopState::new(
        n_classes,
        schedule.n_points(),
        config.early_stop_threshold,
        config.early_stop_mode,
        early_stop_enabled,
    );
    let mut stop_at = t_end.saturating_sub(1);
    for t in 0..t_end {
        network_forward_step(state, seq.frame(t), params)?;
        let loss = per_step_loss(state.output_spikes(), seq.label, n_classes)?;
        learner.accumulate_step(state, &loss.de_do, params)?;
        monitor.observe(state.output_spikes());
        let scheduled = schedule.is_update_point(t);
        if scheduled || t + 1 == t_end {
            apply_update(params, learner, lr_w, lr_kernel);
        }
        if scheduled && early_stop_enabled && early_stop_step(&mut monitor, t, schedule, seq.label)? {
            stop_at = t;
            break;
        }
    }
    Ok((stop_at, learner.grad_log.clone()))
}

fn sgd_from_gradients(
    params: &mut NetworkParams,
    grads: &crate::bptt::Gradients,
    lr_w: f64,
    lr_kernel: f64,
) {
    for (l, lp) in params.layers.iter_mut().enumerate() {
        for (w, g) in lp.w.data_mut().iter_mut().zip(grads.w[l].data()) {
            *w -= lr_w * g;
        }
        if !lp.is_input_layer {
            for (a, g) in lp.alpha.data_mut().iter_mut().zip(grads.alpha[l].data()) {
                *a = (*a - lr_kernel * g).clamp(0.0, ALPHA_MAX);
            }
            for (b, g) in lp.beta.data_mut().iter_mut().zip(grads.beta[l].data()) {
                *b -= lr_kernel * g;
            }
        }
    }
}

/// Run the configured training end to end.
pub fn train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let data = load_data(config)?;
    let scale = data.normalization_scale();
    let train_seqs = encode_split(&data.train, &data, scale)?;
    let test_seqs = encode_split(&data.test, &data, scale)?;
    let shape = config.shape(data.dim, data.classes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = NetworkParams::new_random(
        &shape,
        config.lambda,
        config.v_th,
        config.sigma,
        config.alpha_init,
        config.beta_init,
        &mut rng,
    )?;

    let mut metrics = RunMetrics {
        seed: config.seed,
        config_hash: config.hash(),
        ..Default::default()
    };
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            metrics,
            schedule: None,
        });
    }

    let t_max = data.t_max();
    if t_max == 0 {
        return Err(Error::Data("training sequences are empty".into()));
    }
    let started = Instant::now();

    let schedule = if config.algorithm.is_solsa_family() {
        let features = config.algorithm.features();
        let n_points = config.effective_n_points(t_max);
        let mut state = NetworkState::new(&params);
        let mut learner = LearnerState::new(&params, config.gamma, features.adaptive_kernel);

        let schedule = if n_points == 0 {
            UpdateSchedule::end_only(t_max, 0)?
        } else {
            // Schedule-construction phase (early stop held off: the point
            // of these epochs is a complete g_t record).
            let mut order: Vec<usize> = (0..train_seqs.len()).collect();
            let mut g_trace = Vec::new();
            let schedule = build_update_schedule(
                t_max,
                n_points,
                config.schedule_from,
                |working: &UpdateSchedule| {
                    order.shuffle(&mut rng);
                    let mut acc = GradientLogAccumulator::new();
                    for &idx in &order {
                        let (_, g) = solsa_sample(
                            &mut params,
                            &mut state,
                            &mut learner,
                            &train_seqs[idx],
                            working,
                            config,
                            config.lr_w,
                            config.lr_kernel,
                            false,
                        )?;
                        acc.record_sequence(&g);
                    }
                    let avg = acc.averages();
                    g_trace = avg.clone();
                    Ok(avg)
                },
            )?;
            metrics.g_trace = g_trace;
            schedule
        };
        metrics.schedule = schedule.points().to_vec();

        let mut order: Vec<usize> = (0..train_seqs.len()).collect();
        for epoch in 0..config.epochs {
            let epoch_start = Instant::now();
            let decay = config.lr_decay.powi(epoch as i32);
            order.shuffle(&mut rng);
            let mut stop_sum = 0.0;
            for &idx in &order {
                let (stop, _) = solsa_sample(
                    &mut params,
                    &mut state,
                    &mut learner,
                    &train_seqs[idx],
                    &schedule,
                    config,
                    config.lr_w * decay,
                    config.lr_kernel * decay,
                    features.early_stop,
                )?;
                stop_sum += stop as f64;
            }
            metrics.rows.push(EpochRow {
                epoch,
                train_accuracy: evaluate(&params, &train_seqs)?,
                test_accuracy: evaluate(&params, &test_seqs)?,
                mean_stop_point: stop_sum / train_seqs.len() as f64,
                wall_seconds: epoch_start.elapsed().as_secs_f64(),
            });
        }
        Some(schedule)
    } else {
        // BPTT / truncated BPTT baselines: unroll, backprop, one update at
        // the end of every sequence.
        let mut order: Vec<usize> = (0..train_seqs.len()).collect();
        for epoch in 0..config.epochs {
            let epoch_start = Instant::now();
            let decay = config.lr_decay.powi(epoch as i32);
            order.shuffle(&mut rng);
            let mut stop_sum = 0.0;
            for &idx in &order {
                let seq = &train_seqs[idx];
                let history = unrolled_forward(&params, seq)?;
                let grads = match config.algorithm {
                    Algorithm::Bptt => bptt_gradients(&history, &params),
                    Algorithm::Tbptt => truncated_bptt_gradients(&history, &params, config.k_trunc),
                    _ => unreachable!(),
                };
                sgd_from_gradients(&mut params, &grads, config.lr_w * decay, config.lr_kernel * decay);
                stop_sum += (seq.len() - 1) as f64;
            }
            metrics.rows.push(EpochRow {
                epoch,
                train_accuracy: evaluate(&params, &train_seqs)?,
                test_accuracy: evaluate(&params, &test_seqs)?,
                mean_stop_point: stop_sum / train_seqs.len() as f64,
                wall_seconds: epoch_start.elapsed().as_secs_f64(),
            });
        }
        None
    };

    metrics.total_wall_seconds = started.elapsed().as_secs_f64();
    metrics.final_train_accuracy = metrics.rows.last().map(|r| r.train_accuracy).unwrap_or(0.0);
    metrics.final_test_accuracy = metrics.rows.last().map(|r| r.test_accuracy).unwrap_or(0.0);
    Ok(TrainOutcome {
        params,
        metrics,
        schedule,
    })
}
