//! Analytic memory and workload models for SOLSA versus BPTT training.
//!
//! Both profilers are pure functions of the layer shapes and the sequence
//! length. The workload counts are cross-checked in tests against counters
//! accumulated by looping over the actual connection structure.

use serde::{Deserialize, Serialize};

/// Shape summary: per-layer (n_out, n_in) pairs.
fn layer_dims(shape: &[usize]) -> Vec<(usize, usize)> {
    shape.windows(2).map(|w| (w[1], w[0])).collect()
}

fn connections(shape: &[usize]) -> usize {
    layer_dims(shape).iter().map(|(o, i)| o * i).sum()
}

fn neurons(shape: &[usize]) -> usize {
    shape[1..].iter().sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MemoryReport {
    pub solsa_bytes: f64,
    pub bptt_bytes: f64,
    /// SOLSA / BPTT.
    pub ratio: f64,
    pub bytes_per_value: usize,
    pub t_len: usize,
}

/// Analytic training-memory estimate.
///
/// SOLSA stores the parameters, per-connection traces and accumulators, and
/// exactly one step of state history. BPTT stores the parameters, gradient
/// buffers and the full `T`-step unroll history plus reverse-pass
/// transients.
pub fn profile_memory(shape: &[usize], t_len: usize, bytes_per_value: usize) -> MemoryReport {
    let dims = layer_dims(shape);
    let c = connections(shape) as f64;
    let n = neurons(shape) as f64;
    let n_in_total: f64 = dims.iter().map(|(_, i)| *i as f64).sum();

    let params = 3.0 * c;
    // eligibility + grad_w/alpha/beta + monotone log accumulator.
    let learner = 5.0 * c;
    // current state (F, V, O, drive) plus one step of history
    // (F[t-1], filter inputs).
    let state = c + 3.0 * n + c + n_in_total;
    let solsa_values = params + learner + state;

    // history per step: F + V + O + drive for every layer.
    let history_per_step = c + 3.0 * n;
    // reverse transients: gV, gO per neuron and gF per connection.
    let transients = c + 2.0 * n;
    let bptt_values = params + 3.0 * c + t_len as f64 * history_per_step + transients;

    let b = bytes_per_value as f64;
    MemoryReport {
        solsa_bytes: solsa_values * b,
        bptt_bytes: bptt_values * b,
        ratio: solsa_values / bptt_values,
        bytes_per_value,
        t_len,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorkloadReport {
    /// Floating-point operations per time step for one training sequence.
    pub solsa_per_step: Vec<f64>,
    pub bptt_per_step: Vec<f64>,
    pub solsa_max_over_mean: f64,
    /// Final-step cost over the mean forward-only step cost.
    pub bptt_last_over_mean_forward: f64,
}

/// Forward flops for one step: filter, drive, membrane, fire.
fn forward_ops(dims: &[(usize, usize)]) -> f64 {
    let mut ops = 0.0;
    for (idx, &(n_out, n_in)) in dims.iter().enumerate() {
        let c = (n_out * n_in) as f64;
        if idx > 0 {
            ops += 3.0 * c; // alpha*f + beta*o
        }
        ops += 2.0 * c; // drive accumulation
        ops += 5.0 * n_out as f64; // leak, add, reset, fire
    }
    ops
}

/// SOLSA learning flops for one step: surrogate, learning signal,
/// eligibility, weight gradient, log accumulator and kernel gradients.
fn solsa_learn_ops(dims: &[(usize, usize)], adapt_kernels: bool) -> f64 {
    let mut ops = 0.0;
    for (idx, &(n_out, n_in)) in dims.iter().enumerate() {
        let c = (n_out * n_in) as f64;
        ops += 6.0 * n_out as f64; // surrogate gradient
        if idx + 1 < dims.len() {
            let (up_out, up_in) = dims[idx + 1];
            ops += 3.0 * (up_out * up_in) as f64; // mu backprop through w*beta
        }
        ops += n_out as f64; // mu scaling by eps
        ops += 4.0 * c; // eligibility advance
        ops += 2.0 * c; // weight-gradient accumulation
        ops += 2.0 * c; // monotone log accumulator
        ops += c; // g_t reduction
        if adapt_kernels && idx > 0 {
            ops += 8.0 * c; // alpha/beta gradients with the decay factor
        }
    }
    ops
}

/// Parameter-update flops (SGD step plus accumulator reset).
fn apply_ops(dims: &[(usize, usize)]) -> f64 {
    dims.iter().map(|&(o, i)| 6.0 * (o * i) as f64).sum()
}

/// BPTT reverse flops for one history step.
fn bptt_backward_step_ops(dims: &[(usize, usize)]) -> f64 {
    let mut ops = 0.0;
    for (idx, &(n_out, n_in)) in dims.iter().enumerate() {
        let c = (n_out * n_in) as f64;
        ops += 2.0 * c; // spatial go via beta (charged to this layer's fan-in)
        ops += n_out as f64; // reset feedback
        ops += 6.0 * n_out as f64; // surrogate
        ops += 3.0 * n_out as f64; // gv combine
        ops += 2.0 * c; // gw accumulation
        if idx > 0 {
            ops += 4.0 * c; // gf propagation
            ops += 4.0 * c; // galpha/gbeta accumulation
        }
    }
    ops
}

/// Per-time-step workload of one training sequence under each algorithm.
/// SOLSA spreads learning over every step and pays the update cost at its
/// `n_points` scheduled steps; BPTT runs forward-only until the final step,
/// which carries the entire backward pass and the update.
pub fn profile_workload(shape: &[usize], t_len: usize, n_points: usize, adapt_kernels: bool) -> WorkloadReport {
    let dims = layer_dims(shape);
    let fwd = forward_ops(&dims);
    let learn = solsa_learn_ops(&dims, adapt_kernels);
    let apply = apply_ops(&dims);

    let points = spread_points(t_len, n_points.max(1));
    let solsa_per_step: Vec<f64> = (0..t_len)
        .map(|t| fwd + learn + if points.contains(&t) { apply } else { 0.0 })
        .collect();

    let back = bptt_backward_step_ops(&dims);
    let mut bptt_per_step: Vec<f64> = vec![fwd; t_len];
    if let Some(last) = bptt_per_step.last_mut() {
        *last += t_len as f64 * back + apply;
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let max = |v: &[f64]| v.iter().cloned().fold(0.0f64, f64::max);

    WorkloadReport {
        solsa_max_over_mean: max(&solsa_per_step) / mean(&solsa_per_step),
        bptt_last_over_mean_forward: bptt_per_step.last().copied().unwrap_or(0.0) / fwd,
        solsa_per_step,
        bptt_per_step,
    }
}

/// Evenly spread placeholder update points (the workload model does not
/// depend on where the learned schedule lands, only on how many points).
fn spread_points(t_len: usize, n: usize) -> Vec<usize> {
    let mut pts: Vec<usize> = (1..=n).map(|k| k * t_len / (n + 1)).collect();
    pts.push(t_len.saturating_sub(1));
    pts.dedup();
    pts
}
