//! Forward model: LIF membrane dynamics with soft reset, per-connection
//! first-order IIR synapse filters, Heaviside spike generation and the
//! Gaussian surrogate gradient.
//!
//! The input layer is current-based: its synaptic potential is the raw input
//! frame (`F[i][j] = x[j]`), its filter coefficients are unused, and only its
//! weights are trainable.

use crate::error::{Error, Result};
use crate::mat::Mat;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Parameters of one fully connected layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerParams {
    /// Synaptic weights, `[n_out x n_in]`.
    pub w: Mat,
    /// Filter feedback coefficients, `[n_out x n_in]`, each in `[0, 1)`.
    pub alpha: Mat,
    /// Filter input coefficients, `[n_out x n_in]`.
    pub beta: Mat,
    /// Input layer receives raw currents and bypasses the synapse filter.
    pub is_input_layer: bool,
}

impl LayerParams {
    pub fn n_out(&self) -> usize {
        self.w.rows()
    }

    pub fn n_in(&self) -> usize {
        self.w.cols()
    }
}

/// All trainable quantities plus the shared global constants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
    /// Membrane leak factor, `0 < lambda < 1`.
    pub lambda: f64,
    /// Firing threshold, `> 0`.
    pub v_th: f64,
    /// Surrogate-gradient noise width, `> 0`.
    pub sigma: f64,
}

impl NetworkParams {
    /// Build a network of the given shape (`shape[0]` is the input
    /// dimension, `shape.last()` the class count). Weights are drawn
    /// uniformly from `[-k, k]` with `k = 1/sqrt(n_in)`; filter kernels are
    /// initialised to the given constants.
    pub fn new_random(
        shape: &[usize],
        lambda: f64,
        v_th: f64,
        sigma: f64,
        alpha_init: f64,
        beta_init: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if shape.len() < 2 {
            return Err(Error::Config(
                "network shape needs at least an input and an output size".into(),
            ));
        }
        let mut layers = Vec::with_capacity(shape.len() - 1);
        for l in 1..shape.len() {
            let (n_in, n_out) = (shape[l - 1], shape[l]);
            let k = 1.0 / (n_in as f64).sqrt();
            layers.push(LayerParams {
                w: Mat::from_fn(n_out, n_in, |_, _| rng.gen_range(-k..=k)),
                alpha: Mat::filled(n_out, n_in, alpha_init),
                beta: Mat::filled(n_out, n_in, beta_init),
                is_input_layer: l == 1,
            });
        }
        let params = NetworkParams {
            layers,
            lambda,
            v_th,
            sigma,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda must be in (0,1), got {}", self.lambda)));
        }
        if self.v_th <= 0.0 {
            return Err(Error::Config(format!("v_th must be > 0, got {}", self.v_th)));
        }
        if self.sigma <= 0.0 {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        let mut prev_out = None;
        for (l, layer) in self.layers.iter().enumerate() {
            if !layer.w.same_shape(&layer.alpha) || !layer.w.same_shape(&layer.beta) {
                return Err(Error::Shape(format!("layer {l}: w/alpha/beta shapes differ")));
            }
            if layer.alpha.data().iter().any(|&a| !(0.0..1.0).contains(&a)) {
                return Err(Error::Config(format!("layer {l}: alpha entries must lie in [0,1)")));
            }
            if let Some(prev) = prev_out {
                if layer.n_in() != prev {
                    return Err(Error::Shape(format!(
                        "layer {l}: n_in {} does not match previous layer n_out {prev}",
                        layer.n_in()
                    )));
                }
            }
            prev_out = Some(layer.n_out());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("no layers").n_out()
    }

    /// Total connection count across layers.
    pub fn n_connections(&self) -> usize {
        self.layers.iter().map(|l| l.n_out() * l.n_in()).sum()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let params: NetworkParams = serde_json::from_str(&text)?;
        params.validate()?;
        Ok(params)
    }
}

/// Per-layer slice of the network state. One step of history (`f_prev`,
/// `filter_in`) is retained for the learner; nothing older is ever stored.
#[derive(Clone, Debug)]
pub struct LayerState {
    /// Membrane potentials `V[t]`.
    pub v: Vec<f64>,
    /// Binary outputs `O[t]` stored as 0.0/1.0.
    pub o: Vec<f64>,
    /// Synaptic potentials `F[t]`.
    pub f: Mat,
    /// Synaptic potentials of the previous step, `F[t-1]`.
    pub f_prev: Mat,
    /// The filter input consumed this step: previous-layer spikes
    /// `O^{l-1}[t-1]` (or the raw frame for the input layer).
    pub filter_in: Vec<f64>,
    /// Per-neuron drive `sum_j w_ij F_ij[t]` of the current step.
    pub drive: Vec<f64>,
}

impl LayerState {
    fn new(n_out: usize, n_in: usize) -> Self {
        LayerState {
            v: vec![0.0; n_out],
            o: vec![0.0; n_out],
            f: Mat::zeros(n_out, n_in),
            f_prev: Mat::zeros(n_out, n_in),
            filter_in: vec![0.0; n_in],
            drive: vec![0.0; n_out],
        }
    }
}

/// Streaming network state; advances one frame at a time.
#[derive(Clone, Debug)]
pub struct NetworkState {
    pub layers: Vec<LayerState>,
    /// Number of frames consumed so far.
    pub t: usize,
}

impl NetworkState {
    pub fn new(params: &NetworkParams) -> Self {
        NetworkState {
            layers: params
                .layers
                .iter()
                .map(|l| LayerState::new(l.n_out(), l.n_in()))
                .collect(),
            t: 0,
        }
    }

    pub fn reset(&mut self) {
        for layer in &mut self.layers {
            layer.v.iter_mut().for_each(|x| *x = 0.0);
            layer.o.iter_mut().for_each(|x| *x = 0.0);
            layer.f.fill(0.0);
            layer.f_prev.fill(0.0);
            layer.filter_in.iter_mut().for_each(|x| *x = 0.0);
            layer.drive.iter_mut().for_each(|x| *x = 0.0);
        }
        self.t = 0;
    }

    /// Output-layer spikes of the current step.
    pub fn output_spikes(&self) -> &[f64] {
        &self.layers.last().expect("no layers").o
    }
}

/// One step of the per-connection synapse filter (first-order IIR).
#[inline]
pub fn synapse_filter_step(f_prev: f64, alpha: f64, beta: f64, spike_in: f64) -> f64 {
    alpha * f_prev + beta * spike_in
}

/// Leaky integration with soft reset via threshold subtraction.
#[inline]
pub fn membrane_step(v_prev: f64, o_prev: f64, drive: f64, lambda: f64, v_th: f64) -> f64 {
    lambda * v_prev + drive - v_th * o_prev
}

/// Heaviside firing; equality with the threshold does not fire.
#[inline]
pub fn heaviside_fire(v: f64, v_th: f64) -> f64 {
    if v > v_th {
        1.0
    } else {
        0.0
    }
}

/// Derivative of the Gaussian-noise firing probability
/// `P = erfc((v_th - v) / (sqrt(2) sigma)) / 2` with respect to `v`:
/// a Gaussian density centred on the threshold.
#[inline]
pub fn surrogate_gradient(v: f64, v_th: f64, sigma: f64) -> f64 {
    let z = (v_th - v) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Firing probability of the noisy threshold model; the smooth relaxation
/// of [`heaviside_fire`] whose derivative is [`surrogate_gradient`].
#[inline]
pub fn firing_probability(v: f64, v_th: f64, sigma: f64) -> f64 {
    0.5 * libm::erfc((v_th - v) / (std::f64::consts::SQRT_2 * sigma))
}

/// Advance one layer by a single frame. For the input layer `inputs` is the
/// raw current frame and `F[i][j] := inputs[j]`; otherwise `inputs` must be
/// the previous layer's spikes from the previous step.
pub fn layer_forward_step(
    state: &mut LayerState,
    inputs: &[f64],
    params: &LayerParams,
    lambda: f64,
    v_th: f64,
) -> Result<()> {
    let (n_out, n_in) = (params.n_out(), params.n_in());
    if inputs.len() != n_in {
        return Err(Error::Shape(format!(
            "layer expects {n_in} inputs, got {}",
            inputs.len()
        )));
    }
    std::mem::swap(&mut state.f, &mut state.f_prev);
    state.filter_in.copy_from_slice(inputs);
    for i in 0..n_out {
        let f_row = state.f.row_mut(i);
        if params.is_input_layer {
            f_row.copy_from_slice(inputs);
        } else {
            let fp_row = state.f_prev.row(i);
            let a_row = params.alpha.row(i);
            let b_row = params.beta.row(i);
            for j in 0..n_in {
                f_row[j] = synapse_filter_step(fp_row[j], a_row[j], b_row[j], inputs[j]);
            }
        }
        let w_row = params.w.row(i);
        let drive: f64 = w_row.iter().zip(f_row.iter()).map(|(w, f)| w * f).sum();
        state.drive[i] = drive;
        state.v[i] = membrane_step(state.v[i], state.o[i], drive, lambda, v_th);
    }
    for i in 0..n_out {
        state.o[i] = heaviside_fire(state.v[i], v_th);
    }
    Ok(())
}

/// Advance the whole network by one input frame. Every layer filters the
/// spikes its predecessor emitted on the previous step, so the spike
/// snapshot is taken before any layer is updated.
pub fn network_forward_step(
    state: &mut NetworkState,
    frame: &[f64],
    params: &NetworkParams,
) -> Result<()> {
    if frame.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "frame has {} values, network input dimension is {}",
            frame.len(),
            params.input_dim()
        )));
    }
    let prev_spikes: Vec<Vec<f64>> = state.layers.iter().map(|l| l.o.clone()).collect();
    for (l, layer_params) in params.layers.iter().enumerate() {
        let inputs: &[f64] = if l == 0 { frame } else { &prev_spikes[l - 1] };
        layer_forward_step(
            &mut state.layers[l],
            inputs,
            layer_params,
            params.lambda,
            params.v_th,
        )?;
    }
    state.t += 1;
    Ok(())
}
