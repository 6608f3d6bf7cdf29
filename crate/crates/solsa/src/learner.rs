//! The SOLSA rule: per-step spatial backpropagation of the learning signal,
//! forward-updated eligibility traces, weight-gradient accumulation and the
//! decayed filter-kernel gradients.

use crate::dynamics::{surrogate_gradient, NetworkParams, NetworkState};
use crate::error::{Error, Result};
use crate::mat::Mat;

/// Gradient of the per-step squared error on output spikes.
#[derive(Clone, Debug)]
pub struct PerStepLoss {
    /// `dE/dO_k = O_k - y_k` with `y` the one-hot target.
    pub de_do: Vec<f64>,
    /// `E[t] = 1/2 sum_k (O_k - y_k)^2`.
    pub value: f64,
}

/// Squared error of one step's output spikes against a one-hot target.
pub fn per_step_loss(output_spikes: &[f64], target_class: usize, n_classes: usize) -> Result<PerStepLoss> {
    if target_class >= n_classes || output_spikes.len() != n_classes {
        return Err(Error::Shape(format!(
            "target {target_class} / output length {} vs {n_classes} classes",
            output_spikes.len()
        )));
    }
    let mut de_do = Vec::with_capacity(n_classes);
    let mut value = 0.0;
    for (k, &o) in output_spikes.iter().enumerate() {
        let d = o - if k == target_class { 1.0 } else { 0.0 };
        value += 0.5 * d * d;
        de_do.push(d);
    }
    Ok(PerStepLoss { de_do, value })
}

/// Spatial backpropagation of the learning signal (no temporal terms):
/// top layer `mu_i = dE/dO_i * eps_i`, each lower layer
/// `mu_i = (sum_k mu_k w_ki beta_ki) * eps_i`.
pub fn learning_signal_backprop(
    de_do: &[f64],
    eps: &[Vec<f64>],
    params: &NetworkParams,
) -> Result<Vec<Vec<f64>>> {
    let n_layers = params.layers.len();
    if eps.len() != n_layers || de_do.len() != params.output_dim() {
        return Err(Error::Shape("learning-signal inputs do not match network shape".into()));
    }
    let mut mu: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
    mu[n_layers - 1] = de_do
        .iter()
        .zip(&eps[n_layers - 1])
        .map(|(d, e)| d * e)
        .collect();
    for l in (0..n_layers.saturating_sub(1)).rev() {
        let upper = &params.layers[l + 1];
        let n = upper.n_in();
        let mut out = vec![0.0; n];
        for k in 0..upper.n_out() {
            let m = mu[l + 1][k];
            if m == 0.0 {
                continue;
            }
            let w_row = upper.w.row(k);
            let b_row = upper.beta.row(k);
            for (j, o) in out.iter_mut().enumerate() {
                *o += m * w_row[j] * b_row[j];
            }
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o *= eps[l][j];
        }
        mu[l] = out;
    }
    Ok(mu)
}

/// One eligibility-trace step: leaky integration of the synaptic potential
/// with spike-dependent leakage `lambda - v_th * eps_i`.
#[inline]
pub fn eligibility_trace_step(e_prev: f64, eps_i: f64, f_ij: f64, lambda: f64, v_th: f64) -> f64 {
    (lambda - v_th * eps_i) * e_prev + f_ij
}

#[derive(Clone, Debug)]
pub struct LayerLearner {
    /// Eligibility traces, shaped like the layer's weight matrix.
    pub eligibility: Mat,
    pub grad_w: Mat,
    pub grad_alpha: Mat,
    pub grad_beta: Mat,
    /// Monotone per-connection accumulator of `mu * e` since sequence start;
    /// never cleared by updates, it backs the `g_t` log.
    pub log_acc: Mat,
    /// Learning signal of the current step.
    pub mu: Vec<f64>,
    /// Surrogate gradient of the current step.
    pub eps: Vec<f64>,
    /// Surrogate gradient of the previous step; this is the leakage term of
    /// the trace recursion (`V[t]` reaches `V[t+1]` through `O[t]`).
    pub eps_prev: Vec<f64>,
}

impl LayerLearner {
    fn new(n_out: usize, n_in: usize) -> Self {
        LayerLearner {
            eligibility: Mat::zeros(n_out, n_in),
            grad_w: Mat::zeros(n_out, n_in),
            grad_alpha: Mat::zeros(n_out, n_in),
            grad_beta: Mat::zeros(n_out, n_in),
            log_acc: Mat::zeros(n_out, n_in),
            mu: vec![0.0; n_out],
            eps: vec![0.0; n_out],
            eps_prev: vec![0.0; n_out],
        }
    }
}

/// Per-sequence learner state for one in-flight training sequence.
#[derive(Clone, Debug)]
pub struct LearnerState {
    pub layers: Vec<LayerLearner>,
    /// `g_t` recorded at every step of the current sequence.
    pub grad_log: Vec<f64>,
    /// Kernel-gradient decay factor, `0 < gamma < 1`.
    pub gamma: f64,
    /// Adaptive synapse filter kernels on/off (SOLSA variants 1 and 3 run
    /// with this disabled).
    pub adapt_kernels: bool,
    steps: usize,
}

impl LearnerState {
    pub fn new(params: &NetworkParams, gamma: f64, adapt_kernels: bool) -> Self {
        LearnerState {
            layers: params
                .layers
                .iter()
                .map(|l| LayerLearner::new(l.n_out(), l.n_in()))
                .collect(),
            grad_log: Vec::new(),
            gamma,
            adapt_kernels,
            steps: 0,
        }
    }

    /// Reset everything for a new sequence presentation: traces, gradient
    /// accumulators, the monotone log and the step counter.
    pub fn reset_sequence(&mut self) {
        for l in &mut self.layers {
            l.eligibility.fill(0.0);
            l.grad_w.fill(0.0);
            l.grad_alpha.fill(0.0);
            l.grad_beta.fill(0.0);
            l.log_acc.fill(0.0);
            l.mu.iter_mut().for_each(|x| *x = 0.0);
            l.eps.iter_mut().for_each(|x| *x = 0.0);
            l.eps_prev.iter_mut().for_each(|x| *x = 0.0);
        }
        self.grad_log.clear();
        self.steps = 0;
    }

    /// Number of accumulate calls since the last sequence reset.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Advance the learner by one step; must be called once per time step,
    /// directly after [`crate::dynamics::network_forward_step`]. Returns the
    /// gradient magnitude `g_t` of this step.
    pub fn accumulate_step(
        &mut self,
        network: &NetworkState,
        de_do: &[f64],
        params: &NetworkParams,
    ) -> Result<f64> {
        if network.t == 0 {
            return Err(Error::Sequencing(
                "accumulate_step called before any forward step".into(),
            ));
        }
        if network.t != self.steps + 1 {
            return Err(Error::Sequencing(format!(
                "learner at step {} but network at t = {}",
                self.steps, network.t
            )));
        }
        let t = self.steps;

        // (a) surrogate gradients from the current membrane potentials,
        // then the spatial learning signal.
        for (ll, ls) in self.layers.iter_mut().zip(&network.layers) {
            for (e, &v) in ll.eps.iter_mut().zip(&ls.v) {
                *e = surrogate_gradient(v, params.v_th, params.sigma);
            }
        }
        let eps: Vec<Vec<f64>> = self.layers.iter().map(|l| l.eps.clone()).collect();
        let mu = learning_signal_backprop(de_do, &eps, params)?;

        let geo = (1.0 - self.gamma.powi(t as i32 + 1)) / (1.0 - self.gamma);

        for (l, ll) in self.layers.iter_mut().enumerate() {
            ll.mu = mu[l].clone();
            let ls = &network.layers[l];
            let lp = &params.layers[l];
            let (n_out, n_in) = (lp.n_out(), lp.n_in());
            for i in 0..n_out {
                let leak = params.lambda - params.v_th * ll.eps_prev[i];
                let e_row = ll.eligibility.row_mut(i);
                let f_row = ls.f.row(i);
                // (b) eligibility advance.
                for j in 0..n_in {
                    e_row[j] = leak * e_row[j] + f_row[j];
                }
                // (c) weight-gradient accumulation plus the monotone log.
                let m = ll.mu[i];
                if m != 0.0 {
                    let gw_row = ll.grad_w.row_mut(i);
                    for j in 0..n_in {
                        gw_row[j] += m * e_row[j];
                    }
                    let la_row = ll.log_acc.row_mut(i);
                    for j in 0..n_in {
                        la_row[j] += m * e_row[j];
                    }
                    // (d) kernel gradients with the geometric decay factor;
                    // the input layer has no filters.
                    if self.adapt_kernels && !lp.is_input_layer {
                        let w_row = lp.w.row(i);
                        let fp_row = ls.f_prev.row(i);
                        let ga_row = ll.grad_alpha.row_mut(i);
                        for j in 0..n_in {
                            ga_row[j] += m * w_row[j] * fp_row[j] * geo;
                        }
                        let gb_row = ll.grad_beta.row_mut(i);
                        for j in 0..n_in {
                            gb_row[j] += m * w_row[j] * ls.filter_in[j] * geo;
                        }
                    }
                }
            }
            ll.eps_prev.copy_from_slice(&ll.eps);
        }

        // (e) g_t = sum of |accumulated mu*e| over every connection.
        let g_t: f64 = self
            .layers
            .iter()
            .map(|l| l.log_acc.data().iter().map(|x| x.abs()).sum::<f64>())
            .sum();
        self.grad_log.push(g_t);
        self.steps += 1;
        Ok(g_t)
    }
}

/// Maximum feedback coefficient after an update; keeps the filters stable.
pub const ALPHA_MAX: f64 = 0.999;

/// Apply the accumulated gradients as one SGD step and reset the
/// accumulators. Eligibility traces are left alone: they encode network
/// history, not gradient state.
pub fn apply_update(
    params: &mut NetworkParams,
    learner: &mut LearnerState,
    lr_w: f64,
    lr_kernel: f64,
) {
    for (lp, ll) in params.layers.iter_mut().zip(&mut learner.layers) {
        for (w, g) in lp.w.data_mut().iter_mut().zip(ll.grad_w.data()) {
            *w -= lr_w * g;
        }
        if !lp.is_input_layer {
            for (a, g) in lp.alpha.data_mut().iter_mut().zip(ll.grad_alpha.data()) {
                *a = (*a - lr_kernel * g).clamp(0.0, ALPHA_MAX);
            }
            for (b, g) in lp.beta.data_mut().iter_mut().zip(ll.grad_beta.data()) {
                *b -= lr_kernel * g;
            }
        }
        ll.grad_w.fill(0.0);
        ll.grad_alpha.fill(0.0);
        ll.grad_beta.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{network_forward_step, LayerParams};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn per_step_loss_examples() {
        let l = per_step_loss(&[1.0, 0.0], 0, 2).unwrap();
        assert_eq!(l.value, 0.0);
        assert_eq!(l.de_do, vec![0.0, 0.0]);

        let l = per_step_loss(&[0.0, 0.0], 0, 2).unwrap();
        assert_eq!(l.value, 0.5);
        assert_eq!(l.de_do, vec![-1.0, 0.0]);

        let l = per_step_loss(&[1.0, 1.0], 1, 2).unwrap();
        assert_eq!(l.value, 0.5);
        assert_eq!(l.de_do, vec![1.0, 0.0]);

        assert!(per_step_loss(&[0.0, 0.0], 2, 2).is_err());
    }

    #[test]
    fn eligibility_step_examples() {
        assert_relative_eq!(eligibility_trace_step(0.0, 0.3, 0.7, 0.9, 1.0), 0.7);
        assert_relative_eq!(eligibility_trace_step(1.0, 0.0, 0.0, 0.9, 1.0), 0.9);
        assert_relative_eq!(eligibility_trace_step(1.0, 0.5, 0.2, 0.9, 1.0), 0.6);
    }

    #[test]
    fn trace_closed_form_fixed_point() {
        // Constant eps and F: e converges to f / (1 - lambda + v_th*eps).
        let (lambda, v_th, eps, f) = (0.9, 1.0, 0.25, 0.4);
        let mut e = 0.0;
        for _ in 0..2000 {
            e = eligibility_trace_step(e, eps, f, lambda, v_th);
        }
        assert_relative_eq!(e, f / (1.0 - lambda + v_th * eps), epsilon = 1e-9);
    }

    fn two_layer_scalar_net(w1: f64, w2: f64, beta2: f64) -> NetworkParams {
        NetworkParams {
            layers: vec![
                LayerParams {
                    w: Mat::filled(1, 1, w1),
                    alpha: Mat::zeros(1, 1),
                    beta: Mat::zeros(1, 1),
                    is_input_layer: true,
                },
                LayerParams {
                    w: Mat::filled(1, 1, w2),
                    alpha: Mat::filled(1, 1, 0.5),
                    beta: Mat::filled(1, 1, beta2),
                    is_input_layer: false,
                },
            ],
            lambda: 0.9,
            v_th: 1.0,
            sigma: 0.4,
        }
    }

    #[test]
    fn learning_signal_two_layer_scalar_chain() {
        // mu^1 = dE_dO * eps^2 * w^2 * beta^2 * eps^1, checked symbolically.
        let params = two_layer_scalar_net(0.7, 1.3, 0.6);
        let eps = vec![vec![0.2], vec![0.4]];
        let de_do = vec![-1.0];
        let mu = learning_signal_backprop(&de_do, &eps, &params).unwrap();
        assert_relative_eq!(mu[1][0], -1.0 * 0.4);
        assert_relative_eq!(mu[0][0], -1.0 * 0.4 * 1.3 * 0.6 * 0.2, epsilon = 1e-15);
    }

    #[test]
    fn learning_signal_zero_error_and_single_layer() {
        let params = two_layer_scalar_net(0.7, 1.3, 0.6);
        let eps = vec![vec![0.2], vec![0.4]];
        let mu = learning_signal_backprop(&[0.0], &eps, &params).unwrap();
        assert!(mu.iter().all(|l| l.iter().all(|&m| m == 0.0)));

        let single = NetworkParams {
            layers: vec![params.layers[0].clone()],
            ..params.clone()
        };
        let mu = learning_signal_backprop(&[-1.0], &[vec![0.2]], &single).unwrap();
        assert_relative_eq!(mu[0][0], -0.2);
    }

    #[test]
    fn accumulate_before_forward_is_sequencing_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params =
            NetworkParams::new_random(&[2, 2], 0.9, 1.0, 0.4, 0.9, 0.9, &mut rng).unwrap();
        let state = NetworkState::new(&params);
        let mut learner = LearnerState::new(&params, 0.9, true);
        let err = learner.accumulate_step(&state, &[0.0, 0.0], &params);
        assert!(matches!(err, Err(Error::Sequencing(_))));
    }

    #[test]
    fn zero_error_sequences_leave_gradients_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params =
            NetworkParams::new_random(&[3, 4, 2], 0.9, 1.0, 0.4, 0.9, 0.9, &mut rng).unwrap();
        let mut state = NetworkState::new(&params);
        let mut learner = LearnerState::new(&params, 0.9, true);
        for _ in 0..15 {
            let frame: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            network_forward_step(&mut state, &frame, &params).unwrap();
            let g = learner.accumulate_step(&state, &[0.0, 0.0], &params).unwrap();
            assert_eq!(g, 0.0);
        }
        for ll in &learner.layers {
            assert!(ll.grad_w.data().iter().all(|&x| x == 0.0));
            assert!(ll.grad_alpha.data().iter().all(|&x| x == 0.0));
            assert!(ll.grad_beta.data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn geometric_factor_monotone_and_bounded() {
        let gamma: f64 = 0.9;
        let mut prev = 0.0;
        for t in 0..200 {
            let geo = (1.0 - gamma.powi(t + 1)) / (1.0 - gamma);
            assert!(geo > prev);
            assert!(geo < 1.0 / (1.0 - gamma));
            prev = geo;
        }
        // t = 0: single-term geometric sum is exactly 1.
        assert_relative_eq!((1.0 - gamma.powi(1)) / (1.0 - gamma), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn apply_update_resets_accumulators_and_clamps_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params =
            NetworkParams::new_random(&[2, 3, 2], 0.9, 1.0, 0.4, 0.9, 0.9, &mut rng).unwrap();
        let mut learner = LearnerState::new(&params, 0.9, true);

        // Zero accumulators: params unchanged.
        let before = params.clone();
        apply_update(&mut params, &mut learner, 1e-3, 1e-4);
        assert_eq!(serde_json::to_string(&before).unwrap(), serde_json::to_string(&params).unwrap());

        // lr_w = 0: weights unchanged, kernels move; alpha stays in range.
        learner.layers[1].grad_w.fill(1.0);
        learner.layers[1].grad_alpha.fill(-1e6);
        learner.layers[1].grad_beta.fill(0.5);
        apply_update(&mut params, &mut learner, 0.0, 1e-4);
        assert_eq!(params.layers[1].w.data(), before.layers[1].w.data());
        assert!(params.layers[1].alpha.data().iter().all(|&a| a == ALPHA_MAX));
        assert!(params.layers[1].beta.data().iter().all(|&b| b < 0.9));

        // Accumulators were reset, so a second apply is a no-op.
        let snap = params.clone();
        apply_update(&mut params, &mut learner, 1.0, 1.0);
        assert_eq!(serde_json::to_string(&snap).unwrap(), serde_json::to_string(&params).unwrap());
    }
}
