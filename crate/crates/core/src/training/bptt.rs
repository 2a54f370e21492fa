//! Backpropagation through time over the unrolled network.
//!
//! The forward pass records per-layer state traces; the backward pass
//! reverses the exact update equations, substituting the boxcar surrogate
//! for the threshold derivative. Running the same machinery with the soft
//! ramp spike function makes the whole network differentiable, which is
//! how the gradients are validated against finite differences.

use ndarray::{Array1, Array2, Array3};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::frontend::{AuditoryCnn, CnnCache, CnnGradients, MelFeatures};
use crate::topology::{layer_forward, LayerTrace, NetworkTopology, SnnLayer, SpikeMode};
use crate::training::readout::{Readout, ReadoutCache, ReadoutGradients};
use crate::training::{ctc_loss, FiringRateStats, LossBreakdown};

/// The trainable pipeline: optional convolutional frontend, spiking
/// network, readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cnn: Option<AuditoryCnn>,
    pub topology: NetworkTopology,
    pub readout: Readout,
    /// When set, the backward pass ignores the gradient path through the
    /// after-spike reset term of the membrane update.
    pub detach_reset: bool,
}

/// One training example: either Mel features (routed through the CNN) or
/// nerve input currents, plus the CTC target labels.
#[derive(Debug, Clone)]
pub enum TrainInput {
    Mel(MelFeatures),
    Currents(Array2<f64>),
}

/// Everything recorded during one utterance's forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub cnn_cache: Option<CnnCache>,
    pub traces: Vec<LayerTrace>,
    pub readout_cache: ReadoutCache,
    pub logp: Array2<f64>,
    pub rates: FiringRateStats,
}

/// Gradients for one spiking layer.
#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub w: Array2<f64>,
    pub v: Array2<f64>,
    pub tau_u: Array1<f64>,
    pub tau_w: Array1<f64>,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
}

/// Gradients for every trainable tensor of the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub cnn: Option<CnnGradients>,
    pub nerve_tau_u: Array1<f64>,
    pub layers: Vec<LayerGradients>,
    pub readout: ReadoutGradients,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        let cnn = model.cnn.as_ref().map(|c| CnnGradients {
            kernels: Array3::zeros(c.kernels.dim()),
            bias: Array1::zeros(c.bias.len()),
            ln_gain: Array1::zeros(c.ln_gain.len()),
            ln_bias: Array1::zeros(c.ln_bias.len()),
        });
        let layers = model
            .topology
            .layers
            .iter()
            .map(|l| LayerGradients {
                w: Array2::zeros(l.w.dim()),
                v: Array2::zeros(l.v.dim()),
                tau_u: Array1::zeros(l.n_neurons()),
                tau_w: Array1::zeros(l.n_neurons()),
                a: Array1::zeros(l.n_neurons()),
                b: Array1::zeros(l.n_neurons()),
            })
            .collect();
        let r = &model.readout;
        Self {
            cnn,
            nerve_tau_u: Array1::zeros(model.topology.n_fibers()),
            layers,
            readout: ReadoutGradients {
                fc1_w: Array2::zeros(r.fc1.w.dim()),
                fc1_b: Array1::zeros(r.fc1.b.len()),
                fc2_w: Array2::zeros(r.fc2.w.dim()),
                fc2_b: Array1::zeros(r.fc2.b.len()),
                fc3_w: Array2::zeros(r.fc3.w.dim()),
                fc3_b: Array1::zeros(r.fc3.b.len()),
            },
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        if let (Some(a), Some(b)) = (self.cnn.as_mut(), other.cnn.as_ref()) {
            a.kernels.scaled_add(scale, &b.kernels);
            a.bias.scaled_add(scale, &b.bias);
            a.ln_gain.scaled_add(scale, &b.ln_gain);
            a.ln_bias.scaled_add(scale, &b.ln_bias);
        }
        self.nerve_tau_u.scaled_add(scale, &other.nerve_tau_u);
        for (l, o) in self.layers.iter_mut().zip(other.layers.iter()) {
            l.w.scaled_add(scale, &o.w);
            l.v.scaled_add(scale, &o.v);
            l.tau_u.scaled_add(scale, &o.tau_u);
            l.tau_w.scaled_add(scale, &o.tau_w);
            l.a.scaled_add(scale, &o.a);
            l.b.scaled_add(scale, &o.b);
        }
        let r = &mut self.readout;
        let o = &other.readout;
        r.fc1_w.scaled_add(scale, &o.fc1_w);
        r.fc1_b.scaled_add(scale, &o.fc1_b);
        r.fc2_w.scaled_add(scale, &o.fc2_w);
        r.fc2_b.scaled_add(scale, &o.fc2_b);
        r.fc3_w.scaled_add(scale, &o.fc3_w);
        r.fc3_b.scaled_add(scale, &o.fc3_b);
    }
}

impl Model {
    /// Forward pass recording all intermediate state. `dropout_rng`
    /// enables CNN channel dropout (training mode only).
    pub fn forward(
        &self,
        input: &TrainInput,
        mode: SpikeMode,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardPass> {
        let (currents, cnn_cache) = match input {
            TrainInput::Mel(mel) => {
                let cnn = self.cnn.as_ref().ok_or_else(|| {
                    CoreError::ShapeMismatch("model has no frontend for Mel input".into())
                })?;
                let (stim, cache) = cnn.forward(mel, dropout_rng)?;
                (stim.values, Some(cache))
            }
            TrainInput::Currents(c) => (c.clone(), None),
        };
        let traces = self.topology.forward_traces(&currents, mode)?;
        let spike_rows: Vec<&Array2<f64>> = traces.iter().map(|t| &t.s).collect();
        let rates = FiringRateStats::from_traces(&spike_rows, self.topology.dt_ms);
        let last = &traces.last().expect("at least the nerve layer").s;
        let (logp, readout_cache) = self.readout.forward(last)?;
        Ok(ForwardPass {
            cnn_cache,
            traces,
            readout_cache,
            logp,
            rates,
        })
    }

    /// Loss and gradients for one utterance given its forward pass.
    ///
    /// The objective is `ctc + reg_weight * reg` with the two-sided
    /// firing-rate hinge applied to every spiking layer.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        target: &[usize],
        blank: usize,
        reg_weight: f64,
        f_min: f64,
        f_max: f64,
        mode: SpikeMode,
    ) -> Result<(LossBreakdown, Gradients)> {
        let (ctc, d_logp) = ctc_loss(&pass.logp, target, blank)?;
        let reg = crate::training::regularization_loss(
            std::slice::from_ref(&pass.rates),
            f_min,
            f_max,
        );
        let losses = LossBreakdown::new(ctc, reg, reg_weight);

        let (ds_last, readout_grads) = self.readout.backward(&pass.readout_cache, &d_logp);

        let n_layers = pass.traces.len();
        let factors = self.topology.decay_factors()?;
        let mut grads = Gradients::zeros_like(self);
        grads.readout = readout_grads;

        // regularization gradient per layer: hinge derivative scaled by
        // the (utterance, layer, neuron) averaging and the duration
        let duration_s = pass.rates.duration_s;
        let reg_scale = reg_weight / n_layers as f64;
        let hinge_ds = |layer_idx: usize| -> Array1<f64> {
            let rates = &pass.rates.per_layer[layer_idx];
            let n = rates.len() as f64;
            rates.mapv(|f| {
                let d = if f < f_min {
                    -1.0
                } else if f > f_max {
                    1.0
                } else {
                    0.0
                };
                reg_scale * d / (n * duration_s)
            })
        };

        // walk layers from the top; ds_ext carries the gradient on each
        // layer's spike outputs
        let mut ds_ext = ds_last;
        for li in (0..n_layers).rev() {
            let trace = &pass.traces[li];
            let reg_row = hinge_ds(li);
            for mut row in ds_ext.rows_mut() {
                row += &reg_row;
            }
            let (alpha, beta) = &factors[li];
            if li == 0 {
                // nerve fibers: no weights, identity stimulus
                let n = self.topology.n_fibers();
                let zeros = Array1::<f64>::zeros(n);
                let back = layer_backward(
                    trace,
                    None,
                    None,
                    alpha,
                    beta,
                    &zeros,
                    &zeros,
                    mode,
                    self.detach_reset,
                    &ds_ext,
                );
                let dt = self.topology.dt_ms;
                for k in 0..n {
                    let tau = self.topology.nerve.tau_u[k];
                    grads.nerve_tau_u[k] = back.d_alpha[k] * alpha[k] * dt / (tau * tau);
                }
                // gradient w.r.t. the input currents continues into the CNN
                if let (Some(cnn), Some(cache)) = (self.cnn.as_ref(), pass.cnn_cache.as_ref()) {
                    grads.cnn = Some(cnn.backward(cache, &back.d_stim));
                }
            } else {
                let layer = &self.topology.layers[li - 1];
                let prev_spikes = &pass.traces[li - 1].s;
                let back = layer_backward(
                    trace,
                    Some(layer),
                    Some(prev_spikes),
                    alpha,
                    beta,
                    &layer.a_eff(),
                    &layer.b_eff(),
                    mode,
                    self.detach_reset,
                    &ds_ext,
                );
                let dt = self.topology.dt_ms;
                let g = &mut grads.layers[li - 1];
                for k in 0..layer.n_neurons() {
                    let tu = layer.tau_u[k];
                    let tw = layer.tau_w[k];
                    g.tau_u[k] = back.d_alpha[k] * alpha[k] * dt / (tu * tu);
                    g.tau_w[k] = back.d_beta[k] * beta[k] * dt / (tw * tw);
                    // chain through the adaptation mask
                    g.a[k] = back.d_a_eff[k] * layer.sfa_mask[k];
                    g.b[k] = back.d_b_eff[k] * layer.sfa_mask[k];
                }
                let mut dw = back.d_w.expect("feedforward gradient");
                for ((i, j), v) in dw.indexed_iter_mut() {
                    if layer.mask_w[(i, j)] == 0 {
                        *v = 0.0;
                    }
                }
                g.w = dw;
                let mut dv = back.d_v.expect("recurrent gradient");
                for ((i, j), v) in dv.indexed_iter_mut() {
                    if i == j || layer.mask_v[(i, j)] == 0 {
                        *v = 0.0;
                    }
                }
                g.v = dv;
                ds_ext = back.d_prev_spikes.expect("gradient for previous layer");
            }
        }
        Ok((losses, grads))
    }
}

struct LayerBackward {
    d_alpha: Array1<f64>,
    d_beta: Array1<f64>,
    d_a_eff: Array1<f64>,
    d_b_eff: Array1<f64>,
    d_w: Option<Array2<f64>>,
    d_v: Option<Array2<f64>>,
    d_prev_spikes: Option<Array2<f64>>,
    /// Gradient on the raw stimulus (nerve layer only).
    d_stim: Array2<f64>,
}

/// Reverse the layer recurrence. `ds_ext` is the gradient arriving on the
/// layer's spike outputs from everything downstream.
#[allow(clippy::too_many_arguments)]
fn layer_backward(
    trace: &LayerTrace,
    layer: Option<&SnnLayer>,
    prev_spikes: Option<&Array2<f64>>,
    alpha: &Array1<f64>,
    beta: &Array1<f64>,
    a_eff: &Array1<f64>,
    b_eff: &Array1<f64>,
    mode: SpikeMode,
    detach_reset: bool,
    ds_ext: &Array2<f64>,
) -> LayerBackward {
    let (t_len, n) = trace.u.dim();
    let mut d_alpha = Array1::<f64>::zeros(n);
    let mut d_beta = Array1::<f64>::zeros(n);
    let mut d_a_eff = Array1::<f64>::zeros(n);
    let mut d_b_eff = Array1::<f64>::zeros(n);
    let mut d_w = layer.map(|l| Array2::<f64>::zeros(l.w.dim()));
    let mut d_v = layer.map(|l| Array2::<f64>::zeros(l.v.dim()));
    let mut d_prev = prev_spikes.map(|s| Array2::<f64>::zeros(s.dim()));
    let mut d_stim = Array2::<f64>::zeros((t_len, n));

    let mut du_next = Array1::<f64>::zeros(n);
    let mut dw_next = Array1::<f64>::zeros(n);
    let mut di_next = Array1::<f64>::zeros(n);

    for t in (0..t_len).rev() {
        let last = t + 1 == t_len;
        // gradient on s_t
        let mut ds = ds_ext.row(t).to_owned();
        if !last {
            if let Some(l) = layer {
                // recurrent drive of the next step: ds_j += sum_k V[j,k] dI_{t+1}[k]
                ds += &l.v.dot(&di_next);
            }
            for k in 0..n {
                if !detach_reset {
                    ds[k] -= alpha[k] * du_next[k];
                }
                ds[k] += beta[k] * b_eff[k] * dw_next[k];
            }
        }
        // gradient on u_t and w_t
        let mut du = Array1::<f64>::zeros(n);
        let mut dw = Array1::<f64>::zeros(n);
        for k in 0..n {
            let surrogate = mode.derivative(trace.u[(t, k)]);
            du[k] = surrogate * ds[k];
            if !last {
                du[k] += alpha[k] * du_next[k] + (1.0 - beta[k]) * a_eff[k] * dw_next[k];
                dw[k] = beta[k] * dw_next[k] - (1.0 - alpha[k]) * du_next[k];
            }
        }
        // stimulus gradient and parameter accumulation
        let (u_prev, w_prev, s_prev) = if t > 0 {
            (
                trace.u.row(t - 1).to_owned(),
                trace.w.row(t - 1).to_owned(),
                trace.s.row(t - 1).to_owned(),
            )
        } else {
            (
                Array1::zeros(n),
                Array1::zeros(n),
                Array1::zeros(n),
            )
        };
        let mut di = Array1::<f64>::zeros(n);
        for k in 0..n {
            di[k] = (1.0 - alpha[k]) * du[k];
            d_alpha[k] += (u_prev[k] - s_prev[k] - trace.stim[(t, k)] + w_prev[k]) * du[k];
            d_beta[k] += (w_prev[k] + b_eff[k] * s_prev[k] - a_eff[k] * u_prev[k]) * dw[k];
            d_a_eff[k] += (1.0 - beta[k]) * u_prev[k] * dw[k];
            d_b_eff[k] += beta[k] * s_prev[k] * dw[k];
            d_stim[(t, k)] = di[k];
        }
        if let (Some(dv), true) = (d_v.as_mut(), t > 0) {
            for (j, &sj) in s_prev.iter().enumerate() {
                if sj != 0.0 {
                    for k in 0..n {
                        dv[(j, k)] += sj * di[k];
                    }
                }
            }
        }
        if let (Some(dw_mat), Some(sp)) = (d_w.as_mut(), prev_spikes) {
            let row = sp.row(t);
            for (j, &sj) in row.iter().enumerate() {
                if sj != 0.0 {
                    for k in 0..n {
                        dw_mat[(j, k)] += sj * di[k];
                    }
                }
            }
        }
        if let (Some(dp), Some(l)) = (d_prev.as_mut(), layer) {
            let contrib = l.w.dot(&di);
            let mut row = dp.row_mut(t);
            row += &contrib;
        }
        du_next = du;
        dw_next = dw;
        di_next = di;
    }
    LayerBackward {
        d_alpha,
        d_beta,
        d_a_eff,
        d_b_eff,
        d_w,
        d_v,
        d_prev_spikes: d_prev,
        d_stim,
    }
}

/// Flatten every free trainable scalar in a fixed order. Entries excluded
/// by a mask (and recurrent diagonals) are structural zeros and are not
/// included.
pub fn flatten_parameters(model: &Model) -> Vec<f64> {
    let mut out = Vec::new();
    if let Some(cnn) = &model.cnn {
        out.extend(cnn.kernels.iter());
        out.extend(cnn.bias.iter());
        out.extend(cnn.ln_gain.iter());
        out.extend(cnn.ln_bias.iter());
    }
    out.extend(model.topology.nerve.tau_u.iter());
    for layer in &model.topology.layers {
        for ((i, j), &w) in layer.w.indexed_iter() {
            if layer.mask_w[(i, j)] == 1 {
                out.push(w);
            }
        }
        for ((i, j), &v) in layer.v.indexed_iter() {
            if i != j && layer.mask_v[(i, j)] == 1 {
                out.push(v);
            }
        }
        out.extend(layer.tau_u.iter());
        out.extend(layer.tau_w.iter());
        out.extend(layer.a.iter());
        out.extend(layer.b.iter());
    }
    let r = &model.readout;
    out.extend(r.fc1.w.iter());
    out.extend(r.fc1.b.iter());
    out.extend(r.fc2.w.iter());
    out.extend(r.fc2.b.iter());
    out.extend(r.fc3.w.iter());
    out.extend(r.fc3.b.iter());
    out
}

/// Inverse of [`flatten_parameters`].
pub fn assign_parameters(model: &mut Model, values: &[f64]) {
    let mut it = values.iter().copied();
    let mut next = || it.next().expect("parameter vector too short");
    if let Some(cnn) = &mut model.cnn {
        for v in cnn.kernels.iter_mut() {
            *v = next();
        }
        for v in cnn.bias.iter_mut() {
            *v = next();
        }
        for v in cnn.ln_gain.iter_mut() {
            *v = next();
        }
        for v in cnn.ln_bias.iter_mut() {
            *v = next();
        }
    }
    for v in model.topology.nerve.tau_u.iter_mut() {
        *v = next();
    }
    for layer in &mut model.topology.layers {
        let mask_w = layer.mask_w.clone();
        for ((i, j), w) in layer.w.indexed_iter_mut() {
            if mask_w[(i, j)] == 1 {
                *w = next();
            }
        }
        let mask_v = layer.mask_v.clone();
        for ((i, j), v) in layer.v.indexed_iter_mut() {
            if i != j && mask_v[(i, j)] == 1 {
                *v = next();
            }
        }
        for v in layer.tau_u.iter_mut() {
            *v = next();
        }
        for v in layer.tau_w.iter_mut() {
            *v = next();
        }
        for v in layer.a.iter_mut() {
            *v = next();
        }
        for v in layer.b.iter_mut() {
            *v = next();
        }
    }
    let r = &mut model.readout;
    for arr in [&mut r.fc1.w, &mut r.fc2.w, &mut r.fc3.w] {
        // placeholder to keep borrow checker simple; filled below
        let _ = arr;
    }
    for v in r.fc1.w.iter_mut() {
        *v = next();
    }
    for v in r.fc1.b.iter_mut() {
        *v = next();
    }
    for v in r.fc2.w.iter_mut() {
        *v = next();
    }
    for v in r.fc2.b.iter_mut() {
        *v = next();
    }
    for v in r.fc3.w.iter_mut() {
        *v = next();
    }
    for v in r.fc3.b.iter_mut() {
        *v = next();
    }
    assert!(it.next().is_none(), "parameter vector too long");
}

/// Flatten gradients in the order of [`flatten_parameters`].
pub fn flatten_gradients(model: &Model, grads: &Gradients) -> Vec<f64> {
    let mut out = Vec::new();
    if let Some(cnn) = &grads.cnn {
        out.extend(cnn.kernels.iter());
        out.extend(cnn.bias.iter());
        out.extend(cnn.ln_gain.iter());
        out.extend(cnn.ln_bias.iter());
    }
    out.extend(grads.nerve_tau_u.iter());
    for (layer, g) in model.topology.layers.iter().zip(grads.layers.iter()) {
        for ((i, j), &w) in g.w.indexed_iter() {
            if layer.mask_w[(i, j)] == 1 {
                out.push(w);
            }
        }
        for ((i, j), &v) in g.v.indexed_iter() {
            if i != j && layer.mask_v[(i, j)] == 1 {
                out.push(v);
            }
        }
        out.extend(g.tau_u.iter());
        out.extend(g.tau_w.iter());
        out.extend(g.a.iter());
        out.extend(g.b.iter());
    }
    let r = &grads.readout;
    out.extend(r.fc1_w.iter());
    out.extend(r.fc1_b.iter());
    out.extend(r.fc2_w.iter());
    out.extend(r.fc2_b.iter());
    out.extend(r.fc3_w.iter());
    out.extend(r.fc3_b.iter());
    out
}

/// Run the layer recurrence standalone (used by tests that drive a single
/// layer directly).
pub fn single_layer_trace(
    stim: &Array2<f64>,
    layer: &SnnLayer,
    dt_ms: f64,
    mode: SpikeMode,
) -> Result<LayerTrace> {
    let alpha = layer.tau_u.mapv(|t| (-dt_ms / t).exp());
    let beta = layer.tau_w.mapv(|t| (-dt_ms / t).exp());
    layer_forward(
        stim,
        Some(&layer.v),
        &alpha,
        &beta,
        &layer.a_eff(),
        &layer.b_eff(),
        mode,
        0,
    )
}
