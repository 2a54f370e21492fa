//! Adaptive moment estimation with decoupled weight decay, plus the
//! per-step projection that keeps the network inside its contract:
//! parameter clamping, mask re-application and Dale sign re-imposition.

use ndarray::{Array1, Dimension};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::topology::{clamp_network_parameters, SpikeMode};
use crate::training::bptt::{Gradients, Model, TrainInput};
use crate::training::LossBreakdown;

#[derive(Debug, Clone, Copy)]
pub struct TrainHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay on connection weights; neuron parameters
    /// are never decayed.
    pub weight_decay: f64,
    pub reg_weight: f64,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub blank: usize,
    pub strict_stability: bool,
    pub mode: SpikeMode,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            reg_weight: 0.1,
            f_min_hz: 0.5,
            f_max_hz: 250.0,
            blank: 0,
            strict_stability: false,
            mode: SpikeMode::Threshold,
        }
    }
}

impl TrainHyper {
    /// Nyquist bound for the firing-rate hinge at a given step size.
    pub fn with_nyquist(mut self, dt_ms: f64) -> Self {
        self.f_max_hz = 500.0 / dt_ms;
        self
    }
}

/// First and second moment estimates, mirroring the gradient layout.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamW {
    pub fn new(model: &Model) -> Self {
        Self {
            step: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    /// Apply one update. Weight decay is decoupled and skipped for
    /// neuron parameters (time constants, couplings, increments) and for
    /// normalization/bias terms.
    pub fn update(&mut self, model: &mut Model, grads: &Gradients, hyper: &TrainHyper) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - hyper.beta1.powf(t);
        let bc2 = 1.0 - hyper.beta2.powf(t);

        fn tensor<D: Dimension>(
            p: &mut ndarray::Array<f64, D>,
            g: &ndarray::Array<f64, D>,
            m: &mut ndarray::Array<f64, D>,
            v: &mut ndarray::Array<f64, D>,
            hyper: &TrainHyper,
            bc1: f64,
            bc2: f64,
            decay: bool,
        ) {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut())
            {
                *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
                *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                let mut upd = hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
                if decay {
                    upd += hyper.lr * hyper.weight_decay * *p;
                }
                *p -= upd;
            }
        }

        let t1 = |p: &mut Array1<f64>, g: &Array1<f64>, m: &mut Array1<f64>, v: &mut Array1<f64>, decay: bool| {
            tensor(p, g, m, v, hyper, bc1, bc2, decay)
        };

        if let (Some(cnn), Some(g), Some(m), Some(v)) = (
            model.cnn.as_mut(),
            grads.cnn.as_ref(),
            self.m.cnn.as_mut(),
            self.v.cnn.as_mut(),
        ) {
            tensor::<ndarray::Ix3>(
                &mut cnn.kernels,
                &g.kernels,
                &mut m.kernels,
                &mut v.kernels,
                hyper,
                bc1,
                bc2,
                true,
            );
            tensor(&mut cnn.bias, &g.bias, &mut m.bias, &mut v.bias, hyper, bc1, bc2, false);
            tensor(
                &mut cnn.ln_gain,
                &g.ln_gain,
                &mut m.ln_gain,
                &mut v.ln_gain,
                hyper,
                bc1,
                bc2,
                false,
            );
            tensor(
                &mut cnn.ln_bias,
                &g.ln_bias,
                &mut m.ln_bias,
                &mut v.ln_bias,
                hyper,
                bc1,
                bc2,
                false,
            );
        }
        t1(
            &mut model.topology.nerve.tau_u,
            &grads.nerve_tau_u,
            &mut self.m.nerve_tau_u,
            &mut self.v.nerve_tau_u,
            false,
        );
        for ((layer, g), (m, v)) in model
            .topology
            .layers
            .iter_mut()
            .zip(grads.layers.iter())
            .zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()))
        {
            tensor::<ndarray::Ix2>(&mut layer.w, &g.w, &mut m.w, &mut v.w, hyper, bc1, bc2, true);
            tensor::<ndarray::Ix2>(&mut layer.v, &g.v, &mut m.v, &mut v.v, hyper, bc1, bc2, true);
            tensor(&mut layer.tau_u, &g.tau_u, &mut m.tau_u, &mut v.tau_u, hyper, bc1, bc2, false);
            tensor(&mut layer.tau_w, &g.tau_w, &mut m.tau_w, &mut v.tau_w, hyper, bc1, bc2, false);
            tensor(&mut layer.a, &g.a, &mut m.a, &mut v.a, hyper, bc1, bc2, false);
            tensor(&mut layer.b, &g.b, &mut m.b, &mut v.b, hyper, bc1, bc2, false);
        }
        let r = &mut model.readout;
        let (gm, gv) = (&mut self.m.readout, &mut self.v.readout);
        let g = &grads.readout;
        tensor::<ndarray::Ix2>(&mut r.fc1.w, &g.fc1_w, &mut gm.fc1_w, &mut gv.fc1_w, hyper, bc1, bc2, true);
        tensor(&mut r.fc1.b, &g.fc1_b, &mut gm.fc1_b, &mut gv.fc1_b, hyper, bc1, bc2, false);
        tensor::<ndarray::Ix2>(&mut r.fc2.w, &g.fc2_w, &mut gm.fc2_w, &mut gv.fc2_w, hyper, bc1, bc2, true);
        tensor(&mut r.fc2.b, &g.fc2_b, &mut gm.fc2_b, &mut gv.fc2_b, hyper, bc1, bc2, false);
        tensor::<ndarray::Ix2>(&mut r.fc3.w, &g.fc3_w, &mut gm.fc3_w, &mut gv.fc3_w, hyper, bc1, bc2, true);
        tensor(&mut r.fc3.b, &g.fc3_b, &mut gm.fc3_b, &mut gv.fc3_b, hyper, bc1, bc2, false);
    }
}

/// One batch item.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub input: TrainInput,
    pub target: Vec<usize>,
}

/// Forward, loss, backward, optimizer update and re-projection for one
/// batch. Returns the batch-mean loss components and mean firing rate.
pub fn train_step(
    model: &mut Model,
    adam: &mut AdamW,
    batch: &[TrainItem],
    hyper: &TrainHyper,
    dropout_seed: u64,
) -> Result<(LossBreakdown, f64)> {
    if batch.is_empty() {
        return Err(CoreError::InvalidParameter("empty batch".into()));
    }
    let mut total = Gradients::zeros_like(model);
    let mut ctc_sum = 0.0;
    let mut reg_sum = 0.0;
    let mut rate_sum = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (idx, item) in batch.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let pass = model.forward(&item.input, hyper.mode, Some(&mut rng))?;
        let (losses, grads) = model.backward(
            &pass,
            &item.target,
            hyper.blank,
            hyper.reg_weight,
            hyper.f_min_hz,
            hyper.f_max_hz,
            hyper.mode,
        )?;
        if !losses.total.is_finite() {
            return Err(CoreError::Divergence(format!(
                "non-finite loss on batch item {idx}: ctc {}, reg {}",
                losses.ctc, losses.reg
            )));
        }
        ctc_sum += losses.ctc;
        reg_sum += losses.reg;
        rate_sum += pass.rates.mean_rate_hz();
        total.add_scaled(&grads, scale);
    }
    adam.update(model, &total, hyper);
    clamp_network_parameters(&mut model.topology, hyper.strict_stability);
    model.topology.project();
    let losses = LossBreakdown::new(ctc_sum * scale, reg_sum * scale, hyper.reg_weight);
    Ok((losses, rate_sum * scale))
}

/// Evaluate a batch without touching the model (inference mode, no
/// dropout).
pub fn evaluate(
    model: &Model,
    items: &[TrainItem],
    hyper: &TrainHyper,
) -> Result<(LossBreakdown, Vec<Vec<usize>>)> {
    let mut ctc_sum = 0.0;
    let mut reg_sum = 0.0;
    let mut decoded = Vec::with_capacity(items.len());
    for item in items {
        let pass = model.forward(&item.input, SpikeMode::Threshold, None)?;
        let (loss, _) = crate::training::ctc_loss(&pass.logp, &item.target, hyper.blank)?;
        ctc_sum += loss;
        reg_sum += crate::training::regularization_loss(
            std::slice::from_ref(&pass.rates),
            hyper.f_min_hz,
            hyper.f_max_hz,
        );
        decoded.push(crate::training::ctc_greedy_decode(&pass.logp, hyper.blank));
    }
    let n = items.len().max(1) as f64;
    Ok((
        LossBreakdown::new(ctc_sum / n, reg_sum / n, hyper.reg_weight),
        decoded,
    ))
}
