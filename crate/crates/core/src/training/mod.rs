//! Surrogate-gradient training: boxcar derivative, firing-rate
//! regularization, readout, CTC loss and the optimizer loop.

pub mod bptt;
pub mod ctc;
pub mod optimizer;
pub mod readout;

use ndarray::{Array1, Array2};

use crate::topology::{SpikeMode, SpikeTensor};

pub use bptt::{
    assign_parameters, flatten_gradients, flatten_parameters,ForwardPass, Gradients,
    LayerGradients, Model, TrainInput,
};
pub use ctc::{ctc_greedy_decode, ctc_loss};
pub use optimizer::{evaluate, train_step, AdamW, TrainHyper, TrainItem};
pub use readout::{PoolMode, Readout, ReadoutConfig};

/// Boxcar surrogate for the threshold derivative: 0.5 inside the band
/// `|u - 1| <= 0.5`, zero outside.
pub fn boxcar_surrogate(u: f64) -> f64 {
    SpikeMode::Threshold.derivative(u)
}

/// Per-neuron firing rates in Hz for the layers of one utterance.
#[derive(Debug, Clone)]
pub struct FiringRateStats {
    /// Rates per layer (nerve first), one entry per neuron.
    pub per_layer: Vec<Array1<f64>>,
    /// Utterance duration in seconds.
    pub duration_s: f64,
}

impl FiringRateStats {
    /// Rates from spike (or soft-spike) traces, time by neuron per layer.
    pub fn from_traces(spike_rows: &[&Array2<f64>], dt_ms: f64) -> Self {
        let t_len = spike_rows.first().map_or(0, |s| s.nrows());
        let duration_s = t_len as f64 * dt_ms / 1000.0;
        let per_layer = spike_rows
            .iter()
            .map(|s| s.sum_axis(ndarray::Axis(0)) / duration_s)
            .collect();
        Self {
            per_layer,
            duration_s,
        }
    }

    pub fn mean_rate_hz(&self) -> f64 {
        let (sum, n) = self
            .per_layer
            .iter()
            .fold((0.0, 0usize), |(s, n), r| (s + r.sum(), n + r.len()));
        sum / n as f64
    }
}

/// Firing rates of a binary spike tensor, one value per neuron, in Hz.
pub fn firing_rates(spikes: &SpikeTensor) -> Array1<f64> {
    let duration_s = spikes.duration_s();
    let mut rates = Array1::<f64>::zeros(spikes.n_neurons());
    for row in spikes.values.rows() {
        for (k, &s) in row.iter().enumerate() {
            rates[k] += f64::from(s);
        }
    }
    rates / duration_s
}

/// Two-sided hinge on firing rates, averaged over utterances and layers
/// with a per-layer neuron mean: rates below `f_min` or above `f_max`
/// are penalized linearly.
pub fn regularization_loss(stats: &[FiringRateStats], f_min: f64, f_max: f64) -> f64 {
    assert!(f_min < f_max, "f_min must be below f_max");
    if stats.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for s in stats {
        for rates in &s.per_layer {
            let layer_mean = rates
                .iter()
                .map(|&f| (f_min - f).max(0.0) + (f - f_max).max(0.0))
                .sum::<f64>()
                / rates.len() as f64;
            total += layer_mean;
            count += 1;
        }
    }
    total / count as f64
}

/// Loss components of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ctc: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(ctc: f64, reg: f64, reg_weight: f64) -> Self {
        Self {
            ctc,
            reg,
            total: ctc + reg_weight * reg,
        }
    }
}
