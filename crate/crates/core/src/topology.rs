//! Multi-layer spiking network structure and simulation.
//!
//! A network is a layer of nerve fibers (plain LIF, one fiber per input
//! signal, no weights) followed by recurrently connected AdLIF layers.
//! Feedforward and recurrent matrices carry fixed binary masks; a
//! per-neuron adaptation mask reduces part of each layer to LIF; optional
//! per-neuron signs enforce Dale's law.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::neuron::{self, AdLifParameters};

/// Spike generation used by the layer recurrence.
///
/// `Threshold` is the spiking forward pass. `SoftRamp` replaces the
/// threshold by the ramp `clip(0.5 (u - 0.5), 0, 1)`; its exact derivative
/// equals the boxcar surrogate on the open band where the ramp is strictly
/// between its limits, which makes backpropagation exact and checkable
/// against finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeMode {
    Threshold,
    SoftRamp,
}

impl SpikeMode {
    #[inline]
    pub fn activate(self, u: f64) -> f64 {
        match self {
            SpikeMode::Threshold => {
                if u >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeMode::SoftRamp => (0.5 * (u - 0.5)).clamp(0.0, 1.0),
        }
    }

    #[inline]
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            SpikeMode::Threshold => {
                if (u - 1.0).abs() <= 0.5 {
                    0.5
                } else {
                    0.0
                }
            }
            SpikeMode::SoftRamp => {
                let r = 0.5 * (u - 0.5);
                if r > 0.0 && r < 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }
}

/// Binary spike trains of one utterance for one layer, time by neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTensor {
    pub values: Array2<u8>,
    pub dt_ms: f64,
}

impl SpikeTensor {
    pub fn n_steps(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_neurons(&self) -> usize {
        self.values.ncols()
    }

    /// Utterance duration in seconds.
    pub fn duration_s(&self) -> f64 {
        self.n_steps() as f64 * self.dt_ms / 1000.0
    }
}

/// Structural description of one spiking layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub n_neurons: usize,
    pub sfa_fraction: f64,
    pub ff_connectivity: f64,
    pub rec_connectivity: f64,
    pub dale_enabled: bool,
    pub excitatory_fraction: f64,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sfa_fraction", self.sfa_fraction),
            ("ff_connectivity", self.ff_connectivity),
            ("rec_connectivity", self.rec_connectivity),
            ("excitatory_fraction", self.excitatory_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::InvalidParameter(format!(
                    "{name} = {v} outside [0, 1]"
                )));
            }
        }
        if self.n_neurons == 0 {
            return Err(CoreError::InvalidParameter("layer has zero neurons".into()));
        }
        Ok(())
    }
}

/// Auditory nerve fibers: LIF neurons driven one-to-one by the frontend,
/// with the membrane time constant as the only trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct NerveLayer {
    pub tau_u: Array1<f64>,
}

impl NerveLayer {
    pub fn n_neurons(&self) -> usize {
        self.tau_u.len()
    }
}

/// One recurrent AdLIF layer: masked feedforward and recurrent weights
/// plus per-neuron dynamics parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnLayer {
    /// Feedforward weights, presynaptic by postsynaptic.
    pub w: Array2<f64>,
    /// Recurrent weights, presynaptic by postsynaptic, zero diagonal.
    pub v: Array2<f64>,
    pub mask_w: Array2<u8>,
    pub mask_v: Array2<u8>,
    /// 1 where the neuron adapts (AdLIF), 0 where it is plain LIF.
    pub sfa_mask: Array1<f64>,
    pub tau_u: Array1<f64>,
    pub tau_w: Array1<f64>,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
}

impl SnnLayer {
    pub fn n_neurons(&self) -> usize {
        self.tau_u.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.w.nrows()
    }

    /// Effective coupling after the adaptation mask.
    pub fn a_eff(&self) -> Array1<f64> {
        &self.a * &self.sfa_mask
    }

    pub fn b_eff(&self) -> Array1<f64> {
        &self.b * &self.sfa_mask
    }

    /// Re-impose the structural invariants on the weight matrices:
    /// masked entries zero, zero recurrent diagonal.
    pub fn project_structure(&mut self) {
        for ((i, j), w) in self.w.indexed_iter_mut() {
            if self.mask_w[(i, j)] == 0 {
                *w = 0.0;
            }
        }
        for ((i, j), v) in self.v.indexed_iter_mut() {
            if i == j || self.mask_v[(i, j)] == 0 {
                *v = 0.0;
            }
        }
    }
}

/// Per-neuron excitatory/inhibitory signs for every layer, nerve first.
/// Nerve fibers are always excitatory.
#[derive(Debug, Clone, PartialEq)]
pub struct DaleSigns {
    /// One sign vector per spiking layer (nerve included), entries +1/-1.
    pub signs: Vec<Vec<i8>>,
}

/// The full spiking part of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub dt_ms: f64,
    pub nerve: NerveLayer,
    pub layers: Vec<SnnLayer>,
    pub dale: Option<DaleSigns>,
}

/// Deterministic binary mask with `round(connectivity * eligible)` ones.
///
/// Eligible entries are all positions, or all off-diagonal positions when
/// `exclude_diagonal` is set; selection is uniform without replacement.
pub fn build_masks(
    rows: usize,
    cols: usize,
    connectivity: f64,
    exclude_diagonal: bool,
    seed: u64,
) -> Array2<u8> {
    assert!(
        (0.0..=1.0).contains(&connectivity),
        "connectivity outside [0, 1]"
    );
    let mut eligible: Vec<u32> = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            if exclude_diagonal && i == j {
                continue;
            }
            eligible.push((i * cols + j) as u32);
        }
    }
    let k = (connectivity * eligible.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chosen, _) = eligible.partial_shuffle(&mut rng, k);
    let mut mask = Array2::<u8>::zeros((rows, cols));
    for &idx in chosen.iter() {
        let i = idx as usize / cols;
        let j = idx as usize % cols;
        mask[(i, j)] = 1;
    }
    mask
}

/// Impose Dale's law: every outgoing weight of presynaptic neuron `j`
/// takes the sign `signs[j]`. Idempotent.
pub fn apply_dale(weights: &mut Array2<f64>, signs: &[i8]) {
    assert_eq!(weights.nrows(), signs.len(), "one sign per presynaptic row");
    for (i, mut row) in weights.rows_mut().into_iter().enumerate() {
        let s = f64::from(signs[i]);
        for w in row.iter_mut() {
            *w = s * w.abs();
        }
    }
}

/// Overall stimulus of one layer at one time step:
/// feedforward drive from the previous layer's current spikes plus
/// recurrent drive from this layer's previous-step spikes.
pub fn layer_stimulus(
    w: &Array2<f64>,
    v: &Array2<f64>,
    s_prev_layer_t: ArrayView1<f64>,
    s_same_layer_prev_t: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if w.nrows() != s_prev_layer_t.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "feedforward: {} presynaptic rows vs {} spikes",
            w.nrows(),
            s_prev_layer_t.len()
        )));
    }
    if v.nrows() != s_same_layer_prev_t.len() || v.ncols() != w.ncols() {
        return Err(CoreError::ShapeMismatch(format!(
            "recurrent: {}x{} vs {} spikes and {} outputs",
            v.nrows(),
            v.ncols(),
            s_same_layer_prev_t.len(),
            w.ncols()
        )));
    }
    let mut out = w.t().dot(&s_prev_layer_t);
    out += &v.t().dot(&s_same_layer_prev_t);
    Ok(out)
}

/// Full state history of one layer over one utterance, time by neuron.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub stim: Array2<f64>,
    pub u: Array2<f64>,
    pub w: Array2<f64>,
    pub s: Array2<f64>,
}

impl LayerTrace {
    pub fn spikes(&self, dt_ms: f64) -> SpikeTensor {
        SpikeTensor {
            values: self.s.mapv(|x| if x >= 1.0 { 1u8 } else { 0u8 }),
            dt_ms,
        }
    }
}

/// Run the AdLIF recurrence for a whole layer over one utterance.
///
/// `ff_drive` is the precomputed feedforward part of the stimulus
/// (time by neuron); the recurrent part is accumulated step by step from
/// the layer's own spikes when `rec` is present. All neurons start from
/// the zero state.
pub fn layer_forward(
    ff_drive: &Array2<f64>,
    rec: Option<&Array2<f64>>,
    alpha: &Array1<f64>,
    beta: &Array1<f64>,
    a_eff: &Array1<f64>,
    b_eff: &Array1<f64>,
    mode: SpikeMode,
    layer_index: usize,
) -> Result<LayerTrace> {
    let (t_len, n) = ff_drive.dim();
    let mut trace = LayerTrace {
        stim: ff_drive.clone(),
        u: Array2::zeros((t_len, n)),
        w: Array2::zeros((t_len, n)),
        s: Array2::zeros((t_len, n)),
    };
    let mut u_prev = Array1::<f64>::zeros(n);
    let mut w_prev = Array1::<f64>::zeros(n);
    let mut s_prev = Array1::<f64>::zeros(n);
    for t in 0..t_len {
        if let Some(v) = rec {
            // row-accumulate over active presynaptic neurons; spikes are
            // sparse in threshold mode
            let mut stim_row = trace.stim.row_mut(t);
            for (j, &sj) in s_prev.iter().enumerate() {
                if sj != 0.0 {
                    let vrow = v.row(j);
                    for k in 0..n {
                        stim_row[k] += sj * vrow[k];
                    }
                }
            }
        }
        for k in 0..n {
            let stim = trace.stim[(t, k)];
            if !stim.is_finite() {
                return Err(CoreError::NumericOverflow {
                    layer: layer_index,
                    step: t,
                });
            }
            let u = alpha[k] * (u_prev[k] - s_prev[k]) + (1.0 - alpha[k]) * (stim - w_prev[k]);
            let w = beta[k] * (w_prev[k] + b_eff[k] * s_prev[k]) + (1.0 - beta[k]) * a_eff[k] * u_prev[k];
            trace.u[(t, k)] = u;
            trace.w[(t, k)] = w;
            trace.s[(t, k)] = mode.activate(u);
        }
        u_prev.assign(&trace.u.row(t));
        w_prev.assign(&trace.w.row(t));
        s_prev.assign(&trace.s.row(t));
    }
    Ok(trace)
}

impl NetworkTopology {
    pub fn n_fibers(&self) -> usize {
        self.nerve.n_neurons()
    }

    /// Decay factors for every layer, nerve first; the nerve row reuses
    /// the beta slot as zero since its adaptation current is identically
    /// zero.
    pub fn decay_factors(&self) -> Result<Vec<(Array1<f64>, Array1<f64>)>> {
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        let nerve_alpha = self.nerve.tau_u.mapv(|t| (-self.dt_ms / t).exp());
        out.push((nerve_alpha, Array1::zeros(self.nerve.n_neurons())));
        for layer in &self.layers {
            let alpha = layer.tau_u.mapv(|t| (-self.dt_ms / t).exp());
            let beta = layer.tau_w.mapv(|t| (-self.dt_ms / t).exp());
            out.push((alpha, beta));
        }
        Ok(out)
    }

    /// Forward-pass traces for every layer, nerve first.
    pub fn forward_traces(
        &self,
        input_currents: &Array2<f64>,
        mode: SpikeMode,
    ) -> Result<Vec<LayerTrace>> {
        if input_currents.ncols() != self.n_fibers() {
            return Err(CoreError::ShapeMismatch(format!(
                "input has {} channels, nerve has {} fibers",
                input_currents.ncols(),
                self.n_fibers()
            )));
        }
        let factors = self.decay_factors()?;
        let n_fibers = self.n_fibers();
        let zeros = Array1::<f64>::zeros(n_fibers);
        let mut traces = Vec::with_capacity(self.layers.len() + 1);
        let nerve_trace = layer_forward(
            input_currents,
            None,
            &factors[0].0,
            &factors[0].1,
            &zeros,
            &zeros,
            mode,
            0,
        )?;
        traces.push(nerve_trace);
        for (i, layer) in self.layers.iter().enumerate() {
            let ff = traces[i].s.dot(&layer.w);
            let trace = layer_forward(
                &ff,
                Some(&layer.v),
                &factors[i + 1].0,
                &factors[i + 1].1,
                &layer.a_eff(),
                &layer.b_eff(),
                mode,
                i + 1,
            )?;
            traces.push(trace);
        }
        Ok(traces)
    }

    /// Check the structural invariants; used by tests and after loading
    /// checkpoints.
    pub fn validate(&self) -> Result<()> {
        for (li, layer) in self.layers.iter().enumerate() {
            for ((i, j), &v) in layer.v.indexed_iter() {
                if i == j && v != 0.0 {
                    return Err(CoreError::InvalidParameter(format!(
                        "layer {li}: nonzero recurrent diagonal at {i}"
                    )));
                }
                if layer.mask_v[(i, j)] == 0 && v != 0.0 {
                    return Err(CoreError::InvalidParameter(format!(
                        "layer {li}: masked recurrent entry ({i},{j}) is nonzero"
                    )));
                }
            }
            for ((i, j), &w) in layer.w.indexed_iter() {
                if layer.mask_w[(i, j)] == 0 && w != 0.0 {
                    return Err(CoreError::InvalidParameter(format!(
                        "layer {li}: masked feedforward entry ({i},{j}) is nonzero"
                    )));
                }
            }
        }
        if let Some(dale) = &self.dale {
            if dale.signs.len() != self.layers.len() + 1 {
                return Err(CoreError::InvalidParameter(
                    "Dale signs must cover nerve plus every layer".into(),
                ));
            }
            if dale.signs[0].iter().any(|&s| s != 1) {
                return Err(CoreError::InvalidParameter(
                    "nerve fibers must be excitatory".into(),
                ));
            }
            for (li, layer) in self.layers.iter().enumerate() {
                let pre_signs = &dale.signs[li];
                for ((i, j), &w) in layer.w.indexed_iter() {
                    if w != 0.0 && (w > 0.0) != (pre_signs[i] > 0) {
                        return Err(CoreError::InvalidParameter(format!(
                            "layer {li}: feedforward entry ({i},{j}) violates Dale sign"
                        )));
                    }
                }
                let own_signs = &dale.signs[li + 1];
                for ((i, j), &v) in layer.v.indexed_iter() {
                    if v != 0.0 && (v > 0.0) != (own_signs[i] > 0) {
                        return Err(CoreError::InvalidParameter(format!(
                            "layer {li}: recurrent entry ({i},{j}) violates Dale sign"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Re-impose masks, zero diagonals and Dale signs after a weight
    /// update.
    pub fn project(&mut self) {
        let dale = self.dale.clone();
        for (li, layer) in self.layers.iter_mut().enumerate() {
            layer.project_structure();
            if let Some(d) = &dale {
                let pre: Vec<i8> = d.signs[li].clone();
                apply_dale(&mut layer.w, &pre);
                let own: Vec<i8> = d.signs[li + 1].clone();
                apply_dale(&mut layer.v, &own);
                // apply_dale turns masked zeros into signed zeros; re-zero
                layer.project_structure();
            }
        }
    }
}

/// Simulate a batch of utterances; returns per-utterance, per-layer spike
/// tensors (nerve first).
pub fn simulate_network(
    topology: &NetworkTopology,
    inputs: &[Array2<f64>],
) -> Result<Vec<Vec<SpikeTensor>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for currents in inputs {
        let traces = topology.forward_traces(currents, SpikeMode::Threshold)?;
        out.push(
            traces
                .iter()
                .map(|t| t.spikes(topology.dt_ms))
                .collect::<Vec<_>>(),
        );
    }
    Ok(out)
}

/// Draw masks, weights, neuron parameters and Dale signs for a network.
pub fn build_topology(
    n_fibers: usize,
    specs: &[LayerSpec],
    dt_ms: f64,
    seed: u64,
) -> Result<NetworkTopology> {
    use crate::neuron::{A_RANGE, B_RANGE, TAU_U_RANGE, TAU_W_RANGE};
    for spec in specs {
        spec.validate()?;
    }
    if n_fibers == 0 {
        return Err(CoreError::InvalidParameter("zero nerve fibers".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nerve = NerveLayer {
        tau_u: Array1::from_shape_fn(n_fibers, |_| {
            rng.random_range(TAU_U_RANGE.0..=TAU_U_RANGE.1)
        }),
    };

    let dale_enabled = specs.iter().any(|s| s.dale_enabled);
    let mut signs: Vec<Vec<i8>> = vec![vec![1; n_fibers]];
    for spec in specs {
        let n = spec.n_neurons;
        let n_exc = (spec.excitatory_fraction * n as f64).round() as usize;
        let mut layer_signs = vec![-1i8; n];
        let mut idx: Vec<usize> = (0..n).collect();
        let (chosen, _) = idx.partial_shuffle(&mut rng, n_exc);
        for &i in chosen.iter() {
            layer_signs[i] = 1;
        }
        signs.push(layer_signs);
    }

    let mut layers = Vec::with_capacity(specs.len());
    let mut n_pre = n_fibers;
    for (li, spec) in specs.iter().enumerate() {
        let n = spec.n_neurons;
        let mask_w = build_masks(n_pre, n, spec.ff_connectivity, false, rng.random());
        let mask_v = build_masks(n, n, spec.rec_connectivity, true, rng.random());
        let k_ff = 1.0 / (n_pre as f64).sqrt();
        let k_rec = 1.0 / (n as f64).sqrt();
        let mut w = Array2::from_shape_fn((n_pre, n), |_| rng.random_range(-k_ff..k_ff));
        let mut v = Array2::from_shape_fn((n, n), |_| rng.random_range(-k_rec..k_rec));
        let n_sfa = (spec.sfa_fraction * n as f64).round() as usize;
        let mut sfa_mask = Array1::<f64>::zeros(n);
        let mut idx: Vec<usize> = (0..n).collect();
        let (chosen, _) = idx.partial_shuffle(&mut rng, n_sfa);
        for &i in chosen.iter() {
            sfa_mask[i] = 1.0;
        }
        let mut layer = SnnLayer {
            w: Array2::zeros((0, 0)),
            v: Array2::zeros((0, 0)),
            mask_w,
            mask_v,
            sfa_mask,
            tau_u: Array1::from_shape_fn(n, |_| rng.random_range(TAU_U_RANGE.0..=TAU_U_RANGE.1)),
            tau_w: Array1::from_shape_fn(n, |_| rng.random_range(TAU_W_RANGE.0..=TAU_W_RANGE.1)),
            a: Array1::from_shape_fn(n, |_| rng.random_range(A_RANGE.0..=A_RANGE.1)),
            b: Array1::from_shape_fn(n, |_| rng.random_range(B_RANGE.0..=B_RANGE.1)),
        };
        if dale_enabled {
            apply_dale(&mut w, &signs[li]);
            apply_dale(&mut v, &signs[li + 1]);
        }
        layer.w = w;
        layer.v = v;
        layer.project_structure();
        layers.push(layer);
        n_pre = n;
    }

    let topology = NetworkTopology {
        dt_ms,
        nerve,
        layers,
        dale: dale_enabled.then_some(DaleSigns { signs }),
    };
    topology.validate()?;
    Ok(topology)
}

/// Convenience accessor mirroring the per-neuron parameter struct.
pub fn layer_neuron_parameters(layer: &SnnLayer, idx: usize) -> AdLifParameters {
    AdLifParameters {
        tau_u: layer.tau_u[idx],
        tau_w: layer.tau_w[idx],
        a: layer.a[idx],
        b: layer.b[idx],
    }
}

/// Clamp every per-neuron parameter of the network into its admissible
/// range; applied after each optimizer step.
pub fn clamp_network_parameters(topology: &mut NetworkTopology, strict_stability: bool) {
    for t in topology.nerve.tau_u.iter_mut() {
        *t = t.clamp(neuron::TAU_U_RANGE.0, neuron::TAU_U_RANGE.1);
    }
    for layer in &mut topology.layers {
        for i in 0..layer.n_neurons() {
            let p = neuron::clamp_parameters(
                AdLifParameters {
                    tau_u: layer.tau_u[i],
                    tau_w: layer.tau_w[i],
                    a: layer.a[i],
                    b: layer.b[i],
                },
                strict_stability,
            )
            .expect("parameters stay finite during training");
            layer.tau_u[i] = p.tau_u;
            layer.tau_w[i] = p.tau_w;
            layer.a[i] = p.a;
            layer.b[i] = p.b;
        }
    }
}
