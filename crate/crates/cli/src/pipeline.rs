//! Shared plumbing between the commands: model construction from a
//! configuration, feature precomputation and evaluation metrics.

use anyhow::{bail, Context, Result};
use spikeosc_core::frontend::{mel_features, AuditoryCnn};
use spikeosc_core::topology::{build_topology, LayerSpec};
use spikeosc_core::training::{
    Model, PoolMode, Readout, ReadoutConfig, TrainHyper, TrainInput, TrainItem,
};

use crate::config::{ExperimentConfig, Task};
use crate::dataset::{am_commands, tone_sequences, AudioSample, Dataset};

pub const N_MELS: usize = 80;
pub const MEL_WIN_MS: f64 = 25.0;

/// Number of output classes including the blank at index 0.
pub fn n_outputs(cfg: &ExperimentConfig) -> usize {
    match cfg.task {
        Task::Synthetic => 3 + 1,
        Task::CommandClassify => cfg.n_classes + 1,
        // 39 phonemes and a blank
        Task::PhonemeCtc => 40,
    }
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<Model> {
    let specs: Vec<LayerSpec> = (0..cfg.n_layers)
        .map(|_| LayerSpec {
            n_neurons: cfg.neurons_per_layer,
            sfa_fraction: cfg.sfa_fraction,
            ff_connectivity: cfg.ff_connectivity,
            rec_connectivity: cfg.rec_connectivity,
            dale_enabled: cfg.dale_enabled,
            excitatory_fraction: cfg.excitatory_fraction,
        })
        .collect();
    let topology = build_topology(cfg.n_fibers(), &specs, cfg.dt_ms, cfg.seed)?;
    let pool = match cfg.task {
        Task::CommandClassify => PoolMode::Global,
        _ => PoolMode::Fixed(ReadoutConfig::pool_factor_for_dt(cfg.dt_ms)),
    };
    let readout = Readout::init(
        cfg.neurons_per_layer,
        ReadoutConfig {
            pool,
            n_phoneme_features: cfg.phoneme_features,
            n_outputs: n_outputs(cfg),
        },
        cfg.seed ^ 0x5EED_0001,
    );
    let mut cnn = AuditoryCnn::init(cfg.cnn_channels, N_MELS, cfg.dropout, cfg.seed ^ 0x5EED_0002);
    // a silent network gets no surrogate gradient, so start it awake:
    // bias the normalized features toward the firing threshold and give
    // the feedforward matrices enough gain that spikes reach the deeper
    // layers at desk scale
    cnn.ln_bias.fill(1.0);
    let mut topology = topology;
    for layer in &mut topology.layers {
        layer.w.mapv_inplace(|w| 5.0 * w);
    }
    Ok(Model {
        cnn: Some(cnn),
        topology,
        readout,
        detach_reset: cfg.detach_reset,
    })
}

pub fn hyper_for(cfg: &ExperimentConfig) -> TrainHyper {
    TrainHyper {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        reg_weight: cfg.reg_weight,
        f_min_hz: cfg.f_min_hz,
        strict_stability: cfg.strict_stability,
        ..TrainHyper::default()
    }
    .with_nyquist(cfg.dt_ms)
}

pub fn dataset_for(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.task {
        Task::Synthetic => Ok(tone_sequences(
            cfg.train_per_class * 4,
            cfg.eval_per_class * 4,
            cfg.eval_per_class * 4,
            cfg.seed ^ 0xD5_0001,
        )),
        Task::CommandClassify => Ok(am_commands(
            cfg.n_classes,
            cfg.train_per_class,
            cfg.eval_per_class,
            cfg.seed ^ 0xD5_0002,
        )),
        Task::PhonemeCtc => bail!(
            "phoneme-ctc needs user-supplied WAV data under data_dir; \
             no corpus is bundled (use task = synthetic for the built-in stand-in)"
        ),
    }
}

/// Extract Mel features once per sample; features are fixed during
/// training so this is the natural cache boundary.
pub fn prepare_items(cfg: &ExperimentConfig, samples: &[AudioSample]) -> Result<Vec<TrainItem>> {
    samples
        .iter()
        .map(|s| {
            let mel = mel_features(&s.wave, N_MELS, MEL_WIN_MS, cfg.hop_ms())
                .context("feature extraction")?;
            Ok(TrainItem {
                input: TrainInput::Mel(mel),
                target: s.labels.clone(),
            })
        })
        .collect()
}

pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Validation metric: classification accuracy (higher is better) or
/// token error rate (lower is better) depending on the task.
pub fn val_metric(cfg: &ExperimentConfig, decoded: &[Vec<usize>], items: &[TrainItem]) -> f64 {
    match cfg.task {
        Task::CommandClassify => {
            let correct = decoded
                .iter()
                .zip(items.iter())
                .filter(|(d, item)| d.as_slice() == item.target.as_slice())
                .count();
            correct as f64 / items.len().max(1) as f64
        }
        _ => {
            let (mut errors, mut tokens) = (0usize, 0usize);
            for (d, item) in decoded.iter().zip(items.iter()) {
                errors += levenshtein(d, &item.target);
                tokens += item.target.len();
            }
            errors as f64 / tokens.max(1) as f64
        }
    }
}

/// Whether `candidate` improves on `best` for this task's metric.
pub fn is_better(cfg: &ExperimentConfig, candidate: f64, best: f64) -> bool {
    match cfg.task {
        Task::CommandClassify => candidate > best,
        _ => candidate < best,
    }
}

pub fn worst_metric(cfg: &ExperimentConfig) -> f64 {
    match cfg.task {
        Task::CommandClassify => f64::NEG_INFINITY,
        _ => f64::INFINITY,
    }
}
