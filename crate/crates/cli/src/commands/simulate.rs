//! Inference runs: pass waveforms through a trained (or freshly
//! initialized) network and export the spike rasters plus firing-rate
//! histograms.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spikeosc_core::frontend::{mel_features, Waveform};
use spikeosc_core::io::{load_checkpoint, ExportUtterance, SpikeExport};
use spikeosc_core::topology::SpikeMode;
use spikeosc_core::training::{firing_rates, Model};

use crate::config::ExperimentConfig;
use crate::dataset::{noise_input, NoiseKind};
use crate::pipeline::{self, N_MELS};

/// Input source of a simulation run.
#[derive(Debug, Clone)]
pub enum SimSource {
    /// Test split of the configured synthetic task, longest-first when
    /// `top_k_longest` is set.
    TestSet,
    Noise {
        kind: NoiseKind,
        seconds: f64,
        count: usize,
    },
    WavFiles(Vec<PathBuf>),
}

#[derive(Debug, Serialize)]
struct LayerRates {
    layer: usize,
    mean_hz: f64,
    /// Histogram over [0, Nyquist] with `bin_hz` spacing.
    bin_hz: f64,
    counts: Vec<u32>,
}

#[derive(Debug, Serialize)]
struct RatesReport {
    config_hash: String,
    dt_ms: f64,
    layers: Vec<LayerRates>,
}

pub fn load_model(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Model> {
    let mut r = BufReader::new(
        File::open(checkpoint).with_context(|| format!("opening {}", checkpoint.display()))?,
    );
    let (model, hash) = load_checkpoint(&mut r)?;
    let expected = cfg.hash();
    if hash != expected {
        bail!(
            "config hash mismatch: checkpoint {} was produced with {hash:#018x}, \
             the supplied config hashes to {expected:#018x}",
            checkpoint.display()
        );
    }
    Ok(model)
}

fn gather_waveforms(cfg: &ExperimentConfig, source: &SimSource) -> Result<Vec<Waveform>> {
    match source {
        SimSource::TestSet => {
            let dataset = pipeline::dataset_for(cfg)?;
            let mut waves: Vec<Waveform> = dataset.test.into_iter().map(|s| s.wave).collect();
            if cfg.top_k_longest > 0 {
                waves.sort_by(|a, b| b.samples.len().cmp(&a.samples.len()));
                waves.truncate(cfg.top_k_longest);
            }
            Ok(waves)
        }
        SimSource::Noise {
            kind,
            seconds,
            count,
        } => Ok((0..*count)
            .map(|i| noise_input(*kind, *seconds, cfg.seed ^ (i as u64) << 8))
            .collect()),
        SimSource::WavFiles(paths) => paths
            .iter()
            .map(|p| spikeosc_core::frontend::wav::read_wav(p).map_err(Into::into))
            .collect(),
    }
}

/// Simulate and export; returns the export for further in-process use.
/// When `features_dir` is set, the extracted Mel features of every
/// utterance are also dumped as CSV for debugging.
pub fn run_simulate_with_features(
    cfg: &ExperimentConfig,
    model: &Model,
    source: &SimSource,
    export_path: &Path,
    rates_path: &Path,
    features_dir: Option<&Path>,
) -> Result<SpikeExport> {
    let waves = gather_waveforms(cfg, source)?;
    if waves.is_empty() {
        bail!("no input utterances to simulate");
    }
    if let Some(dir) = features_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut layer_sizes = vec![model.topology.n_fibers()];
    layer_sizes.extend(model.topology.layers.iter().map(|l| l.n_neurons()));

    let mut utterances = Vec::with_capacity(waves.len());
    for (id, wave) in waves.iter().enumerate() {
        let mel = mel_features(wave, N_MELS, pipeline::MEL_WIN_MS, cfg.hop_ms())?;
        if let Some(dir) = features_dir {
            let mut f = BufWriter::new(File::create(dir.join(format!("utt{id:04}.csv")))?);
            mel.write_csv(&mut f)?;
        }
        let cnn = model
            .cnn
            .as_ref()
            .context("simulation needs a model with a frontend")?;
        let (stim, _) = cnn.forward(&mel, None)?;
        let traces = model
            .topology
            .forward_traces(&stim.values, SpikeMode::Threshold)?;
        utterances.push(ExportUtterance {
            id: id as u32,
            layers: traces
                .iter()
                .map(|t| t.spikes(cfg.dt_ms))
                .collect(),
        });
    }
    let export = SpikeExport {
        config_hash: cfg.hash(),
        dt_ms: cfg.dt_ms,
        layer_sizes,
        utterances,
    };
    let mut w = BufWriter::new(File::create(export_path)?);
    export.save(&mut w)?;
    drop(w);

    write_rates_report(&export, rates_path)?;
    Ok(export)
}

pub fn run_simulate(
    cfg: &ExperimentConfig,
    model: &Model,
    source: &SimSource,
    export_path: &Path,
    rates_path: &Path,
) -> Result<SpikeExport> {
    run_simulate_with_features(cfg, model, source, export_path, rates_path, None)
}

/// Per-layer firing-rate histogram over all utterances.
pub fn write_rates_report(export: &SpikeExport, path: &Path) -> Result<()> {
    let nyquist = 500.0 / export.dt_ms;
    let n_bins = 30usize;
    let bin_hz = nyquist / n_bins as f64;
    let mut layers = Vec::new();
    for layer in 0..export.layer_sizes.len() {
        let mut counts = vec![0u32; n_bins];
        let mut sum = 0.0;
        let mut n = 0usize;
        for utt in &export.utterances {
            let rates = firing_rates(&utt.layers[layer]);
            for &r in rates.iter() {
                sum += r;
                n += 1;
                let bin = ((r / bin_hz) as usize).min(n_bins - 1);
                counts[bin] += 1;
            }
        }
        layers.push(LayerRates {
            layer,
            mean_hz: sum / n.max(1) as f64,
            bin_hz,
            counts,
        });
    }
    let report = RatesReport {
        config_hash: format!("{:#018x}", export.config_hash),
        dt_ms: export.dt_ms,
        layers,
    };
    std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
