//! Plot-ready data bundles: spike rasters, firing-rate histograms,
//! band-filtered population overlays and surrogate distributions for the
//! strongest coupling. No rendering, CSV/JSON only.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikeosc_core::io::SpikeExport;
use spikeosc_core::oscillation::{
    analytic_signal, canonical_bands, design_bandpass, edge_exclusion, filter_zero_phase,
    population_signal, scenario_seed, surrogate_analysis, DEFAULT_PHASE_BINS,
};

use super::analyze::AnalysisSummary;
use super::simulate::write_rates_report;

fn open_summary(analysis_dir: &Path) -> Result<AnalysisSummary> {
    let path = analysis_dir.join("summary.json");
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone)]
struct CsvRecord {
    utterance_id: u64,
    phase_layer: usize,
    amp_layer: usize,
    low_band: String,
    high_band: String,
    p_mi: f64,
    p_mvl: f64,
}

fn read_couplings(analysis_dir: &Path) -> Result<Vec<CsvRecord>> {
    let path = analysis_dir.join("couplings.csv");
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 10 {
            bail!("malformed couplings row: {line:?}");
        }
        out.push(CsvRecord {
            utterance_id: cols[0].parse()?,
            phase_layer: cols[1].parse()?,
            amp_layer: cols[2].parse()?,
            low_band: cols[3].to_string(),
            high_band: cols[4].to_string(),
            p_mi: cols[7].parse()?,
            p_mvl: cols[8].parse()?,
        });
    }
    Ok(out)
}

pub fn run_report(export: &SpikeExport, analysis_dir: &Path, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let summary = open_summary(analysis_dir)?;
    let export_hash = format!("{:#018x}", export.config_hash);
    if summary.config_hash != export_hash {
        bail!(
            "artifact mismatch: analysis was produced from {} but the export hashes to {export_hash}",
            summary.config_hash
        );
    }

    // raster: one row per spike
    let mut raster = BufWriter::new(File::create(out_dir.join("raster.csv"))?);
    writeln!(raster, "utterance_id,t_ms,neuron,layer")?;
    for utt in &export.utterances {
        for (layer, spikes) in utt.layers.iter().enumerate() {
            for ((t, k), &s) in spikes.values.indexed_iter() {
                if s == 1 {
                    writeln!(
                        raster,
                        "{},{},{},{}",
                        utt.id,
                        t as f64 * export.dt_ms,
                        k,
                        layer
                    )?;
                }
            }
        }
    }
    raster.flush()?;

    write_rates_report(export, &out_dir.join("rate_histograms.json"))?;

    // band overlays of the first utterance, every canonical band that the
    // sampling rate and signal length admit
    let fs = 1000.0 / export.dt_ms;
    let first = export
        .utterances
        .first()
        .context("export holds no utterances")?;
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut t_len = 0usize;
    for (layer, spikes) in first.layers.iter().enumerate() {
        let Ok(signal) = population_signal(spikes, layer) else {
            continue;
        };
        t_len = signal.normalized.len();
        for band in canonical_bands() {
            if band.hi >= fs / 2.0 {
                continue;
            }
            let Ok(taps) = design_bandpass(&band, fs) else {
                continue;
            };
            if let Ok(filtered) = filter_zero_phase(&signal.normalized, &taps) {
                columns.push((format!("layer{layer}_{}", band.name), filtered));
            }
        }
    }
    let mut overlay = BufWriter::new(File::create(out_dir.join("band_overlays.csv"))?);
    let header: Vec<String> = std::iter::once("t_ms".to_string())
        .chain(columns.iter().map(|(name, _)| name.clone()))
        .collect();
    writeln!(overlay, "{}", header.join(","))?;
    for t in 0..t_len {
        let mut row = vec![format!("{}", t as f64 * export.dt_ms)];
        for (_, values) in &columns {
            row.push(format!("{}", values[t]));
        }
        writeln!(overlay, "{}", row.join(","))?;
    }
    overlay.flush()?;

    // surrogate distribution of the most significant record, regenerated
    // with the analysis seed so the histogram matches the reported p-values
    let records = read_couplings(analysis_dir)?;
    if let Some(best) = records.iter().min_by(|a, b| {
        let ka = a.p_mi.max(a.p_mvl);
        let kb = b.p_mi.max(b.p_mvl);
        ka.partial_cmp(&kb).unwrap()
    }) {
        let utt = export
            .utterances
            .iter()
            .find(|u| u64::from(u.id) == best.utterance_id)
            .context("analysis references an utterance missing from the export")?;
        let low_idx = summary
            .low_bands
            .iter()
            .position(|b| b == &best.low_band)
            .context("band list mismatch between summary and couplings")?;
        let high_idx = summary
            .high_bands
            .iter()
            .position(|b| b == &best.high_band)
            .context("band list mismatch between summary and couplings")?;
        let catalog = canonical_bands();
        let low = catalog.iter().find(|b| b.name == best.low_band).unwrap();
        let high = catalog.iter().find(|b| b.name == best.high_band).unwrap();

        let phase_sig = population_signal(&utt.layers[best.phase_layer], best.phase_layer)?;
        let amp_sig = population_signal(&utt.layers[best.amp_layer], best.amp_layer)?;
        let lo_taps = design_bandpass(low, fs)?;
        let hi_taps = design_bandpass(high, fs)?;
        let (phase, _) = analytic_signal(&filter_zero_phase(&phase_sig.normalized, &lo_taps)?)?;
        let (_, amp) = analytic_signal(&filter_zero_phase(&amp_sig.normalized, &hi_taps)?)?;
        let edge = edge_exclusion(&lo_taps).max(edge_exclusion(&hi_taps));
        let n = phase.len();
        let seed = scenario_seed(
            summary.analysis_seed,
            best.utterance_id,
            best.phase_layer,
            best.amp_layer,
            low_idx,
            high_idx,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let analysis = surrogate_analysis(
            &phase[edge..n - edge],
            &amp[edge..n - edge],
            summary.n_surrogates,
            DEFAULT_PHASE_BINS,
            &mut rng,
        )?;
        let mut hist = BufWriter::new(File::create(out_dir.join("surrogate_hist.csv"))?);
        writeln!(hist, "index,mi,mvl")?;
        for (i, (mi, mvl)) in analysis
            .mi_surrogates
            .iter()
            .zip(analysis.mvl_surrogates.iter())
            .enumerate()
        {
            writeln!(hist, "{i},{mi},{mvl}")?;
        }
        hist.flush()?;
        let meta = serde_json::json!({
            "utterance_id": best.utterance_id,
            "phase_layer": best.phase_layer,
            "amp_layer": best.amp_layer,
            "low_band": best.low_band,
            "high_band": best.high_band,
            "observed_mi": analysis.observed_mi,
            "observed_mvl": analysis.observed_mvl,
            "p_mi": analysis.p_mi,
            "p_mvl": analysis.p_mvl,
        });
        std::fs::write(
            out_dir.join("surrogate_observed.json"),
            serde_json::to_string_pretty(&meta)?,
        )?;
    }
    Ok(())
}
