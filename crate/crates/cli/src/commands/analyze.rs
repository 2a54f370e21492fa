//! Coupling analysis over a spike export: per-utterance population
//! signals, the full layer-pair by band-pair scan, CSV records and an
//! aggregated summary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spikeosc_core::io::SpikeExport;
use spikeosc_core::oscillation::{
    canonical_bands, pac_scan, population_signal, CouplingRecord, FrequencyBand, PacSkip,
    PopulationSignal,
};

#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub config_hash: String,
    pub analysis_seed: u64,
    pub n_surrogates: usize,
    pub low_bands: Vec<String>,
    pub high_bands: Vec<String>,
    pub n_utterances: usize,
    pub n_records: usize,
    pub n_skips: usize,
    pub significant_total: usize,
    pub intra_total: usize,
    pub inter_total: usize,
    /// Significant couplings per "low->high" band pair.
    pub per_band_counts: BTreeMap<String, usize>,
}

pub struct AnalysisOutput {
    pub records: Vec<CouplingRecord>,
    pub skips: Vec<PacSkip>,
    pub summary: AnalysisSummary,
}

pub fn load_export(path: &Path) -> Result<SpikeExport> {
    let mut r =
        BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    Ok(SpikeExport::load(&mut r)?)
}

/// Split the configured band names into modulating (low) and modulated
/// (high) bands, rejecting bands above the export's Nyquist.
pub fn resolve_bands(
    names: &[String],
    fs_hz: f64,
) -> Result<(Vec<FrequencyBand>, Vec<FrequencyBand>)> {
    let catalog = canonical_bands();
    let mut lows = Vec::new();
    let mut highs = Vec::new();
    for name in names {
        let band = catalog
            .iter()
            .find(|b| &b.name == name)
            .with_context(|| format!("unknown band {name:?}"))?;
        if band.hi >= fs_hz / 2.0 {
            bail!(
                "band {} ({}-{} Hz) exceeds the Nyquist frequency {} Hz of this export",
                band.name,
                band.lo,
                band.hi,
                fs_hz / 2.0
            );
        }
        if band.name.contains("gamma") {
            highs.push(band.clone());
        } else {
            lows.push(band.clone());
        }
    }
    Ok((lows, highs))
}

pub fn run_analyze(
    export: &SpikeExport,
    out_dir: &Path,
    band_names: &[String],
    n_surrogates: usize,
    seed: u64,
) -> Result<AnalysisOutput> {
    std::fs::create_dir_all(out_dir)?;
    let fs_hz = 1000.0 / export.dt_ms;
    let (lows, highs) = resolve_bands(band_names, fs_hz)?;

    let mut records = Vec::new();
    let mut skips = Vec::new();
    for utt in &export.utterances {
        let signals: Vec<Option<PopulationSignal>> = utt
            .layers
            .iter()
            .enumerate()
            .map(|(layer, spikes)| population_signal(spikes, layer).ok())
            .collect();
        let (mut r, mut s) = pac_scan(
            &signals,
            u64::from(utt.id),
            &lows,
            &highs,
            n_surrogates,
            spikeosc_core::oscillation::DEFAULT_PHASE_BINS,
            seed,
        );
        records.append(&mut r);
        skips.append(&mut s);
    }

    let mut couplings = BufWriter::new(File::create(out_dir.join("couplings.csv"))?);
    writeln!(
        couplings,
        "utterance_id,phase_layer,amp_layer,low_band,high_band,mi,mvl,p_mi,p_mvl,significant"
    )?;
    for r in &records {
        writeln!(
            couplings,
            "{},{},{},{},{},{},{},{},{},{}",
            r.utterance_id,
            r.phase_layer,
            r.amp_layer,
            r.low_band,
            r.high_band,
            r.mi,
            r.mvl,
            r.p_mi,
            r.p_mvl,
            r.significant
        )?;
    }
    couplings.flush()?;

    let mut skip_log = BufWriter::new(File::create(out_dir.join("skips.csv"))?);
    writeln!(
        skip_log,
        "utterance_id,phase_layer,amp_layer,low_band,high_band,reason"
    )?;
    for s in &skips {
        writeln!(
            skip_log,
            "{},{},{},{},{},{:?}",
            s.utterance_id, s.phase_layer, s.amp_layer, s.low_band, s.high_band, s.reason
        )?;
    }
    skip_log.flush()?;

    let mut per_band_counts = BTreeMap::new();
    for low in &lows {
        for high in &highs {
            per_band_counts.insert(format!("{}->{}", low.name, high.name), 0usize);
        }
    }
    let mut significant_total = 0;
    let mut intra_total = 0;
    let mut inter_total = 0;
    for r in records.iter().filter(|r| r.significant) {
        significant_total += 1;
        if r.phase_layer == r.amp_layer {
            intra_total += 1;
        } else {
            inter_total += 1;
        }
        *per_band_counts
            .entry(format!("{}->{}", r.low_band, r.high_band))
            .or_default() += 1;
    }
    let summary = AnalysisSummary {
        config_hash: format!("{:#018x}", export.config_hash),
        analysis_seed: seed,
        n_surrogates,
        low_bands: lows.iter().map(|b| b.name.clone()).collect(),
        high_bands: highs.iter().map(|b| b.name.clone()).collect(),
        n_utterances: export.utterances.len(),
        n_records: records.len(),
        n_skips: skips.len(),
        significant_total,
        intra_total,
        inter_total,
        per_band_counts,
    };
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(AnalysisOutput {
        records,
        skips,
        summary,
    })
}
