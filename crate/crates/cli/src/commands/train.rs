//! Training orchestration: epoch loop, per-epoch JSON log, best- and
//! final-checkpoint persistence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use spikeosc_core::io::save_checkpoint;
use spikeosc_core::training::{evaluate, train_step, AdamW, Model, TrainItem};

use crate::config::ExperimentConfig;
use crate::pipeline;

#[derive(Debug, Serialize)]
struct EpochRecord {
    epoch: usize,
    ctc: f64,
    reg: f64,
    total: f64,
    mean_firing_rate_hz: f64,
    val_metric: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub best_val_metric: f64,
    pub final_model: Model,
}

fn step_seed(config_seed: u64, epoch: usize, step: usize) -> u64 {
    config_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((epoch as u64) << 20)
        .wrapping_add(step as u64)
}

pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let dataset = pipeline::dataset_for(cfg)?;
    let train_items = pipeline::prepare_items(cfg, &dataset.train)?;
    let val_items = pipeline::prepare_items(cfg, &dataset.val)?;

    let mut model = pipeline::build_model(cfg)?;
    let mut adam = AdamW::new(&model);
    let hyper = pipeline::hyper_for(cfg);
    let config_hash = cfg.hash();

    let log_path = cfg.out_dir.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path)?);
    let best_path = cfg.out_dir.join("best.spkc");
    let final_path = cfg.out_dir.join("final.spkc");

    let mut best = pipeline::worst_metric(cfg);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_items.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(step_seed(cfg.seed, epoch, usize::MAX));
        order.shuffle(&mut rng);

        let mut epoch_ctc = 0.0;
        let mut epoch_reg = 0.0;
        let mut epoch_total = 0.0;
        let mut epoch_rate = 0.0;
        let mut n_steps = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<TrainItem> = chunk.iter().map(|&i| train_items[i].clone()).collect();
            let (losses, mean_rate) = train_step(
                &mut model,
                &mut adam,
                &batch,
                &hyper,
                step_seed(cfg.seed, epoch, step),
            )
            .with_context(|| format!("epoch {epoch} step {step}"))?;
            epoch_ctc += losses.ctc;
            epoch_reg += losses.reg;
            epoch_total += losses.total;
            epoch_rate += mean_rate;
            n_steps += 1;
        }
        let n = n_steps.max(1) as f64;
        let (_, decoded) = evaluate(&model, &val_items, &hyper)?;
        let val = pipeline::val_metric(cfg, &decoded, &val_items);
        let record = EpochRecord {
            epoch,
            ctc: epoch_ctc / n,
            reg: epoch_reg / n,
            total: epoch_total / n,
            mean_firing_rate_hz: epoch_rate / n,
            val_metric: val,
        };
        writeln!(log, "{}", serde_json::to_string(&record)?)?;
        log.flush()?;
        if pipeline::is_better(cfg, val, best) {
            best = val;
            let mut f = BufWriter::new(File::create(&best_path)?);
            save_checkpoint(&mut f, &model, config_hash)?;
        }
    }
    log.flush()?;
    let mut f = BufWriter::new(File::create(&final_path)?);
    save_checkpoint(&mut f, &model, config_hash)?;
    Ok(TrainOutcome {
        best_checkpoint: best_path,
        final_checkpoint: final_path,
        log_path,
        best_val_metric: best,
        final_model: model,
    })
}
