//! Experiment configuration: a documented key-value text file with
//! `SPIKEOSC_`-prefixed environment overrides, validated against the
//! module preconditions at load time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use spikeosc_core::io::fnv1a_64;
use spikeosc_core::oscillation::canonical_bands;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    PhonemeCtc,
    CommandClassify,
    Synthetic,
}

impl Task {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "phoneme-ctc" => Ok(Task::PhonemeCtc),
            "command-classify" => Ok(Task::CommandClassify),
            "synthetic" => Ok(Task::Synthetic),
            other => bail!(
                "task must be one of phoneme-ctc, command-classify, synthetic (got {other})"
            ),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Task::PhonemeCtc => "phoneme-ctc",
            Task::CommandClassify => "command-classify",
            Task::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub dt_ms: f64,
    pub n_layers: usize,
    pub neurons_per_layer: usize,
    pub sfa_fraction: f64,
    pub ff_connectivity: f64,
    pub rec_connectivity: f64,
    pub dale_enabled: bool,
    pub excitatory_fraction: f64,
    pub cnn_channels: usize,
    pub reg_weight: f64,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub f_min_hz: f64,
    pub n_surrogates: usize,
    pub bands: Vec<String>,
    pub n_classes: usize,
    pub top_k_longest: usize,
    pub strict_stability: bool,
    pub detach_reset: bool,
    pub dropout: f64,
    pub phoneme_features: usize,
    pub train_per_class: usize,
    pub eval_per_class: usize,
    pub out_dir: PathBuf,
    pub data_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Synthetic,
            dt_ms: 2.0,
            n_layers: 3,
            neurons_per_layer: 512,
            sfa_fraction: 0.5,
            ff_connectivity: 1.0,
            rec_connectivity: 0.5,
            dale_enabled: false,
            excitatory_fraction: 0.5,
            cnn_channels: 16,
            reg_weight: 0.1,
            seed: 0,
            epochs: 30,
            lr: 1e-3,
            batch_size: 8,
            weight_decay: 0.0,
            f_min_hz: 0.5,
            n_surrogates: 10_000,
            bands: canonical_bands().iter().map(|b| b.name.clone()).collect(),
            n_classes: 10,
            top_k_longest: 0,
            strict_stability: false,
            detach_reset: false,
            dropout: 0.15,
            phoneme_features: 512,
            train_per_class: 16,
            eval_per_class: 5,
            out_dir: PathBuf::from("out"),
            data_dir: PathBuf::new(),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("{key} must be a boolean (true/false), got {v}"),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| anyhow::anyhow!("{key}: cannot parse {v:?} as a number"))
}

impl ExperimentConfig {
    /// Parse the key-value file, apply `SPIKEOSC_*` environment
    /// overrides, fill defaults and validate. Unknown keys are rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut pairs = Self::parse_pairs(&text)?;
        for (key, value) in std::env::vars() {
            if let Some(stripped) = key.strip_prefix("SPIKEOSC_") {
                pairs.insert(stripped.to_lowercase(), value);
            }
        }
        Self::from_pairs(pairs)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pairs(Self::parse_pairs(text)?)
    }

    fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", lineno + 1))?;
            out.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(out)
    }

    fn from_pairs(pairs: BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, v) in &pairs {
            match key.as_str() {
                "task" => cfg.task = Task::parse(v)?,
                "dt_ms" => cfg.dt_ms = parse_num(key, v)?,
                "n_layers" => cfg.n_layers = parse_num(key, v)?,
                "neurons_per_layer" => cfg.neurons_per_layer = parse_num(key, v)?,
                "sfa_fraction" => cfg.sfa_fraction = parse_num(key, v)?,
                "ff_connectivity" => cfg.ff_connectivity = parse_num(key, v)?,
                "rec_connectivity" => cfg.rec_connectivity = parse_num(key, v)?,
                "dale_enabled" => cfg.dale_enabled = parse_bool(key, v)?,
                "excitatory_fraction" => cfg.excitatory_fraction = parse_num(key, v)?,
                "cnn_channels" => cfg.cnn_channels = parse_num(key, v)?,
                "reg_weight" => cfg.reg_weight = parse_num(key, v)?,
                "seed" => cfg.seed = parse_num(key, v)?,
                "epochs" => cfg.epochs = parse_num(key, v)?,
                "lr" => cfg.lr = parse_num(key, v)?,
                "batch_size" => cfg.batch_size = parse_num(key, v)?,
                "weight_decay" => cfg.weight_decay = parse_num(key, v)?,
                "f_min_hz" => cfg.f_min_hz = parse_num(key, v)?,
                "n_surrogates" => cfg.n_surrogates = parse_num(key, v)?,
                "bands" => {
                    cfg.bands = v
                        .split(',')
                        .map(|b| b.trim().to_string())
                        .filter(|b| !b.is_empty())
                        .collect()
                }
                "n_classes" => cfg.n_classes = parse_num(key, v)?,
                "top_k_longest" => cfg.top_k_longest = parse_num(key, v)?,
                "strict_stability" => cfg.strict_stability = parse_bool(key, v)?,
                "detach_reset" => cfg.detach_reset = parse_bool(key, v)?,
                "dropout" => cfg.dropout = parse_num(key, v)?,
                "phoneme_features" => cfg.phoneme_features = parse_num(key, v)?,
                "train_per_class" => cfg.train_per_class = parse_num(key, v)?,
                "eval_per_class" => cfg.eval_per_class = parse_num(key, v)?,
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                "data_dir" => cfg.data_dir = PathBuf::from(v),
                other => bail!("unknown config key {other:?}"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if ![1.0, 2.0, 5.0].contains(&self.dt_ms) {
            bail!("dt_ms must be one of 1, 2, 5 (got {})", self.dt_ms);
        }
        for (key, v) in [
            ("sfa_fraction", self.sfa_fraction),
            ("ff_connectivity", self.ff_connectivity),
            ("rec_connectivity", self.rec_connectivity),
            ("excitatory_fraction", self.excitatory_fraction),
            ("dropout", self.dropout),
        ] {
            if !(0.0..=1.0).contains(&v) {
                bail!("{key} must lie in [0, 1] (got {v})");
            }
        }
        if self.n_layers == 0 || self.neurons_per_layer == 0 {
            bail!("n_layers and neurons_per_layer must be at least 1");
        }
        if self.cnn_channels == 0 {
            bail!("cnn_channels must be at least 1");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            bail!("batch_size and epochs must be at least 1");
        }
        if !(2..=10).contains(&self.n_classes) {
            bail!("n_classes must lie in [2, 10]: the synthetic command vocabulary has 5 carriers x 2 modulation rates");
        }
        if !(self.lr >= 0.0) || !(self.reg_weight >= 0.0) {
            bail!("lr and reg_weight must be non-negative");
        }
        let nyquist = 500.0 / self.dt_ms;
        let known = canonical_bands();
        for name in &self.bands {
            let band = known
                .iter()
                .find(|b| &b.name == name)
                .with_context(|| format!("unknown band {name:?}"))?;
            if band.hi >= nyquist {
                bail!(
                    "band {} ({}-{} Hz) exceeds the Nyquist frequency {} Hz at dt_ms = {}",
                    band.name,
                    band.lo,
                    band.hi,
                    nyquist,
                    self.dt_ms
                );
            }
        }
        if self.f_min_hz <= 0.0 || self.f_min_hz >= nyquist {
            bail!("f_min_hz must lie in (0, Nyquist)");
        }
        Ok(())
    }

    /// Canonical serialization; its FNV-1a hash is embedded in every
    /// artifact so that mixed-provenance inputs are rejected.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("task", self.task.name().into());
        put("dt_ms", format!("{}", self.dt_ms));
        put("n_layers", format!("{}", self.n_layers));
        put("neurons_per_layer", format!("{}", self.neurons_per_layer));
        put("sfa_fraction", format!("{}", self.sfa_fraction));
        put("ff_connectivity", format!("{}", self.ff_connectivity));
        put("rec_connectivity", format!("{}", self.rec_connectivity));
        put("dale_enabled", format!("{}", self.dale_enabled));
        put(
            "excitatory_fraction",
            format!("{}", self.excitatory_fraction),
        );
        put("cnn_channels", format!("{}", self.cnn_channels));
        put("reg_weight", format!("{}", self.reg_weight));
        put("seed", format!("{}", self.seed));
        put("epochs", format!("{}", self.epochs));
        put("lr", format!("{}", self.lr));
        put("batch_size", format!("{}", self.batch_size));
        put("weight_decay", format!("{}", self.weight_decay));
        put("f_min_hz", format!("{}", self.f_min_hz));
        put("n_surrogates", format!("{}", self.n_surrogates));
        put("bands", self.bands.join(","));
        put("n_classes", format!("{}", self.n_classes));
        put("top_k_longest", format!("{}", self.top_k_longest));
        put("strict_stability", format!("{}", self.strict_stability));
        put("detach_reset", format!("{}", self.detach_reset));
        put("dropout", format!("{}", self.dropout));
        put("phoneme_features", format!("{}", self.phoneme_features));
        put("train_per_class", format!("{}", self.train_per_class));
        put("eval_per_class", format!("{}", self.eval_per_class));
        s
    }

    pub fn hash(&self) -> u64 {
        fnv1a_64(self.canonical_string().as_bytes())
    }

    /// Mel hop in milliseconds equals the simulation step.
    pub fn hop_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn nyquist_hz(&self) -> f64 {
        500.0 / self.dt_ms
    }

    pub fn n_fibers(&self) -> usize {
        self.cnn_channels * (80 - 7 + 1)
    }
}
