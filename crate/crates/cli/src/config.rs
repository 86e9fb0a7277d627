//! Experiment configuration: one JSON document, with CLI flags taking
//! precedence over JSON fields.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use boa_core::attack::AttackConfig;
use boa_core::coefficients;
use boa_core::sampling::{DownOp, DropMode, MixCoefficients, SamplerConfig, UpOp};

/// Everything a command run needs. Missing fields take defaults, so an
/// empty JSON object (or no config file at all) is a valid starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Label used in CSV rows; defaults to the input file stem per image.
    #[serde(default)]
    pub experiment_id: Option<String>,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub seed: u64,
    /// Named operator preset; ignored when an explicit `sampler` is given.
    #[serde(default)]
    pub operator: Option<String>,
    /// Fully explicit sampler; overrides `operator`.
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default = "default_budgets")]
    pub budgets: Vec<usize>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("boa-out")
}

fn default_depth() -> usize {
    1
}

fn default_budgets() -> Vec<usize> {
    vec![5, 10, 20]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// Flag overrides collected from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub operator: Option<String>,
}

impl ExperimentConfig {
    /// Loads the JSON document and applies flag overrides (flags win).
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg: ExperimentConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &overrides.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(depth) = overrides.depth {
            cfg.depth = depth;
        }
        if let Some(op) = &overrides.operator {
            // an explicit flag beats both JSON fields
            cfg.operator = Some(op.clone());
            cfg.sampler = None;
        }
        for input in &cfg.inputs {
            if !input.exists() {
                bail!("input path does not exist: {}", input.display());
            }
        }
        if cfg.depth == 0 {
            bail!("depth must be at least 1");
        }
        Ok(cfg)
    }
}

/// Preset operator names, in the order attack comparisons run them.
pub const PRESET_NAMES: [&str; 5] = ["pixel", "flc", "fp", "boa", "split"];

/// Stretches a bundled 3-stage coefficient set to the requested depth:
/// uses the fitted values stage by stage and falls back to the 0.3
/// initialization beyond them.
fn fit_depth(set: MixCoefficients, depth: usize) -> MixCoefficients {
    let mut out = MixCoefficients::init(depth);
    for s in 0..depth {
        if let Some(&a) = set.alpha.get(s) {
            out.alpha[s] = a;
        }
        if let Some(&b) = set.beta.get(s) {
            out.beta[s] = b;
        }
    }
    out
}

/// Builds the sampler for a named preset.
pub fn preset_sampler(name: &str, depth: usize) -> Result<SamplerConfig> {
    let cfg = match name {
        "pixel" => SamplerConfig::uniform(DownOp::PixelUnshuffle, UpOp::PixelShuffle, depth),
        "flc" => {
            // alias-free low path only: the mixed downsampler pinned to
            // its low branch, shuffle upsampling
            let mut c = SamplerConfig::uniform(DownOp::FpDown, UpOp::PixelShuffle, depth);
            c.coefficients.alpha = vec![0.0; depth];
            c
        }
        "fp" => {
            let mut c = SamplerConfig::uniform(DownOp::FpDown, UpOp::PixelShuffle, depth);
            c.coefficients = fit_depth(coefficients::trained("fp_pixel_shuffle")?, depth);
            c
        }
        "fp_drop" => {
            let mut c = SamplerConfig::uniform(DownOp::FpDownDrop, UpOp::PixelShuffle, depth);
            c.coefficients = fit_depth(coefficients::trained("fp_drop_high")?, depth);
            c.drop.mode = DropMode::AllStages;
            c
        }
        "fp_drop_first" => {
            let mut c = SamplerConfig::uniform(DownOp::FpDownDrop, UpOp::PixelShuffle, depth);
            c.coefficients = fit_depth(coefficients::trained("fp_drop_high_first")?, depth);
            c.drop.mode = DropMode::FirstStageOnly;
            c
        }
        "boa" => {
            let mut c = SamplerConfig::uniform(DownOp::FpDown, UpOp::FreqAvgUp, depth);
            c.coefficients = fit_depth(coefficients::trained("freq_avg_up")?, depth);
            c
        }
        "split" => {
            let mut c = SamplerConfig::uniform(DownOp::FpDown, UpOp::SplitUp, depth);
            c.coefficients = fit_depth(coefficients::trained("split_up")?, depth);
            c
        }
        other => bail!(
            "unknown operator preset '{other}' (available: pixel, flc, fp, fp_drop, fp_drop_first, boa, split)"
        ),
    };
    Ok(cfg)
}

/// Resolves the operators a command should run: the explicit sampler or
/// preset when one is configured, otherwise the full comparison set.
pub fn resolve_operators(cfg: &ExperimentConfig) -> Result<Vec<(String, SamplerConfig)>> {
    if let Some(sampler) = &cfg.sampler {
        return Ok(vec![("custom".to_string(), sampler.clone())]);
    }
    if let Some(name) = &cfg.operator {
        return Ok(vec![(name.clone(), preset_sampler(name, cfg.depth)?)]);
    }
    PRESET_NAMES
        .iter()
        .map(|n| Ok((n.to_string(), preset_sampler(n, cfg.depth)?)))
        .collect()
}

/// Single operator for commands that only use one: the configured
/// sampler/preset, defaulting to the symmetric sandwich.
pub fn resolve_single_operator(cfg: &ExperimentConfig) -> Result<(String, SamplerConfig)> {
    if let Some(sampler) = &cfg.sampler {
        return Ok(("custom".to_string(), sampler.clone()));
    }
    let name = cfg.operator.as_deref().unwrap_or("boa");
    Ok((name.to_string(), preset_sampler(name, cfg.depth)?))
}
