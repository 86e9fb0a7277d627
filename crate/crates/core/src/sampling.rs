//! The resampling operators: spectral low-cut pooling (`flc_pool`), the
//! mixed-band downsampler (`fp_down`) and its drop-high variant, the two
//! upsamplers (`freq_avg_up`, `split_up`), and a pipeline composer that
//! stacks them into a down/up sandwich with optional transpose alternation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    center, crop_center, dft2, embed_zero, idft2, pad_spatial, uncenter, unpad_spatial, PadMode,
    PadSpec,
};
use crate::tensor::{
    concat_channels, first_of_each_group, group_average_spectral, pixel_shuffle, pixel_unshuffle,
    transpose_spatial, Shape, SpatialTensor,
};

/// Per-stage mixing weights between the low-frequency branch (weight
/// `1 - value`) and the high-frequency branch (weight `value`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixCoefficients {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl MixCoefficients {
    /// Fresh coefficients at 0.3 per stage, biased toward the low branch.
    pub fn init(depth: usize) -> Self {
        MixCoefficients {
            alpha: vec![0.3; depth],
            beta: vec![0.3; depth],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.iter().chain(self.beta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("mixing coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Diagnostic listing stages whose weight left `[0, 1]`. Such values
    /// are legal (nothing constrains the mix to a convex combination) but
    /// usually indicate a runaway fit.
    pub fn out_of_range_stages(&self) -> Vec<String> {
        let mut notes = Vec::new();
        for (i, a) in self.alpha.iter().enumerate() {
            if !(0.0..=1.0).contains(a) {
                notes.push(format!("alpha[{i}] = {a} outside [0, 1]"));
            }
        }
        for (i, b) in self.beta.iter().enumerate() {
            if !(0.0..=1.0).contains(b) {
                notes.push(format!("beta[{i}] = {b} outside [0, 1]"));
            }
        }
        notes
    }
}

/// Which downsampling stages may drop the high-frequency branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropMode {
    Never,
    AllStages,
    FirstStageOnly,
}

/// Stochastic gate that replaces the mixed output with the pure low path.
/// One Bernoulli draw per call, applied to the whole batch. Never fires in
/// eval mode (`training_mode = false`) unless `force_drop` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropPolicy {
    pub mode: DropMode,
    pub probability: f64,
    pub rng_seed: u64,
    pub training_mode: bool,
    pub force_drop: bool,
}

impl Default for DropPolicy {
    fn default() -> Self {
        DropPolicy {
            mode: DropMode::Never,
            probability: 0.3,
            rng_seed: 0,
            training_mode: false,
            force_drop: false,
        }
    }
}

impl DropPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Config(format!(
                "drop probability {} outside [0, 1]",
                self.probability
            )));
        }
        Ok(())
    }
}

/// RNG state backing a [`DropPolicy`]; owned per pipeline instance.
#[derive(Debug, Clone)]
pub struct DropState {
    rng: ChaCha8Rng,
}

impl DropState {
    pub fn new(policy: &DropPolicy) -> Self {
        DropState {
            rng: ChaCha8Rng::seed_from_u64(policy.rng_seed),
        }
    }

    /// One gate decision. Draws from the RNG only when the stage is
    /// eligible and the outcome is actually random.
    pub fn sample_fire(&mut self, policy: &DropPolicy, stage: usize) -> bool {
        let eligible = match policy.mode {
            DropMode::Never => false,
            DropMode::AllStages => true,
            DropMode::FirstStageOnly => stage == 0,
        };
        if !eligible {
            return false;
        }
        if policy.force_drop {
            return true;
        }
        if !policy.training_mode {
            return false;
        }
        self.rng.gen::<f64>() < policy.probability
    }
}

/// Downsampling operator selection per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownOp {
    PixelUnshuffle,
    FlcPool,
    FpDown,
    FpDownDrop,
}

/// Upsampling operator selection per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpOp {
    PixelShuffle,
    FreqAvgUp,
    SplitUp,
}

/// Full sampler configuration for a pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub down_ops: Vec<DownOp>,
    pub up_ops: Vec<UpOp>,
    pub pad_mode: PadMode,
    /// Skip the spatial padding entirely so circular-convolution Fourier
    /// identities hold exactly. Test/analysis switch; the faithful
    /// operator always pads.
    pub periodic_mode: bool,
    /// Transpose the feature maps around every even-indexed stage.
    pub transpose_alternation: bool,
    pub coefficients: MixCoefficients,
    pub drop: DropPolicy,
}

impl SamplerConfig {
    /// Uniform sandwich: the same operator pair at every stage, reflect
    /// padding, fresh coefficients, drop disabled.
    pub fn uniform(down: DownOp, up: UpOp, depth: usize) -> Self {
        SamplerConfig {
            down_ops: vec![down; depth],
            up_ops: vec![up; depth],
            pad_mode: PadMode::Reflect,
            periodic_mode: false,
            transpose_alternation: false,
            coefficients: MixCoefficients::init(depth),
            drop: DropPolicy::default(),
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if depth == 0 {
            return Err(Error::Config("pipeline depth must be at least 1".into()));
        }
        if self.down_ops.len() != depth || self.up_ops.len() != depth {
            return Err(Error::Config(format!(
                "stage operator lists ({} down, {} up) must match depth {}",
                self.down_ops.len(),
                self.up_ops.len(),
                depth
            )));
        }
        if self.coefficients.alpha.len() != depth || self.coefficients.beta.len() != depth {
            return Err(Error::Config(format!(
                "coefficient stage count ({} alpha, {} beta) must match depth {}",
                self.coefficients.alpha.len(),
                self.coefficients.beta.len(),
                depth
            )));
        }
        self.coefficients.validate()?;
        self.drop.validate()
    }
}

/// Size of the retained low band when halving a length-`n` spectrum.
/// Odd spectra (the padded path) keep the largest odd window not above
/// `⌈n/2⌉`; even spectra (periodic mode) keep exactly `n/2`.
pub(crate) fn low_band_dim(n: usize) -> usize {
    let half = n.div_ceil(2);
    if n % 2 == 1 && half % 2 == 0 {
        half - 1
    } else {
        half
    }
}

/// Geometry shared by the downsampling low path and its adjoint: the pad
/// spec, the retained band, and the spec that trims the halved branch.
#[derive(Debug, Clone)]
pub(crate) struct DownGeometry {
    pub pad: PadSpec,
    pub band: (usize, usize),
    pub halved: PadSpec,
}

pub(crate) fn down_geometry(rows: usize, cols: usize, cfg: &SamplerConfig) -> Result<DownGeometry> {
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::shape(format!(
            "downsampling needs even spatial dims, got {rows}x{cols}"
        )));
    }
    let pad = if cfg.periodic_mode {
        PadSpec::identity(rows, cols, cfg.pad_mode)
    } else {
        PadSpec::for_input(rows, cols, cfg.pad_mode)
    };
    let band = (low_band_dim(pad.outer.0), low_band_dim(pad.outer.1));
    let halved = pad.halved(band)?;
    Ok(DownGeometry { pad, band, halved })
}

/// Alias-free halving: pad, transform, keep the central low band, inverse
/// transform at the reduced size, trim to exactly `(M/2, N/2)`.
pub fn flc_pool(x: &SpatialTensor, cfg: &SamplerConfig) -> Result<SpatialTensor> {
    let s = x.shape();
    let geo = down_geometry(s.rows, s.cols, cfg)?;
    let padded = pad_spatial(x, &geo.pad)?;
    let low = crop_center(&center(&dft2(&padded)), geo.band)?;
    let halved = idft2(&uncenter(&low));
    unpad_spatial(&halved, &geo.halved)
}

/// Full-resolution low-pass: same band as [`flc_pool`] but re-embedded at
/// the padded size before the inverse transform, then unpadded. This is
/// the component subtracted from the input to isolate the high band.
pub fn lowpass_full(x: &SpatialTensor, cfg: &SamplerConfig) -> Result<SpatialTensor> {
    let s = x.shape();
    let geo = down_geometry(s.rows, s.cols, cfg)?;
    let padded = pad_spatial(x, &geo.pad)?;
    let low = crop_center(&center(&dft2(&padded)), geo.band)?;
    let full = embed_zero(&low, geo.pad.outer)?;
    let spatial = idft2(&uncenter(&full));
    unpad_spatial(&spatial, &geo.pad)
}

/// Weighted mix `(1 - w)·low + w·high`.
pub(crate) fn mix(low: &SpatialTensor, high: &SpatialTensor, w: f64) -> Result<SpatialTensor> {
    low.scale(1.0 - w).add(&high.scale(w))
}

fn alpha_for_stage(cfg: &SamplerConfig, stage: usize) -> Result<f64> {
    let alpha = *cfg
        .coefficients
        .alpha
        .get(stage)
        .ok_or_else(|| Error::Config(format!("no alpha coefficient for stage {stage}")))?;
    if !(-10.0..=10.0).contains(&alpha) {
        return Err(Error::Degenerate(format!(
            "alpha[{stage}] = {alpha} outside the [-10, 10] guard"
        )));
    }
    Ok(alpha)
}

fn beta_for_stage(cfg: &SamplerConfig, stage: usize) -> Result<f64> {
    cfg.coefficients
        .beta
        .get(stage)
        .copied()
        .ok_or_else(|| Error::Config(format!("no beta coefficient for stage {stage}")))
}

/// Both branches of the mixed downsampler at `[B, 4C, M/2, N/2]`:
/// the duplicated alias-free low path and the pixel-unshuffled
/// high-frequency residual.
pub fn fp_down_branches(
    x: &SpatialTensor,
    cfg: &SamplerConfig,
) -> Result<(SpatialTensor, SpatialTensor)> {
    let low = concat_channels(&flc_pool(x, cfg)?, 4)?;
    let residual = x.sub(&lowpass_full(x, cfg)?)?;
    let high = pixel_unshuffle(&residual, 2)?;
    Ok((low, high))
}

/// Mixed-band downsampling: `[B, C, M, N] -> [B, 4C, M/2, N/2]`, the
/// alpha-weighted mix of the alias-free low path and the high residual.
pub fn fp_down(x: &SpatialTensor, stage: usize, cfg: &SamplerConfig) -> Result<SpatialTensor> {
    let alpha = alpha_for_stage(cfg, stage)?;
    let (low, high) = fp_down_branches(x, cfg)?;
    mix(&low, &high, alpha)
}

/// Drop-high variant: consults the drop policy once per call and, when the
/// gate fires, returns the pure low path instead of the mix.
pub fn fp_down_drop(
    x: &SpatialTensor,
    stage: usize,
    cfg: &SamplerConfig,
    state: &mut DropState,
) -> Result<SpatialTensor> {
    Ok(fp_down_drop_traced(x, stage, cfg, state)?.0)
}

/// As [`fp_down_drop`] but also reports whether the gate fired.
pub fn fp_down_drop_traced(
    x: &SpatialTensor,
    stage: usize,
    cfg: &SamplerConfig,
    state: &mut DropState,
) -> Result<(SpatialTensor, bool)> {
    let fired = state.sample_fire(&cfg.drop, stage);
    if fired {
        // still guard the coefficient so both branches validate identically
        alpha_for_stage(cfg, stage)?;
        let low = concat_channels(&flc_pool(x, cfg)?, 4)?;
        Ok((low, true))
    } else {
        Ok((fp_down(x, stage, cfg)?, false))
    }
}

/// Both branches of the averaging upsampler at `[B, C/4, 2M, 2N]`: the
/// zero-embedded spectral interpolation of the per-group average, and the
/// pixel-shuffled high-frequency residual.
pub fn freq_avg_up_branches(
    x: &SpatialTensor,
    _cfg: &SamplerConfig,
) -> Result<(SpatialTensor, SpatialTensor)> {
    let s = x.shape();
    if s.channels % 4 != 0 {
        return Err(Error::shape(format!(
            "upsampling needs channels divisible by 4, got {}",
            s.channels
        )));
    }
    let spectrum = dft2(x);
    let averaged = group_average_spectral(&spectrum, 4)?;
    let high_spectrum = spectrum.sub(&averaged)?;
    let high = pixel_shuffle(&idft2(&high_spectrum), 2)?;

    let heads = first_of_each_group(&averaged, 4)?;
    let embedded = embed_zero(&center(&heads), (2 * s.rows, 2 * s.cols))?;
    let low = idft2(&uncenter(&embedded));
    Ok((low, high))
}

/// Averaging upsampler: `[B, C, M, N] -> [B, C/4, 2M, 2N]`, the
/// beta-weighted mix of the spectrally interpolated group average and the
/// shuffled high residual.
pub fn freq_avg_up(x: &SpatialTensor, stage: usize, cfg: &SamplerConfig) -> Result<SpatialTensor> {
    let beta = beta_for_stage(cfg, stage)?;
    let (low, high) = freq_avg_up_branches(x, cfg)?;
    mix(&low, &high, beta)
}

/// Both branches of the split upsampler: shuffle first, then separate the
/// result into its median low band and the complementary high band.
pub fn split_up_branches(
    x: &SpatialTensor,
    _cfg: &SamplerConfig,
) -> Result<(SpatialTensor, SpatialTensor)> {
    let s = x.shape();
    if s.channels % 4 != 0 {
        return Err(Error::shape(format!(
            "upsampling needs channels divisible by 4, got {}",
            s.channels
        )));
    }
    let shuffled = pixel_shuffle(x, 2)?;
    let up = shuffled.shape();
    let band = (low_band_dim(up.rows), low_band_dim(up.cols));
    let cropped = crop_center(&center(&dft2(&shuffled)), band)?;
    let embedded = embed_zero(&cropped, (up.rows, up.cols))?;
    let low = idft2(&uncenter(&embedded));
    let high = shuffled.sub(&low)?;
    Ok((low, high))
}

/// Split upsampler: `[B, C, M, N] -> [B, C/4, 2M, 2N]`.
pub fn split_up(x: &SpatialTensor, stage: usize, cfg: &SamplerConfig) -> Result<SpatialTensor> {
    let beta = beta_for_stage(cfg, stage)?;
    let (low, high) = split_up_branches(x, cfg)?;
    mix(&low, &high, beta)
}

/// Which half of the sandwich a recorded stage belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Down(DownOp),
    Up(UpOp),
}

/// Per-stage record kept by a traced forward pass: everything the adjoint
/// needs (shapes, gate outcomes) plus the branch tensors for coefficient
/// gradients. Branch tensors live in the stage's inner (possibly
/// transposed) frame.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub kind: StageKind,
    pub stage: usize,
    pub transposed: bool,
    pub input_shape: Shape,
    pub fired: bool,
    pub branches: Option<(SpatialTensor, SpatialTensor)>,
}

/// Trace of one pipeline forward pass.
#[derive(Debug, Clone, Default)]
pub struct PipelineTrace {
    pub records: Vec<StageRecord>,
}

/// A composed down/up sandwich. Owns the drop RNG, so a pipeline value is
/// deterministic given its config; clone it to replay from the seed.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: SamplerConfig,
    depth: usize,
    drop_state: DropState,
}

/// Builds a depth-`depth` sandwich from the config after validating stage
/// counts and coefficients.
pub fn compose_pipeline(cfg: SamplerConfig, depth: usize) -> Result<Pipeline> {
    cfg.validate(depth)?;
    let drop_state = DropState::new(&cfg.drop);
    Ok(Pipeline {
        cfg,
        depth,
        drop_state,
    })
}

impl Pipeline {
    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn wraps(&self, stage: usize) -> bool {
        self.cfg.transpose_alternation && stage % 2 == 0
    }

    /// Runs the sandwich: down stages `0..depth`, then the mirrored up
    /// stages in reverse order.
    pub fn forward(&mut self, x: &SpatialTensor) -> Result<SpatialTensor> {
        Ok(self.forward_traced(x)?.0)
    }

    /// Runs the sandwich and records the per-stage trace used by the
    /// adjoint pass.
    pub fn forward_traced(&mut self, x: &SpatialTensor) -> Result<(SpatialTensor, PipelineTrace)> {
        let mut trace = PipelineTrace::default();
        let mut current = x.clone();
        for stage in 0..self.depth {
            current = self.run_down(&current, stage, &mut trace)?;
        }
        for stage in (0..self.depth).rev() {
            current = self.run_up(&current, stage, &mut trace)?;
        }
        Ok((current, trace))
    }

    fn run_down(
        &mut self,
        x: &SpatialTensor,
        stage: usize,
        trace: &mut PipelineTrace,
    ) -> Result<SpatialTensor> {
        let wrap = self.wraps(stage);
        let inner = if wrap { transpose_spatial(x) } else { x.clone() };
        let op = self.cfg.down_ops[stage];
        let mut fired = false;
        let mut branches = None;
        let out = match op {
            DownOp::PixelUnshuffle => pixel_unshuffle(&inner, 2)?,
            DownOp::FlcPool => flc_pool(&inner, &self.cfg)?,
            DownOp::FpDown => {
                let alpha = alpha_for_stage(&self.cfg, stage)?;
                let (low, high) = fp_down_branches(&inner, &self.cfg)?;
                let y = mix(&low, &high, alpha)?;
                branches = Some((low, high));
                y
            }
            DownOp::FpDownDrop => {
                fired = self.drop_state.sample_fire(&self.cfg.drop, stage);
                let alpha = alpha_for_stage(&self.cfg, stage)?;
                if fired {
                    concat_channels(&flc_pool(&inner, &self.cfg)?, 4)?
                } else {
                    let (low, high) = fp_down_branches(&inner, &self.cfg)?;
                    let y = mix(&low, &high, alpha)?;
                    branches = Some((low, high));
                    y
                }
            }
        };
        trace.records.push(StageRecord {
            kind: StageKind::Down(op),
            stage,
            transposed: wrap,
            input_shape: inner.shape(),
            fired,
            branches,
        });
        Ok(if wrap { transpose_spatial(&out) } else { out })
    }

    fn run_up(
        &mut self,
        x: &SpatialTensor,
        stage: usize,
        trace: &mut PipelineTrace,
    ) -> Result<SpatialTensor> {
        let wrap = self.wraps(stage);
        let inner = if wrap { transpose_spatial(x) } else { x.clone() };
        let op = self.cfg.up_ops[stage];
        let mut branches = None;
        let out = match op {
            UpOp::PixelShuffle => pixel_shuffle(&inner, 2)?,
            UpOp::FreqAvgUp => {
                let beta = beta_for_stage(&self.cfg, stage)?;
                let (low, high) = freq_avg_up_branches(&inner, &self.cfg)?;
                let y = mix(&low, &high, beta)?;
                branches = Some((low, high));
                y
            }
            UpOp::SplitUp => {
                let beta = beta_for_stage(&self.cfg, stage)?;
                let (low, high) = split_up_branches(&inner, &self.cfg)?;
                let y = mix(&low, &high, beta)?;
                branches = Some((low, high));
                y
            }
        };
        trace.records.push(StageRecord {
            kind: StageKind::Up(op),
            stage,
            transposed: wrap,
            input_shape: inner.shape(),
            fired: false,
            branches,
        });
        Ok(if wrap { transpose_spatial(&out) } else { out })
    }

    /// Runs the sandwich and returns every labeled intermediate tensor,
    /// starting with the input itself.
    pub fn forward_collect(
        &mut self,
        x: &SpatialTensor,
    ) -> Result<Vec<(String, SpatialTensor)>> {
        let mut stages = vec![("input".to_string(), x.clone())];
        let mut trace = PipelineTrace::default();
        let mut current = x.clone();
        for stage in 0..self.depth {
            current = self.run_down(&current, stage, &mut trace)?;
            stages.push((format!("down{stage}"), current.clone()));
        }
        for stage in (0..self.depth).rev() {
            current = self.run_up(&current, stage, &mut trace)?;
            stages.push((format!("up{stage}"), current.clone()));
        }
        Ok(stages)
    }

    /// Shape of every intermediate tensor for an input shape, without
    /// running the transforms. Index 0 is the input itself.
    pub fn stage_shapes(&self, input: Shape) -> Result<Vec<Shape>> {
        let mut shapes = vec![input];
        let mut s = input;
        for stage in 0..self.depth {
            if s.rows % 2 != 0 || s.cols % 2 != 0 {
                return Err(Error::shape(format!(
                    "stage {stage}: spatial dims {}x{} are not even",
                    s.rows, s.cols
                )));
            }
            s = match self.cfg.down_ops[stage] {
                DownOp::PixelUnshuffle | DownOp::FpDown | DownOp::FpDownDrop => {
                    Shape::new(s.batch, 4 * s.channels, s.rows / 2, s.cols / 2)
                }
                DownOp::FlcPool => Shape::new(s.batch, s.channels, s.rows / 2, s.cols / 2),
            };
            shapes.push(s);
        }
        for stage in (0..self.depth).rev() {
            if s.channels % 4 != 0 {
                return Err(Error::shape(format!(
                    "stage {stage}: channel count {} not divisible by 4",
                    s.channels
                )));
            }
            let _ = self.cfg.up_ops[stage];
            s = Shape::new(s.batch, s.channels / 4, s.rows * 2, s.cols * 2);
            shapes.push(s);
        }
        Ok(shapes)
    }
}
