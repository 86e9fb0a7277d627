//! Analytic vector-Jacobian products (adjoints) for every operator, a
//! registry exposing them behind a flat `R^n -> R^m` interface, and a
//! central finite-difference checker.
//!
//! Every operator in this crate is linear in its tensor input (the mixes
//! are affine in their coefficient), so each VJP is the adjoint linear
//! map. Complex tensors use the real-pair inner product: a spectrum is a
//! plain real vector of interleaved (re, im) components, which keeps the
//! checker real-valued and makes the transform adjoints conjugate
//! transforms scaled by the convention factors.

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::sampling::{
    self, compose_pipeline, DownOp, Pipeline, PipelineTrace, SamplerConfig, StageKind, UpOp,
};
use crate::spectral::{
    center, crop_center, embed_zero, pad_source, uncenter, DftConvention, PadSpec,
};
use crate::tensor::{
    group_average_spectral, pixel_shuffle, pixel_unshuffle, transpose_spatial, Shape,
    SpatialTensor, SpectralTensor,
};

// ---------------------------------------------------------------------------
// primitive adjoints
// ---------------------------------------------------------------------------

/// Adjoint of the forward transform: `1/(M·N)` times the real part of the
/// unnormalized inverse transform of the cotangent.
pub fn vjp_dft2(cot: &SpectralTensor) -> SpatialTensor {
    let s = cot.shape();
    let scale = DftConvention::forward_scale(s.rows, s.cols);
    let raw = crate::spectral::inverse_raw(cot);
    SpatialTensor::from_vec(s, raw.data().iter().map(|v| v.re * scale).collect())
        .expect("shape preserved")
}

/// Adjoint of the inverse transform (real part of the unnormalized sum):
/// the unnormalized forward transform of the cotangent.
pub fn vjp_idft2(cot: &SpatialTensor) -> SpectralTensor {
    crate::spectral::forward_raw(&crate::spectral::real_to_complex(cot))
}

/// Adjoint of a central crop: re-embed the cotangent into zeros.
pub fn vjp_crop(cot: &SpectralTensor, full_dims: (usize, usize)) -> Result<SpectralTensor> {
    embed_zero(cot, full_dims)
}

/// Adjoint of the zero embed: crop back to the original window.
pub fn vjp_embed(cot: &SpectralTensor, orig_dims: (usize, usize)) -> Result<SpectralTensor> {
    crop_center(cot, orig_dims)
}

/// Adjoint of border padding: fold every padded cell back onto its source
/// sample (zero-mode cells have no source and are dropped).
pub fn vjp_pad_spatial(cot: &SpatialTensor, spec: &PadSpec) -> Result<SpatialTensor> {
    let s = cot.shape();
    if (s.rows, s.cols) != spec.outer {
        return Err(Error::shape(format!(
            "pad adjoint expects cotangent {}x{}, got {}x{}",
            spec.outer.0, spec.outer.1, s.rows, s.cols
        )));
    }
    let inner_shape = Shape::new(s.batch, s.channels, spec.inner.0, spec.inner.1);
    let row_src: Vec<Option<usize>> = (0..spec.outer.0)
        .map(|r| pad_source(spec.mode, spec.inner.0, spec.before.0, r))
        .collect();
    let col_src: Vec<Option<usize>> = (0..spec.outer.1)
        .map(|c| pad_source(spec.mode, spec.inner.1, spec.before.1, c))
        .collect();
    let mut out = SpatialTensor::zeros(inner_shape);
    for b in 0..s.batch {
        for ch in 0..s.channels {
            for m in 0..s.rows {
                for n in 0..s.cols {
                    if let (Some(sm), Some(sn)) = (row_src[m], col_src[n]) {
                        let v = out.get(b, ch, sm, sn) + cot.get(b, ch, m, n);
                        out.set(b, ch, sm, sn, v);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of unpadding: place the cotangent back in the interior of a
/// zero tensor at the recorded offset.
pub fn vjp_unpad_spatial(cot: &SpatialTensor, spec: &PadSpec) -> Result<SpatialTensor> {
    let s = cot.shape();
    if (s.rows, s.cols) != spec.inner {
        return Err(Error::shape(format!(
            "unpad adjoint expects cotangent {}x{}, got {}x{}",
            spec.inner.0, spec.inner.1, s.rows, s.cols
        )));
    }
    let outer_shape = Shape::new(s.batch, s.channels, spec.outer.0, spec.outer.1);
    let mut out = SpatialTensor::zeros(outer_shape);
    for b in 0..s.batch {
        for ch in 0..s.channels {
            for m in 0..s.rows {
                for n in 0..s.cols {
                    out.set(b, ch, m + spec.before.0, n + spec.before.1, cot.get(b, ch, m, n));
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of channel duplication: sum the copies of each channel.
pub fn vjp_concat_channels(cot: &SpatialTensor, times: usize) -> Result<SpatialTensor> {
    let s = cot.shape();
    if times == 0 || s.channels % times != 0 {
        return Err(Error::shape(format!(
            "concat adjoint: {} channels not divisible by {}",
            s.channels, times
        )));
    }
    let out_shape = Shape::new(s.batch, s.channels / times, s.rows, s.cols);
    Ok(SpatialTensor::from_fn(out_shape, |b, c, m, n| {
        (0..times).map(|i| cot.get(b, c * times + i, m, n)).sum()
    }))
}

/// Adjoint of keeping group heads: scatter each cotangent channel back to
/// its group-head position.
pub fn vjp_first_of_each_group(cot: &SpectralTensor, group: usize) -> SpectralTensor {
    let s = cot.shape();
    let out_shape = Shape::new(s.batch, s.channels * group, s.rows, s.cols);
    let mut out = SpectralTensor::zeros(out_shape, cot.is_centered());
    for b in 0..s.batch {
        for c in 0..s.channels {
            for k in 0..s.rows {
                for l in 0..s.cols {
                    out.set(b, c * group, k, l, cot.get(b, c, k, l));
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// composite adjoints
// ---------------------------------------------------------------------------

/// Adjoint of [`sampling::flc_pool`] for a given input shape.
pub fn vjp_flc_pool(
    cot: &SpatialTensor,
    input_shape: Shape,
    cfg: &SamplerConfig,
) -> Result<SpatialTensor> {
    let geo = sampling::down_geometry(input_shape.rows, input_shape.cols, cfg)?;
    let v = vjp_unpad_spatial(cot, &geo.halved)?;
    let v = vjp_idft2(&v);
    let v = center(&v);
    let v = vjp_crop(&v, geo.pad.outer)?;
    let v = uncenter(&v);
    let v = vjp_dft2(&v);
    vjp_pad_spatial(&v, &geo.pad)
}

/// Adjoint of [`sampling::lowpass_full`].
pub fn vjp_lowpass_full(
    cot: &SpatialTensor,
    input_shape: Shape,
    cfg: &SamplerConfig,
) -> Result<SpatialTensor> {
    let geo = sampling::down_geometry(input_shape.rows, input_shape.cols, cfg)?;
    let v = vjp_unpad_spatial(cot, &geo.pad)?;
    let v = vjp_idft2(&v);
    let v = center(&v);
    let v = vjp_embed(&v, geo.band)?;
    let v = vjp_crop(&v, geo.pad.outer)?;
    let v = uncenter(&v);
    let v = vjp_dft2(&v);
    vjp_pad_spatial(&v, &geo.pad)
}

/// Adjoint of the duplicated low branch of the downsampler
/// (`concat_channels(flc_pool(x), 4)`).
pub fn vjp_fp_low_branch(
    cot: &SpatialTensor,
    input_shape: Shape,
    cfg: &SamplerConfig,
) -> Result<SpatialTensor> {
    vjp_flc_pool(&vjp_concat_channels(cot, 4)?, input_shape, cfg)
}

/// Adjoint of the high branch of the downsampler
/// (`pixel_unshuffle(x - lowpass_full(x), 2)`).
pub fn vjp_fp_high_branch(
    cot: &SpatialTensor,
    input_shape: Shape,
    cfg: &SamplerConfig,
) -> Result<SpatialTensor> {
    let v = pixel_shuffle(cot, 2)?;
    v.sub(&vjp_lowpass_full(&v, input_shape, cfg)?)
}

/// Adjoint of [`sampling::fp_down`] with respect to the input.
pub fn vjp_fp_down(
    cot: &SpatialTensor,
    input_shape: Shape,
    cfg: &SamplerConfig,
    alpha: f64,
) -> Result<SpatialTensor> {
    let low = vjp_fp_low_branch(cot, input_shape, cfg)?;
    let high = vjp_fp_high_branch(cot, input_shape, cfg)?;
    low.scale(1.0 - alpha).add(&high.scale(alpha))
}

/// Adjoint of [`sampling::freq_avg_up`] with respect to the input.
pub fn vjp_freq_avg_up(
    cot: &SpatialTensor,
    input_shape: Shape,
    cfg: &SamplerConfig,
    beta: f64,
) -> Result<SpatialTensor> {
    let _ = cfg;
    // high branch: unshuffle, transform adjoint, (I - group_average)
    let vh = pixel_unshuffle(cot, 2)?;
    let vh = vjp_idft2(&vh);
    let spec_high = vh.sub(&group_average_spectral(&vh, 4)?)?;

    // low branch: transform adjoint at doubled dims, crop back to the
    // original bins, scatter to group heads, group-average adjoint
    let vl = vjp_idft2(cot);
    let vl = center(&vl);
    let vl = vjp_embed(&vl, (input_shape.rows, input_shape.cols))?;
    let vl = uncenter(&vl);
    let vl = vjp_first_of_each_group(&vl, 4);
    let spec_low = group_average_spectral(&vl, 4)?;

    let mut total = SpectralTensor::zeros(spec_low.shape(), false);
    for (out, (lo, hi)) in total
        .data_mut()
        .iter_mut()
        .zip(spec_low.data().iter().zip(spec_high.data()))
    {
        *out = lo * (1.0 - beta) + hi * beta;
    }
    Ok(vjp_dft2(&total))
}

/// Adjoint of the no-padding low-pass used by the split upsampler.
fn vjp_lowpass_nopad(
    cot: &SpatialTensor,
    dims: (usize, usize),
    band: (usize, usize),
) -> Result<SpatialTensor> {
    let v = vjp_idft2(cot);
    let v = center(&v);
    let v = vjp_embed(&v, band)?;
    let v = vjp_crop(&v, dims)?;
    let v = uncenter(&v);
    Ok(vjp_dft2(&v))
}

/// Adjoint of [`sampling::split_up`] with respect to the input.
pub fn vjp_split_up(
    cot: &SpatialTensor,
    input_shape: Shape,
    _cfg: &SamplerConfig,
    beta: f64,
) -> Result<SpatialTensor> {
    // y = beta·P(x) + (1 - 2beta)·LP(P(x)) with P = pixel_shuffle
    let dims = (2 * input_shape.rows, 2 * input_shape.cols);
    let band = (
        sampling::low_band_dim(dims.0),
        sampling::low_band_dim(dims.1),
    );
    let through_lp = vjp_lowpass_nopad(cot, dims, band)?;
    let combined = cot.scale(beta).add(&through_lp.scale(1.0 - 2.0 * beta))?;
    pixel_unshuffle(&combined, 2)
}

// ---------------------------------------------------------------------------
// pipeline adjoint
// ---------------------------------------------------------------------------

/// Gradients of a scalar functional through a pipeline: cotangent with
/// respect to the input plus per-stage coefficient derivatives.
#[derive(Debug, Clone)]
pub struct PipelineGrads {
    pub input: SpatialTensor,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Reverse-order chain rule over a recorded forward pass.
pub fn pipeline_vjp(
    cfg: &SamplerConfig,
    trace: &PipelineTrace,
    cotangent: &SpatialTensor,
) -> Result<PipelineGrads> {
    let depth = cfg.down_ops.len();
    let mut alpha = vec![0.0; depth];
    let mut beta = vec![0.0; depth];
    let mut cot = cotangent.clone();
    for rec in trace.records.iter().rev() {
        let inner = if rec.transposed {
            transpose_spatial(&cot)
        } else {
            cot
        };
        let next = match rec.kind {
            StageKind::Down(DownOp::PixelUnshuffle) => pixel_shuffle(&inner, 2)?,
            StageKind::Down(DownOp::FlcPool) => vjp_flc_pool(&inner, rec.input_shape, cfg)?,
            StageKind::Down(DownOp::FpDown) | StageKind::Down(DownOp::FpDownDrop) => {
                if rec.fired {
                    // straight-through on the selected branch: the output
                    // was the pure low path, independent of alpha
                    vjp_fp_low_branch(&inner, rec.input_shape, cfg)?
                } else {
                    let a = cfg.coefficients.alpha[rec.stage];
                    let (low, high) = rec
                        .branches
                        .as_ref()
                        .expect("mixed stage records its branches");
                    alpha[rec.stage] += inner.dot(&high.sub(low)?)?;
                    vjp_fp_down(&inner, rec.input_shape, cfg, a)?
                }
            }
            StageKind::Up(UpOp::PixelShuffle) => pixel_unshuffle(&inner, 2)?,
            StageKind::Up(UpOp::FreqAvgUp) => {
                let b = cfg.coefficients.beta[rec.stage];
                let (low, high) = rec
                    .branches
                    .as_ref()
                    .expect("mixed stage records its branches");
                beta[rec.stage] += inner.dot(&high.sub(low)?)?;
                vjp_freq_avg_up(&inner, rec.input_shape, cfg, b)?
            }
            StageKind::Up(UpOp::SplitUp) => {
                let b = cfg.coefficients.beta[rec.stage];
                let (low, high) = rec
                    .branches
                    .as_ref()
                    .expect("mixed stage records its branches");
                beta[rec.stage] += inner.dot(&high.sub(low)?)?;
                vjp_split_up(&inner, rec.input_shape, cfg, b)?
            }
        };
        cot = if rec.transposed {
            transpose_spatial(&next)
        } else {
            next
        };
    }
    Ok(PipelineGrads {
        input: cot,
        alpha,
        beta,
    })
}

// ---------------------------------------------------------------------------
// registry and finite-difference checker
// ---------------------------------------------------------------------------

/// One registered operator behind a flat real interface. Complex tensors
/// are flattened to interleaved (re, im) pairs.
pub struct FlatOp {
    pub name: String,
    pub base_input: Vec<f64>,
    pub forward: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    pub vjp: Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>,
}

/// Outcome of one finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub op: String,
    pub max_rel_error: f64,
    pub probes: usize,
    pub step: f64,
}

fn spatial_to_flat(x: &SpatialTensor) -> Vec<f64> {
    x.data().to_vec()
}

fn flat_to_spatial(shape: Shape, flat: &[f64]) -> SpatialTensor {
    SpatialTensor::from_vec(shape, flat.to_vec()).expect("registry shapes are consistent")
}

fn spectral_to_flat(x: &SpectralTensor) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.data().len());
    for v in x.data() {
        out.push(v.re);
        out.push(v.im);
    }
    out
}

fn flat_to_spectral(shape: Shape, centered: bool, flat: &[f64]) -> SpectralTensor {
    let data: Vec<Complex64> = flat
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    SpectralTensor::from_vec(shape, data, centered).expect("registry shapes are consistent")
}

fn random_flat(len: usize, rng: &mut StdRng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(0.0..1.0)).collect()
}

/// Central finite differences along >= 20 random probe directions against
/// the registered VJP. Relative error uses
/// `max(|analytic|, |numeric|, 1e-8)` as the denominator.
pub fn finite_difference_check(op: &FlatOp, input: &[f64], h: f64) -> GradCheckReport {
    const PROBES: usize = 24;
    let mut rng = StdRng::seed_from_u64(0xb0a);
    let y0 = (op.forward)(input);
    let cot: Vec<f64> = (0..y0.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let grad = (op.vjp)(input, &cot);
    let mut max_rel: f64 = 0.0;
    let mut x_plus = input.to_vec();
    let mut x_minus = input.to_vec();
    for _ in 0..PROBES {
        let dir: Vec<f64> = (0..input.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..input.len() {
            x_plus[i] = input[i] + h * dir[i];
            x_minus[i] = input[i] - h * dir[i];
        }
        let f_plus = (op.forward)(&x_plus);
        let f_minus = (op.forward)(&x_minus);
        let num = f_plus
            .iter()
            .zip(f_minus.iter())
            .zip(cot.iter())
            .map(|((p, m), v)| v * (p - m))
            .sum::<f64>()
            / (2.0 * h);
        let ana: f64 = grad.iter().zip(dir.iter()).map(|(g, d)| g * d).sum();
        let rel = (num - ana).abs() / ana.abs().max(num.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    GradCheckReport {
        op: op.name.clone(),
        max_rel_error: max_rel,
        probes: PROBES,
        step: h,
    }
}

/// Looks an operator up by name.
pub fn find_op<'a>(ops: &'a [FlatOp], name: &str) -> Result<&'a FlatOp> {
    ops.iter()
        .find(|op| op.name == name)
        .ok_or_else(|| Error::UnknownOp(name.to_string()))
}

/// Dispatches a VJP by operator name at the given primal input.
pub fn vjp(ops: &[FlatOp], name: &str, input: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
    Ok((find_op(ops, name)?.vjp)(input, cotangent))
}

macro_rules! flat_op {
    ($name:expr, $base:expr, $fwd:expr, $vjp:expr) => {
        FlatOp {
            name: $name.to_string(),
            base_input: $base,
            forward: Box::new($fwd),
            vjp: Box::new($vjp),
        }
    };
}

/// Builds the full registry: every tensor/spectral/sampling operator plus
/// the coefficient derivatives and a depth-2 composed pipeline.
pub fn registered_ops() -> Vec<FlatOp> {
    let mut rng = StdRng::seed_from_u64(97);
    let mut ops = Vec::new();

    let sp = Shape::new(1, 2, 8, 8);

    // transforms
    ops.push(flat_op!(
        "dft2",
        random_flat(sp.len(), &mut rng),
        move |x: &[f64]| spectral_to_flat(&crate::spectral::dft2(&flat_to_spatial(sp, x))),
        move |_, v: &[f64]| spatial_to_flat(&vjp_dft2(&flat_to_spectral(sp, false, v)))
    ));
    ops.push(flat_op!(
        "idft2",
        random_flat(2 * sp.len(), &mut rng),
        move |x: &[f64]| spatial_to_flat(&crate::spectral::idft2(&flat_to_spectral(sp, false, x))),
        move |_, v: &[f64]| spectral_to_flat(&vjp_idft2(&flat_to_spatial(sp, v)))
    ));

    // centering permutations on an odd grid
    let sodd = Shape::new(1, 1, 5, 7);
    ops.push(flat_op!(
        "center",
        random_flat(2 * sodd.len(), &mut rng),
        move |x: &[f64]| spectral_to_flat(&center(&flat_to_spectral(sodd, false, x))),
        move |_, v: &[f64]| spectral_to_flat(&uncenter(&flat_to_spectral(sodd, true, v)))
    ));
    ops.push(flat_op!(
        "uncenter",
        random_flat(2 * sodd.len(), &mut rng),
        move |x: &[f64]| spectral_to_flat(&uncenter(&flat_to_spectral(sodd, true, x))),
        move |_, v: &[f64]| spectral_to_flat(&center(&flat_to_spectral(sodd, false, v)))
    ));

    // crop / embed on centered spectra
    let sfull = Shape::new(1, 1, 9, 9);
    let sband = Shape::new(1, 1, 5, 5);
    ops.push(flat_op!(
        "crop_low",
        random_flat(2 * sfull.len(), &mut rng),
        move |x: &[f64]| {
            spectral_to_flat(&crate::spectral::crop_low(&flat_to_spectral(sfull, true, x), (5, 5)).unwrap())
        },
        move |_, v: &[f64]| {
            spectral_to_flat(&vjp_crop(&flat_to_spectral(sband, true, v), (9, 9)).unwrap())
        }
    ));
    ops.push(flat_op!(
        "embed_zero",
        random_flat(2 * sband.len(), &mut rng),
        move |x: &[f64]| {
            spectral_to_flat(&embed_zero(&flat_to_spectral(sband, true, x), (9, 9)).unwrap())
        },
        move |_, v: &[f64]| {
            spectral_to_flat(&vjp_embed(&flat_to_spectral(sfull, true, v), (5, 5)).unwrap())
        }
    ));

    // padding in each mode, plus unpadding
    for mode in [
        crate::spectral::PadMode::Reflect,
        crate::spectral::PadMode::Zero,
        crate::spectral::PadMode::Replicate,
    ] {
        let spec = PadSpec::for_input(8, 8, mode);
        let padded = Shape::new(1, 1, spec.outer.0, spec.outer.1);
        let inner = Shape::new(1, 1, 8, 8);
        let name = format!("pad_{:?}", mode).to_lowercase();
        ops.push(flat_op!(
            name,
            random_flat(inner.len(), &mut rng),
            move |x: &[f64]| {
                spatial_to_flat(
                    &crate::spectral::pad_spatial(&flat_to_spatial(inner, x), &spec).unwrap(),
                )
            },
            move |_, v: &[f64]| {
                spatial_to_flat(&vjp_pad_spatial(&flat_to_spatial(padded, v), &spec).unwrap())
            }
        ));
    }
    {
        let spec = PadSpec::for_input(8, 8, crate::spectral::PadMode::Reflect);
        let padded = Shape::new(1, 1, spec.outer.0, spec.outer.1);
        let inner = Shape::new(1, 1, 8, 8);
        ops.push(flat_op!(
            "unpad",
            random_flat(padded.len(), &mut rng),
            move |x: &[f64]| {
                spatial_to_flat(
                    &crate::spectral::unpad_spatial(&flat_to_spatial(padded, x), &spec).unwrap(),
                )
            },
            move |_, v: &[f64]| {
                spatial_to_flat(&vjp_unpad_spatial(&flat_to_spatial(inner, v), &spec).unwrap())
            }
        ));
    }

    // rearrangements
    let s4 = Shape::new(1, 4, 6, 6);
    let s4up = Shape::new(1, 1, 12, 12);
    ops.push(flat_op!(
        "pixel_unshuffle",
        random_flat(s4up.len(), &mut rng),
        move |x: &[f64]| spatial_to_flat(&pixel_unshuffle(&flat_to_spatial(s4up, x), 2).unwrap()),
        move |_, v: &[f64]| spatial_to_flat(&pixel_shuffle(&flat_to_spatial(s4, v), 2).unwrap())
    ));
    ops.push(flat_op!(
        "pixel_shuffle",
        random_flat(s4.len(), &mut rng),
        move |x: &[f64]| spatial_to_flat(&pixel_shuffle(&flat_to_spatial(s4, x), 2).unwrap()),
        move |_, v: &[f64]| spatial_to_flat(&pixel_unshuffle(&flat_to_spatial(s4up, v), 2).unwrap())
    ));
    let s1 = Shape::new(1, 2, 5, 5);
    let s1c = Shape::new(1, 8, 5, 5);
    ops.push(flat_op!(
        "concat_channels",
        random_flat(s1.len(), &mut rng),
        move |x: &[f64]| {
            spatial_to_flat(&crate::tensor::concat_channels(&flat_to_spatial(s1, x), 4).unwrap())
        },
        move |_, v: &[f64]| {
            spatial_to_flat(&vjp_concat_channels(&flat_to_spatial(s1c, v), 4).unwrap())
        }
    ));
    ops.push(flat_op!(
        "group_average",
        random_flat(s1c.len(), &mut rng),
        move |x: &[f64]| {
            spatial_to_flat(&crate::tensor::group_average(&flat_to_spatial(s1c, x), 4).unwrap())
        },
        move |_, v: &[f64]| {
            // self-adjoint
            spatial_to_flat(&crate::tensor::group_average(&flat_to_spatial(s1c, v), 4).unwrap())
        }
    ));
    let s8 = Shape::new(1, 8, 4, 4);
    let s8h = Shape::new(1, 2, 4, 4);
    ops.push(flat_op!(
        "first_of_each_group",
        random_flat(2 * s8.len(), &mut rng),
        move |x: &[f64]| {
            spectral_to_flat(
                &crate::tensor::first_of_each_group(&flat_to_spectral(s8, false, x), 4).unwrap(),
            )
        },
        move |_, v: &[f64]| {
            spectral_to_flat(&vjp_first_of_each_group(&flat_to_spectral(s8h, false, v), 4))
        }
    ));
    let st = Shape::new(1, 1, 4, 6);
    let stt = Shape::new(1, 1, 6, 4);
    ops.push(flat_op!(
        "transpose_spatial",
        random_flat(st.len(), &mut rng),
        move |x: &[f64]| spatial_to_flat(&transpose_spatial(&flat_to_spatial(st, x))),
        move |_, v: &[f64]| spatial_to_flat(&transpose_spatial(&flat_to_spatial(stt, v)))
    ));

    // samplers, faithful (padded) mode and the exact periodic mode
    let sx = Shape::new(1, 1, 8, 8);
    for periodic in [false, true] {
        let mut cfg = SamplerConfig::uniform(DownOp::FpDown, UpOp::FreqAvgUp, 1);
        cfg.periodic_mode = periodic;
        let suffix = if periodic { "_periodic" } else { "" };
        let cfg_f = cfg.clone();
        let cfg_b = cfg.clone();
        ops.push(flat_op!(
            format!("flc_pool{suffix}"),
            random_flat(sx.len(), &mut rng),
            move |x: &[f64]| {
                spatial_to_flat(&sampling::flc_pool(&flat_to_spatial(sx, x), &cfg_f).unwrap())
            },
            move |_, v: &[f64]| {
                let half = Shape::new(1, 1, 4, 4);
                spatial_to_flat(&vjp_flc_pool(&flat_to_spatial(half, v), sx, &cfg_b).unwrap())
            }
        ));
        let cfg_f = cfg.clone();
        let cfg_b = cfg.clone();
        ops.push(flat_op!(
            format!("lowpass_full{suffix}"),
            random_flat(sx.len(), &mut rng),
            move |x: &[f64]| {
                spatial_to_flat(&sampling::lowpass_full(&flat_to_spatial(sx, x), &cfg_f).unwrap())
            },
            move |_, v: &[f64]| {
                spatial_to_flat(&vjp_lowpass_full(&flat_to_spatial(sx, v), sx, &cfg_b).unwrap())
            }
        ));
        let cfg_f = cfg.clone();
        let cfg_b = cfg.clone();
        ops.push(flat_op!(
            format!("fp_down{suffix}"),
            random_flat(sx.len(), &mut rng),
            move |x: &[f64]| {
                spatial_to_flat(&sampling::fp_down(&flat_to_spatial(sx, x), 0, &cfg_f).unwrap())
            },
            move |_, v: &[f64]| {
                let down = Shape::new(1, 4, 4, 4);
                spatial_to_flat(
                    &vjp_fp_down(&flat_to_spatial(down, v), sx, &cfg_b, cfg_b.coefficients.alpha[0])
                        .unwrap(),
                )
            }
        ));
    }

    // coefficient derivatives at a fixed input
    {
        let cfg = SamplerConfig::uniform(DownOp::FpDown, UpOp::FreqAvgUp, 1);
        let x = flat_to_spatial(sx, &random_flat(sx.len(), &mut rng));
        let (xf, xb) = (x.clone(), x);
        let (cfg_f, cfg_b) = (cfg.clone(), cfg.clone());
        ops.push(flat_op!(
            "fp_down/alpha",
            vec![0.3],
            move |a: &[f64]| {
                let mut c = cfg_f.clone();
                c.coefficients.alpha[0] = a[0];
                spatial_to_flat(&sampling::fp_down(&xf, 0, &c).unwrap())
            },
            move |_, v: &[f64]| {
                let (low, high) = sampling::fp_down_branches(&xb, &cfg_b).unwrap();
                let diff = high.sub(&low).unwrap();
                vec![flat_to_spatial(diff.shape(), v).dot(&diff).unwrap()]
            }
        ));
    }
    let su = Shape::new(1, 4, 6, 6);
    {
        let cfg = SamplerConfig::uniform(DownOp::FpDown, UpOp::FreqAvgUp, 1);
        let x = flat_to_spatial(su, &random_flat(su.len(), &mut rng));
        let (xf, xb) = (x.clone(), x);
        let (cfg_f, cfg_b) = (cfg.clone(), cfg.clone());
        ops.push(flat_op!(
            "freq_avg_up/beta",
            vec![0.3],
            move |b: &[f64]| {
                let mut c = cfg_f.clone();
                c.coefficients.beta[0] = b[0];
                spatial_to_flat(&sampling::freq_avg_up(&xf, 0, &c).unwrap())
            },
            move |_, v: &[f64]| {
                let (low, high) = sampling::freq_avg_up_branches(&xb, &cfg_b).unwrap();
                let diff = high.sub(&low).unwrap();
                vec![flat_to_spatial(diff.shape(), v).dot(&diff).unwrap()]
            }
        ));
    }

    // whole upsamplers with respect to the input
    {
        let cfg = SamplerConfig::uniform(DownOp::FpDown, UpOp::FreqAvgUp, 1);
        let up = Shape::new(1, 1, 12, 12);
        let (cfg_f, cfg_b) = (cfg.clone(), cfg.clone());
        ops.push(flat_op!(
            "freq_avg_up",
            random_flat(su.len(), &mut rng),
            move |x: &[f64]| {
                spatial_to_flat(&sampling::freq_avg_up(&flat_to_spatial(su, x), 0, &cfg_f).unwrap())
            },
            move |_, v: &[f64]| {
                spatial_to_flat(
                    &vjp_freq_avg_up(&flat_to_spatial(up, v), su, &cfg_b, cfg_b.coefficients.beta[0])
                        .unwrap(),
                )
            }
        ));
        let cfg = SamplerConfig::uniform(DownOp::FpDown, UpOp::SplitUp, 1);
        let (cfg_f, cfg_b) = (cfg.clone(), cfg.clone());
        ops.push(flat_op!(
            "split_up",
            random_flat(su.len(), &mut rng),
            move |x: &[f64]| {
                spatial_to_flat(&sampling::split_up(&flat_to_spatial(su, x), 0, &cfg_f).unwrap())
            },
            move |_, v: &[f64]| {
                spatial_to_flat(
                    &vjp_split_up(&flat_to_spatial(up, v), su, &cfg_b, cfg_b.coefficients.beta[0])
                        .unwrap(),
                )
            }
        ));
        let x = flat_to_spatial(su, &random_flat(su.len(), &mut rng));
        let (xf, xb) = (x.clone(), x);
        let cfg = SamplerConfig::uniform(DownOp::FpDown, UpOp::SplitUp, 1);
        let (cfg_f, cfg_b) = (cfg.clone(), cfg);
        ops.push(flat_op!(
            "split_up/beta",
            vec![0.3],
            move |b: &[f64]| {
                let mut c = cfg_f.clone();
                c.coefficients.beta[0] = b[0];
                spatial_to_flat(&sampling::split_up(&xf, 0, &c).unwrap())
            },
            move |_, v: &[f64]| {
                let (low, high) = sampling::split_up_branches(&xb, &cfg_b).unwrap();
                let diff = high.sub(&low).unwrap();
                vec![flat_to_spatial(diff.shape(), v).dot(&diff).unwrap()]
            }
        ));
    }

    // composed depth-2 sandwich, faithful mode
    {
        let sxx = Shape::new(1, 1, 16, 16);
        let mut cfg = SamplerConfig::uniform(DownOp::FpDown, UpOp::FreqAvgUp, 2);
        cfg.coefficients.alpha = vec![0.3, 0.25];
        cfg.coefficients.beta = vec![0.2, 0.4];
        let (cfg_f, cfg_b) = (cfg.clone(), cfg);
        ops.push(flat_op!(
            "pipeline_depth2",
            random_flat(sxx.len(), &mut rng),
            move |x: &[f64]| {
                let mut p = compose_pipeline(cfg_f.clone(), 2).unwrap();
                spatial_to_flat(&p.forward(&flat_to_spatial(sxx, x)).unwrap())
            },
            move |x: &[f64], v: &[f64]| {
                let mut p = compose_pipeline(cfg_b.clone(), 2).unwrap();
                let (y, trace) = p.forward_traced(&flat_to_spatial(sxx, x)).unwrap();
                let grads =
                    pipeline_vjp(&cfg_b, &trace, &flat_to_spatial(y.shape(), v)).unwrap();
                spatial_to_flat(&grads.input)
            }
        ));
    }

    let _ = Pipeline::depth; // silence unused-import style lints in some configs
    ops
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// adjoint identity with the affine-safe Jacobian action
    /// J·u = f(x0 + u) - f(x0)
    #[test]
    fn adjoint_identity_holds_for_every_registered_op() {
        let mut rng = StdRng::seed_from_u64(5);
        for op in registered_ops() {
            let x0 = &op.base_input;
            let y0 = (op.forward)(x0);
            for rep in 0..3 {
                let u: Vec<f64> = (0..x0.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..y0.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let shifted: Vec<f64> = x0.iter().zip(&u).map(|(a, b)| a + b).collect();
                let ju: Vec<f64> = (op.forward)(&shifted)
                    .iter()
                    .zip(&y0)
                    .map(|(a, b)| a - b)
                    .collect();
                let lhs = dot(&ju, &v);
                let rhs = dot(&u, &(op.vjp)(x0, &v));
                let denom = lhs.abs().max(rhs.abs()).max(1e-8);
                assert!(
                    ((lhs - rhs) / denom).abs() < 1e-9,
                    "adjoint identity failed for {} (rep {rep}): {lhs} vs {rhs}",
                    op.name
                );
            }
        }
    }

    #[test]
    fn shuffle_vjp_is_the_inverse_rearrangement() {
        // registry shapes: input (1,4,6,6), output (1,1,12,12)
        let in_shape = Shape::new(1, 4, 6, 6);
        let mut rng = StdRng::seed_from_u64(7);
        let cot = SpatialTensor::from_fn(Shape::new(1, 1, 12, 12), |_, _, _, _| {
            rng.gen_range(-1.0..1.0)
        });
        // vjp of pixel_shuffle == pixel_unshuffle applied to the cotangent
        let expected = pixel_unshuffle(&cot, 2).unwrap();
        let ops = registered_ops();
        let got = vjp(
            &ops,
            "pixel_shuffle",
            &vec![0.0; in_shape.len()],
            &spatial_to_flat(&cot),
        )
        .unwrap();
        assert_eq!(got, spatial_to_flat(&expected));
    }

    #[test]
    fn concat_vjp_sums_channel_copies() {
        let cot = SpatialTensor::from_fn(Shape::new(1, 4, 2, 2), |_, c, m, n| {
            (c + 2 * m + n) as f64
        });
        let summed = vjp_concat_channels(&cot, 4).unwrap();
        for m in 0..2 {
            for n in 0..2 {
                let expect: f64 = (0..4).map(|c| cot.get(0, c, m, n)).sum();
                assert_eq!(summed.get(0, 0, m, n), expect);
            }
        }
    }

    #[test]
    fn unknown_op_lookup_fails() {
        let ops = registered_ops();
        assert!(matches!(
            find_op(&ops, "no_such_op"),
            Err(Error::UnknownOp(_))
        ));
    }

    #[test]
    fn every_registered_vjp_matches_finite_differences() {
        for op in registered_ops() {
            let report = finite_difference_check(&op, &op.base_input, 1e-5);
            let bound = if op.name == "pipeline_depth2" { 1e-4 } else { 1e-5 };
            assert!(
                report.max_rel_error < bound,
                "{} gradient check failed: {:.3e}",
                op.name,
                report.max_rel_error
            );
        }
    }

    #[test]
    fn alpha_derivative_matches_tighter_bound() {
        let ops = registered_ops();
        let op = find_op(&ops, "fp_down/alpha").unwrap();
        let report = finite_difference_check(op, &[0.37], 1e-5);
        assert!(report.max_rel_error < 1e-6, "{:.3e}", report.max_rel_error);
    }

    #[test]
    fn pipeline_vjp_produces_finite_real_cotangents() {
        let mut cfg = SamplerConfig::uniform(DownOp::FpDownDrop, UpOp::FreqAvgUp, 1);
        cfg.drop.mode = crate::sampling::DropMode::AllStages;
        cfg.drop.force_drop = true;
        let mut p = compose_pipeline(cfg.clone(), 1).unwrap();
        let x = SpatialTensor::constant(Shape::new(1, 1, 8, 8), 0.5);
        let (y, trace) = p.forward_traced(&x).unwrap();
        let grads = pipeline_vjp(&cfg, &trace, &SpatialTensor::constant(y.shape(), 1.0)).unwrap();
        assert!(grads.input.is_finite());
        // gate fired: output is the pure low path, alpha gradient must vanish
        assert_eq!(grads.alpha, vec![0.0]);
    }
}
