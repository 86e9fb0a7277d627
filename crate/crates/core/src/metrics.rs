//! Image-quality and spectral-artifact metrics: PSNR, SSIM, the aliasing
//! energy probe and log-magnitude spectrum export.

use crate::error::{Error, Result};
use crate::sampling::{flc_pool, DownOp, SamplerConfig, UpOp};
use crate::spectral::{center, dft2};
use crate::tensor::{pixel_unshuffle, Shape, SpatialTensor};

/// PSNR/SSIM pair for one comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScores {
    pub psnr: f64,
    pub ssim: f64,
}

/// PSNR is capped here so identical images produce a finite CSV value.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Peak signal-to-noise ratio in dB over the joint mse of all entries.
/// Identical inputs (mse = 0) return the 100 dB cap.
pub fn psnr(x: &SpatialTensor, y: &SpatialTensor, peak: f64) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::shape(format!(
            "psnr shapes differ: {} vs {}",
            x.shape(),
            y.shape()
        )));
    }
    let n = x.data().len() as f64;
    let mse = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5,
/// K1 = 0.01, K2 = 0.03, peak 1.0), averaged over batches and channels.
/// Windows are evaluated where they fit entirely inside the image.
pub fn ssim(x: &SpatialTensor, y: &SpatialTensor) -> Result<f64> {
    let s = x.shape();
    if s != y.shape() {
        return Err(Error::shape(format!(
            "ssim shapes differ: {} vs {}",
            s,
            y.shape()
        )));
    }
    if s.rows < SSIM_WINDOW || s.cols < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {}x{}",
            s.rows, s.cols
        )));
    }
    let w = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut slices = 0usize;
    for b in 0..s.batch {
        for c in 0..s.channels {
            let mut acc = 0.0;
            let mut count = 0usize;
            for m0 in 0..=(s.rows - SSIM_WINDOW) {
                for n0 in 0..=(s.cols - SSIM_WINDOW) {
                    let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for (i, wi) in w.iter().enumerate() {
                        for (j, wj) in w.iter().enumerate() {
                            let weight = wi * wj;
                            let a = x.get(b, c, m0 + i, n0 + j);
                            let bb = y.get(b, c, m0 + i, n0 + j);
                            mx += weight * a;
                            my += weight * bb;
                            mxx += weight * a * a;
                            myy += weight * bb * bb;
                            mxy += weight * a * bb;
                        }
                    }
                    let vx = mxx - mx * mx;
                    let vy = myy - my * my;
                    let cov = mxy - mx * my;
                    let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
                    let den = (mx * mx + my * my + c1) * (vx + vy + c2);
                    acc += num / den;
                    count += 1;
                }
            }
            total += acc / count as f64;
            slices += 1;
        }
    }
    Ok(total / slices as f64)
}

/// Result of probing one operator with a pure cosine above the retained
/// band: how much of the probe's energy survives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliasReport {
    /// Probe frequency in cycles/sample along (rows, cols).
    pub freq: (f64, f64),
    pub energy_in: f64,
    pub energy_out: f64,
    pub ratio: f64,
}

/// Operators the alias probe can exercise: the spatial rearrangement
/// baseline and the alias-free low path shared by the spectral poolers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOperator {
    PixelUnshuffle,
    LowPath,
}

impl ProbeOperator {
    pub fn label(&self) -> &'static str {
        match self {
            ProbeOperator::PixelUnshuffle => "pixel_unshuffle",
            ProbeOperator::LowPath => "low_path",
        }
    }
}

/// Signed centered frequency of an uncentered bin index.
fn centered_bin(k: usize, n: usize) -> isize {
    let k = k as isize;
    let n = n as isize;
    if k < n - n / 2 {
        k
    } else {
        k - n
    }
}

/// True when the bin lies inside the band a factor-2 downsample retains:
/// centered frequencies `[-n/4, n/4)` for even `n`.
fn inside_half_band(k: isize, n: usize) -> bool {
    let lo = -((n / 4) as isize);
    let hi = (n / 4) as isize; // exclusive
    (lo..hi).contains(&k)
}

/// True when every spectral support bin of the cosine probe lies outside
/// the retained band (the probe is strictly above it).
pub fn probe_is_above_band(dims: (usize, usize), bins: (usize, usize)) -> bool {
    let (rows, cols) = dims;
    let (ky, kx) = (bins.0 % rows, bins.1 % cols);
    // support bins of cos: (ky, kx) and (-ky, -kx)
    let supports = [
        (centered_bin(ky, rows), centered_bin(kx, cols)),
        (
            centered_bin((rows - ky) % rows, rows),
            centered_bin((cols - kx) % cols, cols),
        ),
    ];
    supports
        .iter()
        .all(|&(fy, fx)| !(inside_half_band(fy, rows) && inside_half_band(fx, cols)))
}

/// Builds a unit-energy cosine at integer bins `(ky, kx)` on an
/// even-dimension grid, applies the operator, and reports the surviving
/// energy fraction. The probe must be strictly above the retained band.
pub fn aliasing_energy_ratio(
    op: ProbeOperator,
    dims: (usize, usize),
    bins: (usize, usize),
) -> Result<AliasReport> {
    let (rows, cols) = dims;
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::shape(format!(
            "alias probe needs even dims, got {rows}x{cols}"
        )));
    }
    let freq = (bins.0 as f64 / rows as f64, bins.1 as f64 / cols as f64);
    if !probe_is_above_band(dims, bins) {
        return Err(Error::FrequencyRange(freq.0, freq.1));
    }
    let shape = Shape::new(1, 1, rows, cols);
    let raw = SpatialTensor::from_fn(shape, |_, _, m, n| {
        (2.0 * std::f64::consts::PI * (bins.0 as f64 * m as f64 / rows as f64
            + bins.1 as f64 * n as f64 / cols as f64))
            .cos()
    });
    let norm = raw.energy().sqrt();
    let probe = raw.scale(1.0 / norm);
    let energy_in = probe.energy();
    let energy_out = match op {
        ProbeOperator::PixelUnshuffle => pixel_unshuffle(&probe, 2)?.energy(),
        ProbeOperator::LowPath => {
            let mut cfg = SamplerConfig::uniform(DownOp::FlcPool, UpOp::PixelShuffle, 1);
            cfg.periodic_mode = true;
            flc_pool(&probe, &cfg)?.energy()
        }
    };
    Ok(AliasReport {
        freq,
        energy_in,
        energy_out,
        ratio: energy_out / energy_in,
    })
}

/// Log-magnitude spectrum of one channel, normalized to `[0, 1]` with the
/// DC bin at the center. Returned as a `1x1xMxN` tensor ready for 8-bit
/// export.
pub fn spectrum_image(x: &SpatialTensor, channel: usize) -> Result<SpatialTensor> {
    let s = x.shape();
    if channel >= s.channels {
        return Err(Error::Index {
            index: channel,
            channels: s.channels,
        });
    }
    let slice = SpatialTensor::from_fn(Shape::new(1, 1, s.rows, s.cols), |_, _, m, n| {
        x.get(0, channel, m, n)
    });
    let centered = center(&dft2(&slice));
    let log_mag = SpatialTensor::from_fn(Shape::new(1, 1, s.rows, s.cols), |_, _, m, n| {
        (1.0 + centered.get(0, 0, m, n).norm()).ln()
    });
    let max = log_mag.max_abs();
    if max == 0.0 {
        return Ok(log_mag);
    }
    Ok(log_mag.scale(1.0 / max))
}
