//! PNG to tensor conversion with a fixed convention so independent
//! implementations agree bit-for-bit: row-major, channel-first, values
//! v/255 exactly on load; clamp to [0, 1], scale by 255, round
//! half-away-from-zero on save.

use std::path::Path;

use anyhow::{bail, Context, Result};
use image::{DynamicImage, GrayImage, ImageReader, RgbImage};

use boa_core::tensor::{Shape, SpatialTensor};

/// Decodes an 8-bit grayscale or RGB PNG into a `[1, C, M, N]` tensor in
/// `[0, 1]`. Returns the tensor and the file's channel count (1 or 3).
pub fn load_png(path: &Path) -> Result<(SpatialTensor, usize)> {
    let img = ImageReader::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .decode()
        .with_context(|| format!("decoding {}", path.display()))?;
    let (tensor, channels) = match img {
        DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            let shape = Shape::new(1, 1, h as usize, w as usize);
            let t = SpatialTensor::from_fn(shape, |_, _, m, n| {
                gray.get_pixel(n as u32, m as u32)[0] as f64 / 255.0
            });
            (t, 1)
        }
        DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = rgb.dimensions();
            let shape = Shape::new(1, 3, h as usize, w as usize);
            let t = SpatialTensor::from_fn(shape, |_, c, m, n| {
                rgb.get_pixel(n as u32, m as u32)[c] as f64 / 255.0
            });
            (t, 3)
        }
        other => bail!(
            "{}: unsupported pixel format {:?}; expected 8-bit grayscale or RGB",
            path.display(),
            other.color()
        ),
    };
    Ok((tensor, channels))
}

/// Replicates the last channel until the count is a multiple of 4 (the
/// averaging upsampler consumes channels in groups of four).
pub fn lift_channels(x: &SpatialTensor) -> SpatialTensor {
    let s = x.shape();
    let lifted = s.channels.div_ceil(4) * 4;
    if lifted == s.channels {
        return x.clone();
    }
    SpatialTensor::from_fn(Shape::new(s.batch, lifted, s.rows, s.cols), |b, c, m, n| {
        x.get(b, c.min(s.channels - 1), m, n)
    })
}

/// Drops the replicated channels added by [`lift_channels`].
pub fn drop_channels(x: &SpatialTensor, channels: usize) -> SpatialTensor {
    let s = x.shape();
    if s.channels == channels {
        return x.clone();
    }
    SpatialTensor::from_fn(Shape::new(s.batch, channels, s.rows, s.cols), |b, c, m, n| {
        x.get(b, c, m, n)
    })
}

fn to_byte(v: f64) -> u8 {
    // clamp then round half away from zero
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a `[1, 1|3, M, N]` tensor as an 8-bit PNG.
pub fn save_png(x: &SpatialTensor, path: &Path) -> Result<()> {
    let s = x.shape();
    if s.batch != 1 {
        bail!("PNG export expects a single image, got batch {}", s.batch);
    }
    match s.channels {
        1 => {
            let mut img = GrayImage::new(s.cols as u32, s.rows as u32);
            for m in 0..s.rows {
                for n in 0..s.cols {
                    img.put_pixel(n as u32, m as u32, image::Luma([to_byte(x.get(0, 0, m, n))]));
                }
            }
            img.save(path)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        3 => {
            let mut img = RgbImage::new(s.cols as u32, s.rows as u32);
            for m in 0..s.rows {
                for n in 0..s.cols {
                    let px = image::Rgb([
                        to_byte(x.get(0, 0, m, n)),
                        to_byte(x.get(0, 1, m, n)),
                        to_byte(x.get(0, 2, m, n)),
                    ]);
                    img.put_pixel(n as u32, m as u32, px);
                }
            }
            img.save(path)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        c => bail!("PNG export supports 1 or 3 channels, got {c}"),
    }
    Ok(())
}
