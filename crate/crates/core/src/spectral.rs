//! 2-D DFT/IDFT per batch-and-channel slice, spectrum centering, central
//! crop and zero-pad embedding, and spatial border padding.
//!
//! Scaling convention: the forward transform carries the `1/(M·N)` factor,
//! the inverse is an unscaled sum. Under this convention the DC bin equals
//! the signal mean, a centered crop of a bandlimited spectrum followed by
//! the inverse transform reproduces the decimated signal with no amplitude
//! correction, and zero-embedding doubles resolution while agreeing with
//! the source at even sample positions.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, SpatialTensor, SpectralTensor};

/// The transform scaling used throughout the crate.
#[derive(Debug, Clone, Copy)]
pub struct DftConvention;

impl DftConvention {
    /// Forward factor `1/(rows·cols)`.
    pub fn forward_scale(rows: usize, cols: usize) -> f64 {
        1.0 / (rows as f64 * cols as f64)
    }

    /// The inverse transform is an unscaled sum.
    pub const INVERSE_SCALE: f64 = 1.0;
}

fn run_fft_slices(
    data: &mut [Complex64],
    rows: usize,
    cols: usize,
    direction: rustfft::FftDirection,
) {
    let mut planner = FftPlanner::new();
    let fft_cols = planner.plan_fft(cols, direction);
    let fft_rows = planner.plan_fft(rows, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); rows * cols];
    for slice in data.chunks_exact_mut(rows * cols) {
        for row in slice.chunks_exact_mut(cols) {
            fft_cols.process(row);
        }
        // transpose, transform the columns as contiguous rows, transpose back
        for m in 0..rows {
            for n in 0..cols {
                scratch[n * rows + m] = slice[m * cols + n];
            }
        }
        for col in scratch.chunks_exact_mut(rows) {
            fft_rows.process(col);
        }
        for m in 0..rows {
            for n in 0..cols {
                slice[m * cols + n] = scratch[n * rows + m];
            }
        }
    }
}

/// Unnormalized forward transform of a complex buffer; raw layout (DC at 0,0).
pub(crate) fn forward_raw(x: &SpectralTensor) -> SpectralTensor {
    let s = x.shape();
    let mut out = x.clone();
    run_fft_slices(out.data_mut(), s.rows, s.cols, rustfft::FftDirection::Forward);
    out.set_centered(false);
    out
}

/// Unnormalized inverse transform of a complex buffer; raw layout.
pub(crate) fn inverse_raw(x: &SpectralTensor) -> SpectralTensor {
    let s = x.shape();
    let mut out = x.clone();
    run_fft_slices(out.data_mut(), s.rows, s.cols, rustfft::FftDirection::Inverse);
    out.set_centered(false);
    out
}

pub(crate) fn real_to_complex(x: &SpatialTensor) -> SpectralTensor {
    SpectralTensor::from_vec(
        x.shape(),
        x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        false,
    )
    .expect("shape matches by construction")
}

/// Forward 2-D DFT of every `(batch, channel)` slice with the `1/(M·N)`
/// factor applied. Output is uncentered.
pub fn dft2(x: &SpatialTensor) -> SpectralTensor {
    let s = x.shape();
    let scale = DftConvention::forward_scale(s.rows, s.cols);
    let mut out = forward_raw(&real_to_complex(x));
    for v in out.data_mut() {
        *v *= scale;
    }
    out
}

/// Inverse 2-D DFT (unscaled sum), real part only. Returns the spatial
/// tensor together with the largest absolute imaginary part discarded.
pub fn idft2_with_residual(x: &SpectralTensor) -> (SpatialTensor, f64) {
    assert!(!x.is_centered(), "idft2 expects an uncentered spectrum");
    let inv = inverse_raw(x);
    let mut residual = 0.0f64;
    let data = inv
        .data()
        .iter()
        .map(|v| {
            residual = residual.max(v.im.abs());
            v.re
        })
        .collect();
    let out = SpatialTensor::from_vec(x.shape(), data).expect("shape preserved");
    (out, residual)
}

/// Inverse 2-D DFT, discarding the imaginary residual.
pub fn idft2(x: &SpectralTensor) -> SpatialTensor {
    idft2_with_residual(x).0
}

/// Inverse 2-D DFT that asserts the input is conjugate-symmetric: errors
/// if the imaginary residual exceeds `1e-6` times the output magnitude.
pub fn idft2_checked(x: &SpectralTensor) -> Result<SpatialTensor> {
    let (out, residual) = idft2_with_residual(x);
    let limit = 1e-6 * out.max_abs().max(f64::MIN_POSITIVE);
    if residual > limit {
        return Err(Error::Asymmetry { residual, limit });
    }
    Ok(out)
}

/// Cyclic shift moving the zero frequency from `(0, 0)` to
/// `(⌊K/2⌋, ⌊L/2⌋)`.
pub fn center(x: &SpectralTensor) -> SpectralTensor {
    assert!(!x.is_centered(), "spectrum is already centered");
    shift_spectrum(x, true)
}

/// Exact inverse of [`center`].
pub fn uncenter(x: &SpectralTensor) -> SpectralTensor {
    assert!(x.is_centered(), "spectrum is not centered");
    shift_spectrum(x, false)
}

fn shift_spectrum(x: &SpectralTensor, to_center: bool) -> SpectralTensor {
    let s = x.shape();
    let hk = s.rows / 2;
    let hl = s.cols / 2;
    let mut out = SpectralTensor::zeros(s, to_center);
    for b in 0..s.batch {
        for c in 0..s.channels {
            for k in 0..s.rows {
                for l in 0..s.cols {
                    let (sk, sl) = if to_center {
                        // out[k] = in[(k - hk) mod K]
                        ((k + s.rows - hk) % s.rows, (l + s.cols - hl) % s.cols)
                    } else {
                        ((k + hk) % s.rows, (l + hl) % s.cols)
                    };
                    out.set(b, c, k, l, x.get(b, c, sk, sl));
                }
            }
        }
    }
    out
}

/// Centered window retained by a central crop from `full` down to `out`:
/// starts at `⌊full/2⌋ - ⌊out/2⌋` so the DC bin stays at `⌊out/2⌋`.
pub(crate) fn crop_start(full: usize, out: usize) -> usize {
    full / 2 - out / 2
}

/// Central crop of a centered spectrum to any window not larger than the
/// input. Works for both parities; the DC bin stays centered.
pub fn crop_center(x: &SpectralTensor, out_dims: (usize, usize)) -> Result<SpectralTensor> {
    let s = x.shape();
    let (rows, cols) = out_dims;
    if !x.is_centered() {
        return Err(Error::shape("crop requires a centered spectrum"));
    }
    if rows > s.rows || cols > s.cols || rows == 0 || cols == 0 {
        return Err(Error::shape(format!(
            "crop window {}x{} invalid for spectrum {}x{}",
            rows, cols, s.rows, s.cols
        )));
    }
    let r0 = crop_start(s.rows, rows);
    let c0 = crop_start(s.cols, cols);
    let out_shape = Shape::new(s.batch, s.channels, rows, cols);
    let mut out = SpectralTensor::zeros(out_shape, true);
    for b in 0..s.batch {
        for c in 0..s.channels {
            for k in 0..rows {
                for l in 0..cols {
                    out.set(b, c, k, l, x.get(b, c, r0 + k, c0 + l));
                }
            }
        }
    }
    Ok(out)
}

/// Low-pass crop: keeps the central `K'×L'` block of a centered spectrum.
///
/// The window dims must be odd so the retained band is symmetric around DC
/// and conjugate symmetry survives the cut.
pub fn crop_low(x: &SpectralTensor, out_dims: (usize, usize)) -> Result<SpectralTensor> {
    let (rows, cols) = out_dims;
    if rows % 2 == 0 || cols % 2 == 0 {
        return Err(Error::shape(format!(
            "low-pass crop needs odd dims, got {}x{}",
            rows, cols
        )));
    }
    crop_center(x, out_dims)
}

/// Places a centered spectrum in the middle of a larger zero spectrum.
/// Under the crate's transform convention this preserves spatial amplitude:
/// the inverse of a 2x-embedded spectrum agrees with the source signal at
/// even sample positions.
pub fn embed_zero(x: &SpectralTensor, out_dims: (usize, usize)) -> Result<SpectralTensor> {
    let s = x.shape();
    let (rows, cols) = out_dims;
    if !x.is_centered() {
        return Err(Error::shape("embed requires a centered spectrum"));
    }
    if rows < s.rows || cols < s.cols {
        return Err(Error::shape(format!(
            "embed target {}x{} smaller than spectrum {}x{}",
            rows, cols, s.rows, s.cols
        )));
    }
    let r0 = crop_start(rows, s.rows);
    let c0 = crop_start(cols, s.cols);
    let out_shape = Shape::new(s.batch, s.channels, rows, cols);
    let mut out = SpectralTensor::zeros(out_shape, true);
    for b in 0..s.batch {
        for c in 0..s.channels {
            for k in 0..s.rows {
                for l in 0..s.cols {
                    out.set(b, c, r0 + k, c0 + l, x.get(b, c, k, l));
                }
            }
        }
    }
    Ok(out)
}

/// Border fill mode for spatial padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    /// Mirror the interior without repeating the edge sample.
    Reflect,
    Zero,
    /// Repeat the edge sample.
    Replicate,
}

/// Records a padding operation exactly so it can be removed again:
/// inner dims, outer dims and the leading per-side amounts (the trailing
/// amounts are the remainder).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadSpec {
    pub mode: PadMode,
    pub inner: (usize, usize),
    pub outer: (usize, usize),
    pub before: (usize, usize),
}

impl PadSpec {
    /// The default expansion applied before a spectral cut: target dims
    /// `(⌊5M/2⌋+1, ⌊5N/2⌋+1)`, odd for even inputs, split as evenly as
    /// possible with the extra sample on the trailing side.
    pub fn for_input(rows: usize, cols: usize, mode: PadMode) -> Self {
        let outer = (5 * rows / 2 + 1, 5 * cols / 2 + 1);
        PadSpec {
            mode,
            inner: (rows, cols),
            outer,
            before: ((outer.0 - rows) / 2, (outer.1 - cols) / 2),
        }
    }

    /// No-op spec used in periodic mode.
    pub fn identity(rows: usize, cols: usize, mode: PadMode) -> Self {
        PadSpec {
            mode,
            inner: (rows, cols),
            outer: (rows, cols),
            before: (0, 0),
        }
    }

    /// Spec for removing the padding from a spatially halved tensor of
    /// dims `outer`: the leading trim is `⌊before/2⌋` per side and the
    /// remainder comes off the trailing side, so the result is exactly
    /// `(inner.0/2, inner.1/2)`.
    pub fn halved(&self, outer: (usize, usize)) -> Result<PadSpec> {
        let inner = (self.inner.0 / 2, self.inner.1 / 2);
        let before = (self.before.0 / 2, self.before.1 / 2);
        if outer.0 < inner.0 + before.0 || outer.1 < inner.1 + before.1 {
            return Err(Error::shape(format!(
                "halved dims {}x{} too small for interior {}x{} at offset {:?}",
                outer.0, outer.1, inner.0, inner.1, before
            )));
        }
        Ok(PadSpec {
            mode: self.mode,
            inner,
            outer,
            before,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.outer.0 < self.inner.0 + self.before.0
            || self.outer.1 < self.inner.1 + self.before.1
        {
            return Err(Error::shape(format!(
                "pad spec inconsistent: inner {:?} + before {:?} exceeds outer {:?}",
                self.inner, self.before, self.outer
            )));
        }
        Ok(())
    }
}

/// Source index for padded coordinate `r` along one axis, or `None` for
/// zero fill. Reflection uses the triangle map with period `2(len-1)` so
/// pads wider than the signal stay defined.
pub(crate) fn pad_source(mode: PadMode, len: usize, before: usize, r: usize) -> Option<usize> {
    let p = r as isize - before as isize;
    let m = len as isize;
    match mode {
        PadMode::Zero => {
            if (0..m).contains(&p) {
                Some(p as usize)
            } else {
                None
            }
        }
        PadMode::Replicate => Some(p.clamp(0, m - 1) as usize),
        PadMode::Reflect => {
            if len == 1 {
                return Some(0);
            }
            let period = 2 * (m - 1);
            let q = p.rem_euclid(period);
            Some(if q < m { q as usize } else { (period - q) as usize })
        }
    }
}

/// Pads every spatial slice to `spec.outer` with the spec's border mode.
pub fn pad_spatial(x: &SpatialTensor, spec: &PadSpec) -> Result<SpatialTensor> {
    spec.validate()?;
    let s = x.shape();
    if (s.rows, s.cols) != spec.inner {
        return Err(Error::shape(format!(
            "pad spec expects input {}x{}, got {}x{}",
            spec.inner.0, spec.inner.1, s.rows, s.cols
        )));
    }
    let out_shape = Shape::new(s.batch, s.channels, spec.outer.0, spec.outer.1);
    let row_src: Vec<Option<usize>> = (0..spec.outer.0)
        .map(|r| pad_source(spec.mode, s.rows, spec.before.0, r))
        .collect();
    let col_src: Vec<Option<usize>> = (0..spec.outer.1)
        .map(|c| pad_source(spec.mode, s.cols, spec.before.1, c))
        .collect();
    let mut out = SpatialTensor::zeros(out_shape);
    for b in 0..s.batch {
        for ch in 0..s.channels {
            for m in 0..out_shape.rows {
                for n in 0..out_shape.cols {
                    if let (Some(sm), Some(sn)) = (row_src[m], col_src[n]) {
                        out.set(b, ch, m, n, x.get(b, ch, sm, sn));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Removes exactly the padding recorded in `spec`.
pub fn unpad_spatial(x: &SpatialTensor, spec: &PadSpec) -> Result<SpatialTensor> {
    spec.validate()?;
    let s = x.shape();
    if (s.rows, s.cols) != spec.outer {
        return Err(Error::shape(format!(
            "unpad spec expects input {}x{}, got {}x{}",
            spec.outer.0, spec.outer.1, s.rows, s.cols
        )));
    }
    let out_shape = Shape::new(s.batch, s.channels, spec.inner.0, spec.inner.1);
    Ok(SpatialTensor::from_fn(out_shape, |b, c, m, n| {
        x.get(b, c, m + spec.before.0, n + spec.before.1)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_tensor(shape: Shape, seed: u64) -> SpatialTensor {
        let mut rng = StdRng::seed_from_u64(seed);
        SpatialTensor::from_fn(shape, |_, _, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn constant_input_has_only_dc() {
        let x = SpatialTensor::constant(Shape::new(1, 1, 6, 5), 1.0);
        let spec = dft2(&x);
        assert!((spec.get(0, 0, 0, 0).re - 1.0).abs() < 1e-12);
        assert!(spec.get(0, 0, 0, 0).im.abs() < 1e-12);
        for k in 0..6 {
            for l in 0..5 {
                if (k, l) != (0, 0) {
                    assert!(spec.get(0, 0, k, l).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut x = SpatialTensor::zeros(Shape::new(1, 1, 4, 4));
        x.set(0, 0, 0, 0, 1.0);
        let spec = dft2(&x);
        for k in 0..4 {
            for l in 0..4 {
                assert!((spec.get(0, 0, k, l).re - 1.0 / 16.0).abs() < 1e-13);
                assert!(spec.get(0, 0, k, l).im.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn dc_bin_alone_gives_constant_image() {
        let mut spec = SpectralTensor::zeros(Shape::new(1, 1, 5, 7), false);
        spec.set(0, 0, 0, 0, Complex64::new(2.5, 0.0));
        let x = idft2(&spec);
        assert!(x.data().iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn roundtrip_is_identity() {
        for &(m, n) in &[(4usize, 4usize), (8, 6), (21, 21), (32, 32)] {
            let x = random_tensor(Shape::new(2, 2, m, n), 3 + m as u64);
            let back = idft2_checked(&dft2(&x)).unwrap();
            let err = x
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-10, "roundtrip error {err} on {m}x{n}");
        }
    }

    #[test]
    fn center_uncenter_roundtrip_and_dc_position() {
        let x = random_tensor(Shape::new(1, 2, 5, 7), 11);
        let spec = dft2(&x);
        let centered = center(&spec);
        assert_eq!(centered.get(0, 0, 2, 3), spec.get(0, 0, 0, 0));
        assert_eq!(uncenter(&centered), spec);
    }

    #[test]
    fn center_matches_modular_index_oracle() {
        let x = random_tensor(Shape::new(1, 1, 5, 7), 17);
        let spec = dft2(&x);
        let centered = center(&spec);
        for k in 0..5usize {
            for l in 0..7usize {
                let ck = (k + 2) % 5;
                let cl = (l + 3) % 7;
                assert_eq!(centered.get(0, 0, ck, cl), spec.get(0, 0, k, l));
            }
        }
    }

    #[test]
    fn crop_full_size_is_identity() {
        let x = random_tensor(Shape::new(1, 1, 7, 9), 5);
        let spec = center(&dft2(&x));
        assert_eq!(crop_low(&spec, (7, 9)).unwrap(), spec);
    }

    #[test]
    fn crop_rejects_even_or_oversized_windows() {
        let spec = SpectralTensor::zeros(Shape::new(1, 1, 9, 9), true);
        assert!(crop_low(&spec, (4, 5)).is_err());
        assert!(crop_low(&spec, (11, 5)).is_err());
        let raw = SpectralTensor::zeros(Shape::new(1, 1, 9, 9), false);
        assert!(crop_low(&raw, (5, 5)).is_err());
    }

    #[test]
    fn above_band_cosine_is_removed() {
        let shape = Shape::new(1, 1, 16, 16);
        let x = SpatialTensor::from_fn(shape, |_, _, m, _| {
            (2.0 * std::f64::consts::PI * 6.0 * m as f64 / 16.0).cos()
        });
        let cropped = crop_low(&center(&dft2(&x)), (9, 9)).unwrap();
        assert!(cropped.energy() < 1e-24);
    }

    #[test]
    fn embed_then_crop_is_identity() {
        let x = random_tensor(Shape::new(1, 1, 5, 5), 23);
        let spec = center(&dft2(&x));
        let embedded = embed_zero(&spec, (11, 13)).unwrap();
        assert_eq!(crop_low(&embedded, (5, 5)).unwrap(), spec);
        // general-parity window pairing
        let embedded = embed_zero(&spec, (10, 12)).unwrap();
        assert_eq!(crop_center(&embedded, (5, 5)).unwrap(), spec);
    }

    #[test]
    fn embedded_dc_gives_constant_at_double_resolution() {
        let x = SpatialTensor::constant(Shape::new(1, 1, 4, 4), 0.75);
        let embedded = embed_zero(&center(&dft2(&x)), (8, 8)).unwrap();
        let up = idft2(&uncenter(&embedded));
        assert_eq!(up.shape(), Shape::new(1, 1, 8, 8));
        assert!(up.data().iter().all(|&v| (v - 0.75).abs() < 1e-12));
    }

    #[test]
    fn pad_target_dims_are_odd() {
        let spec = PadSpec::for_input(8, 8, PadMode::Reflect);
        assert_eq!(spec.outer, (21, 21));
        let spec = PadSpec::for_input(16, 12, PadMode::Zero);
        assert_eq!(spec.outer, (41, 31));
        assert_eq!(spec.outer.0 % 2, 1);
        assert_eq!(spec.outer.1 % 2, 1);
    }

    #[test]
    fn unpad_undoes_pad_bit_exactly() {
        let x = random_tensor(Shape::new(1, 2, 8, 6), 31);
        for mode in [PadMode::Reflect, PadMode::Zero, PadMode::Replicate] {
            let spec = PadSpec::for_input(8, 6, mode);
            let padded = pad_spatial(&x, &spec).unwrap();
            assert_eq!(padded.shape().rows, 21);
            assert_eq!(padded.shape().cols, 16);
            assert_eq!(unpad_spatial(&padded, &spec).unwrap(), x);
        }
    }

    #[test]
    fn reflect_border_matches_index_oracle() {
        let x = random_tensor(Shape::new(1, 1, 5, 5), 37);
        let spec = PadSpec {
            mode: PadMode::Reflect,
            inner: (5, 5),
            outer: (9, 9),
            before: (2, 2),
        };
        let padded = pad_spatial(&x, &spec).unwrap();
        // mirrored rows: padded row 1 == source row 1, padded row 0 == source row 2
        for n in 0..5 {
            assert_eq!(padded.get(0, 0, 1, n + 2), x.get(0, 0, 1, n));
            assert_eq!(padded.get(0, 0, 0, n + 2), x.get(0, 0, 2, n));
            assert_eq!(padded.get(0, 0, 7, n + 2), x.get(0, 0, 3, n));
            assert_eq!(padded.get(0, 0, 8, n + 2), x.get(0, 0, 2, n));
        }
    }

    #[test]
    fn halved_spec_reaches_half_dims() {
        let spec = PadSpec::for_input(8, 8, PadMode::Reflect);
        // crop of the padded 21x21 spectrum keeps 11x11
        let halved = spec.halved((11, 11)).unwrap();
        assert_eq!(halved.inner, (4, 4));
        assert_eq!(halved.before, (3, 3));
        let x = random_tensor(Shape::new(1, 1, 11, 11), 41);
        let trimmed = unpad_spatial(&x, &halved).unwrap();
        assert_eq!(trimmed.shape().rows, 4);
        assert_eq!(trimmed.shape().cols, 4);
    }

    #[test]
    fn idft2_checked_flags_asymmetric_spectra() {
        let mut spec = SpectralTensor::zeros(Shape::new(1, 1, 8, 8), false);
        spec.set(0, 0, 1, 0, Complex64::new(1.0, 0.5));
        // no conjugate partner at (7, 0)
        assert!(matches!(
            idft2_checked(&spec),
            Err(Error::Asymmetry { .. })
        ));
    }
}
