//! Dense 4-D real and complex tensors plus the channel/space rearrangement
//! operators: pixel shuffle/unshuffle, channel duplication, group averaging
//! and spatial transpose.
//!
//! Tensors are plain row-major buffers with shape `[batch, channels, rows, cols]`.
//! Every operator here is a pure function: inputs are never mutated.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Shape of a 4-D tensor: `[B, C, M, N]` for spatial data, `[B, C, K, L]`
/// for spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn new(batch: usize, channels: usize, rows: usize, cols: usize) -> Self {
        Shape {
            batch,
            channels,
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.batch * self.channels * self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, m: usize, n: usize) -> usize {
        ((b * self.channels + c) * self.rows + m) * self.cols + n
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.batch, self.channels, self.rows, self.cols
        )
    }
}

/// Real-valued feature map of shape `[B, C, M, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl SpatialTensor {
    pub fn zeros(shape: Shape) -> Self {
        SpatialTensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn constant(shape: Shape, value: f64) -> Self {
        SpatialTensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Builds a tensor from a row-major buffer; the length must match the shape.
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "buffer length {} does not match shape {}",
                data.len(),
                shape
            )));
        }
        Ok(SpatialTensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for b in 0..shape.batch {
            for c in 0..shape.channels {
                for m in 0..shape.rows {
                    for n in 0..shape.cols {
                        data.push(f(b, c, m, n));
                    }
                }
            }
        }
        SpatialTensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, m: usize, n: usize) -> f64 {
        self.data[self.shape.index(b, c, m, n)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, m: usize, n: usize, value: f64) {
        let i = self.shape.index(b, c, m, n);
        self.data[i] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SpatialTensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "mismatched shapes {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(SpatialTensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Sum of squared entries.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.data.iter().sum::<f64>() / self.data.len() as f64
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "mismatched shapes {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Complex-valued spectrum of shape `[B, C, K, L]`.
///
/// `centered` records whether the zero frequency sits at `(K/2, L/2)`
/// (centered) or at `(0, 0)` (uncentered, the raw transform layout).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTensor {
    shape: Shape,
    data: Vec<Complex64>,
    centered: bool,
}

impl SpectralTensor {
    pub fn zeros(shape: Shape, centered: bool) -> Self {
        SpectralTensor {
            shape,
            data: vec![Complex64::new(0.0, 0.0); shape.len()],
            centered,
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<Complex64>, centered: bool) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "buffer length {} does not match shape {}",
                data.len(),
                shape
            )));
        }
        Ok(SpectralTensor {
            shape,
            data,
            centered,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub(crate) fn set_centered(&mut self, centered: bool) {
        self.centered = centered;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, k: usize, l: usize) -> Complex64 {
        self.data[self.shape.index(b, c, k, l)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, k: usize, l: usize, value: Complex64) {
        let i = self.shape.index(b, c, k, l);
        self.data[i] = value;
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape || self.centered != other.centered {
            return Err(Error::shape(format!(
                "mismatched spectra {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(SpectralTensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
            centered: self.centered,
        })
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// The factor-`r` channel-to-space bijection used by pixel shuffle and
/// unshuffle. Offsets are ordered row-major: channel `c*r*r + dy*r + dx`
/// holds the sample at spatial offset `(dy, dx)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShuffleOrdering {
    pub factor: usize,
}

impl ShuffleOrdering {
    pub fn new(factor: usize) -> Self {
        ShuffleOrdering { factor }
    }

    /// Packed channel index for source channel `c` and offset `(dy, dx)`.
    #[inline]
    pub fn packed_channel(&self, c: usize, dy: usize, dx: usize) -> usize {
        (c * self.factor + dy) * self.factor + dx
    }

    /// Inverse of [`packed_channel`](Self::packed_channel).
    #[inline]
    pub fn unpack_channel(&self, packed: usize) -> (usize, usize, usize) {
        let dx = packed % self.factor;
        let dy = (packed / self.factor) % self.factor;
        let c = packed / (self.factor * self.factor);
        (c, dy, dx)
    }
}

/// Space-to-channel rearrangement: `[B, C, M, N] -> [B, r²·C, M/r, N/r]`.
///
/// Pure data movement, no arithmetic; exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: &SpatialTensor, r: usize) -> Result<SpatialTensor> {
    let s = x.shape();
    if r == 0 {
        return Err(Error::shape("shuffle factor must be positive"));
    }
    if s.rows % r != 0 || s.cols % r != 0 {
        return Err(Error::shape(format!(
            "spatial dims {}x{} not divisible by factor {}",
            s.rows, s.cols, r
        )));
    }
    let ord = ShuffleOrdering::new(r);
    let out_shape = Shape::new(s.batch, s.channels * r * r, s.rows / r, s.cols / r);
    let mut out = SpatialTensor::zeros(out_shape);
    for b in 0..s.batch {
        for c in 0..s.channels {
            for m in 0..out_shape.rows {
                for n in 0..out_shape.cols {
                    for dy in 0..r {
                        for dx in 0..r {
                            let v = x.get(b, c, m * r + dy, n * r + dx);
                            out.set(b, ord.packed_channel(c, dy, dx), m, n, v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Channel-to-space rearrangement: `[B, C, M, N] -> [B, C/r², r·M, r·N]`.
pub fn pixel_shuffle(x: &SpatialTensor, r: usize) -> Result<SpatialTensor> {
    let s = x.shape();
    if r == 0 {
        return Err(Error::shape("shuffle factor must be positive"));
    }
    if s.channels % (r * r) != 0 {
        return Err(Error::shape(format!(
            "channel count {} not divisible by {}",
            s.channels,
            r * r
        )));
    }
    let ord = ShuffleOrdering::new(r);
    let out_shape = Shape::new(s.batch, s.channels / (r * r), s.rows * r, s.cols * r);
    let mut out = SpatialTensor::zeros(out_shape);
    for b in 0..s.batch {
        for packed in 0..s.channels {
            let (c, dy, dx) = ord.unpack_channel(packed);
            for m in 0..s.rows {
                for n in 0..s.cols {
                    out.set(b, c, m * r + dy, n * r + dx, x.get(b, packed, m, n));
                }
            }
        }
    }
    Ok(out)
}

/// Duplicates every channel `times` times consecutively:
/// `[B, C, M, N] -> [B, times·C, M, N]` with output channel `c·times + i`
/// equal to input channel `c`.
///
/// Copies of a channel occupy one contiguous group, so size-`times` groups
/// in the output line up with the per-channel groups produced by
/// [`pixel_unshuffle`].
pub fn concat_channels(x: &SpatialTensor, times: usize) -> Result<SpatialTensor> {
    if times == 0 {
        return Err(Error::shape("concat count must be at least 1"));
    }
    let s = x.shape();
    let out_shape = Shape::new(s.batch, s.channels * times, s.rows, s.cols);
    Ok(SpatialTensor::from_fn(out_shape, |b, c, m, n| {
        x.get(b, c / times, m, n)
    }))
}

/// Complex counterpart of [`concat_channels`].
pub fn concat_channels_spectral(x: &SpectralTensor, times: usize) -> Result<SpectralTensor> {
    if times == 0 {
        return Err(Error::shape("concat count must be at least 1"));
    }
    let s = x.shape();
    let out_shape = Shape::new(s.batch, s.channels * times, s.rows, s.cols);
    let mut out = SpectralTensor::zeros(out_shape, x.is_centered());
    for b in 0..out_shape.batch {
        for c in 0..out_shape.channels {
            for k in 0..out_shape.rows {
                for l in 0..out_shape.cols {
                    out.set(b, c, k, l, x.get(b, c / times, k, l));
                }
            }
        }
    }
    Ok(out)
}

fn check_group(channels: usize, group: usize) -> Result<()> {
    if group == 0 || channels % group != 0 {
        return Err(Error::shape(format!(
            "channel count {} not divisible by group size {}",
            channels, group
        )));
    }
    Ok(())
}

/// Replaces every channel with the arithmetic mean of its consecutive
/// size-`group` channel group. Shape is preserved.
pub fn group_average(x: &SpatialTensor, group: usize) -> Result<SpatialTensor> {
    let s = x.shape();
    check_group(s.channels, group)?;
    let mut out = SpatialTensor::zeros(s);
    let inv = 1.0 / group as f64;
    for b in 0..s.batch {
        for g in 0..s.channels / group {
            for m in 0..s.rows {
                for n in 0..s.cols {
                    let mut acc = 0.0;
                    for i in 0..group {
                        acc += x.get(b, g * group + i, m, n);
                    }
                    let mean = acc * inv;
                    for i in 0..group {
                        out.set(b, g * group + i, m, n, mean);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Complex counterpart of [`group_average`].
pub fn group_average_spectral(x: &SpectralTensor, group: usize) -> Result<SpectralTensor> {
    let s = x.shape();
    check_group(s.channels, group)?;
    let mut out = SpectralTensor::zeros(s, x.is_centered());
    let inv = 1.0 / group as f64;
    for b in 0..s.batch {
        for g in 0..s.channels / group {
            for k in 0..s.rows {
                for l in 0..s.cols {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..group {
                        acc += x.get(b, g * group + i, k, l);
                    }
                    let mean = acc * inv;
                    for i in 0..group {
                        out.set(b, g * group + i, k, l, mean);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Keeps the first channel of every size-`group` group:
/// `[B, C, K, L] -> [B, C/group, K, L]`.
pub fn first_of_each_group(x: &SpectralTensor, group: usize) -> Result<SpectralTensor> {
    let s = x.shape();
    check_group(s.channels, group)?;
    let out_shape = Shape::new(s.batch, s.channels / group, s.rows, s.cols);
    let mut out = SpectralTensor::zeros(out_shape, x.is_centered());
    for b in 0..out_shape.batch {
        for c in 0..out_shape.channels {
            for k in 0..s.rows {
                for l in 0..s.cols {
                    out.set(b, c, k, l, x.get(b, c * group, k, l));
                }
            }
        }
    }
    Ok(out)
}

/// Real counterpart of [`first_of_each_group`].
pub fn first_of_each_group_spatial(x: &SpatialTensor, group: usize) -> Result<SpatialTensor> {
    let s = x.shape();
    check_group(s.channels, group)?;
    let out_shape = Shape::new(s.batch, s.channels / group, s.rows, s.cols);
    Ok(SpatialTensor::from_fn(out_shape, |b, c, m, n| {
        x.get(b, c * group, m, n)
    }))
}

/// Swaps the two spatial axes: `[B, C, M, N] -> [B, C, N, M]`.
pub fn transpose_spatial(x: &SpatialTensor) -> SpatialTensor {
    let s = x.shape();
    let out_shape = Shape::new(s.batch, s.channels, s.cols, s.rows);
    SpatialTensor::from_fn(out_shape, |b, c, m, n| x.get(b, c, n, m))
}

/// Cyclic spatial shift by `(dy, dx)`; used by the circular-shift
/// invariance tests.
pub fn circshift(x: &SpatialTensor, dy: isize, dx: isize) -> SpatialTensor {
    let s = x.shape();
    let rows = s.rows as isize;
    let cols = s.cols as isize;
    SpatialTensor::from_fn(s, |b, c, m, n| {
        let sm = (m as isize - dy).rem_euclid(rows) as usize;
        let sn = (n as isize - dx).rem_euclid(cols) as usize;
        x.get(b, c, sm, sn)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_tensor(shape: Shape) -> SpatialTensor {
        let mut v = 0.0;
        SpatialTensor::from_fn(shape, |_, _, _, _| {
            v += 1.0;
            v
        })
    }

    #[test]
    fn unshuffle_2x2_ordering() {
        let x = SpatialTensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_unshuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 4, 1, 1));
        // row-major offsets: (0,0) (0,1) (1,0) (1,1)
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn shuffle_inverts_unshuffle_bit_exact() {
        let x = seq_tensor(Shape::new(2, 3, 4, 6));
        let y = pixel_shuffle(&pixel_unshuffle(&x, 2).unwrap(), 2).unwrap();
        assert_eq!(x, y);
        let z = pixel_unshuffle(&pixel_shuffle(&pixel_unshuffle(&x, 2).unwrap(), 2).unwrap(), 2)
            .unwrap();
        assert_eq!(pixel_unshuffle(&x, 2).unwrap(), z);
    }

    #[test]
    fn shuffle_preserves_constant_and_mean() {
        let x = SpatialTensor::constant(Shape::new(1, 4, 3, 3), 2.5);
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 6, 6));
        assert!(y.data().iter().all(|&v| v == 2.5));
        let x = seq_tensor(Shape::new(1, 4, 2, 2));
        let y = pixel_shuffle(&x, 2).unwrap();
        assert!((x.mean() - y.mean()).abs() < 1e-12);
    }

    #[test]
    fn unshuffle_rejects_odd_dims() {
        let x = SpatialTensor::zeros(Shape::new(1, 1, 3, 4));
        assert!(matches!(pixel_unshuffle(&x, 2), Err(Error::Shape(_))));
        let x = SpatialTensor::zeros(Shape::new(1, 3, 4, 4));
        assert!(matches!(pixel_shuffle(&x, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn concat_duplicates_channels() {
        let x = seq_tensor(Shape::new(1, 1, 2, 2));
        let y = concat_channels(&x, 4).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 4, 2, 2));
        for c in 0..4 {
            for m in 0..2 {
                for n in 0..2 {
                    assert_eq!(y.get(0, c, m, n), x.get(0, 0, m, n));
                }
            }
        }
        // times = 1 is the identity
        assert_eq!(concat_channels(&x, 1).unwrap(), x);
    }

    #[test]
    fn group_average_recovers_duplicated_channels() {
        let x = seq_tensor(Shape::new(1, 3, 2, 2));
        let y = concat_channels(&x, 4).unwrap();
        let avg = group_average(&y, 4).unwrap();
        // copies are identical, so averaging is a no-op
        assert_eq!(avg, y);
    }

    #[test]
    fn group_average_arithmetic_mean() {
        let x = SpatialTensor::from_vec(Shape::new(1, 4, 1, 1), vec![0.0, 0.0, 0.0, 4.0]).unwrap();
        let y = group_average(&x, 4).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(group_average(&x, 3), Err(Error::Shape(_))));
    }

    #[test]
    fn first_of_each_group_picks_group_heads() {
        let x = seq_tensor(Shape::new(1, 8, 1, 1));
        let xs = SpectralTensor::from_vec(
            x.shape(),
            x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            false,
        )
        .unwrap();
        let y = first_of_each_group(&xs, 4).unwrap();
        assert_eq!(y.shape().channels, 2);
        assert_eq!(y.get(0, 0, 0, 0).re, x.get(0, 0, 0, 0));
        assert_eq!(y.get(0, 1, 0, 0).re, x.get(0, 4, 0, 0));
    }

    #[test]
    fn concat_first_group_average_identity_chain() {
        // concat(first(group_average(x))) == group_average(x)
        let x = seq_tensor(Shape::new(1, 8, 2, 2));
        let avg = group_average(&x, 4).unwrap();
        let first = first_of_each_group_spatial(&avg, 4).unwrap();
        let back = concat_channels(&first, 4).unwrap();
        assert_eq!(back, avg);
    }

    #[test]
    fn transpose_roundtrip_and_index() {
        let x = seq_tensor(Shape::new(2, 2, 3, 5));
        let t = transpose_spatial(&x);
        assert_eq!(t.shape(), Shape::new(2, 2, 5, 3));
        for b in 0..2 {
            for c in 0..2 {
                for m in 0..3 {
                    for n in 0..5 {
                        assert_eq!(t.get(b, c, n, m), x.get(b, c, m, n));
                    }
                }
            }
        }
        assert_eq!(transpose_spatial(&t), x);
    }

    #[test]
    fn circshift_wraps() {
        let x = seq_tensor(Shape::new(1, 1, 2, 3));
        let y = circshift(&x, 1, 1);
        assert_eq!(y.get(0, 0, 1, 1), x.get(0, 0, 0, 0));
        assert_eq!(y.get(0, 0, 0, 0), x.get(0, 0, 1, 2));
        let z = circshift(&y, -1, -1);
        assert_eq!(z, x);
    }
}
