//! Dense rank-3 feature maps and the sliding-window, pooling, sampling and
//! resampling primitives the rest of the crate is built on.
//!
//! Coordinates are 0-based with pixel centers on integers. Every operation
//! that reads at a continuous coordinate clamps it to the grid first, so the
//! border is replicated.

use crate::error::{Error, Result};
use crate::tokenize::TokenGrid;

/// A `C x H x W` grid of features stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Continuous pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coord {
    pub row: f32,
    pub col: f32,
}

impl Coord {
    pub const fn new(row: f32, col: f32) -> Self {
        Self { row, col }
    }

    /// Clamp into `[0, height-1] x [0, width-1]`.
    pub fn clamped(self, height: usize, width: usize) -> Self {
        Self {
            row: clamp_axis(self.row, height),
            col: clamp_axis(self.col, width),
        }
    }

    /// Chebyshev distance, used for trajectory gaps.
    pub fn max_abs_diff(self, other: Coord) -> f32 {
        (self.row - other.row)
            .abs()
            .max((self.col - other.col).abs())
    }
}

#[inline]
fn clamp_axis(v: f32, len: usize) -> f32 {
    v.clamp(0.0, (len - 1) as f32)
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::sizing(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        assert!(value.is_finite());
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for i in 0..height {
                for j in 0..width {
                    data.push(f(c, i, j));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    /// Internal constructor for operation outputs that are finite by construction.
    pub(crate) fn from_raw(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f32 {
        self.data[(c * self.height + i) * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, value: f32) {
        assert!(value.is_finite());
        self.data[(c * self.height + i) * self.width + j] = value;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// Element-wise map; fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> Result<f32> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    pub(crate) fn ensure_same_shape(&self, other: &FeatureMap) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::sizing(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Stack the channels of several maps with equal spatial size.
    pub fn concat_channels(maps: &[&FeatureMap]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Precondition("concat of zero maps".into()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for m in maps {
            if (m.height, m.width) != (h, w) {
                return Err(Error::sizing(format!(
                    "cannot concatenate {}x{} with {}x{}",
                    h, w, m.height, m.width
                )));
            }
            channels += m.channels;
            data.extend_from_slice(&m.data);
        }
        Ok(Self::from_raw(channels, h, w, data))
    }
}

/// Number of sliding-window positions along one axis, if any fit.
pub(crate) fn window_count(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    (kernel >= 1 && stride >= 1 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Extract every `kernel x kernel` patch (im2col). Tokens are channel-major,
/// row-major within a patch; padded reads are zero.
pub fn unfold(f: &FeatureMap, kernel: usize, stride: usize, zero_pad: usize) -> Result<TokenGrid> {
    let dims = (
        window_count(f.height, kernel, stride, zero_pad),
        window_count(f.width, kernel, stride, zero_pad),
    );
    let (gh, gw) = match dims {
        (Some(gh), Some(gw)) => (gh, gw),
        _ => {
            return Err(Error::sizing(format!(
                "cannot unfold {}x{} with kernel {} stride {} pad {}",
                f.height, f.width, kernel, stride, zero_pad
            )))
        }
    };
    let token_len = f.channels * kernel * kernel;
    let mut data = vec![0.0f32; gh * gw * token_len];
    for gi in 0..gh {
        for gj in 0..gw {
            let token = &mut data[(gi * gw + gj) * token_len..][..token_len];
            for c in 0..f.channels {
                for i in 0..kernel {
                    let r = (gi * stride + i) as isize - zero_pad as isize;
                    if r < 0 || r >= f.height as isize {
                        continue;
                    }
                    for j in 0..kernel {
                        let q = (gj * stride + j) as isize - zero_pad as isize;
                        if q < 0 || q >= f.width as isize {
                            continue;
                        }
                        token[(c * kernel + i) * kernel + j] = f.get(c, r as usize, q as usize);
                    }
                }
            }
        }
    }
    Ok(TokenGrid::from_raw(gh, gw, token_len, kernel, stride, data))
}

/// Adjoint of [`unfold`]: every output pixel is the sum of the token elements
/// that were read from it. Reads that landed in padding are dropped.
pub fn fold(
    tg: &TokenGrid,
    out_h: usize,
    out_w: usize,
    kernel: usize,
    stride: usize,
    zero_pad: usize,
) -> Result<FeatureMap> {
    let kk = kernel * kernel;
    if kk == 0 || !tg.token_len().is_multiple_of(kk) {
        return Err(Error::sizing(format!(
            "token length {} is not a multiple of kernel area {}",
            tg.token_len(),
            kk
        )));
    }
    let expected = (
        window_count(out_h, kernel, stride, zero_pad),
        window_count(out_w, kernel, stride, zero_pad),
    );
    if expected != (Some(tg.grid_h()), Some(tg.grid_w())) {
        return Err(Error::sizing(format!(
            "token grid {}x{} inconsistent with output {}x{} (kernel {}, stride {}, pad {})",
            tg.grid_h(),
            tg.grid_w(),
            out_h,
            out_w,
            kernel,
            stride,
            zero_pad
        )));
    }
    let channels = tg.token_len() / kk;
    let mut data = vec![0.0f32; channels * out_h * out_w];
    for gi in 0..tg.grid_h() {
        for gj in 0..tg.grid_w() {
            let token = tg.token(gi, gj);
            for c in 0..channels {
                for i in 0..kernel {
                    let r = (gi * stride + i) as isize - zero_pad as isize;
                    if r < 0 || r >= out_h as isize {
                        continue;
                    }
                    for j in 0..kernel {
                        let q = (gj * stride + j) as isize - zero_pad as isize;
                        if q < 0 || q >= out_w as isize {
                            continue;
                        }
                        data[(c * out_h + r as usize) * out_w + q as usize] +=
                            token[(c * kernel + i) * kernel + j];
                    }
                }
            }
        }
    }
    Ok(FeatureMap::from_raw(channels, out_h, out_w, data))
}

/// Non-overlapping `kernel x kernel` mean pooling.
pub fn avg_pool(f: &FeatureMap, kernel: usize) -> Result<FeatureMap> {
    if kernel == 0 || !f.height.is_multiple_of(kernel) || !f.width.is_multiple_of(kernel) {
        return Err(Error::sizing(format!(
            "{}x{} not divisible by pooling kernel {}",
            f.height, f.width, kernel
        )));
    }
    let (oh, ow) = (f.height / kernel, f.width / kernel);
    let inv = 1.0 / (kernel * kernel) as f32;
    let mut data = Vec::with_capacity(f.channels * oh * ow);
    for c in 0..f.channels {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0f32;
                for di in 0..kernel {
                    for dj in 0..kernel {
                        acc += f.get(c, i * kernel + di, j * kernel + dj);
                    }
                }
                data.push(acc * inv);
            }
        }
    }
    Ok(FeatureMap::from_raw(f.channels, oh, ow, data))
}

/// Bilinear read of one `height x width` plane at a clamped coordinate.
#[inline]
pub fn sample_plane(plane: &[f32], height: usize, width: usize, at: Coord) -> f32 {
    let at = at.clamped(height, width);
    let r0 = at.row.floor() as usize;
    let c0 = at.col.floor() as usize;
    let r1 = (r0 + 1).min(height - 1);
    let c1 = (c0 + 1).min(width - 1);
    let fr = at.row - r0 as f32;
    let fc = at.col - c0 as f32;
    let top = plane[r0 * width + c0] * (1.0 - fc) + plane[r0 * width + c1] * fc;
    let bottom = plane[r1 * width + c0] * (1.0 - fc) + plane[r1 * width + c1] * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Bilinear sample of all channels at `at`, with border replication.
pub fn bilinear_sample(f: &FeatureMap, at: Coord) -> Vec<f32> {
    (0..f.channels)
        .map(|c| sample_plane(f.plane(c), f.height, f.width, at))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeDirection {
    Up,
    Down,
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-index taps (clamped source index, normalized weight).
fn cubic_taps(
    in_len: usize,
    out_len: usize,
    factor: usize,
    dir: ResizeDirection,
) -> Vec<Vec<(usize, f64)>> {
    let f = factor as f64;
    (0..out_len)
        .map(|d| {
            // Pixel-center alignment. Downscaling widens the kernel by the
            // factor so it also acts as the anti-aliasing prefilter.
            let (src, support) = match dir {
                ResizeDirection::Up => ((d as f64 + 0.5) / f - 0.5, 1.0),
                ResizeDirection::Down => ((d as f64 + 0.5) * f - 0.5, f),
            };
            let lo = (src - 2.0 * support).floor() as isize;
            let hi = (src + 2.0 * support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .filter_map(|j| {
                    let w = cubic_kernel((src - j as f64) / support);
                    (w != 0.0).then(|| (j.clamp(0, in_len as isize - 1) as usize, w))
                })
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Separable bicubic resize by an integer factor.
pub fn bicubic_resize(f: &FeatureMap, factor: usize, dir: ResizeDirection) -> Result<FeatureMap> {
    if factor == 0 {
        return Err(Error::sizing("resize factor must be >= 1"));
    }
    let (oh, ow) = match dir {
        ResizeDirection::Up => (f.height * factor, f.width * factor),
        ResizeDirection::Down => (f.height / factor, f.width / factor),
    };
    if oh == 0 || ow == 0 {
        return Err(Error::sizing(format!(
            "resizing {}x{} by 1/{} leaves an empty map",
            f.height, f.width, factor
        )));
    }
    let row_taps = cubic_taps(f.height, oh, factor, dir);
    let col_taps = cubic_taps(f.width, ow, factor, dir);
    let mut out = Vec::with_capacity(f.channels * oh * ow);
    let mut tmp = vec![0.0f64; f.height * ow];
    for c in 0..f.channels {
        let plane = f.plane(c);
        for i in 0..f.height {
            for (j, taps) in col_taps.iter().enumerate() {
                tmp[i * ow + j] = taps
                    .iter()
                    .map(|&(s, w)| w * plane[i * f.width + s] as f64)
                    .sum();
            }
        }
        for taps in &row_taps {
            for j in 0..ow {
                let v: f64 = taps.iter().map(|&(s, w)| w * tmp[s * ow + j]).sum();
                out.push(v as f32);
            }
        }
    }
    Ok(FeatureMap::from_raw(f.channels, oh, ow, out))
}

/// Sub-pixel rearrangement `(C*r*r, H, W) -> (C, r*H, r*W)`.
pub fn pixel_shuffle(f: &FeatureMap, r: usize) -> Result<FeatureMap> {
    let rr = r * r;
    if r == 0 || !f.channels.is_multiple_of(rr) {
        return Err(Error::sizing(format!(
            "{} channels not divisible by r^2 = {}",
            f.channels, rr
        )));
    }
    let oc = f.channels / rr;
    let (oh, ow) = (f.height * r, f.width * r);
    let mut data = vec![0.0f32; f.data.len()];
    for c in 0..oc {
        for di in 0..r {
            for dj in 0..r {
                let src_c = c * rr + di * r + dj;
                for i in 0..f.height {
                    for j in 0..f.width {
                        data[(c * oh + r * i + di) * ow + r * j + dj] = f.get(src_c, i, j);
                    }
                }
            }
        }
    }
    Ok(FeatureMap::from_raw(oc, oh, ow, data))
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(f: &FeatureMap, r: usize) -> Result<FeatureMap> {
    if r == 0 || !f.height.is_multiple_of(r) || !f.width.is_multiple_of(r) {
        return Err(Error::sizing(format!(
            "{}x{} not divisible by {}",
            f.height, f.width, r
        )));
    }
    let rr = r * r;
    let (oh, ow) = (f.height / r, f.width / r);
    let oc = f.channels * rr;
    let mut data = vec![0.0f32; f.data.len()];
    for c in 0..f.channels {
        for di in 0..r {
            for dj in 0..r {
                let dst_c = c * rr + di * r + dj;
                for i in 0..oh {
                    for j in 0..ow {
                        data[(dst_c * oh + i) * ow + j] = f.get(c, r * i + di, r * j + dj);
                    }
                }
            }
        }
    }
    Ok(FeatureMap::from_raw(oc, oh, ow, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::new(c, h, w, (0..c * h * w).map(|v| v as f32).collect()).unwrap()
    }

    fn map_strategy() -> impl Strategy<Value = FeatureMap> {
        (1usize..3, 1usize..7, 1usize..7).prop_flat_map(|(c, h, w)| {
            prop::collection::vec(-4.0f32..4.0, c * h * w)
                .prop_map(move |d| FeatureMap::new(c, h, w, d).unwrap())
        })
    }

    #[test]
    fn construction_rejects_bad_length_and_nan() {
        assert!(matches!(
            FeatureMap::new(1, 2, 2, vec![0.0; 3]),
            Err(Error::Sizing(_))
        ));
        assert!(matches!(
            FeatureMap::new(1, 1, 1, vec![f32::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn unfold_non_overlapping_patch() {
        let tg = unfold(&ramp(1, 4, 4), 2, 2, 0).unwrap();
        assert_eq!((tg.grid_h(), tg.grid_w()), (2, 2));
        assert_eq!(tg.token(0, 0), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(tg.token(1, 1), &[10.0, 11.0, 14.0, 15.0]);
    }

    #[test]
    fn unfold_constant_map() {
        let f = FeatureMap::filled(2, 5, 6, 0.25);
        for (k, s) in [(1, 1), (2, 1), (3, 2), (5, 1)] {
            let tg = unfold(&f, k, s, 0).unwrap();
            assert!(tg.data().iter().all(|&v| v == 0.25));
        }
    }

    #[test]
    fn unfold_overlapping_matches_enumeration() {
        let f = ramp(1, 4, 4);
        let tg = unfold(&f, 2, 1, 0).unwrap();
        assert_eq!((tg.grid_h(), tg.grid_w()), (3, 3));
        // brute-force enumeration of every 2x2 window
        for gi in 0..3 {
            for gj in 0..3 {
                let expect: Vec<f32> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|&(a, b)| ((gi + a) * 4 + gj + b) as f32)
                    .collect();
                assert_eq!(tg.token(gi, gj), expect.as_slice());
            }
        }
        assert_eq!(tg.token(1, 1), &[5.0, 6.0, 9.0, 10.0]);
    }

    #[test]
    fn unfold_padding_reads_zero() {
        let f = FeatureMap::filled(1, 2, 2, 1.0);
        let tg = unfold(&f, 3, 1, 1).unwrap();
        assert_eq!((tg.grid_h(), tg.grid_w()), (2, 2));
        assert_eq!(
            tg.token(0, 0),
            &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]
        );
    }

    #[test]
    fn unfold_rejects_oversized_kernel() {
        assert!(matches!(
            unfold(&ramp(1, 3, 3), 4, 1, 0),
            Err(Error::Sizing(_))
        ));
        assert!(matches!(
            unfold(&ramp(1, 3, 3), 2, 0, 0),
            Err(Error::Sizing(_))
        ));
    }

    #[test]
    fn fold_of_overlapping_unfold_counts_windows() {
        let f = ramp(1, 4, 4);
        let back = fold(&unfold(&f, 2, 1, 0).unwrap(), 4, 4, 2, 1, 0).unwrap();
        // (1,1) is covered by four 2x2 windows
        assert_eq!(back.get(0, 1, 1), 4.0 * f.get(0, 1, 1));
        // corners by exactly one
        assert_eq!(back.get(0, 0, 0), f.get(0, 0, 0));
        assert_eq!(back.get(0, 0, 1), 2.0 * f.get(0, 0, 1));
    }

    #[test]
    fn fold_zero_tokens_and_bad_shapes() {
        let tg = TokenGrid::zeros(2, 2, 4, 2, 2);
        let out = fold(&tg, 4, 4, 2, 2, 0).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(matches!(fold(&tg, 6, 4, 2, 2, 0), Err(Error::Sizing(_))));
        assert!(matches!(fold(&tg, 4, 4, 3, 2, 0), Err(Error::Sizing(_))));
    }

    #[test]
    fn avg_pool_examples() {
        let f = FeatureMap::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avg_pool(&f, 2).unwrap().data(), &[2.5]);
        let p = avg_pool(&ramp(1, 4, 4), 2).unwrap();
        assert_eq!(p.data(), &[2.5, 4.5, 10.5, 12.5]);
        let c = avg_pool(&FeatureMap::filled(3, 6, 6, 0.7), 3).unwrap();
        assert_eq!(c.shape(), (3, 2, 2));
        assert!(c.data().iter().all(|&v| (v - 0.7).abs() < 1e-6));
        assert!(matches!(avg_pool(&ramp(1, 4, 5), 2), Err(Error::Sizing(_))));
    }

    #[test]
    fn bilinear_examples() {
        let f = FeatureMap::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(bilinear_sample(&f, Coord::new(0.5, 0.5)), vec![2.5]);
        assert_eq!(bilinear_sample(&f, Coord::new(0.0, 0.0)), vec![1.0]);
        assert_eq!(bilinear_sample(&f, Coord::new(-1.0, 0.0)), vec![1.0]);
        assert_eq!(bilinear_sample(&f, Coord::new(9.0, 9.0)), vec![4.0]);
    }

    #[test]
    fn bicubic_up_constant() {
        let f = FeatureMap::filled(3, 5, 7, 0.3);
        let up = bicubic_resize(&f, 4, ResizeDirection::Up).unwrap();
        assert_eq!(up.shape(), (3, 20, 28));
        assert!(up.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
        let down = bicubic_resize(&up, 4, ResizeDirection::Down).unwrap();
        assert_eq!(down.shape(), (3, 5, 7));
        assert!(down.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn bicubic_rejects_empty_output() {
        let f = FeatureMap::filled(1, 3, 8, 0.0);
        assert!(matches!(
            bicubic_resize(&f, 4, ResizeDirection::Down),
            Err(Error::Sizing(_))
        ));
    }

    #[test]
    fn pixel_shuffle_definition() {
        let f = FeatureMap::new(4, 1, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = pixel_shuffle(&f, 2).unwrap();
        assert_eq!(s.shape(), (1, 2, 2));
        assert_eq!(s.data(), &[1.0, 2.0, 3.0, 4.0]);
        let g = ramp(3, 2, 3);
        assert_eq!(pixel_shuffle(&g, 1).unwrap(), g);
        assert!(matches!(
            pixel_shuffle(&ramp(3, 2, 2), 2),
            Err(Error::Sizing(_))
        ));
    }

    #[test]
    fn pixel_shuffle_r4_index_check() {
        let f = ramp(16, 2, 2);
        let s = pixel_shuffle(&f, 4).unwrap();
        assert_eq!(s.shape(), (1, 8, 8));
        for ch in 0..16 {
            let (di, dj) = (ch / 4, ch % 4);
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(s.get(0, 4 * i + di, 4 * j + dj), f.get(ch, i, j));
                }
            }
        }
        assert_eq!(pixel_unshuffle(&s, 4).unwrap(), f);
    }

    proptest! {
        #[test]
        fn fold_unfold_identity_when_stride_is_kernel(
            c in 1usize..3, gh in 1usize..4, gw in 1usize..4, k in 1usize..4, seed in any::<u64>()
        ) {
            let (h, w) = (gh * k, gw * k);
            let f = FeatureMap::from_fn(c, h, w, |a, b, d| {
                ((seed.wrapping_add((a * 131 + b * 17 + d) as u64) % 1000) as f32) / 100.0
            }).unwrap();
            let back = fold(&unfold(&f, k, k, 0).unwrap(), h, w, k, k, 0).unwrap();
            prop_assert_eq!(back, f);
        }

        #[test]
        fn bilinear_is_convex(f in map_strategy(), r in -3.0f32..9.0, col in -3.0f32..9.0) {
            let (lo, hi) = (f.min(), f.max());
            for v in bilinear_sample(&f, Coord::new(r, col)) {
                prop_assert!(v >= lo - 1e-5 && v <= hi + 1e-5);
            }
        }

        #[test]
        fn bilinear_identity_field_is_fixed_point(h in 2usize..9, w in 2usize..9, fr in 0.0f32..1.0, fc in 0.0f32..1.0) {
            let field = FeatureMap::from_fn(2, h, w, |c, i, j| if c == 0 { i as f32 } else { j as f32 }).unwrap();
            let p = Coord::new(fr * (h - 1) as f32, fc * (w - 1) as f32);
            let v = bilinear_sample(&field, p);
            prop_assert!((v[0] - p.row).abs() < 1e-5 && (v[1] - p.col).abs() < 1e-5);
        }

        #[test]
        fn avg_pool_commutes_with_affine(a in -3.0f32..3.0, b in -3.0f32..3.0, seed in any::<u32>()) {
            let f = FeatureMap::from_fn(2, 4, 6, |c, i, j| ((seed as usize + c * 7 + i * 3 + j) % 11) as f32 / 11.0).unwrap();
            let lhs = avg_pool(&f.map(|v| a * v + b).unwrap(), 2).unwrap();
            let rhs = avg_pool(&f, 2).unwrap().map(|v| a * v + b).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-5);
        }

        #[test]
        fn pixel_shuffle_preserves_values(c in 1usize..3, h in 1usize..4, w in 1usize..4, r in 1usize..4) {
            let f = FeatureMap::from_fn(c * r * r, h, w, |a, b, d| (a * 100 + b * 10 + d) as f32).unwrap();
            let s = pixel_shuffle(&f, r).unwrap();
            let mut x = f.data().to_vec();
            let mut y = s.data().to_vec();
            x.sort_by(f32::total_cmp);
            y.sort_by(f32::total_cmp);
            prop_assert_eq!(x, y);
            prop_assert_eq!(pixel_unshuffle(&s, r).unwrap(), f);
        }

        #[test]
        fn bicubic_constant_is_constant(v in -2.0f32..2.0, h in 1usize..6, w in 1usize..6) {
            let f = FeatureMap::filled(1, h * 4, w * 4, v);
            for dir in [ResizeDirection::Up, ResizeDirection::Down] {
                let out = bicubic_resize(&f, 4, dir).unwrap();
                prop_assert!(out.data().iter().all(|&x| (x - v).abs() < 1e-6));
            }
        }
    }
}
