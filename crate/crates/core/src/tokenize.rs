//! Token grids and cross-scale feature tokenization.
//!
//! Every scale is unfolded directly with its own kernel at the shared base
//! stride, with symmetric zero padding so each scale lands on the same
//! `(H/base) x (W/base)` grid. Each patch is then adaptively average-pooled
//! down to `base x base` and the scales are averaged element-wise. Padded
//! positions do not take part in any average, so constant inputs stay constant
//! up to the border.

use crate::error::{Error, Result};
use crate::tensor::{sample_plane, window_count, Coord, FeatureMap};

/// A regular grid of equal-length tokens, stored contiguously in row-major
/// grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    grid_h: usize,
    grid_w: usize,
    token_len: usize,
    kernel: usize,
    stride: usize,
    data: Vec<f32>,
}

impl TokenGrid {
    pub(crate) fn from_raw(
        grid_h: usize,
        grid_w: usize,
        token_len: usize,
        kernel: usize,
        stride: usize,
        data: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(data.len(), grid_h * grid_w * token_len);
        Self {
            grid_h,
            grid_w,
            token_len,
            kernel,
            stride,
            data,
        }
    }

    pub fn zeros(
        grid_h: usize,
        grid_w: usize,
        token_len: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        Self::from_raw(
            grid_h,
            grid_w,
            token_len,
            kernel,
            stride,
            vec![0.0; grid_h * grid_w * token_len],
        )
    }

    /// Assemble a grid from per-cell tokens given in row-major order.
    pub fn from_tokens(
        grid_h: usize,
        grid_w: usize,
        kernel: usize,
        stride: usize,
        tokens: &[Vec<f32>],
    ) -> Result<Self> {
        if tokens.len() != grid_h * grid_w {
            return Err(Error::sizing(format!(
                "{} tokens for a {}x{} grid",
                tokens.len(),
                grid_h,
                grid_w
            )));
        }
        let token_len = tokens.first().map_or(0, Vec::len);
        if tokens.iter().any(|t| t.len() != token_len) {
            return Err(Error::sizing("tokens of unequal length"));
        }
        if tokens.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("token grid"));
        }
        Ok(Self::from_raw(
            grid_h,
            grid_w,
            token_len,
            kernel,
            stride,
            tokens.concat(),
        ))
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn token_len(&self) -> usize {
        self.token_len
    }

    /// `(kernel, stride)` of the unfold that produced the grid.
    pub fn base(&self) -> (usize, usize) {
        (self.kernel, self.stride)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn token(&self, gi: usize, gj: usize) -> &[f32] {
        &self.data[(gi * self.grid_w + gj) * self.token_len..][..self.token_len]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.token_len.max(1))
    }
}

/// Symmetric zero padding that puts a `kernel` window on the `base` grid.
pub fn scale_padding(kernel: usize, base: usize) -> usize {
    (kernel - base).div_ceil(2)
}

/// Fuse receptive fields of several kernel sizes into tokens of length
/// `C * base * base` on the `(H/base) x (W/base)` grid.
pub fn cross_scale_tokenize(f: &FeatureMap, kernels: &[usize], base: usize) -> Result<TokenGrid> {
    let (channels, h, w) = f.shape();
    if base == 0 || h % base != 0 || w % base != 0 {
        return Err(Error::sizing(format!(
            "base {} does not divide {}x{}",
            base, h, w
        )));
    }
    if kernels.is_empty() {
        return Err(Error::Precondition("no tokenization kernels".into()));
    }
    let (gh, gw) = (h / base, w / base);
    for &k in kernels {
        if k < base {
            return Err(Error::Precondition(format!(
                "kernel {} smaller than base {}",
                k, base
            )));
        }
        let p = scale_padding(k, base);
        if window_count(h, k, base, p) != Some(gh) || window_count(w, k, base, p) != Some(gw) {
            return Err(Error::sizing(format!(
                "kernel {} with padding {} does not land on the {}x{} grid",
                k, p, gh, gw
            )));
        }
    }

    let token_len = channels * base * base;
    let mut data = vec![0.0f32; gh * gw * token_len];
    // Per element: running sum of per-scale bin means and number of scales
    // that saw at least one real pixel.
    let mut acc = vec![0.0f32; token_len];
    let mut hits = vec![0u32; token_len];
    for gi in 0..gh {
        for gj in 0..gw {
            acc.fill(0.0);
            hits.fill(0);
            for &k in kernels {
                let p = scale_padding(k, base) as isize;
                let top = (gi * base) as isize - p;
                let left = (gj * base) as isize - p;
                for bi in 0..base {
                    let rows = bin_range(bi, k, base);
                    for bj in 0..base {
                        let cols = bin_range(bj, k, base);
                        for c in 0..channels {
                            let mut sum = 0.0f32;
                            let mut n = 0u32;
                            for r in rows.clone() {
                                let y = top + r as isize;
                                if y < 0 || y >= h as isize {
                                    continue;
                                }
                                for q in cols.clone() {
                                    let x = left + q as isize;
                                    if x < 0 || x >= w as isize {
                                        continue;
                                    }
                                    sum += f.get(c, y as usize, x as usize);
                                    n += 1;
                                }
                            }
                            if n > 0 {
                                let e = (c * base + bi) * base + bj;
                                acc[e] += sum / n as f32;
                                hits[e] += 1;
                            }
                        }
                    }
                }
            }
            let token = &mut data[(gi * gw + gj) * token_len..][..token_len];
            for ((t, &a), &n) in token.iter_mut().zip(&acc).zip(&hits) {
                *t = if n > 0 { a / n as f32 } else { 0.0 };
            }
        }
    }
    Ok(TokenGrid::from_raw(gh, gw, token_len, base, base, data))
}

/// Rows (or columns) of a `kernel`-wide patch that fall into adaptive bin `b`
/// of `bins`.
fn bin_range(b: usize, kernel: usize, bins: usize) -> std::ops::Range<usize> {
    (b * kernel / bins)..((b + 1) * kernel / bins)
}

/// Bilinearly sample a `kh x kw` patch centered at `center`; cell `(i, j)` is
/// read at `center + (i, j) - ((kh-1)/2, (kw-1)/2)` with border clamping.
pub fn patch_at(f: &FeatureMap, center: Coord, kh: usize, kw: usize) -> Vec<f32> {
    let (channels, h, w) = f.shape();
    let r0 = center.row - (kh as f32 - 1.0) / 2.0;
    let c0 = center.col - (kw as f32 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(channels * kh * kw);
    for c in 0..channels {
        let plane = f.plane(c);
        for i in 0..kh {
            for j in 0..kw {
                out.push(sample_plane(
                    plane,
                    h,
                    w,
                    Coord::new(r0 + i as f32, c0 + j as f32),
                ));
            }
        }
    }
    out
}

/// Square-patch tokens at possibly fractional centers.
pub fn tokens_from_map_at(f: &FeatureMap, centers: &[Coord], kernel: usize) -> Vec<Vec<f32>> {
    centers
        .iter()
        .map(|&c| patch_at(f, c, kernel, kernel))
        .collect()
}
