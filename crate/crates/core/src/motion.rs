//! Backward flow between consecutive frames: SAD block matching, average
//! pooling down to feature resolution, and Middlebury `.flo` I/O.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{sample_plane, Coord, FeatureMap};

/// Backward displacement field. The output pixel `p` of the current frame
/// corresponds to `p + (d_row(p), d_col(p))` in the previous frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    height: usize,
    width: usize,
    d_row: Vec<f32>,
    d_col: Vec<f32>,
}

impl Flow {
    pub fn new(height: usize, width: usize, d_row: Vec<f32>, d_col: Vec<f32>) -> Result<Self> {
        let n = height * width;
        if n == 0 || d_row.len() != n || d_col.len() != n {
            return Err(Error::sizing(format!(
                "flow planes of length {}/{} for {}x{}",
                d_row.len(),
                d_col.len(),
                height,
                width
            )));
        }
        let bound = height.max(width) as f32;
        for v in d_row.iter().chain(&d_col) {
            if !v.is_finite() {
                return Err(Error::NonFinite("flow"));
            }
            if v.abs() > bound {
                return Err(Error::Precondition(format!(
                    "flow displacement {} exceeds sanity bound {}",
                    v, bound
                )));
            }
        }
        Ok(Self {
            height,
            width,
            d_row,
            d_col,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            d_row: vec![0.0; height * width],
            d_col: vec![0.0; height * width],
        }
    }

    pub fn constant(height: usize, width: usize, d_row: f32, d_col: f32) -> Result<Self> {
        Self::new(
            height,
            width,
            vec![d_row; height * width],
            vec![d_col; height * width],
        )
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> (f32, f32),
    ) -> Result<Self> {
        let mut d_row = Vec::with_capacity(height * width);
        let mut d_col = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                let (r, c) = f(i, j);
                d_row.push(r);
                d_col.push(c);
            }
        }
        Self::new(height, width, d_row, d_col)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn d_row(&self) -> &[f32] {
        &self.d_row
    }

    pub fn d_col(&self) -> &[f32] {
        &self.d_col
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> (f32, f32) {
        let k = i * self.width + j;
        (self.d_row[k], self.d_col[k])
    }

    /// Bilinear displacement at a continuous position (border-clamped).
    pub fn sample(&self, at: Coord) -> (f32, f32) {
        (
            sample_plane(&self.d_row, self.height, self.width, at),
            sample_plane(&self.d_col, self.height, self.width, at),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.d_row.iter().chain(&self.d_col).all(|&v| v == 0.0)
    }

    /// Serialize in the Middlebury `.flo` layout.
    pub fn to_flo_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.height * self.width);
        out.extend_from_slice(FLO_MAGIC);
        out.extend_from_slice(&(self.width as i32).to_le_bytes());
        out.extend_from_slice(&(self.height as i32).to_le_bytes());
        for (r, c) in self.d_row.iter().zip(&self.d_col) {
            out.extend_from_slice(&c.to_le_bytes());
            out.extend_from_slice(&r.to_le_bytes());
        }
        out
    }

    pub fn from_flo_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::format("magic", "truncated"));
        }
        if &bytes[..4] != FLO_MAGIC {
            return Err(Error::format("magic", "bad magic"));
        }
        let read_dim = |field: &'static str, at: usize| -> Result<usize> {
            let raw = bytes
                .get(at..at + 4)
                .ok_or_else(|| Error::format(field, "truncated"))?;
            let v = i32::from_le_bytes(raw.try_into().unwrap());
            if v <= 0 {
                return Err(Error::format(field, format!("must be positive, got {}", v)));
            }
            Ok(v as usize)
        };
        let width = read_dim("width", 4)?;
        let height = read_dim("height", 8)?;
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Error::format("height", "dimensions overflow"))?;
        let body = &bytes[12..];
        let expected = n
            .checked_mul(8)
            .ok_or_else(|| Error::format("height", "dimensions overflow"))?;
        if body.len() < expected {
            return Err(Error::format(
                "data",
                format!("truncated: {} of {} bytes", body.len(), expected),
            ));
        }
        if body.len() > expected {
            return Err(Error::format(
                "data",
                format!("{} trailing bytes", body.len() - expected),
            ));
        }
        let mut d_row = Vec::with_capacity(n);
        let mut d_col = Vec::with_capacity(n);
        for pair in body.chunks_exact(8) {
            d_col.push(f32::from_le_bytes(pair[..4].try_into().unwrap()));
            d_row.push(f32::from_le_bytes(pair[4..].try_into().unwrap()));
        }
        Flow::new(height, width, d_row, d_col).map_err(|e| Error::format("data", e.to_string()))
    }
}

const FLO_MAGIC: &[u8; 4] = b"PIEH";

pub fn write_flo(flow: &Flow, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, flow.to_flo_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<Flow> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Flow::from_flo_bytes(&bytes)
}

/// Integer-displacement block matching with sum of absolute differences.
///
/// For every pixel of `cur`, searches displacements in `[-radius, radius]^2`
/// and compares `patch x patch` windows (border-clamped) against `prev`.
/// Ties go to the smallest squared magnitude, then lexicographic
/// `(d_row, d_col)`.
pub fn block_match_flow(
    cur: &FeatureMap,
    prev: &FeatureMap,
    patch: usize,
    radius: usize,
) -> Result<Flow> {
    cur.ensure_same_shape(prev)?;
    if patch.is_multiple_of(2) {
        return Err(Error::Precondition(format!(
            "patch size {} must be odd",
            patch
        )));
    }
    let (channels, h, w) = cur.shape();
    let half = (patch / 2) as isize;
    let r = radius as isize;
    let clamp = |v: isize, len: usize| v.clamp(0, len as isize - 1) as usize;

    let best: Vec<(f32, f32)> = (0..h * w)
        .into_par_iter()
        .map(|k| {
            let (i, j) = ((k / w) as isize, (k % w) as isize);
            let mut best = (f32::INFINITY, 0isize, 0isize, 0isize);
            for dr in -r..=r {
                for dc in -r..=r {
                    let mut sad = 0.0f32;
                    for c in 0..channels {
                        let a = cur.plane(c);
                        let b = prev.plane(c);
                        for oi in -half..=half {
                            let ya = clamp(i + oi, h);
                            let yb = clamp(i + oi + dr, h);
                            for oj in -half..=half {
                                let xa = clamp(j + oj, w);
                                let xb = clamp(j + oj + dc, w);
                                sad += (a[ya * w + xa] - b[yb * w + xb]).abs();
                            }
                        }
                    }
                    let cand = (sad, dr * dr + dc * dc, dr, dc);
                    if (cand.0, cand.1, cand.2, cand.3) < (best.0, best.1, best.2, best.3) {
                        best = cand;
                    }
                }
            }
            (best.2 as f32, best.3 as f32)
        })
        .collect();
    let (d_row, d_col) = best.into_iter().unzip();
    Flow::new(h, w, d_row, d_col)
}

/// Average-pool both components by `factor` and rescale displacements to the
/// coarser grid.
pub fn pool_flow(flow: &Flow, factor: usize) -> Result<Flow> {
    if factor == 0 || !flow.height.is_multiple_of(factor) || !flow.width.is_multiple_of(factor) {
        return Err(Error::sizing(format!(
            "flow {}x{} not divisible by {}",
            flow.height, flow.width, factor
        )));
    }
    let (oh, ow) = (flow.height / factor, flow.width / factor);
    let norm = (factor * factor * factor) as f32;
    let pool = |plane: &[f32]| -> Vec<f32> {
        let mut out = Vec::with_capacity(oh * ow);
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0f32;
                for di in 0..factor {
                    for dj in 0..factor {
                        acc += plane[(i * factor + di) * flow.width + j * factor + dj];
                    }
                }
                out.push(acc / norm);
            }
        }
        out
    };
    Flow::new(oh, ow, pool(&flow.d_row), pool(&flow.d_col))
}
