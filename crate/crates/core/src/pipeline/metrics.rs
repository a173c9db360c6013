//! Sequence loss and per-frame quality metrics. Inputs are in `[0, 1]`.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

pub const CHARBONNIER_EPS: f64 = 1e-8;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// `(1/T) * sum_t sqrt(||a_t - b_t||^2 + eps^2)`.
pub fn charbonnier(a: &[FeatureMap], b: &[FeatureMap]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::sizing(format!(
            "sequences of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        x.ensure_same_shape(y)?;
        let sq: f64 = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| {
                let d = p as f64 - q as f64;
                d * d
            })
            .sum();
        total += (sq + CHARBONNIER_EPS * CHARBONNIER_EPS).sqrt();
    }
    Ok(total / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    /// Zero mean squared error.
    Identical,
    Db(f64),
}

impl Psnr {
    /// Decibels, with `Identical` as positive infinity.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Identical => f64::INFINITY,
            Psnr::Db(v) => v,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Identical => f.write_str("inf"),
            Psnr::Db(v) => write!(f, "{v:.4}"),
        }
    }
}

pub fn mse(a: &FeatureMap, b: &FeatureMap) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let n = a.data().len().max(1) as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio for a peak value of 1.
pub fn psnr(a: &FeatureMap, b: &FeatureMap) -> Result<Psnr> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        Psnr::Identical
    } else {
        Psnr::Db(-10.0 * m.log10())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsimMode {
    /// Mean over the color channels.
    #[default]
    Rgb,
    /// Y channel of ITU-R BT.601 YCbCr.
    Luma,
}

/// BT.601 luma with studio swing, as commonly used for VSR evaluation.
pub fn to_luma(f: &FeatureMap) -> Result<FeatureMap> {
    if f.channels() != 3 {
        return Err(Error::sizing(format!(
            "luma needs 3 channels, got {}",
            f.channels()
        )));
    }
    let (r, g, b) = (f.plane(0), f.plane(1), f.plane(2));
    let data = (0..r.len())
        .map(|k| (65.481 * r[k] + 128.553 * g[k] + 24.966 * b[k] + 16.0) / 255.0)
        .collect();
    FeatureMap::new(1, f.height(), f.width(), data)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - mid;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..SSIM_WINDOW).map(|k| g[k] * plane[i * w + j + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..SSIM_WINDOW)
                .map(|k| g[k] * rows[(i + k) * ow + j])
                .sum();
        }
    }
    out
}

fn ssim_plane(a: &[f32], b: &[f32], h: usize, w: usize) -> f64 {
    let g = gaussian_window();
    let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&a, h, w, &g);
    let mu_b = filter_valid(&b, h, w, &g);
    let aa = filter_valid(&prod(&a, &a), h, w, &g);
    let bb = filter_valid(&prod(&b, &b), h, w, &g);
    let ab = filter_valid(&prod(&a, &b), h, w, &g);
    let n = mu_a.len();
    let mut total = 0.0;
    for k in 0..n {
        let (ma, mb) = (mu_a[k], mu_b[k]);
        let va = aa[k] - ma * ma;
        let vb = bb[k] - mb * mb;
        let cov = ab[k] - ma * mb;
        total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    total / n as f64
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
/// all fully-inside window positions.
pub fn ssim(a: &FeatureMap, b: &FeatureMap, mode: SsimMode) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::sizing(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let (h, w) = (a.height(), a.width());
    match mode {
        SsimMode::Luma => {
            let (ya, yb) = (to_luma(a)?, to_luma(b)?);
            Ok(ssim_plane(ya.data(), yb.data(), h, w))
        }
        SsimMode::Rgb => {
            let c = a.channels();
            Ok((0..c)
                .map(|k| ssim_plane(a.plane(k), b.plane(k), h, w))
                .sum::<f64>()
                / c as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(v: f32) -> FeatureMap {
        FeatureMap::filled(1, 1, 1, v)
    }

    #[test]
    fn charbonnier_examples() {
        let a = vec![FeatureMap::filled(3, 4, 4, 0.3)];
        assert_eq!(charbonnier(&a, &a).unwrap(), 1e-8);
        assert!((charbonnier(&[px(3.0)], &[px(0.0)]).unwrap() - 3.0).abs() < 1e-12);
        let got = charbonnier(&[px(3.0), px(4.0)], &[px(0.0), px(0.0)]).unwrap();
        assert!((got - 3.5).abs() < 1e-12);
        assert!(charbonnier(&[px(1.0)], &[]).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = FeatureMap::filled(3, 8, 8, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), Psnr::Identical);
        let b = FeatureMap::filled(3, 8, 8, 0.25);
        let c = FeatureMap::filled(3, 8, 8, 0.5);
        // exact binary fractions: diff 0.25, mse 1/16
        let want = -10.0 * (1.0f64 / 16.0).log10();
        assert!((psnr(&b, &c).unwrap().db() - want).abs() < 1e-12);
        assert!(psnr(&a, &FeatureMap::filled(3, 8, 9, 0.5)).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = FeatureMap::from_fn(3, 16, 16, |c, i, j| {
            ((c + i * 3 + j * 5) % 11) as f32 / 10.0
        })
        .unwrap();
        assert!((ssim(&a, &a, SsimMode::Rgb).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&a, &a, SsimMode::Luma).unwrap() - 1.0).abs() < 1e-12);
        let small = FeatureMap::zeros(3, 8, 8);
        assert!(ssim(&small, &small, SsimMode::Rgb).is_err());
    }

    #[test]
    fn ssim_drops_with_noise() {
        let a =
            FeatureMap::from_fn(1, 16, 16, |_, i, j| ((i * 7 + j * 3) % 13) as f32 / 12.0).unwrap();
        let b = a.map(|v| 1.0 - v).unwrap();
        let s = ssim(&a, &b, SsimMode::Rgb).unwrap();
        assert!(s < 0.0, "inverted image ssim {s}");
    }

    #[test]
    fn gaussian_window_normalized() {
        let g = gaussian_window();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(g[0], g[10]);
        assert!(g[5] > g[4]);
    }

    #[test]
    fn luma_of_white_and_black() {
        let white = FeatureMap::filled(3, 1, 1, 1.0);
        let black = FeatureMap::zeros(3, 1, 1);
        assert!((to_luma(&white).unwrap().data()[0] - 235.0 / 255.0).abs() < 1e-5);
        assert!((to_luma(&black).unwrap().data()[0] - 16.0 / 255.0).abs() < 1e-7);
    }
}
