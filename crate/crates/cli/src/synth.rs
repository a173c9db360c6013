//! Synthetic test sequences built from a seeded continuous texture, so any
//! motion can be rendered exactly instead of by resampling a previous frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ttvsr_core::FeatureMap;

/// Pan velocity in pixels per frame, `(rows, cols)`.
pub const PAN_VELOCITY: (f32, f32) = (0.5, 0.75);

/// Per-frame scale factor of the zoom sequence.
pub const ZOOM_RATE: f32 = 1.06;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Pan,
    Zoom,
    Static,
    Noise,
}

const WAVES: usize = 4;

/// A sum of low-frequency plane waves per channel, bounded to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Texture {
    // (amplitude, freq_row, freq_col, phase) per channel and wave
    waves: Vec<[(f32, f32, f32, f32); WAVES]>,
}

impl Texture {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..3)
            .map(|_| {
                std::array::from_fn(|_| {
                    let amp = rng.random_range(0.04f32..0.12);
                    let fr = rng.random_range(-0.9f32..0.9);
                    let fc = rng.random_range(-0.9f32..0.9);
                    let phase = rng.random_range(0.0f32..std::f32::consts::TAU);
                    (amp, fr, fc, phase)
                })
            })
            .collect();
        Self { waves }
    }

    pub fn at(&self, c: usize, row: f32, col: f32) -> f32 {
        let v: f32 = self.waves[c]
            .iter()
            .map(|&(a, fr, fc, p)| a * (fr * row + fc * col + p).sin())
            .sum();
        (0.5 + v).clamp(0.0, 1.0)
    }
}

/// Render `frames` frames of size `h x w`.
pub fn synthesize(
    kind: SynthKind,
    frames: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Vec<FeatureMap> {
    let tex = Texture::seeded(seed);
    let render = |f: &dyn Fn(usize, usize, usize) -> f32| {
        FeatureMap::from_fn(3, h, w, f).expect("bounded texture")
    };
    let (cr, cc) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    match kind {
        SynthKind::Static => (0..frames)
            .map(|_| render(&|c, i, j| tex.at(c, i as f32, j as f32)))
            .collect(),
        SynthKind::Pan => (0..frames)
            .map(|k| {
                let (dr, dc) = (PAN_VELOCITY.0 * k as f32, PAN_VELOCITY.1 * k as f32);
                render(&|c, i, j| tex.at(c, i as f32 - dr, j as f32 - dc))
            })
            .collect(),
        SynthKind::Zoom => (0..frames)
            .map(|k| {
                let s = ZOOM_RATE.powi(k as i32);
                render(&|c, i, j| tex.at(c, cr + (i as f32 - cr) / s, cc + (j as f32 - cc) / s))
            })
            .collect(),
        SynthKind::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..frames)
                .map(|_| {
                    let data = (0..3 * h * w).map(|_| rng.random::<f32>()).collect();
                    FeatureMap::new(3, h, w, data).expect("finite noise")
                })
                .collect()
        }
    }
}
