//! Attention cost accounting.
//!
//! Vanilla attention compares a query with every non-overlapping token of
//! every frame; trajectory attention compares it with one token per frame.
//! Costs are multiply-accumulates of the similarity dot products.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use ttvsr_core::attention::{mac_counter, select};
use ttvsr_core::motion::Flow;
use ttvsr_core::tensor::{unfold, Coord, FeatureMap};
use ttvsr_core::tokenize::patch_at;
use ttvsr_core::trajectory::LocationMapStack;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("the similarity MAC counter is compiled out; enable the `mac-counter` feature")]
    CounterDisabled,
    #[error(transparent)]
    Core(#[from] ttvsr_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnShape {
    pub t: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub dh: usize,
    pub dw: usize,
}

impl AttnShape {
    pub fn new(
        t: usize,
        c: usize,
        h: usize,
        w: usize,
        dh: usize,
        dw: usize,
    ) -> Result<Self, BenchError> {
        let s = Self { t, c, h, w, dh, dw };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if [self.t, self.c, self.h, self.w, self.dh, self.dw].contains(&0) {
            return Err(BenchError::Shape(format!("{self:?} has a zero dimension")));
        }
        if !self.h.is_multiple_of(self.dh) || !self.w.is_multiple_of(self.dw) {
            return Err(BenchError::Shape(format!(
                "token {}x{} does not tile {}x{}",
                self.dh, self.dw, self.h, self.w
            )));
        }
        Ok(())
    }

    fn token_len(&self) -> u64 {
        (self.c * self.dh * self.dw) as u64
    }

    fn tokens_per_frame(&self) -> u64 {
        ((self.h / self.dh) * (self.w / self.dw)) as u64
    }
}

/// `T * (H/Dh) * (W/Dw) * C * Dh * Dw`
pub fn cost_vanilla(s: &AttnShape) -> u64 {
    s.t as u64 * s.tokens_per_frame() * s.token_len()
}

/// `T * C * Dh * Dw`
pub fn cost_trajectory(s: &AttnShape) -> u64 {
    s.t as u64 * s.token_len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionPath {
    /// One key per past frame, read along the query's trajectory.
    Trajectory,
    /// Every non-overlapping token of every past frame.
    Vanilla,
}

/// Random frames and a location-map stack over `T` past frames plus the
/// query frame, moved by small random integer flows.
struct Scene {
    past: Vec<FeatureMap>,
    current: FeatureMap,
    maps: LocationMapStack,
}

fn scene(s: &AttnShape, seed: u64) -> Result<Scene, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = |rng: &mut ChaCha8Rng| {
        let data = (0..s.c * s.h * s.w).map(|_| rng.random::<f32>()).collect();
        FeatureMap::new(s.c, s.h, s.w, data)
    };
    let past = (0..s.t)
        .map(|_| frame(&mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let current = frame(&mut rng)?;
    let mut maps = LocationMapStack::new(s.h, s.w);
    for _ in 0..s.t {
        let (dr, dc) = (rng.random_range(-1i32..=1), rng.random_range(-1i32..=1));
        maps.update(&Flow::constant(s.h, s.w, dr as f32, dc as f32)?)?;
    }
    Ok(Scene {
        past,
        current,
        maps,
    })
}

/// Pixel center of the `dh x dw` token at `cell` as seen in the map at
/// `time`.
fn center(maps: &LocationMapStack, time: usize, s: &AttnShape, cell: (usize, usize)) -> Coord {
    let map = maps.map_at_time(time).expect("scene keeps every map");
    let (hr, hc) = ((s.dh - 1) / 2, (s.dw - 1) / 2);
    let p = map.coord(cell.0 * s.dh + hr, cell.1 * s.dw + hc);
    Coord::new(
        p.row + (s.dh as f32 - 1.0) / 2.0 - hr as f32,
        p.col + (s.dw as f32 - 1.0) / 2.0 - hc as f32,
    )
}

/// Run one query through the chosen attention path and count the
/// similarity multiply-accumulates it performs.
pub fn measure_similarity_macs(
    s: &AttnShape,
    path: AttentionPath,
    seed: u64,
) -> Result<u64, BenchError> {
    if !mac_counter::enabled() {
        return Err(BenchError::CounterDisabled);
    }
    s.validate()?;
    let sc = scene(s, seed)?;
    let cell = ((s.h / s.dh) / 2, (s.w / s.dw) / 2);
    let q = patch_at(&sc.current, center(&sc.maps, s.t, s, cell), s.dh, s.dw);
    let keys: Vec<Vec<f32>> = match path {
        AttentionPath::Trajectory => sc
            .past
            .iter()
            .enumerate()
            .map(|(t, f)| patch_at(f, center(&sc.maps, t, s, cell), s.dh, s.dw))
            .collect(),
        AttentionPath::Vanilla => {
            let mut keys = Vec::new();
            for f in &sc.past {
                if s.dh == s.dw {
                    keys.extend(unfold(f, s.dh, s.dh, 0)?.tokens().map(<[f32]>::to_vec));
                } else {
                    for gi in 0..s.h / s.dh {
                        for gj in 0..s.w / s.dw {
                            let at = Coord::new(
                                (gi * s.dh) as f32 + (s.dh as f32 - 1.0) / 2.0,
                                (gj * s.dw) as f32 + (s.dw as f32 - 1.0) / 2.0,
                            );
                            keys.push(patch_at(f, at, s.dh, s.dw));
                        }
                    }
                }
            }
            keys
        }
    };
    mac_counter::reset();
    select(&q, &keys)?;
    Ok(mac_counter::read())
}

pub const CSV_HEADER: &str = "T,C,H,W,Dh,Dw,vanilla_macs,traj_macs,ratio";

/// One report row; the ratio is printed with enough digits to be exact for
/// power-of-two token counts.
pub fn csv_row(s: &AttnShape) -> String {
    let (v, t) = (cost_vanilla(s), cost_trajectory(s));
    format!(
        "{},{},{},{},{},{},{},{},{}",
        s.t,
        s.c,
        s.h,
        s.w,
        s.dh,
        s.dw,
        v,
        t,
        t as f64 / v as f64
    )
}

pub fn csv_report(shapes: &[AttnShape]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in shapes {
        out.push_str(&csv_row(s));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let s = AttnShape::new(10, 4, 16, 16, 4, 4).unwrap();
        assert_eq!(cost_vanilla(&s), 10240);
        assert_eq!(cost_trajectory(&s), 640);
        let one = AttnShape::new(1, 1, 3, 5, 3, 5).unwrap();
        assert_eq!(cost_vanilla(&one), 15);
        assert_eq!(cost_trajectory(&one), 15);
        let doubled = AttnShape { t: 20, ..s };
        assert_eq!(cost_vanilla(&doubled), 2 * cost_vanilla(&s));
        assert_eq!(cost_trajectory(&AttnShape { t: 1, ..s }), 64);
    }

    #[test]
    fn shape_validation() {
        assert!(AttnShape::new(1, 1, 10, 10, 3, 5).is_err());
        assert!(AttnShape::new(0, 1, 4, 4, 2, 2).is_err());
    }

    #[test]
    fn report_row() {
        let s = AttnShape::new(10, 4, 16, 16, 4, 4).unwrap();
        assert_eq!(csv_row(&s), "10,4,16,16,4,4,10240,640,0.0625");
        assert!(csv_report(&[s]).starts_with(CSV_HEADER));
    }

    #[test]
    fn measured_counts() {
        let s = AttnShape::new(10, 4, 16, 16, 4, 4).unwrap();
        assert_eq!(
            measure_similarity_macs(&s, AttentionPath::Trajectory, 0).unwrap(),
            640
        );
        assert_eq!(
            measure_similarity_macs(&s, AttentionPath::Vanilla, 0).unwrap(),
            10240
        );
        let r = AttnShape::new(3, 2, 12, 8, 3, 2).unwrap();
        assert_eq!(
            measure_similarity_macs(&r, AttentionPath::Vanilla, 1).unwrap(),
            cost_vanilla(&r)
        );
    }
}
