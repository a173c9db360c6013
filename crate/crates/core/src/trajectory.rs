//! Location maps: one `H x W` coordinate matrix per past frame, where entry
//! `(m, n)` of the map for time `t` is where the trajectory ending at cell
//! `(m, n)` of the newest frame was located at time `t`.
//!
//! Advancing by one frame resamples every stored map through the new backward
//! flow in a single pass over the grid, then appends an identity map.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::motion::Flow;
use crate::tensor::{sample_plane, Coord};

#[derive(Debug, Clone, PartialEq)]
pub struct LocationMap {
    height: usize,
    width: usize,
    rows: Vec<f32>,
    cols: Vec<f32>,
    time_tag: usize,
}

impl LocationMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Frame index this map refers to.
    pub fn time_tag(&self) -> usize {
        self.time_tag
    }

    #[inline]
    pub fn coord(&self, m: usize, n: usize) -> Coord {
        let k = m * self.width + n;
        Coord::new(self.rows[k], self.cols[k])
    }

    pub fn is_identity(&self) -> bool {
        (0..self.height)
            .all(|m| (0..self.width).all(|n| self.coord(m, n) == Coord::new(m as f32, n as f32)))
    }
}

/// Coordinate grid whose entries equal their own index.
pub fn identity_map(height: usize, width: usize, time_tag: usize) -> LocationMap {
    assert!(height >= 1 && width >= 1, "location map must be non-empty");
    let mut rows = Vec::with_capacity(height * width);
    let mut cols = Vec::with_capacity(height * width);
    for m in 0..height {
        for n in 0..width {
            rows.push(m as f32);
            cols.push(n as f32);
        }
    }
    LocationMap {
        height,
        width,
        rows,
        cols,
        time_tag,
    }
}

/// Time-ordered location maps for every frame seen so far (or the most recent
/// `ring_limit` of them).
#[derive(Debug, Clone)]
pub struct LocationMapStack {
    height: usize,
    width: usize,
    maps: VecDeque<LocationMap>,
    frames_seen: usize,
    ring_limit: Option<usize>,
    samples: u64,
}

impl LocationMapStack {
    /// Stack for the first frame: a single identity map at time 0.
    pub fn new(height: usize, width: usize) -> Self {
        Self::with_ring_limit(height, width, None)
    }

    /// Keep at most `limit` maps, dropping the oldest first.
    pub fn with_ring_limit(height: usize, width: usize, limit: Option<usize>) -> Self {
        assert!(limit != Some(0), "ring limit must keep at least one map");
        let mut maps = VecDeque::new();
        maps.push_back(identity_map(height, width, 0));
        Self {
            height,
            width,
            maps,
            frames_seen: 1,
            ring_limit: limit,
            samples: 0,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of frames seen; the newest map has time tag `current_time() - 1`.
    pub fn current_time(&self) -> usize {
        self.frames_seen
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> impl ExactSizeIterator<Item = &LocationMap> {
        self.maps.iter()
    }

    pub fn newest(&self) -> &LocationMap {
        self.maps.back().expect("stack is never empty")
    }

    pub fn map_at_time(&self, time_tag: usize) -> Option<&LocationMap> {
        let oldest = self.maps.front()?.time_tag;
        time_tag.checked_sub(oldest).and_then(|k| self.maps.get(k))
    }

    /// Total bilinear coordinate samples performed by [`update`](Self::update).
    pub fn sample_count(&self) -> u64 {
        self.samples
    }

    /// Advance to the next frame using the backward flow from the new frame
    /// to the current newest one.
    pub fn update(&mut self, flow: &Flow) -> Result<()> {
        if (flow.height(), flow.width()) != (self.height, self.width) {
            return Err(Error::sizing(format!(
                "flow {}x{} does not match location maps {}x{}",
                flow.height(),
                flow.width(),
                self.height,
                self.width
            )));
        }
        let (h, w) = (self.height, self.width);
        let positions: Vec<Coord> = (0..h * w)
            .map(|k| {
                let (dr, dc) = (flow.d_row()[k], flow.d_col()[k]);
                Coord::new((k / w) as f32 + dr, (k % w) as f32 + dc)
            })
            .collect();
        let (max_r, max_c) = ((h - 1) as f32, (w - 1) as f32);
        for map in &mut self.maps {
            let rows: Vec<f32> = positions
                .iter()
                .map(|&p| sample_plane(&map.rows, h, w, p).clamp(0.0, max_r))
                .collect();
            let cols: Vec<f32> = positions
                .iter()
                .map(|&p| sample_plane(&map.cols, h, w, p).clamp(0.0, max_c))
                .collect();
            map.rows = rows;
            map.cols = cols;
        }
        self.samples += (self.maps.len() * h * w) as u64;
        self.maps.push_back(identity_map(h, w, self.frames_seen));
        self.frames_seen += 1;
        if let Some(limit) = self.ring_limit {
            while self.maps.len() > limit {
                self.maps.pop_front();
            }
        }
        Ok(())
    }

    /// Trajectory of the stored maps ending at cell `(m, n)` of the newest frame.
    pub fn trajectory_of(&self, m: usize, n: usize) -> Result<Trajectory> {
        if m >= self.height || n >= self.width {
            return Err(Error::OutOfBounds {
                row: m,
                col: n,
                height: self.height,
                width: self.width,
            });
        }
        Ok(Trajectory {
            points: self.maps.iter().map(|map| map.coord(m, n)).collect(),
            end: (m, n),
            start_time: self.maps.front().map_or(0, |m| m.time_tag),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// One coordinate per frame, oldest first.
    pub points: Vec<Coord>,
    /// Integer cell in the newest frame.
    pub end: (usize, usize),
    /// Frame index of `points[0]`.
    pub start_time: usize,
}

impl Trajectory {
    /// Largest coordinate difference over aligned time steps.
    pub fn max_gap(&self, other: &Trajectory) -> f32 {
        assert_eq!(
            self.points.len(),
            other.points.len(),
            "trajectory lengths differ"
        );
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| a.max_abs_diff(*b))
            .fold(0.0, f32::max)
    }

    /// One `t row col` line per time step.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, p) in self.points.iter().enumerate() {
            writeln!(out, "{} {:.6} {:.6}", self.start_time + k, p.row, p.col).unwrap();
        }
        out
    }
}

/// Chain a single point backwards through the flows, newest flow first.
///
/// Independent of [`LocationMapStack`]: it interpolates the flows at the
/// running position instead of interpolating stored coordinates.
pub fn oracle_track(flows_newest_first: &[Flow], m: usize, n: usize) -> Result<Trajectory> {
    let mut p = Coord::new(m as f32, n as f32);
    let mut points = vec![p];
    if let Some(first) = flows_newest_first.first() {
        let (h, w) = (first.height(), first.width());
        if m >= h || n >= w {
            return Err(Error::OutOfBounds {
                row: m,
                col: n,
                height: h,
                width: w,
            });
        }
        for flow in flows_newest_first {
            if (flow.height(), flow.width()) != (h, w) {
                return Err(Error::sizing("flows of unequal size"));
            }
            let (dr, dc) = flow.sample(p);
            p = Coord::new(p.row + dr, p.col + dc).clamped(h, w);
            points.push(p);
        }
    }
    points.reverse();
    Ok(Trajectory {
        start_time: 0,
        end: (m, n),
        points,
    })
}
