//! Hard/soft attention along a trajectory.
//!
//! A query is compared with one key per past frame by cosine similarity; the
//! best-matching frame is selected (hard attention) and its similarity is
//! kept as a confidence (soft attention) that scales the selected value
//! before it is concatenated to the query.

use crate::error::{Error, Result};
use crate::tensor::{Coord, FeatureMap};
use crate::tokenize::patch_at;
use crate::trajectory::LocationMapStack;

/// Per-thread count of multiply-accumulates spent in similarity dot
/// products. Norms are not counted.
pub mod mac_counter {
    #[cfg(feature = "mac-counter")]
    use std::cell::Cell;

    #[cfg(feature = "mac-counter")]
    thread_local! {
        static MACS: Cell<u64> = const { Cell::new(0) };
    }

    pub const fn enabled() -> bool {
        cfg!(feature = "mac-counter")
    }

    #[inline]
    pub(crate) fn add(_n: usize) {
        #[cfg(feature = "mac-counter")]
        MACS.with(|c| c.set(c.get() + _n as u64));
    }

    pub fn reset() {
        #[cfg(feature = "mac-counter")]
        MACS.with(|c| c.set(0));
    }

    pub fn read() -> u64 {
        #[cfg(feature = "mac-counter")]
        {
            MACS.with(Cell::get)
        }
        #[cfg(not(feature = "mac-counter"))]
        {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionSelection {
    /// Index into the key sequence of the selected token.
    pub hard_index: usize,
    /// Similarity at `hard_index`, in `[-1, 1]`.
    pub soft_conf: f32,
}

/// Cosine similarity. A zero-norm operand yields 0.
pub fn cosine_similarity(q: &[f32], k: &[f32]) -> f32 {
    assert_eq!(q.len(), k.len(), "token lengths differ");
    let mut dot = 0.0f32;
    for (a, b) in q.iter().zip(k) {
        dot += a * b;
    }
    mac_counter::add(q.len());
    let nq = q.iter().map(|v| v * v).sum::<f32>().sqrt();
    let nk = k.iter().map(|v| v * v).sum::<f32>().sqrt();
    if nq == 0.0 || nk == 0.0 {
        return 0.0;
    }
    (dot / (nq * nk)).clamp(-1.0, 1.0)
}

/// Arg-max of cosine similarity over `keys`; ties go to the earliest key.
pub fn select<K: AsRef<[f32]>>(q: &[f32], keys: &[K]) -> Result<AttentionSelection> {
    if keys.is_empty() {
        return Err(Error::Precondition(
            "attention over an empty key sequence".into(),
        ));
    }
    let mut best = AttentionSelection {
        hard_index: 0,
        soft_conf: f32::NEG_INFINITY,
    };
    for (t, k) in keys.iter().enumerate() {
        let s = cosine_similarity(q, k.as_ref());
        if s > best.soft_conf {
            best = AttentionSelection {
                hard_index: t,
                soft_conf: s,
            };
        }
    }
    Ok(best)
}

/// `[q ‖ soft_conf * values[hard_index]]`.
pub fn attend<V: AsRef<[f32]>>(
    q: &[f32],
    sel: AttentionSelection,
    values: &[V],
) -> Result<Vec<f32>> {
    let v = values
        .get(sel.hard_index)
        .ok_or(Error::OutOfBounds {
            row: sel.hard_index,
            col: 0,
            height: values.len(),
            width: 1,
        })?
        .as_ref();
    let mut out = Vec::with_capacity(q.len() + v.len());
    out.extend_from_slice(q);
    out.extend(v.iter().map(|x| sel.soft_conf * x));
    Ok(out)
}

/// Token center, in pixels, of grid cell `(m, n)` for the location map at
/// `time`. The lookup uses the pixel at `floor((k-1)/2)` inside the token and
/// adds the remaining half-pixel offset for even kernels.
pub fn token_center(
    maps: &LocationMapStack,
    time: usize,
    token_kernel: usize,
    cell: (usize, usize),
) -> Result<Coord> {
    let map = maps
        .map_at_time(time)
        .ok_or_else(|| Error::Precondition(format!("no location map for frame {}", time)))?;
    let half = (token_kernel - 1) / 2;
    let frac = (token_kernel as f32 - 1.0) / 2.0 - half as f32;
    let (m, n) = (cell.0 * token_kernel + half, cell.1 * token_kernel + half);
    if m >= map.height() || n >= map.width() {
        return Err(Error::OutOfBounds {
            row: cell.0,
            col: cell.1,
            height: map.height() / token_kernel,
            width: map.width() / token_kernel,
        });
    }
    let c = map.coord(m, n);
    Ok(Coord::new(c.row + frac, c.col + frac))
}

/// Key tokens and value tokens, one of each per pool entry.
pub type KeysValues = (Vec<Vec<f32>>, Vec<Vec<f32>>);

/// One past frame taking part in an attention pool.
#[derive(Debug, Clone, Copy)]
pub struct PoolEntry<'a> {
    pub time: usize,
    pub key: &'a FeatureMap,
    pub value: &'a FeatureMap,
}

/// Key and value tokens along the trajectory of `cell`, one per entry.
pub fn gather_along(
    maps: &LocationMapStack,
    entries: &[PoolEntry<'_>],
    token_kernel: usize,
    cell: (usize, usize),
) -> Result<KeysValues> {
    let mut keys = Vec::with_capacity(entries.len());
    let mut values = Vec::with_capacity(entries.len());
    for e in entries {
        let center = token_center(maps, e.time, token_kernel, cell)?;
        keys.push(patch_at(e.key, center, token_kernel, token_kernel));
        values.push(patch_at(e.value, center, token_kernel, token_kernel));
    }
    Ok((keys, values))
}

/// Keys and values for every past frame held by `maps` (all but the newest).
/// `key_frames[i]` and `value_frames[i]` belong to the `i`-th stored map.
pub fn gather_keys_values(
    maps: &LocationMapStack,
    key_frames: &[&FeatureMap],
    value_frames: &[&FeatureMap],
    token_kernel: usize,
    cell: (usize, usize),
) -> Result<KeysValues> {
    let past = maps.len() - 1;
    if key_frames.len() != past || value_frames.len() != past {
        return Err(Error::sizing(format!(
            "{} past location maps but {} key and {} value frames",
            past,
            key_frames.len(),
            value_frames.len()
        )));
    }
    let entries: Vec<PoolEntry<'_>> = maps
        .maps()
        .take(past)
        .zip(key_frames.iter().zip(value_frames))
        .map(|(map, (k, v))| PoolEntry {
            time: map.time_tag(),
            key: k,
            value: v,
        })
        .collect();
    gather_along(maps, &entries, token_kernel, cell)
}
