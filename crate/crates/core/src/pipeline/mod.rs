//! Inference loop: per-frame flow, location-map update, tokenization,
//! trajectory attention over a fine and a coarse memory pool, reconstruction
//! and bicubic residual, optionally in both temporal directions.

pub mod layers;
pub mod metrics;
pub mod weights;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::attention::{attend, gather_along, select, token_center, PoolEntry};
use crate::error::{Error, Result};
use crate::motion::{block_match_flow, pool_flow, Flow};
use crate::tensor::{bicubic_resize, fold, pixel_shuffle, Coord, FeatureMap, ResizeDirection};
use crate::tokenize::{cross_scale_tokenize, patch_at, TokenGrid};
use crate::trajectory::LocationMapStack;

use layers::{residual_block, ConvParams};
use weights::WeightSet;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub upscale: usize,
    pub channels: usize,
    pub extract_blocks: usize,
    pub recon_blocks: usize,
    pub token_kernel_coarse: usize,
    pub token_kernel_fine: usize,
    /// Number of most recent frames in the fine pool.
    pub fine_window: usize,
    /// Frames whose index is a multiple of this enter the coarse pool.
    pub coarse_interval: usize,
    pub cs_kernels: Vec<usize>,
    pub bidirectional: bool,
    pub seed: u64,
    pub map_ring_limit: Option<usize>,
    /// Block-matching patch side (odd) and search radius for built-in flow.
    pub match_patch: usize,
    pub match_radius: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            upscale: 4,
            channels: 64,
            extract_blocks: 5,
            recon_blocks: 60,
            token_kernel_coarse: 4,
            token_kernel_fine: 1,
            fine_window: 2,
            coarse_interval: 3,
            cs_kernels: vec![4, 6, 8],
            bidirectional: false,
            seed: 42,
            map_ring_limit: None,
            match_patch: 5,
            match_radius: 3,
        }
    }
}

impl PipelineConfig {
    /// Small network for tests and quick runs.
    pub fn test_default() -> Self {
        Self {
            channels: 8,
            extract_blocks: 1,
            recon_blocks: 2,
            ..Self::default()
        }
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Precondition(msg));
        if self.upscale == 0 || self.channels == 0 {
            return bad("upscale and channels must be positive".into());
        }
        if self.token_kernel_coarse == 0 || self.token_kernel_fine == 0 {
            return bad("token kernels must be positive".into());
        }
        if self.fine_window == 0 || self.coarse_interval == 0 {
            return bad("fine window and coarse interval must be positive".into());
        }
        if self.cs_kernels.is_empty()
            || self
                .cs_kernels
                .iter()
                .any(|&k| k < self.token_kernel_coarse)
        {
            return bad(format!(
                "cross-scale kernels {:?} must be non-empty and at least {}",
                self.cs_kernels, self.token_kernel_coarse
            ));
        }
        if self.match_patch.is_multiple_of(2) {
            return bad(format!("match patch {} must be odd", self.match_patch));
        }
        if self.map_ring_limit == Some(0) {
            return bad("ring limit must keep at least one map".into());
        }
        Ok(())
    }

    fn check_frame_size(&self, h: usize, w: usize) -> Result<()> {
        let k = self.token_kernel_coarse.max(self.token_kernel_fine);
        for t in [self.token_kernel_coarse, self.token_kernel_fine] {
            if !h.is_multiple_of(t) || !w.is_multiple_of(t) {
                return Err(Error::sizing(format!(
                    "frame {h}x{w} is not divisible by token kernel {t}"
                )));
            }
        }
        if h < k || w < k {
            return Err(Error::sizing(format!(
                "frame {h}x{w} smaller than token kernel {k}"
            )));
        }
        Ok(())
    }
}

/// Backward flow for frame `cur`, pointing into frame `prev`. Indices refer
/// to the original sequence order.
pub trait FlowProvider: Sync {
    fn flow(&self, frames: &[FeatureMap], cur: usize, prev: usize) -> Result<Flow>;
}

/// SAD block matching on the frames themselves.
#[derive(Debug, Clone, Copy)]
pub struct BlockMatcher {
    pub patch: usize,
    pub radius: usize,
}

impl FlowProvider for BlockMatcher {
    fn flow(&self, frames: &[FeatureMap], cur: usize, prev: usize) -> Result<Flow> {
        block_match_flow(&frames[cur], &frames[prev], self.patch, self.radius)
    }
}

/// Forces zero motion everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFlow;

impl FlowProvider for ZeroFlow {
    fn flow(&self, frames: &[FeatureMap], cur: usize, _prev: usize) -> Result<Flow> {
        Ok(Flow::zeros(frames[cur].height(), frames[cur].width()))
    }
}

/// Precomputed flows, e.g. read from `.flo` files. `forward[i]` is the flow
/// of frame `i+1` into frame `i`; `backward[i]` the flow of frame `i` into
/// frame `i+1`.
#[derive(Debug, Clone, Default)]
pub struct FlowTable {
    pub forward: Vec<Flow>,
    pub backward: Vec<Flow>,
}

impl FlowProvider for FlowTable {
    fn flow(&self, _frames: &[FeatureMap], cur: usize, prev: usize) -> Result<Flow> {
        let found = if cur == prev + 1 {
            self.forward.get(prev)
        } else if prev == cur + 1 {
            self.backward.get(cur)
        } else {
            None
        };
        found
            .cloned()
            .ok_or_else(|| Error::Precondition(format!("no flow from frame {cur} to frame {prev}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Embedding {
    /// Query/key embedding.
    Phi,
    /// Value embedding.
    Varphi,
}

impl Embedding {
    fn prefix(self) -> &'static str {
        match self {
            Embedding::Phi => "phi",
            Embedding::Varphi => "varphi",
        }
    }
}

fn conv<'a>(w: &'a WeightSet, name: &str) -> Result<ConvParams<'a>> {
    Ok(ConvParams {
        weight: w.get(&format!("{name}.weight"))?,
        bias: w.get(&format!("{name}.bias"))?,
    })
}

fn residual_stack(
    mut x: FeatureMap,
    w: &WeightSet,
    prefix: &str,
    blocks: usize,
) -> Result<FeatureMap> {
    for b in 0..blocks {
        let c1 = conv(w, &format!("{prefix}.block{b}.conv1"))?;
        let c2 = conv(w, &format!("{prefix}.block{b}.conv2"))?;
        x = residual_block(&x, &c1, &c2)?;
    }
    Ok(x)
}

/// 3x3 input conv followed by the residual blocks of the chosen embedding.
pub fn embed_features(
    frame: &FeatureMap,
    w: &WeightSet,
    cfg: &PipelineConfig,
    which: Embedding,
) -> Result<FeatureMap> {
    if frame.channels() != 3 {
        return Err(Error::sizing(format!(
            "frames need 3 channels, got {}",
            frame.channels()
        )));
    }
    let p = which.prefix();
    let x = conv(w, &format!("{p}.conv_in"))?.apply(frame)?;
    residual_stack(x, w, p, cfg.extract_blocks)
}

/// Fuse per-direction attention features and decode them into a residual
/// image `upscale` times larger.
pub fn reconstruct(
    feature: &FeatureMap,
    w: &WeightSet,
    cfg: &PipelineConfig,
) -> Result<FeatureMap> {
    let x = conv(w, "recon.fuse")?.apply(feature)?;
    let x = residual_stack(x, w, "recon", cfg.recon_blocks)?;
    let up = conv(w, "recon.conv_up")?.apply(&x)?;
    pixel_shuffle(&up, cfg.upscale)
}

/// What one pool chose for every query cell of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolTrace {
    pub kernel: usize,
    pub grid: (usize, usize),
    /// Frames (original indices) that formed the pool, oldest first. When no
    /// past frame is available the pool is the current frame alone.
    pub pool: Vec<usize>,
    /// Per cell, row-major: the selected frame, its confidence and the token
    /// center the trajectory gave in that frame.
    pub selected: Vec<usize>,
    pub soft_conf: Vec<f32>,
    pub centers: Vec<Coord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub direction: Direction,
    pub frame: usize,
    pub fine: PoolTrace,
    pub coarse: PoolTrace,
}

/// Runs sequences through one configuration and weight set. Keeps the
/// attention trace and the peak location-map count of the last run.
pub struct Pipeline<'w> {
    cfg: PipelineConfig,
    weights: &'w WeightSet,
    trace: Vec<FrameTrace>,
    peak_maps: usize,
}

/// Per-frame state kept by one directional pass.
struct Memory {
    /// Direction-local time of the frame.
    time: usize,
    phi: FeatureMap,
    varphi: FeatureMap,
    /// Coarse keys: cross-scale tokens folded back to a feature map.
    coarse_key: FeatureMap,
    /// Value stored for the coarse pool, present at the sampling interval.
    coarse_value: Option<FeatureMap>,
}

struct PoolResult {
    features: FeatureMap,
    trace: PoolTrace,
}

impl<'w> Pipeline<'w> {
    pub fn new(cfg: PipelineConfig, weights: &'w WeightSet) -> Result<Self> {
        cfg.validate()?;
        weights.validate(&cfg)?;
        Ok(Self {
            cfg,
            weights,
            trace: Vec::new(),
            peak_maps: 0,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn trace(&self) -> &[FrameTrace] {
        &self.trace
    }

    /// Largest number of location maps held at once during the last run.
    pub fn peak_maps(&self) -> usize {
        self.peak_maps
    }

    /// Super-resolve `frames` (each `3 x H x W` in `[0, 1]`), returning one
    /// `3 x uH x uW` frame per input.
    pub fn run(
        &mut self,
        frames: &[FeatureMap],
        flows: &dyn FlowProvider,
    ) -> Result<Vec<FeatureMap>> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Precondition("need at least one frame".into()))?;
        for f in frames {
            first.ensure_same_shape(f)?;
        }
        if first.channels() != 3 {
            return Err(Error::sizing(format!(
                "frames need 3 channels, got {}",
                first.channels()
            )));
        }
        self.cfg.check_frame_size(first.height(), first.width())?;
        self.trace.clear();
        self.peak_maps = 0;

        let n = frames.len();
        let forward: Vec<usize> = (0..n).collect();
        let mut per_dir = vec![self.pass(frames, &forward, Direction::Forward, flows)?];
        if self.cfg.bidirectional {
            let backward: Vec<usize> = (0..n).rev().collect();
            let mut b = self.pass(frames, &backward, Direction::Backward, flows)?;
            b.reverse();
            per_dir.push(b);
        }

        (0..n)
            .map(|t| {
                let parts: Vec<&FeatureMap> = per_dir.iter().map(|d| &d[t]).collect();
                let fused = FeatureMap::concat_channels(&parts)?;
                let residual = reconstruct(&fused, self.weights, &self.cfg)?;
                let base = bicubic_resize(&frames[t], self.cfg.upscale, ResizeDirection::Up)?;
                layers::add(&base, &residual)
            })
            .collect()
    }

    /// One temporal pass over `frames` in the order given by `order`;
    /// returns the attention feature of each step, in pass order.
    fn pass(
        &mut self,
        frames: &[FeatureMap],
        order: &[usize],
        direction: Direction,
        flows: &dyn FlowProvider,
    ) -> Result<Vec<FeatureMap>> {
        let cfg = &self.cfg;
        let w = self.weights;
        let (h, wd) = (frames[0].height(), frames[0].width());
        let mut stack = LocationMapStack::with_ring_limit(h, wd, cfg.map_ring_limit);
        let mut memory: Vec<Memory> = Vec::new();
        let mut outputs = Vec::with_capacity(order.len());
        let kc = cfg.token_kernel_coarse;
        let kf = cfg.token_kernel_fine;

        for (t, &idx) in order.iter().enumerate() {
            if t > 0 {
                let flow = flows.flow(frames, idx, order[t - 1])?;
                stack.update(&pool_flow(&flow, 1)?)?;
            }
            self.peak_maps = self.peak_maps.max(stack.len());

            let phi = embed_features(&frames[idx], w, cfg, Embedding::Phi)?;
            let varphi = embed_features(&frames[idx], w, cfg, Embedding::Varphi)?;
            let tokens = cross_scale_tokenize(&phi, &cfg.cs_kernels, kc)?;
            let coarse_key = fold(&tokens, h, wd, kc, kc, 0)?;

            let visible = |m: &&Memory| stack.map_at_time(m.time).is_some();
            let fine_entries: Vec<PoolEntry<'_>> = memory
                .iter()
                .filter(|m| m.time + cfg.fine_window >= t)
                .filter(visible)
                .map(|m| PoolEntry {
                    time: m.time,
                    key: &m.phi,
                    value: &m.varphi,
                })
                .collect();
            let coarse_entries: Vec<PoolEntry<'_>> = memory
                .iter()
                .filter(visible)
                .filter_map(|m| {
                    m.coarse_value.as_ref().map(|v| PoolEntry {
                        time: m.time,
                        key: &m.coarse_key,
                        value: v,
                    })
                })
                .collect();

            let to_frame = |time: usize| order[time];
            let fine = attend_pool(&stack, &fine_entries, t, &phi, &varphi, kf, &to_frame)?;
            let coarse = attend_pool(
                &stack,
                &coarse_entries,
                t,
                &coarse_key,
                &varphi,
                kc,
                &to_frame,
            )?;

            let mixed = FeatureMap::concat_channels(&[&fine.features, &coarse.features])?;
            let f_atten = conv(w, "attn.mix")?.apply(&mixed)?;

            // The first frame has no attended feature to offer the coarse
            // pool yet, so it contributes its raw value embedding.
            let coarse_value = (t % cfg.coarse_interval == 0).then(|| {
                if t == 0 {
                    varphi.clone()
                } else {
                    f_atten.clone()
                }
            });
            memory.push(Memory {
                time: t,
                phi,
                varphi,
                coarse_key,
                coarse_value,
            });
            // Drop what no later frame can reach.
            memory.retain(|m| {
                stack.map_at_time(m.time).is_some()
                    && (m.coarse_value.is_some() || m.time + cfg.fine_window > t)
            });

            self.trace.push(FrameTrace {
                direction,
                frame: idx,
                fine: fine.trace,
                coarse: coarse.trace,
            });
            outputs.push(f_atten);
        }
        Ok(outputs)
    }
}

/// Attend every query cell of the current frame over `entries`. With no
/// entries the current frame attends to itself.
fn attend_pool(
    stack: &LocationMapStack,
    entries: &[PoolEntry<'_>],
    now: usize,
    query_map: &FeatureMap,
    own_value: &FeatureMap,
    kernel: usize,
    to_frame: &(dyn Fn(usize) -> usize + Sync),
) -> Result<PoolResult> {
    let own = [PoolEntry {
        time: now,
        key: query_map,
        value: own_value,
    }];
    let entries = if entries.is_empty() {
        &own[..]
    } else {
        entries
    };
    let (h, w) = (query_map.height(), query_map.width());
    let (gh, gw) = (h / kernel, w / kernel);

    let per_cell: Vec<(Vec<f32>, usize, f32, Coord)> = (0..gh * gw)
        .into_par_iter()
        .map(|k| {
            let cell = (k / gw, k % gw);
            let center = token_center(stack, now, kernel, cell)?;
            let q = patch_at(query_map, center, kernel, kernel);
            let (keys, values) = gather_along(stack, entries, kernel, cell)?;
            let sel = select(&q, &keys)?;
            let token = attend(&q, sel, &values)?;
            let picked = entries[sel.hard_index];
            let at = token_center(stack, picked.time, kernel, cell)?;
            Ok((token, to_frame(picked.time), sel.soft_conf, at))
        })
        .collect::<Result<_>>()?;

    let mut tokens = Vec::with_capacity(per_cell.len());
    let mut selected = Vec::with_capacity(per_cell.len());
    let mut soft_conf = Vec::with_capacity(per_cell.len());
    let mut centers = Vec::with_capacity(per_cell.len());
    for (tok, s, c, at) in per_cell {
        tokens.push(tok);
        selected.push(s);
        soft_conf.push(c);
        centers.push(at);
    }
    let grid = TokenGrid::from_tokens(gh, gw, kernel, kernel, &tokens)?;
    let features = fold(&grid, h, w, kernel, kernel, 0)?;
    Ok(PoolResult {
        features,
        trace: PoolTrace {
            kernel,
            grid: (gh, gw),
            pool: entries.iter().map(|e| to_frame(e.time)).collect(),
            selected,
            soft_conf,
            centers,
        },
    })
}

/// Run with block-matching flow as configured.
pub fn run_sequence(
    frames: &[FeatureMap],
    w: &WeightSet,
    cfg: &PipelineConfig,
) -> Result<Vec<FeatureMap>> {
    let flows = BlockMatcher {
        patch: cfg.match_patch,
        radius: cfg.match_radius,
    };
    Pipeline::new(cfg.clone(), w)?.run(frames, &flows)
}

/// SHA-256 over each frame's shape and little-endian samples, hex encoded.
pub fn output_digest(frames: &[FeatureMap]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((frames.len() as u32).to_le_bytes());
    for f in frames {
        let (c, h, w) = f.shape();
        for d in [c, h, w] {
            hasher.update((d as u32).to_le_bytes());
        }
        for v in f.data() {
            hasher.update(v.to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}
