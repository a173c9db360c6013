//! Named weight tensors and the `TTWB` weight file.
//!
//! Layout, all little-endian: magic `TTWB`, `u32` tensor count, then per
//! tensor a `u32` name length, the UTF-8 name, `u32` rank, `u32` dims, and the
//! `f32` data.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::PipelineConfig;

const MAGIC: &[u8; 4] = b"TTWB";

/// Residual branches start small so deep stacks stay well-conditioned.
const RESIDUAL_INIT_SCALE: f32 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::sizing(format!(
                "tensor dims {:?} hold {} values, got {}",
                dims,
                n,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor"));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![0.0; n],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// Which network a tensor belongs to and how it is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Weight { fan_in: usize, residual: bool },
    Bias,
}

/// Expected `(name, dims, role)` for every tensor the config implies, in
/// canonical file order.
fn layout(cfg: &PipelineConfig) -> Vec<(String, Vec<usize>, Role)> {
    let c = cfg.channels;
    let mut out = Vec::new();
    let conv =
        |out: &mut Vec<_>, name: String, cout: usize, cin: usize, k: usize, residual: bool| {
            out.push((
                format!("{name}.weight"),
                vec![cout, cin, k, k],
                Role::Weight {
                    fan_in: cin * k * k,
                    residual,
                },
            ));
            out.push((format!("{name}.bias"), vec![cout], Role::Bias));
        };
    for net in ["phi", "varphi"] {
        conv(&mut out, format!("{net}.conv_in"), c, 3, 3, false);
        for b in 0..cfg.extract_blocks {
            conv(&mut out, format!("{net}.block{b}.conv1"), c, c, 3, true);
            conv(&mut out, format!("{net}.block{b}.conv2"), c, c, 3, true);
        }
    }
    // fine and coarse pools each emit [query ‖ value] = 2C channels
    conv(&mut out, "attn.mix".into(), c, 4 * c, 1, false);
    conv(
        &mut out,
        "recon.fuse".into(),
        c,
        cfg.directions() * c,
        1,
        false,
    );
    for b in 0..cfg.recon_blocks {
        conv(&mut out, format!("recon.block{b}.conv1"), c, c, 3, true);
        conv(&mut out, format!("recon.block{b}.conv2"), c, c, 3, true);
    }
    let up = 3 * cfg.upscale * cfg.upscale;
    conv(&mut out, "recon.conv_up".into(), up, c, 3, true);
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightSet {
    tensors: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl WeightSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace a tensor; new names keep insertion order.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&k) => self.tensors[k].1 = tensor,
            None => {
                self.index.insert(name.clone(), self.tensors.len());
                self.tensors.push((name, tensor));
            }
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&k| &self.tensors[k].1)
            .ok_or_else(|| Error::weight(name, "missing"))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&k| &mut self.tensors[k].1)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// All-zero weights for `cfg`.
    pub fn zeros(cfg: &PipelineConfig) -> Self {
        let mut ws = Self::new();
        for (name, dims, _) in layout(cfg) {
            ws.insert(name, Tensor::zeros(dims));
        }
        ws
    }

    /// Deterministic He-normal initialization (`std = sqrt(2 / fan_in)`),
    /// scaled down on residual branches; biases start at zero.
    pub fn seeded(cfg: &PipelineConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = Self::new();
        for (name, dims, role) in layout(cfg) {
            let tensor = match role {
                Role::Bias => Tensor::zeros(dims),
                Role::Weight { fan_in, residual } => {
                    let std = (2.0 / fan_in as f32).sqrt();
                    let scale = if residual { RESIDUAL_INIT_SCALE } else { 1.0 };
                    let normal = Normal::new(0.0f32, std).expect("positive std");
                    let n: usize = dims.iter().product();
                    let data = (0..n).map(|_| normal.sample(&mut rng) * scale).collect();
                    Tensor { dims, data }
                }
            };
            ws.insert(name, tensor);
        }
        ws
    }

    /// Check names and shapes against what `cfg` implies.
    pub fn validate(&self, cfg: &PipelineConfig) -> Result<()> {
        let expected = layout(cfg);
        let wanted: HashMap<&str, &[usize]> = expected
            .iter()
            .map(|(n, d, _)| (n.as_str(), d.as_slice()))
            .collect();
        for (name, t) in &self.tensors {
            match wanted.get(name.as_str()) {
                None => return Err(Error::weight(name, "unknown tensor name")),
                Some(&dims) if dims != t.dims() => {
                    return Err(Error::weight(
                        name,
                        format!("shape {:?}, expected {:?}", t.dims(), dims),
                    ))
                }
                Some(_) => {}
            }
        }
        if let Some((missing, _, _)) = expected
            .iter()
            .find(|(n, _, _)| !self.index.contains_key(n))
        {
            return Err(Error::weight(missing, "missing"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r
            .take(4)
            .map_err(|_| Error::weight("<header>", "truncated header"))?;
        if magic != MAGIC {
            return Err(Error::weight("<header>", "bad magic"));
        }
        let count = r
            .u32()
            .map_err(|_| Error::weight("<header>", "truncated header"))?;
        let mut ws = Self::new();
        for k in 0..count as usize {
            let truncated = || Error::weight(format!("#{k}"), format!("truncated at tensor {k}"));
            let name_len = r.u32().map_err(|_| truncated())? as usize;
            let name = std::str::from_utf8(r.take(name_len).map_err(|_| truncated())?)
                .map_err(|_| Error::weight(format!("#{k}"), "name is not UTF-8"))?
                .to_owned();
            let named_truncated = || Error::weight(&name, format!("truncated at tensor {k}"));
            let ndim = r.u32().map_err(|_| named_truncated())? as usize;
            let mut dims = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                dims.push(r.u32().map_err(|_| named_truncated())? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::weight(&name, "dimensions overflow"))?;
            let raw = r
                .take(
                    n.checked_mul(4)
                        .ok_or_else(|| Error::weight(&name, "dimensions overflow"))?,
                )
                .map_err(|_| named_truncated())?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::weight(&name, "non-finite value"));
            }
            if ws.index.contains_key(&name) {
                return Err(Error::weight(&name, "duplicate tensor name"));
            }
            ws.insert(name, Tensor { dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::weight(
                "<trailer>",
                "trailing bytes after last tensor",
            ));
        }
        Ok(ws)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], ()> {
        let end = self.pos.checked_add(n).ok_or(())?;
        let s = self.bytes.get(self.pos..end).ok_or(())?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, ()> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn save_weights(w: &WeightSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, w.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Read a weight file without checking it against a config.
pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    WeightSet::from_bytes(&bytes)
}

/// Read a weight file and validate it against `cfg`.
pub fn load_weights(path: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<WeightSet> {
    let ws = read_weights(path)?;
    ws.validate(cfg)?;
    Ok(ws)
}
