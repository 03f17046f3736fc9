//! `NPSM` checkpoint files.
//!
//! ```text
//! "NPSM" | version u32
//! config: frame_width frame_height grid_width grid_height scale r
//!         c1 c2 c3 c4 se_reduction input_attention bottleneck_attention   (u32 each)
//! tensor_count u32
//! per tensor: name_len u32 | name utf-8 | ndim u32 | dims u32… | f32 payload
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::{ParamTensor, SmootherConfig, SmootherParams};
use crate::error::{Error, Result};
use crate::motion::GridGeometry;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"NPSM";
pub const CHECKPOINT_VERSION: u32 = 1;

fn config_words(c: &SmootherConfig) -> [u32; 13] {
    let g = &c.geometry;
    [
        g.frame_width as u32,
        g.frame_height as u32,
        g.grid_width as u32,
        g.grid_height as u32,
        g.scale as u32,
        c.r as u32,
        c.stage_channels[0] as u32,
        c.stage_channels[1] as u32,
        c.stage_channels[2] as u32,
        c.stage_channels[3] as u32,
        c.se_reduction as u32,
        c.input_attention as u32,
        c.bottleneck_attention as u32,
    ]
}

pub fn encode_checkpoint<T: Scalar>(params: &SmootherParams<T>) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    let word = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
    word(&mut out, CHECKPOINT_VERSION);
    for v in config_words(params.config()) {
        word(&mut out, v);
    }
    word(&mut out, params.tensors().len() as u32);
    for t in params.tensors() {
        word(&mut out, t.name.len() as u32);
        out.extend_from_slice(t.name.as_bytes());
        word(&mut out, t.shape.len() as u32);
        for &d in &t.shape {
            word(&mut out, d as u32);
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint<T: Scalar>(params: &SmootherParams<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.context, format!("truncated checkpoint while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8], context: &str) -> Result<SmootherParams<f32>> {
    let mut cur = Cursor { bytes, pos: 0, context };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::format(context, "bad magic, expected \"NPSM\""));
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "NPSM checkpoint",
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut w = [0u32; 13];
    for v in &mut w {
        *v = cur.u32("config block")?;
    }
    let geometry = GridGeometry::with_frame(w[0] as usize, w[1] as usize, w[2] as usize, w[3] as usize, w[4] as usize)
        .map_err(|e| Error::format(context, e.to_string()))?;
    let flag = |v: u32, name: &str| match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::format(context, format!("bad {name} flag {v}"))),
    };
    let config = SmootherConfig {
        geometry,
        r: w[5] as usize,
        stage_channels: [w[6] as usize, w[7] as usize, w[8] as usize, w[9] as usize],
        se_reduction: w[10] as usize,
        input_attention: flag(w[11], "input_attention")?,
        bottleneck_attention: flag(w[12], "bottleneck_attention")?,
    };
    config.validate().map_err(|e| Error::format(context, e.to_string()))?;
    let count = cur.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "tensor name")?)
            .map_err(|_| Error::format(context, format!("tensor {i}: name is not utf-8")))?
            .to_string();
        let ndim = cur.u32("rank")? as usize;
        if ndim > 8 {
            return Err(Error::format(context, format!("tensor {name}: implausible rank {ndim}")));
        }
        let shape = (0..ndim)
            .map(|_| cur.u32("shape").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = cur
            .take(n.checked_mul(4).ok_or_else(|| Error::format(context, "shape overflow"))?, &name)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(ParamTensor { name, shape, data });
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(context, "trailing bytes after last tensor"));
    }
    SmootherParams::from_tensors(&config, tensors).map_err(|e| Error::format(context, e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<SmootherParams<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, &path.display().to_string())
}

/// Loads a checkpoint and rejects it unless its config equals `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &SmootherConfig) -> Result<SmootherParams<f32>> {
    let params = load_checkpoint(path)?;
    check_config(params.config(), expected)?;
    Ok(params)
}

pub(crate) fn check_config(found: &SmootherConfig, expected: &SmootherConfig) -> Result<()> {
    if found == expected {
        return Ok(());
    }
    let names = [
        "frame_width",
        "frame_height",
        "grid_width",
        "grid_height",
        "scale",
        "r",
        "stage_channels[0]",
        "stage_channels[1]",
        "stage_channels[2]",
        "stage_channels[3]",
        "se_reduction",
        "input_attention",
        "bottleneck_attention",
    ];
    let diffs: Vec<String> = names
        .iter()
        .zip(config_words(found).iter().zip(config_words(expected)))
        .filter(|(_, (a, b))| a != &b)
        .map(|(n, (a, b))| format!("{n}: checkpoint {a}, expected {b}"))
        .collect();
    Err(Error::Config(format!("checkpoint config mismatch ({})", diffs.join("; "))))
}
