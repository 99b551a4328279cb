//! Binary network snapshots.
//!
//! Layout, little-endian throughout: the magic `ISICVNET`, a `u32` version,
//! a `u32` task index, a `u64` seed, `f64` tau and theta, a `u32` timestep
//! count, an `f64` encoding gain and a `u32` array count. Each array is a
//! `u16` name length, the UTF-8 name, a `u8` rank, `u32` dimensions and the
//! `f64` values in row-major order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::snn::{Head, LifConfig, Network};

use super::report::write_atomic;

const MAGIC: &[u8; 8] = b"ISICVNET";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Index of the last task trained into `network`.
    pub task: usize,
    pub seed: u64,
    pub lif: LifConfig,
    pub gain: f64,
    pub network: Network,
}

struct Array {
    name: String,
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn put_array(out: &mut Vec<u8>, name: &str, dims: &[usize], data: impl Iterator<Item = f64>) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.network;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.task as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.lif.tau.to_le_bytes());
        out.extend_from_slice(&self.lif.theta.to_le_bytes());
        out.extend_from_slice(&(self.lif.timesteps as u32).to_le_bytes());
        out.extend_from_slice(&self.gain.to_le_bytes());
        out.extend_from_slice(&((2 + 2 * net.heads.len()) as u32).to_le_bytes());
        put_array(&mut out, "trunk.w", net.w1.shape(), net.w1.iter().copied());
        put_array(&mut out, "trunk.b", net.b1.shape(), net.b1.iter().copied());
        for (k, h) in net.heads.iter().enumerate() {
            put_array(&mut out, &format!("head.{k}.w"), h.w.shape(), h.w.iter().copied());
            put_array(&mut out, &format!("head.{k}.b"), h.b.shape(), h.b.iter().copied());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let task = r.u32()? as usize;
        let seed = r.u64()?;
        let tau = r.f64()?;
        let theta = r.f64()?;
        let timesteps = r.u32()? as usize;
        let gain = r.f64()?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "array name is not UTF-8")?;
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
            let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("array too large")?;
            if n.saturating_mul(8) > r.remaining() {
                return Err(format!("array '{name}' is truncated"));
            }
            let data = (0..n).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
            arrays.push(Array { name, dims, data });
        }
        if r.remaining() != 0 {
            return Err(format!("{} trailing bytes", r.remaining()));
        }
        let mut take = |name: &str, rank: usize| -> std::result::Result<Array, String> {
            let i = arrays
                .iter()
                .position(|a| a.name == name)
                .ok_or_else(|| format!("missing array '{name}'"))?;
            let a = arrays.swap_remove(i);
            if a.dims.len() != rank {
                return Err(format!("array '{name}' has rank {}, expected {rank}", a.dims.len()));
            }
            Ok(a)
        };
        let mat = |a: Array| Array2::from_shape_vec((a.dims[0], a.dims[1]), a.data).map_err(|e| e.to_string());
        let w1 = mat(take("trunk.w", 2)?)?;
        let b1 = Array1::from(take("trunk.b", 1)?.data);
        let heads_n = (count.saturating_sub(2)) / 2;
        let mut heads = Vec::with_capacity(heads_n);
        for k in 0..heads_n {
            let w = mat(take(&format!("head.{k}.w"), 2)?)?;
            let b = Array1::from(take(&format!("head.{k}.b"), 1)?.data);
            heads.push(Head { w, b });
        }
        if let Some(extra) = arrays.first() {
            return Err(format!("unexpected array '{}'", extra.name));
        }
        let lif = LifConfig { tau, theta, timesteps };
        lif.validate().map_err(|e| e.to_string())?;
        let network = Network::from_parts(w1, b1, heads).map_err(|e| e.to_string())?;
        if task >= network.heads.len() {
            return Err(format!("task {task} has no head"));
        }
        Ok(Checkpoint {
            task,
            seed,
            lif,
            gain,
            network,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if n > self.remaining() {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        self.array().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        self.array().map(f64::from_le_bytes)
    }
}
