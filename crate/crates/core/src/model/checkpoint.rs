//! Little-endian binary checkpoints.
//!
//! ```text
//! "HRANCKPT" | u32 version=1
//! u32 scale | u32 C | u32 R | u32 B | u32 r | u32 fusion (0=BFF, 1=HFF) | f32 leaky_slope
//! u32 count | count × tensor
//! [optional optimizer section]
//!   u32 count | count × tensor (`<name>.adam.m`, `<name>.adam.v`) | u64 iteration | u64 rng_state
//!
//! tensor := u16 name_len | name (UTF-8) | u8 rank | rank × u32 dims | f32 data
//! ```

use std::path::Path;

use super::network::Hran;
use super::params::ParamStore;
use super::{FusionMode, ModelConfig};
use crate::data::write_atomic;
use crate::tensor::Tensor4;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HRANCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const MOMENT_M: &str = ".adam.m";
const MOMENT_V: &str = ".adam.v";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OptimizerSnapshot {
    pub iteration: u64,
    pub rng_state: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Parameter values; Adam moments are populated when `optimizer` is set.
    pub store: ParamStore<f32>,
    pub optimizer: Option<OptimizerSnapshot>,
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) -> Result<()> {
    let len = u16::try_from(name.len())
        .map_err(|_| Error::Checkpoint(format!("parameter name too long: {name}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more bytes)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f32>)> {
        let len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| Error::Checkpoint(format!("non UTF-8 tensor name at byte {}", self.pos)))?
            .to_string();
        let rank = self.u8()? as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has unsupported rank {rank}"
            )));
        }
        let shape = (0..rank)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = self.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Ok((name, shape, data))
    }
}

fn dims_of(shape: &[usize]) -> [usize; 4] {
    let mut d = [1; 4];
    d[..shape.len()].copy_from_slice(shape);
    d
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let cfg = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [
            cfg.scale,
            cfg.channels,
            cfg.rg_count,
            cfg.hrab_per_rg,
            cfg.ca_reduction,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&cfg.fusion.code().to_le_bytes());
        out.extend_from_slice(&cfg.leaky_slope.to_le_bytes());

        out.extend_from_slice(&(self.store.len() as u32).to_le_bytes());
        for (name, p) in self.store.iter() {
            put_tensor(&mut out, name, p.shape(), p.value().data())?;
        }
        if let Some(opt) = self.optimizer {
            out.extend_from_slice(&(2 * self.store.len() as u32).to_le_bytes());
            for (name, p) in self.store.iter() {
                let (m, v) = p.moments();
                put_tensor(&mut out, &format!("{name}{MOMENT_M}"), p.shape(), m.data())?;
                put_tensor(&mut out, &format!("{name}{MOMENT_V}"), p.shape(), v.data())?;
            }
            out.extend_from_slice(&opt.iteration.to_le_bytes());
            out.extend_from_slice(&opt.rng_state.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 8 || r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut fields = [0usize; 5];
        for f in &mut fields {
            *f = r.u32()? as usize;
        }
        let fusion = FusionMode::from_code(r.u32()?)?;
        let leaky_slope = r.f32()?;
        let config = ModelConfig {
            scale: fields[0],
            channels: fields[1],
            rg_count: fields[2],
            hrab_per_rg: fields[3],
            ca_reduction: fields[4],
            fusion,
            leaky_slope,
            ..ModelConfig::default()
        };
        let model =
            Hran::new(&config).map_err(|e| Error::Checkpoint(format!("stored config invalid: {e}")))?;

        let mut store = ParamStore::new();
        for _ in 0..r.u32()? {
            let (name, shape, data) = r.tensor()?;
            store.insert(name, shape.clone(), Tensor4::from_vec(dims_of(&shape), data)?)?;
        }
        model
            .check_store(&store)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if store.len() != model.param_specs().len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.param_specs().len(),
                store.len()
            )));
        }

        let optimizer = if r.at_end() {
            None
        } else {
            let count = r.u32()?;
            let mut moments = std::collections::HashMap::new();
            for _ in 0..count {
                let (name, shape, data) = r.tensor()?;
                moments.insert(name, Tensor4::from_vec(dims_of(&shape), data)?);
            }
            let names: Vec<String> = store.names().map(str::to_string).collect();
            for name in names {
                let m = moments
                    .remove(&format!("{name}{MOMENT_M}"))
                    .ok_or_else(|| Error::Checkpoint(format!("missing moment `{name}{MOMENT_M}`")))?;
                let v = moments
                    .remove(&format!("{name}{MOMENT_V}"))
                    .ok_or_else(|| Error::Checkpoint(format!("missing moment `{name}{MOMENT_V}`")))?;
                store.param_mut(&name)?.set_moments(m, v)?;
            }
            let iteration = r.u64()?;
            let rng_state = r.u64()?;
            if !r.at_end() {
                return Err(Error::Checkpoint(format!("trailing bytes at {}", r.pos)));
            }
            Some(OptimizerSnapshot { iteration, rng_state })
        };
        Ok(Checkpoint {
            config,
            store,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.encode()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Load and reject any configuration difference from `expected`.
    pub fn load_for(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.ensure_config(expected)?;
        Ok(ck)
    }

    pub fn ensure_config(&self, expected: &ModelConfig) -> Result<()> {
        let a = &self.config;
        let b = expected;
        let mismatch = [
            ("scale", a.scale, b.scale),
            ("channels", a.channels, b.channels),
            ("rg_count", a.rg_count, b.rg_count),
            ("hrab_per_rg", a.hrab_per_rg, b.hrab_per_rg),
            ("ca_reduction", a.ca_reduction, b.ca_reduction),
            ("fusion_mode", a.fusion.code() as usize, b.fusion.code() as usize),
        ]
        .into_iter()
        .find(|(_, x, y)| x != y);
        if let Some((field, stored, wanted)) = mismatch {
            return Err(Error::Checkpoint(format!(
                "config mismatch on {field}: checkpoint has {stored}, requested {wanted}"
            )));
        }
        if a.leaky_slope.to_bits() != b.leaky_slope.to_bits() {
            return Err(Error::Checkpoint(format!(
                "config mismatch on leaky_slope: checkpoint has {}, requested {}",
                a.leaky_slope, b.leaky_slope
            )));
        }
        Ok(())
    }
}
