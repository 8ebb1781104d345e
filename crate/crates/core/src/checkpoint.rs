//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TCNN" | version: u32 | record*
//! record = name_len: u32 | name: utf-8 | rank: u32 | dims: u32 * rank | f64 * prod(dims)
//! ```
//!
//! Parameter values are stored under their own name, momentum buffers under
//! `<name>.velocity`, and the file ends with the rank-0 record
//! `schedule.step`.

use std::fs;
use std::path::Path;

use crate::error::{Result, TcnnError};
use crate::param::{Module, Parameter};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"TCNN";
pub const FORMAT_VERSION: u32 = 1;
pub const STEP_RECORD: &str = "schedule.step";
const VELOCITY_SUFFIX: &str = ".velocity";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    records: Vec<(String, Tensor)>,
    step: u64,
}

impl Checkpoint {
    pub fn from_params<'a>(params: impl IntoIterator<Item = &'a Parameter>, step: u64) -> Self {
        let mut records = Vec::new();
        for p in params {
            records.push((p.name().to_owned(), p.value().clone()));
            let velocity = Tensor::new(p.value().shape().to_vec(), p.velocity().to_vec())
                .expect("velocity mirrors value shape");
            records.push((format!("{}{VELOCITY_SUFFIX}", p.name()), velocity));
        }
        Checkpoint { records, step }
    }

    pub fn from_module(module: &impl Module, step: u64) -> Self {
        Self::from_params(module.parameters(), step)
    }

    /// Merges several checkpoints' records; the step is taken from `self`.
    pub fn merged(mut self, other: Checkpoint) -> Self {
        self.records.extend(other.records);
        self
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.records
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|(n, _)| n.as_str())
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.names().any(|n| n.starts_with(prefix))
    }

    /// Copies values and velocities into `params`. Fails without touching
    /// anything if a parameter is missing or has a different shape.
    pub fn load_into<'a>(&self, params: impl IntoIterator<Item = &'a mut Parameter>) -> Result<()> {
        let mut params: Vec<&mut Parameter> = params.into_iter().collect();
        let mut staged = Vec::with_capacity(params.len());
        for p in params.iter() {
            let value = self.get(p.name()).ok_or_else(|| {
                TcnnError::Validation(format!("checkpoint lacks parameter {}", p.name()))
            })?;
            if value.shape() != p.value().shape() {
                return Err(TcnnError::Validation(format!(
                    "{}: checkpoint shape {:?}, model shape {:?}",
                    p.name(),
                    value.shape(),
                    p.value().shape()
                )));
            }
            let velocity = self.get(&format!("{}{VELOCITY_SUFFIX}", p.name()));
            if let Some(v) = velocity {
                if v.shape() != value.shape() {
                    return Err(TcnnError::Validation(format!(
                        "{}: velocity shape {:?} does not match",
                        p.name(),
                        v.shape()
                    )));
                }
            }
            staged.push((value.clone(), velocity.map(|v| v.data().to_vec())));
        }
        for (p, (value, velocity)) in params.iter_mut().zip(staged) {
            p.set_value(value)?;
            p.set_velocity(velocity.unwrap_or_else(|| vec![0.0; p.value().numel()]))?;
        }
        Ok(())
    }

    pub fn load_module(&self, module: &mut impl Module) -> Result<()> {
        self.load_into(module.parameters_mut())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for (name, t) in &self.records {
            write_record(&mut out, name, t.shape(), t.data());
        }
        write_record(&mut out, STEP_RECORD, &[], &[self.step as f64]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(TcnnError::parse(0, "bad magic, expected \"TCNN\""));
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(TcnnError::parse(4, format!("unsupported version {version}")));
        }
        let mut records = Vec::new();
        let mut step = None;
        while r.pos < bytes.len() {
            if step.is_some() {
                return Err(TcnnError::parse(
                    r.pos,
                    format!("data after trailing {STEP_RECORD} record"),
                ));
            }
            let start = r.pos;
            let name_len = r.u32("name length")? as usize;
            let name_bytes = r.take(name_len, "record name")?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| TcnnError::parse(start + 4, "record name is not UTF-8"))?
                .to_owned();
            let rank = r.u32("rank")? as usize;
            let mut dims = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                dims.push(r.u32("dimension")? as usize);
            }
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&c| c.checked_mul(8).is_some())
                .ok_or_else(|| TcnnError::parse(start, "record size overflows"))?;
            let payload_at = r.pos;
            let payload = r.take(count * 8, "payload")?;
            let data: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if name == STEP_RECORD {
                if !dims.is_empty() {
                    return Err(TcnnError::parse(start, "step record must be rank 0"));
                }
                let v = data[0];
                if !(v >= 0.0 && v.fract() == 0.0) {
                    return Err(TcnnError::parse(payload_at, "step is not a whole number"));
                }
                step = Some(v as u64);
                continue;
            }
            let tensor = Tensor::new(dims, data)
                .map_err(|e| TcnnError::parse(start, format!("record {name}: {e}")))?;
            records.push((name, tensor));
        }
        let step = step.ok_or_else(|| {
            TcnnError::parse(bytes.len(), format!("missing trailing {STEP_RECORD} record"))
        })?;
        Ok(Checkpoint { records, step })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn write_record(out: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TcnnError::parse(self.pos, format!("truncated {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}
