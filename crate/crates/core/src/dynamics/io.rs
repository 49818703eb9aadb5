//! Trajectory files.
//!
//! Binary layout, all integers and floats little-endian 64-bit:
//!
//! ```text
//! magic   b"GLTR"            4 bytes
//! version u32                4 bytes
//! hlen    u64                length of the JSON header
//! header  JSON               {domain, dt, stride, steps, dim, records}
//! records, each:
//!   time      f64
//!   n         u64            particle count
//!   state     n·d f64
//!   drift     n·d f64        Σ b dt since the previous record
//!   noise     n·d f64        Σ √(2dt) ξ since the previous record
//!   counters  3 × u64        reflections, capped, redraws
//! ```
//!
//! The text export writes one line per record: time, counters, then the
//! state coordinates.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{StepCounters, TrajectoryRecord};
use crate::configspace::BoxDomain;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GLTR";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    domain: BoxDomain,
    dt: f64,
    stride: usize,
    steps: usize,
    dim: usize,
    records: usize,
}

fn io_err(e: std::io::Error) -> Error {
    Error::Parse(e.to_string())
}

fn put_f64s<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| get_u64(r).map(f64::from_bits)).collect()
}

pub fn write_binary<W: Write>(rec: &TrajectoryRecord, w: &mut W) -> Result<()> {
    let header = Header {
        domain: rec.domain.clone(),
        dt: rec.dt,
        stride: rec.stride,
        steps: rec.steps,
        dim: rec.domain.dim(),
        records: rec.times.len(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Parse(e.to_string()))?;
    let mut body = || -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for i in 0..rec.times.len() {
            w.write_all(&rec.times[i].to_le_bytes())?;
            w.write_all(&((rec.states[i].len() / header.dim) as u64).to_le_bytes())?;
            put_f64s(w, &rec.states[i])?;
            put_f64s(w, &rec.drift_increments[i])?;
            put_f64s(w, &rec.noise_increments[i])?;
            let c = rec.counters[i];
            for v in [c.reflections, c.capped, c.redraws] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    };
    body().map_err(io_err)
}

pub fn read_binary<R: Read>(r: &mut R) -> Result<TrajectoryRecord> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a trajectory file".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v).map_err(io_err)?;
    if u32::from_le_bytes(v) != VERSION {
        return Err(Error::Parse(format!("unsupported trajectory version {}", u32::from_le_bytes(v))));
    }
    let hlen = get_u64(r)? as usize;
    let mut json = vec![0u8; hlen];
    r.read_exact(&mut json).map_err(io_err)?;
    let h: Header = serde_json::from_slice(&json).map_err(|e| Error::Parse(e.to_string()))?;
    let mut rec = TrajectoryRecord {
        domain: h.domain,
        dt: h.dt,
        stride: h.stride,
        times: Vec::with_capacity(h.records),
        states: Vec::with_capacity(h.records),
        drift_increments: Vec::with_capacity(h.records),
        noise_increments: Vec::with_capacity(h.records),
        counters: Vec::with_capacity(h.records),
        steps: h.steps,
    };
    for _ in 0..h.records {
        rec.times.push(f64::from_bits(get_u64(r)?));
        let len = get_u64(r)? as usize * h.dim;
        rec.states.push(get_f64s(r, len)?);
        rec.drift_increments.push(get_f64s(r, len)?);
        rec.noise_increments.push(get_f64s(r, len)?);
        rec.counters.push(StepCounters { reflections: get_u64(r)?, capped: get_u64(r)?, redraws: get_u64(r)? });
    }
    Ok(rec)
}

pub fn write_text<W: Write>(rec: &TrajectoryRecord, w: &mut W) -> Result<()> {
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "# dim {} dt {} stride {} steps {}", rec.domain.dim(), rec.dt, rec.stride, rec.steps)?;
        writeln!(w, "# time reflections capped redraws coords...")?;
        for i in 0..rec.times.len() {
            let c = rec.counters[i];
            write!(w, "{} {} {} {}", rec.times[i], c.reflections, c.capped, c.redraws)?;
            for x in &rec.states[i] {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    };
    body().map_err(io_err)
}
