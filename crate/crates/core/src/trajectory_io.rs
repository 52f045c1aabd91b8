//! Trajectory logs.
//!
//! Binary layout, little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic | `b"SWTR"` |
//! | version | `u16` (= 1) |
//! | lattice hash | `u64`, FNV-1a over extents, boundaries and bonds |
//! | sites | `u32` |
//! | axes | `u8` |
//! | duration | `f64` |
//! | initial occupations | `sites` bytes |
//! | event count | `u64` |
//! | events | `(time f64, bond u32, dir i8)` triples |
//! | final occupations | `sites` bytes |
//! | `n_plus`, `n_minus` | `axes` × `u64` each |
//!
//! The JSON-lines fallback writes a header object, one object per event and a
//! trailer object with the final state and hop counters.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};

use crate::config_space::{Boundary, Lattice};
use crate::error::{Error, Result};
use crate::ssep_sampler::{SwapEvent, TrajectoryRecord};

pub const MAGIC: &[u8; 4] = b"SWTR";
pub const VERSION: u16 = 1;

pub fn lattice_hash(lattice: &Lattice) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for (&e, b) in lattice.extents.iter().zip(&lattice.boundary) {
        eat(e as u64);
        eat(u64::from(*b == Boundary::Periodic));
    }
    for &(i, j) in &lattice.bonds {
        eat(i as u64);
        eat(j as u64);
    }
    h
}

fn io(e: std::io::Error) -> Error {
    Error::InvalidInput(format!("trajectory I/O: {e}"))
}

pub fn write_binary(rec: &TrajectoryRecord, lattice: &Lattice, w: &mut impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + rec.events.len() * 13);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&lattice_hash(lattice).to_le_bytes());
    buf.extend_from_slice(&(rec.initial.len() as u32).to_le_bytes());
    buf.push(rec.n_plus.len() as u8);
    buf.extend_from_slice(&rec.duration.to_le_bytes());
    buf.extend_from_slice(&rec.initial);
    buf.extend_from_slice(&(rec.events.len() as u64).to_le_bytes());
    for e in &rec.events {
        buf.extend_from_slice(&e.time.to_le_bytes());
        buf.extend_from_slice(&e.bond.to_le_bytes());
        buf.push(e.dir as u8);
    }
    buf.extend_from_slice(&rec.final_config);
    for v in rec.n_plus.iter().chain(&rec.n_minus) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(io)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::InvalidInput("truncated trajectory file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn read_binary(r: &mut impl Read, lattice: &Lattice) -> Result<TrajectoryRecord> {
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(io)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::InvalidInput("not a trajectory file (bad magic)".into()));
    }
    let version = u16::from_le_bytes(c.arr()?);
    if version != VERSION {
        return Err(Error::InvalidInput(format!("unsupported trajectory version {version}")));
    }
    if u64::from_le_bytes(c.arr()?) != lattice_hash(lattice) {
        return Err(Error::InvalidInput("trajectory was recorded on a different lattice".into()));
    }
    let sites = u32::from_le_bytes(c.arr()?) as usize;
    let axes = c.take(1)?[0] as usize;
    let duration = f64::from_le_bytes(c.arr()?);
    let initial = c.take(sites)?.to_vec();
    let count = u64::from_le_bytes(c.arr()?) as usize;
    let mut events = Vec::with_capacity(count.min(data.len() / 13));
    for _ in 0..count {
        let time = f64::from_le_bytes(c.arr()?);
        let bond = u32::from_le_bytes(c.arr()?);
        let dir = c.take(1)?[0] as i8;
        events.push(SwapEvent { time, bond, dir });
    }
    let final_config = c.take(sites)?.to_vec();
    let mut counters = Vec::with_capacity(2 * axes);
    for _ in 0..2 * axes {
        counters.push(u64::from_le_bytes(c.arr()?));
    }
    if c.pos != data.len() {
        return Err(Error::InvalidInput("trailing bytes after trajectory".into()));
    }
    let n_minus = counters.split_off(axes);
    Ok(TrajectoryRecord { initial, duration, events, final_config, n_plus: counters, n_minus })
}

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u16,
    lattice_hash: u64,
    duration: f64,
    initial: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    #[serde(rename = "final")]
    final_config: Vec<u8>,
    n_plus: Vec<u64>,
    n_minus: Vec<u64>,
}

pub fn write_jsonl(rec: &TrajectoryRecord, lattice: &Lattice, w: &mut impl Write) -> Result<()> {
    let js = |e: serde_json::Error| Error::InvalidInput(e.to_string());
    let head = Header {
        magic: "SWTR".into(),
        version: VERSION,
        lattice_hash: lattice_hash(lattice),
        duration: rec.duration,
        initial: rec.initial.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&head).map_err(js)?).map_err(io)?;
    for e in &rec.events {
        writeln!(w, "{}", serde_json::to_string(e).map_err(js)?).map_err(io)?;
    }
    let tail = Trailer { final_config: rec.final_config.clone(), n_plus: rec.n_plus.clone(), n_minus: rec.n_minus.clone() };
    writeln!(w, "{}", serde_json::to_string(&tail).map_err(js)?).map_err(io)
}

pub fn read_jsonl(r: impl BufRead, lattice: &Lattice) -> Result<TrajectoryRecord> {
    let js = |e: serde_json::Error| Error::InvalidInput(format!("trajectory JSON: {e}"));
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>().map_err(io)?;
    let lines: Vec<&String> = lines.iter().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() < 2 {
        return Err(Error::InvalidInput("trajectory JSON needs a header and a trailer".into()));
    }
    let head: Header = serde_json::from_str(lines[0]).map_err(js)?;
    if head.magic != "SWTR" || head.version != VERSION {
        return Err(Error::InvalidInput("bad trajectory JSON header".into()));
    }
    if head.lattice_hash != lattice_hash(lattice) {
        return Err(Error::InvalidInput("trajectory was recorded on a different lattice".into()));
    }
    let events = lines[1..lines.len() - 1]
        .iter()
        .map(|l| serde_json::from_str::<SwapEvent>(l).map_err(js))
        .collect::<Result<Vec<_>>>()?;
    let tail: Trailer = serde_json::from_str(lines[lines.len() - 1]).map_err(js)?;
    Ok(TrajectoryRecord {
        initial: head.initial,
        duration: head.duration,
        events,
        final_config: tail.final_config,
        n_plus: tail.n_plus,
        n_minus: tail.n_minus,
    })
}
