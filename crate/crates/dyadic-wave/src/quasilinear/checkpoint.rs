//! Binary snapshots of iterates.
//!
//! Layout, all little-endian: `b"DWCK"`, `u32` version (1), `u32` dim,
//! `u32` points per axis, `f64` box scale, `f64` time, `u32` field count,
//! then for each field its samples as `(f64 re, f64 im)` pairs in flat
//! grid order.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DWCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub time: f64,
    pub fields: Vec<Field>,
}

pub fn write_checkpoint(path: &Path, time: f64, fields: &[Field]) -> Result<()> {
    let grid = *fields.first().ok_or_else(|| Error::Checkpoint("nothing to write".into()))?.grid();
    let mut buf = Vec::with_capacity(36 + fields.len() * grid.len() * 16);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.points_per_axis() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.box_scale().to_le_bytes());
    buf.extend_from_slice(&time.to_le_bytes());
    buf.extend_from_slice(&(fields.len() as u32).to_le_bytes());
    for f in fields {
        if *f.grid() != grid {
            return Err(Error::GridMismatch);
        }
        for z in f.samples() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.at + N;
        let s = self.bytes.get(self.at..end).ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        self.at = end;
        Ok(s.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, at: 0 };
    if &c.take::<4>()? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dim = c.u32()? as usize;
    let n = c.u32()? as usize;
    let box_scale = c.f64()?;
    let time = c.f64()?;
    let count = c.u32()? as usize;
    let grid = Grid::new(dim, n, box_scale).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        let mut samples = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = c.f64()?;
            let im = c.f64()?;
            samples.push(Complex64::new(re, im));
        }
        fields.push(Field::new(grid, samples)?);
    }
    if c.at != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.at)));
    }
    Ok(Checkpoint { time, fields })
}
