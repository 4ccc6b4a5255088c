//! Fields on the space-time lattice and their CSV / binary serializations.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Grid, SolverError};

/// Values of a scalar field at the stored time levels of a grid.
///
/// `values[k * n_nodes + node]` belongs to time level `levels[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub levels: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridField {
    /// All-zero field on every level `0..=nt`.
    pub fn zeros(grid: &Grid) -> Self {
        let levels: Vec<usize> = (0..=grid.nt).collect();
        GridField {
            values: vec![0.0; levels.len() * grid.n_nodes()],
            grid: grid.clone(),
            levels,
        }
    }

    /// Samples `f(t, x)` on every level.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        let n = grid.n_nodes();
        for lvl in 0..=grid.nt {
            for node in 0..n {
                out.values[lvl * n + node] = f(&grid.point(lvl, node));
            }
        }
        out
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    /// True when every level `0..=nt` is present.
    pub fn is_complete(&self) -> bool {
        self.levels.len() == self.grid.nt + 1
    }

    pub fn require_complete(&self) -> Result<(), SolverError> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(SolverError::IncompleteField {
                stored: self.levels.len(),
                needed: self.grid.nt + 1,
            })
        }
    }

    /// Slice of the `k`-th stored level.
    pub fn slot(&self, k: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn slot_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.n_nodes();
        &mut self.values[k * n..(k + 1) * n]
    }

    /// Values at time level `level`, if stored.
    pub fn at_level(&self, level: usize) -> Option<&[f64]> {
        if self.is_complete() {
            return Some(self.slot(level));
        }
        self.levels
            .binary_search(&level)
            .ok()
            .map(|k| self.slot(k))
    }

    pub fn last(&self) -> &[f64] {
        self.slot(self.levels.len() - 1)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Space-time `L²` norm over interior nodes of every stored level.
    pub fn interior_l2(&self) -> f64 {
        let n = self.n_nodes();
        let interior: Vec<usize> = (0..n).filter(|&i| self.grid.is_interior(i)).collect();
        let cell = self.grid.dx.iter().product::<f64>() * self.grid.dt;
        let mut s = 0.0;
        for k in 0..self.levels.len() {
            let v = self.slot(k);
            s += interior.iter().map(|&i| v[i] * v[i]).sum::<f64>();
        }
        (s * cell).sqrt()
    }

    /// Spatial `L²` norm over interior nodes of one stored level.
    pub fn interior_l2_slot(&self, k: usize) -> f64 {
        let v = self.slot(k);
        let cell = self.grid.dx.iter().product::<f64>();
        let s: f64 = (0..self.n_nodes())
            .filter(|&i| self.grid.is_interior(i))
            .map(|i| v[i] * v[i])
            .sum();
        (s * cell).sqrt()
    }

    fn check_compatible(&self, other: &GridField) -> Result<(), SolverError> {
        if !self.grid.same_lattice(&other.grid) || self.levels != other.levels {
            return Err(SolverError::GridMismatch);
        }
        Ok(())
    }

    /// `self + c·other`.
    pub fn axpy(&mut self, c: f64, other: &GridField) -> Result<(), SolverError> {
        self.check_compatible(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> GridField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField, SolverError> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// `‖self − reference‖ / ‖reference‖` in the interior space-time `L²` norm.
    pub fn interior_relative_error(&self, reference: &GridField) -> Result<f64, SolverError> {
        let diff = self.sub(reference)?;
        let r = reference.interior_l2();
        Ok(if r == 0.0 {
            diff.interior_l2()
        } else {
            diff.interior_l2() / r
        })
    }

    /// Keeps only the levels a grid with `store_every = k` would store.
    pub fn subsampled(&self, k: usize) -> GridField {
        let grid = self.grid.with_store_every(k);
        let levels = grid.stored_levels();
        let mut values = Vec::with_capacity(levels.len() * self.n_nodes());
        for &l in &levels {
            values.extend_from_slice(self.at_level(l).expect("level stored"));
        }
        GridField {
            grid,
            levels,
            values,
        }
    }

    /// CSV with header `t,x1[,x2],value`, one row per stored node value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.grid.d;
        let mut header = String::from("t");
        for k in 1..=d {
            header.push_str(&format!(",x{k}"));
        }
        writeln!(w, "{header},value")?;
        for (k, &lvl) in self.levels.iter().enumerate() {
            let t = self.grid.time(lvl);
            for (node, v) in self.slot(k).iter().enumerate() {
                write!(w, "{t}")?;
                for x in self.grid.coords(node) {
                    write!(w, ",{x}")?;
                }
                writeln!(w, ",{v}")?;
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> FieldSnapshot {
        FieldSnapshot {
            shape: self.grid.shape(),
            lo: self.grid.spec.lo.clone(),
            hi: self.grid.spec.hi.clone(),
            dt: self.grid.dt,
            levels: self.levels.clone(),
            values: self.values.clone(),
        }
    }

    pub fn write_binary<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.snapshot().write(w)
    }
}

/// Self-describing dump of a [`GridField`].
///
/// Binary layout, all integers and floats little-endian:
///
/// | bytes        | content                                   |
/// |--------------|-------------------------------------------|
/// | 8            | magic `NWFIELD\0`                         |
/// | 4 (u32)      | format version (1)                        |
/// | 4 (u32)      | spatial dimension `d`                     |
/// | 8·d (u64)    | nodes per axis                            |
/// | 8·d (f64)    | box lower corner                          |
/// | 8·d (f64)    | box upper corner                          |
/// | 8 (f64)      | time step `Δt`                            |
/// | 8 (u64)      | number of stored levels `L`               |
/// | 8·L (u64)    | level indices (time = index·Δt)           |
/// | 8·L·N (f64)  | values, level-major, nodes row-major with the last axis fastest |
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub shape: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub dt: f64,
    pub levels: Vec<usize>,
    pub values: Vec<f64>,
}

pub const FIELD_MAGIC: &[u8; 8] = b"NWFIELD\0";
const FIELD_VERSION: u32 = 1;

impl FieldSnapshot {
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&FIELD_VERSION.to_le_bytes())?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &s in &self.shape {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        for v in self.lo.iter().chain(&self.hi).chain(std::iter::once(&self.dt)) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.levels.len() as u64).to_le_bytes())?;
        for &l in &self.levels {
            w.write_all(&(l as u64).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<FieldSnapshot, SolverError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(SolverError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FIELD_VERSION {
            return Err(SolverError::Format(format!("unsupported version {version}")));
        }
        let d = read_u32(&mut r)? as usize;
        if !(1..=3).contains(&d) {
            return Err(SolverError::Format(format!("bad dimension {d}")));
        }
        let shape = (0..d)
            .map(|_| read_u64(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let lo = (0..d).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let hi = (0..d).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let dt = read_f64(&mut r)?;
        let nl = read_u64(&mut r)? as usize;
        let levels = (0..nl)
            .map(|_| read_u64(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let count = nl
            .checked_mul(shape.iter().product())
            .ok_or_else(|| SolverError::Format("size overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * count {
            return Err(SolverError::Format(format!(
                "expected {count} values, found {} bytes",
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(FieldSnapshot {
            shape,
            lo,
            hi,
            dt,
            levels,
            values,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
