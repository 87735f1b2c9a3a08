//! Discretised compartment densities on a regular grid over `D`.

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::model::InitialDistribution;
use crate::transport::AtomSet;
use std::io::{BufRead, Write};

/// Triple of per-cell densities `(f_S, f_I, f_R)` on an `n x n` grid of
/// square cells over the unit square; values are densities (mass per unit
/// area) sampled at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    h: f64,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl GridField {
    pub fn zeros(n: usize) -> Self {
        GridField {
            n,
            h: 1.0 / n as f64,
            s: vec![0.0; n * n],
            i: vec![0.0; n * n],
            r: vec![0.0; n * n],
        }
    }

    /// Sample the per-compartment densities of an initial distribution at
    /// the cell centres.
    pub fn from_density(dist: &InitialDistribution, n: usize) -> Self {
        let mut f = GridField::zeros(n);
        for idx in 0..n * n {
            let p = f.cell_center(idx);
            let d = dist.density(p);
            f.s[idx] = d[0];
            f.i[idx] = d[1];
            f.r[idx] = d[2];
        }
        f
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn cell_center(&self, idx: usize) -> Point {
        let ix = idx % self.n;
        let iy = idx / self.n;
        Point::new((ix as f64 + 0.5) * self.h, (iy as f64 + 0.5) * self.h)
    }

    pub fn component(&self, c: usize) -> &[f64] {
        match c {
            0 => &self.s,
            1 => &self.i,
            2 => &self.r,
            _ => panic!("component index out of range"),
        }
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        match c {
            0 => &mut self.s,
            1 => &mut self.i,
            2 => &mut self.r,
            _ => panic!("component index out of range"),
        }
    }

    /// Total mass `h^2 * sum` of each component.
    pub fn masses(&self) -> [f64; 3] {
        let cell = self.h * self.h;
        [
            self.s.iter().sum::<f64>() * cell,
            self.i.iter().sum::<f64>() * cell,
            self.r.iter().sum::<f64>() * cell,
        ]
    }

    /// Per-cell sum `f_S + f_I + f_R`, evaluated in a fixed order
    /// (`(s + r) + i`) so the solvers' algebraic cancellation is exact.
    #[inline]
    pub fn cell_sum(&self, idx: usize) -> f64 {
        (self.s[idx] + self.r[idx]) + self.i[idx]
    }

    pub fn min_value(&self) -> f64 {
        self.s
            .iter()
            .chain(&self.i)
            .chain(&self.r)
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    pub fn has_nan(&self) -> bool {
        self.s
            .iter()
            .chain(&self.i)
            .chain(&self.r)
            .any(|v| v.is_nan())
    }

    /// Grid L2 distance `sqrt(h^2 * sum over cells and components of the
    /// squared difference)`.
    pub fn l2_distance(&self, other: &GridField) -> f64 {
        assert_eq!(self.n, other.n, "grid sizes differ");
        let mut acc = 0.0;
        for c in 0..3 {
            let a = self.component(c);
            let b = other.component(c);
            for (x, y) in a.iter().zip(b) {
                let d = x - y;
                acc += d * d;
            }
        }
        (acc * self.h * self.h).sqrt()
    }

    /// Component measures as atoms at cell centres with the cell masses.
    pub fn to_atom_sets(&self) -> [AtomSet; 3] {
        let cell = self.h * self.h;
        let mut out = [AtomSet::default(), AtomSet::default(), AtomSet::default()];
        for (c, set) in out.iter_mut().enumerate() {
            let comp = self.component(c);
            for (idx, &v) in comp.iter().enumerate() {
                if v != 0.0 {
                    set.push(self.cell_center(idx), v * cell);
                }
            }
        }
        out
    }

    /// CSV export with columns `x,y,fS,fI,fR`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "x,y,fS,fI,fR")?;
        for idx in 0..self.cells() {
            let p = self.cell_center(idx);
            writeln!(
                w,
                "{},{},{},{},{}",
                p.x, p.y, self.s[idx], self.i[idx], self.r[idx]
            )?;
        }
        Ok(())
    }

    /// Raw export: one ASCII header line `n h t`, then the three components
    /// (S, I, R blocks, row-major) as little-endian f64.
    pub fn write_raw<W: Write>(&self, w: &mut W, t: f64) -> Result<()> {
        writeln!(w, "{} {} {}", self.n, self.h, t)?;
        for c in 0..3 {
            for v in self.component(c) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Read back the raw format; returns the field and the header time.
    pub fn read_raw<R: BufRead>(r: &mut R) -> Result<(GridField, f64)> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::InvalidParameter(format!(
                "raw field header must be 'n h t', got {header:?}"
            )));
        }
        let n: usize = parts[0]
            .parse()
            .map_err(|e| Error::InvalidParameter(format!("bad n in header: {e}")))?;
        let t: f64 = parts[2]
            .parse()
            .map_err(|e| Error::InvalidParameter(format!("bad t in header: {e}")))?;
        let mut field = GridField::zeros(n);
        let mut buf = [0u8; 8];
        for c in 0..3 {
            for idx in 0..n * n {
                let mut read = 0;
                while read < 8 {
                    let got = r.read(&mut buf[read..])?;
                    if got == 0 {
                        return Err(Error::InvalidParameter("raw field truncated".into()));
                    }
                    read += got;
                }
                field.component_mut(c)[idx] = f64::from_le_bytes(buf);
            }
        }
        Ok((field, t))
    }
}
