//! Discretized Brownian environment `B(k, x)`.
//!
//! Each line `k` carries the values of an independent Brownian motion on the
//! uniform grid `x0 + g * delta`, pinned to zero at `anchor_index`.
//!
//! Increments come from a counter-based stream: the increment of the cell
//! `[p, p + delta]` on line `k` is a function of `(seed, k, round(p / delta))`
//! only. Concretely a ChaCha8 block stream is seeded from `seed`, the stream id
//! is the line (as `u64`), and the cell's absolute lattice key `c` (offset by
//! `2^63`) selects the word position `4c`. Two consecutive `u64` words give a
//! Box-Muller normal (cosine branch), scaled by `sqrt(delta)`.
//!
//! Values are accumulated outward from the anchor, so two windows on the same
//! lattice whose anchors sit at the same absolute position agree bit-exactly
//! on their overlap.

use crate::error::{param, LppError, Result};
use crate::scalar::Scalar;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

/// Uniform spatial grid in unscaled units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub x0: f64,
    pub delta: f64,
    pub num_cells: usize,
    pub anchor_index: usize,
}

impl GridSpec {
    pub fn new(x0: f64, delta: f64, num_cells: usize, anchor_index: usize) -> Result<Self> {
        let g = GridSpec { x0, delta, num_cells, anchor_index };
        g.validate()?;
        Ok(g)
    }

    /// Grid aligned to the absolute lattice `delta * Z`, covering `[lo, hi]`,
    /// anchored at its left edge.
    pub fn covering(lo: f64, hi: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return param(format!("delta must be positive, got {delta}"));
        }
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return param(format!("invalid window [{lo}, {hi}]"));
        }
        let k0 = (lo / delta).floor();
        let k1 = (hi / delta).ceil();
        let cells = ((k1 - k0) as usize).max(1);
        GridSpec::new(k0 * delta, delta, cells, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return param(format!("delta must be positive, got {}", self.delta));
        }
        if !self.x0.is_finite() {
            return param("x0 must be finite");
        }
        if self.num_cells < 1 {
            return param("num_cells must be at least 1");
        }
        if self.anchor_index > self.num_cells {
            return param(format!(
                "anchor_index {} outside [0, {}]",
                self.anchor_index, self.num_cells
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn num_points(&self) -> usize {
        self.num_cells + 1
    }

    #[inline]
    pub fn position(&self, g: usize) -> f64 {
        self.x0 + g as f64 * self.delta
    }

    pub fn right_edge(&self) -> f64 {
        self.position(self.num_cells)
    }

    /// Absolute lattice key of the grid point `g`.
    #[inline]
    pub fn lattice_key(&self, g: usize) -> i64 {
        (self.x0 / self.delta).round() as i64 + g as i64
    }

    /// Nearest grid index to `pos`, ties toward the smaller index.
    /// `None` if `pos` lies more than half a step outside the window.
    pub fn snap(&self, pos: f64) -> Option<usize> {
        if !pos.is_finite() {
            return None;
        }
        let r = (pos - self.x0) / self.delta;
        let lo = r.floor();
        let g = if r - lo > 0.5 { lo + 1.0 } else { lo };
        if g < 0.0 || g > self.num_cells as f64 {
            return None;
        }
        Some(g as usize)
    }
}

/// Where the values of an environment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Origin {
    Seeded(u64),
    Injected,
}

/// Table of Brownian values, line-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment<T> {
    origin: Origin,
    line_min: i64,
    line_max: i64,
    grid: GridSpec,
    values: Vec<T>,
}

#[inline]
fn unit_open(w: u64) -> f64 {
    ((w >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn unit_closed_open(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn box_muller(a: u64, b: u64) -> f64 {
    let u1 = unit_open(a);
    let u2 = unit_closed_open(b);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[inline]
fn stream_position(key: i64) -> u128 {
    ((key as u64) ^ (1u64 << 63)) as u128 * 4
}

/// Standard normal attached to `(seed, line, key)`, drawn independently of
/// any other cell.
pub fn standard_normal_at(seed: u64, line: i64, key: i64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(line as u64);
    rng.set_word_pos(stream_position(key));
    let a = rng.next_u64();
    let b = rng.next_u64();
    box_muller(a, b)
}

/// Standard normals for the consecutive keys `first_key .. first_key + count`.
pub fn standard_normals(seed: u64, line: i64, first_key: i64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(line as u64);
    let mut out = Vec::with_capacity(count);
    rng.set_word_pos(stream_position(first_key));
    for _ in 0..count {
        let a = rng.next_u64();
        let b = rng.next_u64();
        out.push(box_muller(a, b));
    }
    out
}

fn accumulate<T: Scalar>(incs: &[f64], anchor: usize) -> Vec<T> {
    let mut row = vec![T::zero(); incs.len() + 1];
    let mut acc = 0.0f64;
    for g in anchor..incs.len() {
        acc += incs[g];
        row[g + 1] = T::from_f64_lossy(acc);
    }
    acc = 0.0;
    for g in (0..anchor).rev() {
        acc -= incs[g];
        row[g] = T::from_f64_lossy(acc);
    }
    row
}

impl<T: Scalar> Environment<T> {
    /// Seeded environment on lines `line_min..=line_max`.
    pub fn generate(seed: u64, line_min: i64, line_max: i64, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        if line_min > line_max {
            return param(format!("line_min {line_min} > line_max {line_max}"));
        }
        let lines = (line_max - line_min + 1) as usize;
        check_size(lines, grid.num_points())?;
        let sd = grid.delta.sqrt();
        let key0 = grid.lattice_key(0);
        let rows: Vec<Vec<T>> = (line_min..=line_max)
            .into_par_iter()
            .map(|line| {
                let mut incs = standard_normals(seed, line, key0, grid.num_cells);
                for v in incs.iter_mut() {
                    *v *= sd;
                }
                accumulate(&incs, grid.anchor_index)
            })
            .collect();
        Ok(Environment {
            origin: Origin::Seeded(seed),
            line_min,
            line_max,
            grid,
            values: rows.concat(),
        })
    }

    /// Injection mode: values prescribed by `f(line, position)`, not re-pinned.
    pub fn from_fn(
        line_min: i64,
        line_max: i64,
        grid: GridSpec,
        f: impl Fn(i64, f64) -> T,
    ) -> Result<Self> {
        grid.validate()?;
        if line_min > line_max {
            return param(format!("line_min {line_min} > line_max {line_max}"));
        }
        let lines = (line_max - line_min + 1) as usize;
        check_size(lines, grid.num_points())?;
        let mut values = Vec::with_capacity(lines * grid.num_points());
        for line in line_min..=line_max {
            for g in 0..grid.num_points() {
                values.push(f(line, grid.position(g)));
            }
        }
        Ok(Environment { origin: Origin::Injected, line_min, line_max, grid, values })
    }

    /// Injection mode from an explicit line-major table.
    pub fn from_values(line_min: i64, line_max: i64, grid: GridSpec, values: Vec<T>) -> Result<Self> {
        grid.validate()?;
        if line_min > line_max {
            return param(format!("line_min {line_min} > line_max {line_max}"));
        }
        let lines = (line_max - line_min + 1) as usize;
        if values.len() != lines * grid.num_points() {
            return param(format!(
                "expected {} values, got {}",
                lines * grid.num_points(),
                values.len()
            ));
        }
        Ok(Environment { origin: Origin::Injected, line_min, line_max, grid, values })
    }

    /// `B(k, x) = 0`.
    pub fn zero(line_min: i64, line_max: i64, grid: GridSpec) -> Result<Self> {
        Self::from_fn(line_min, line_max, grid, |_, _| T::zero())
    }

    /// `B(k, x) = x`.
    pub fn identity(line_min: i64, line_max: i64, grid: GridSpec) -> Result<Self> {
        Self::from_fn(line_min, line_max, grid, |_, x| T::from_f64_lossy(x))
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn seed(&self) -> Option<u64> {
        match self.origin {
            Origin::Seeded(s) => Some(s),
            Origin::Injected => None,
        }
    }

    pub fn line_min(&self) -> i64 {
        self.line_min
    }

    pub fn line_max(&self) -> i64 {
        self.line_max
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn num_lines(&self) -> usize {
        (self.line_max - self.line_min + 1) as usize
    }

    pub fn has_line(&self, line: i64) -> bool {
        line >= self.line_min && line <= self.line_max
    }

    /// Values of one line; panics if the line is out of range.
    #[inline]
    pub fn row(&self, line: i64) -> &[T] {
        let w = self.grid.num_points();
        let r = (line - self.line_min) as usize;
        &self.values[r * w..(r + 1) * w]
    }

    /// `B(line, x0 + g * delta)`.
    pub fn value(&self, line: i64, g: usize) -> Result<T> {
        if !self.has_line(line) {
            return Err(LppError::Domain(format!(
                "line {line} outside [{}, {}]",
                self.line_min, self.line_max
            )));
        }
        if g > self.grid.num_cells {
            return Err(LppError::Domain(format!(
                "grid index {g} outside [0, {}]",
                self.grid.num_cells
            )));
        }
        Ok(self.row(line)[g])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Half-turn reflection `B'(k, x) = -B(-k, -x)`, on the mirrored grid.
    pub fn reflected(&self) -> Environment<T> {
        let w = self.grid.num_points();
        let n = self.grid.num_cells;
        let grid = GridSpec {
            x0: -self.grid.right_edge(),
            delta: self.grid.delta,
            num_cells: n,
            anchor_index: n - self.grid.anchor_index,
        };
        let mut values = Vec::with_capacity(self.values.len());
        for line in -self.line_max..=-self.line_min {
            let src = self.row(-line);
            for g in 0..w {
                values.push(-src[n - g]);
            }
        }
        Environment {
            origin: Origin::Injected,
            line_min: -self.line_max,
            line_max: -self.line_min,
            grid,
            values,
        }
    }

    pub(crate) fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    /// Same table converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Environment<U> {
        Environment {
            origin: self.origin,
            line_min: self.line_min,
            line_max: self.line_max,
            grid: self.grid,
            values: self.values.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }
}

const MAX_TABLE: usize = 1 << 31;

fn check_size(lines: usize, points: usize) -> Result<()> {
    match lines.checked_mul(points) {
        Some(n) if n <= MAX_TABLE => Ok(()),
        _ => Err(LppError::Size(format!("{lines} lines x {points} points exceeds table limit"))),
    }
}
