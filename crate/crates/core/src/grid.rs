//! Rectangular grids in asymptotic coordinates, node-valued fields and the
//! finite-difference / interpolation stencils shared by the residual checks.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `x_i = x0 + i hx`, `y_j = y0 + j hy`. Node `(i, j)` is stored
/// at `j * nx + i` (rows of constant y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x0: f64,
    pub y0: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl GridSpec {
    pub fn new(x0: f64, y0: f64, nx: usize, ny: usize, hx: f64, hy: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("need nx, ny >= 2, got {nx} x {ny}")));
        }
        if !(hx > 0.0 && hy > 0.0) || !hx.is_finite() || !hy.is_finite() {
            return Err(Error::InvalidGrid(format!("steps must be positive, got hx={hx}, hy={hy}")));
        }
        if !x0.is_finite() || !y0.is_finite() {
            return Err(Error::InvalidGrid("grid corner is not finite".into()));
        }
        Ok(Self { x0, y0, nx, ny, hx, hy })
    }

    /// Grid covering `[x_min, x_max] x [y_min, y_max]`; the extents are rounded
    /// to whole numbers of steps.
    pub fn from_domain(x_min: f64, x_max: f64, y_min: f64, y_max: f64, hx: f64, hy: f64) -> Result<Self> {
        if !(x_max > x_min && y_max > y_min) {
            return Err(Error::InvalidGrid(format!(
                "domain bounds not ordered: [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        if !(hx > 0.0 && hy > 0.0) {
            return Err(Error::InvalidGrid(format!("steps must be positive, got hx={hx}, hy={hy}")));
        }
        let nx = ((x_max - x_min) / hx).round() as usize + 1;
        let ny = ((y_max - y_min) / hy).round() as usize + 1;
        Self::new(x_min, y_min, nx, ny, hx, hy)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.hx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.hy
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn y_max(&self) -> f64 {
        self.y(self.ny - 1)
    }

    /// Index of the node at coordinate `x`, if `x` lies on the grid.
    pub fn x_node(&self, x: f64) -> Option<usize> {
        node_of(self.x0, self.hx, self.nx, x)
    }

    pub fn y_node(&self, y: f64) -> Option<usize> {
        node_of(self.y0, self.hy, self.ny, y)
    }

    /// Node at `(0, 0)`, the base point of every extended frame.
    pub fn origin(&self) -> Result<(usize, usize)> {
        match (self.x_node(0.0), self.y_node(0.0)) {
            (Some(i), Some(j)) => Ok((i, j)),
            _ => Err(Error::NoOrigin),
        }
    }

    pub fn transpose(&self) -> Self {
        Self { x0: self.y0, y0: self.x0, nx: self.ny, ny: self.nx, hx: self.hy, hy: self.hx }
    }
}

fn node_of(start: f64, step: f64, n: usize, t: f64) -> Option<usize> {
    let k = ((t - start) / step).round();
    if k < 0.0 || k >= n as f64 {
        return None;
    }
    let err = (start + k * step - t).abs();
    (err <= 1e-6 * step).then_some(k as usize)
}

/// Real values on the nodes of a grid. Entries may be NaN where a quantity
/// is undefined (e.g. degenerate metric); statistics skip those.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Largest absolute finite value (0 for an all-NaN field).
    pub fn sup(&self) -> f64 {
        self.values.iter().filter(|v| v.is_finite()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_where(&self, mask: &[bool]) -> f64 {
        self.values
            .iter()
            .zip(mask)
            .filter(|(v, m)| **m && v.is_finite())
            .fold(0.0, |m, (v, _)| m.max(v.abs()))
    }

    /// Mean of finite values.
    pub fn mean(&self) -> f64 {
        mean(self.values.iter().copied().filter(|v| v.is_finite()))
    }

    pub fn mean_where(&self, mask: &[bool]) -> f64 {
        mean(self.values.iter().zip(mask).filter(|(v, m)| **m && v.is_finite()).map(|(v, _)| *v))
    }

    pub fn abs_mean(&self) -> f64 {
        mean(self.values.iter().filter(|v| v.is_finite()).map(|v| v.abs()))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Values that finite differences and interpolation can act on.
pub trait Linear: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}

impl<T> Linear for T where T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

/// First derivative of samples `f(0..n)` with spacing `h`: 4th-order centered
/// in the interior, 4th-order one-sided at the two nodes nearest each end.
/// Falls back to 2nd order for n < 5 and a plain difference for n = 2.
pub fn derivative_line<T: Linear>(n: usize, h: f64, f: impl Fn(usize) -> T) -> Vec<T> {
    let mut out = Vec::with_capacity(n);
    if n < 2 {
        return (0..n).map(|k| f(k) * 0.0).collect();
    }
    if n == 2 {
        let d = (f(1) - f(0)) * (1.0 / h);
        return vec![d, d];
    }
    if n < 5 {
        let inv = 1.0 / (2.0 * h);
        for k in 0..n {
            let d = if k == 0 {
                (f(1) * 4.0 - f(0) * 3.0 - f(2)) * inv
            } else if k == n - 1 {
                (f(n - 1) * 3.0 - f(n - 2) * 4.0 + f(n - 3)) * inv
            } else {
                (f(k + 1) - f(k - 1)) * inv
            };
            out.push(d);
        }
        return out;
    }
    let inv = 1.0 / (12.0 * h);
    for k in 0..n {
        let d = match k {
            0 => f(1) * 48.0 - f(0) * 25.0 - f(2) * 36.0 + f(3) * 16.0 - f(4) * 3.0,
            1 => f(2) * 18.0 - f(0) * 3.0 - f(1) * 10.0 - f(3) * 6.0 + f(4),
            _ if k == n - 2 => f(n - 1) * 3.0 + f(n - 2) * 10.0 - f(n - 3) * 18.0 + f(n - 4) * 6.0 - f(n - 5),
            _ if k == n - 1 => f(n - 1) * 25.0 - f(n - 2) * 48.0 + f(n - 3) * 36.0 - f(n - 4) * 16.0 + f(n - 5) * 3.0,
            _ => f(k - 2) - f(k - 1) * 8.0 + f(k + 1) * 8.0 - f(k + 2),
        };
        out.push(d * inv);
    }
    out
}

/// x-derivative of a node field stored row-major (`j * nx + i`).
pub fn diff_x<T: Linear>(grid: &GridSpec, values: &[T]) -> Vec<T> {
    let mut out = values.to_vec();
    for j in 0..grid.ny {
        let row = &values[j * grid.nx..(j + 1) * grid.nx];
        let d = derivative_line(grid.nx, grid.hx, |i| row[i]);
        out[j * grid.nx..(j + 1) * grid.nx].copy_from_slice(&d);
    }
    out
}

pub fn diff_y<T: Linear>(grid: &GridSpec, values: &[T]) -> Vec<T> {
    let mut out = values.to_vec();
    for i in 0..grid.nx {
        let d = derivative_line(grid.ny, grid.hy, |j| values[j * grid.nx + i]);
        for (j, v) in d.into_iter().enumerate() {
            out[j * grid.nx + i] = v;
        }
    }
    out
}

/// Cubic (4-point Lagrange) interpolation of equispaced samples at `t`,
/// with the stencil shifted inward near the ends.
pub fn interp_line<T: Linear>(samples: &[T], start: f64, h: f64, t: f64) -> T {
    let n = samples.len();
    let s = (t - start) / h;
    if n == 1 {
        return samples[0];
    }
    if n < 4 {
        let k = (s.floor().max(0.0) as usize).min(n - 2);
        let w = s - k as f64;
        return samples[k] * (1.0 - w) + samples[k + 1] * w;
    }
    let base = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let u = s - base as f64;
    // Lagrange weights for nodes 0, 1, 2, 3 at position u.
    let w0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
    let w1 = u * (u - 2.0) * (u - 3.0) / 2.0;
    let w2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
    let w3 = u * (u - 1.0) * (u - 2.0) / 6.0;
    samples[base] * w0 + samples[base + 1] * w1 + samples[base + 2] * w2 + samples[base + 3] * w3
}
