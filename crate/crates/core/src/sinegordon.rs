//! Angle fields `phi(x, y)` solving `phi_xy = sin(phi)`: closed-form
//! solutions and a Goursat (characteristic initial value) solver.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{diff_x, diff_y, interp_line, GridSpec, ScalarField};
use crate::io;

/// Closed-form angle functions whose derivatives are known exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactAngle {
    /// `4 arctan(exp(a x + y / a))`.
    Soliton { a: f64 },
    Constant { c: f64 },
}

impl ExactAngle {
    fn phase(a: f64, x: f64, y: f64) -> f64 {
        a * x + y / a
    }

    pub fn phi(&self, x: f64, y: f64) -> f64 {
        match *self {
            ExactAngle::Soliton { a } => 4.0 * Self::phase(a, x, y).exp().atan(),
            ExactAngle::Constant { c } => c,
        }
    }

    pub fn phi_x(&self, x: f64, y: f64) -> f64 {
        match *self {
            ExactAngle::Soliton { a } => 2.0 * a / Self::phase(a, x, y).cosh(),
            ExactAngle::Constant { .. } => 0.0,
        }
    }

    pub fn phi_y(&self, x: f64, y: f64) -> f64 {
        match *self {
            ExactAngle::Soliton { a } => 2.0 / (a * Self::phase(a, x, y).cosh()),
            ExactAngle::Constant { .. } => 0.0,
        }
    }

    pub fn phi_xy(&self, x: f64, y: f64) -> f64 {
        match *self {
            ExactAngle::Soliton { a } => {
                let u = Self::phase(a, x, y);
                -2.0 * u.tanh() / u.cosh()
            }
            ExactAngle::Constant { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
}

/// Sampled angle between the asymptotic lines, with its first derivatives.
#[derive(Debug, Clone)]
pub struct AngleField {
    pub grid: GridSpec,
    pub phi: Vec<f64>,
    pub dphi_dx: Vec<f64>,
    pub dphi_dy: Vec<f64>,
    pub derivatives: DerivativeSource,
    /// True exactly where `0 < phi < pi`.
    pub regular_mask: Vec<bool>,
    /// Closed form the samples came from, if any.
    pub exact: Option<ExactAngle>,
}

fn regular_mask(phi: &[f64]) -> Vec<bool> {
    phi.iter().map(|&p| p > 0.0 && p < PI).collect()
}

impl AngleField {
    /// Field from samples alone; derivatives by 4th-order finite differences.
    pub fn from_samples(grid: GridSpec, phi: Vec<f64>) -> Result<Self> {
        if phi.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} samples for a {}x{} grid", phi.len(), grid.nx, grid.ny)));
        }
        let dphi_dx = diff_x(&grid, &phi);
        Self::with_dphi_dx(grid, phi, dphi_dx, DerivativeSource::FiniteDifference)
    }

    /// Field with a supplied x-derivative (e.g. a companion file); the
    /// y-derivative is always differenced.
    pub fn with_dphi_dx(grid: GridSpec, phi: Vec<f64>, dphi_dx: Vec<f64>, source: DerivativeSource) -> Result<Self> {
        if phi.len() != grid.len() || dphi_dx.len() != grid.len() {
            return Err(Error::ShapeMismatch("phi and dphi_dx must match the grid".into()));
        }
        let dphi_dy = diff_y(&grid, &phi);
        Ok(Self {
            regular_mask: regular_mask(&phi),
            grid,
            phi,
            dphi_dx,
            dphi_dy,
            derivatives: source,
            exact: None,
        })
    }

    pub fn from_exact(exact: ExactAngle, grid: GridSpec) -> Self {
        let sample = |f: &dyn Fn(f64, f64) -> f64| {
            let mut v = Vec::with_capacity(grid.len());
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    v.push(f(grid.x(i), grid.y(j)));
                }
            }
            v
        };
        let phi = sample(&|x, y| exact.phi(x, y));
        Self {
            regular_mask: regular_mask(&phi),
            dphi_dx: sample(&|x, y| exact.phi_x(x, y)),
            dphi_dy: sample(&|x, y| exact.phi_y(x, y)),
            phi,
            grid,
            derivatives: DerivativeSource::Analytic,
            exact: Some(exact),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.phi[self.grid.index(i, j)]
    }

    pub fn phi_x_at(&self, i: usize, j: usize) -> f64 {
        self.dphi_dx[self.grid.index(i, j)]
    }

    /// `(phi, phi_x)` at an arbitrary `x` on row `j`.
    pub fn sample_row(&self, j: usize, x: f64) -> (f64, f64) {
        if let Some(e) = self.exact {
            let y = self.grid.y(j);
            return (e.phi(x, y), e.phi_x(x, y));
        }
        let g = &self.grid;
        let row = j * g.nx..(j + 1) * g.nx;
        (
            interp_line(&self.phi[row.clone()], g.x0, g.hx, x),
            interp_line(&self.dphi_dx[row], g.x0, g.hx, x),
        )
    }

    /// `(phi, phi_x)` at an arbitrary `y` on column `i`.
    pub fn sample_col(&self, i: usize, y: f64) -> (f64, f64) {
        if let Some(e) = self.exact {
            let x = self.grid.x(i);
            return (e.phi(x, y), e.phi_x(x, y));
        }
        let g = &self.grid;
        let col: Vec<f64> = (0..g.ny).map(|j| self.phi[g.index(i, j)]).collect();
        let col_x: Vec<f64> = (0..g.ny).map(|j| self.dphi_dx[g.index(i, j)]).collect();
        (interp_line(&col, g.y0, g.hy, y), interp_line(&col_x, g.y0, g.hy, y))
    }

    /// `phi_xy` at every node: exact when available, otherwise the
    /// y-difference of `dphi_dx`.
    pub fn phi_xy(&self) -> Vec<f64> {
        match self.exact {
            Some(e) => {
                let g = &self.grid;
                let mut v = Vec::with_capacity(g.len());
                for j in 0..g.ny {
                    for i in 0..g.nx {
                        v.push(e.phi_xy(g.x(i), g.y(j)));
                    }
                }
                v
            }
            None => diff_y(&self.grid, &self.dphi_dx),
        }
    }

    pub fn transpose(&self) -> Self {
        let g = self.grid;
        let t = g.transpose();
        let mut phi = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                phi[t.index(j, i)] = self.at(i, j);
            }
        }
        let mut out = Self::from_samples(t, phi).expect("transposed shape is consistent");
        out.derivatives = self.derivatives;
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        io::write_grid_values(path, &self.grid, &self.phi)
    }

    pub fn write_phi_x_csv(&self, path: &Path) -> Result<()> {
        io::write_grid_values(path, &self.grid, &self.dphi_dx)
    }

    /// Reads an angle field and, optionally, a companion `phi_x` file of the same layout.
    pub fn read_csv(path: &Path, phi_x_path: Option<&Path>) -> Result<Self> {
        let (grid, phi) = io::read_grid_values(path)?;
        match phi_x_path {
            None => Self::from_samples(grid, phi),
            Some(p) => {
                let (grid_x, dphi_dx) = io::read_grid_values(p)?;
                if grid_x != grid {
                    return Err(Error::ShapeMismatch("phi_x file grid differs from phi file".into()));
                }
                Self::with_dphi_dx(grid, phi, dphi_dx, DerivativeSource::Analytic)
            }
        }
    }
}

/// `phi = 4 arctan(exp(a x + y / a))` with analytic derivatives.
pub fn soliton_angle(a: f64, grid: GridSpec) -> Result<AngleField> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!("soliton parameter must be positive, got {a}")));
    }
    Ok(AngleField::from_exact(ExactAngle::Soliton { a }, grid))
}

pub fn constant_angle(c: f64, grid: GridSpec) -> AngleField {
    AngleField::from_exact(ExactAngle::Constant { c }, grid)
}

#[derive(Debug, Clone, Copy)]
pub struct GoursatOptions {
    /// Each grid cell is integrated on a `substeps x substeps` sub-grid.
    pub substeps: usize,
    pub max_picard: usize,
    pub picard_tol: f64,
    pub corner_tol: f64,
}

impl Default for GoursatOptions {
    fn default() -> Self {
        Self { substeps: 4, max_picard: 20, picard_tol: 1e-12, corner_tol: 1e-12 }
    }
}

/// Solves `phi_xy = sin(phi)` from data on the two characteristics through
/// the grid corner: `x_data[i] = phi(x_i, y0)`, `y_data[j] = phi(x0, y_j)`.
pub fn goursat_solve(x_data: &[f64], y_data: &[f64], grid: GridSpec) -> Result<AngleField> {
    goursat_solve_with(x_data, y_data, grid, GoursatOptions::default())
}

pub fn goursat_solve_with(x_data: &[f64], y_data: &[f64], grid: GridSpec, opts: GoursatOptions) -> Result<AngleField> {
    if x_data.len() != grid.nx || y_data.len() != grid.ny {
        return Err(Error::ShapeMismatch(format!(
            "boundary data lengths {}x{} do not match grid {}x{}",
            x_data.len(),
            y_data.len(),
            grid.nx,
            grid.ny
        )));
    }
    if (x_data[0] - y_data[0]).abs() > opts.corner_tol {
        return Err(Error::IncompatibleCorner { x_corner: x_data[0], y_corner: y_data[0] });
    }
    let r = opts.substeps.max(1);
    let (nxf, nyf) = ((grid.nx - 1) * r + 1, (grid.ny - 1) * r + 1);
    let (hf, kf) = (grid.hx / r as f64, grid.hy / r as f64);
    let refine = |data: &[f64], start: f64, h: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|k| {
                if k % r == 0 {
                    data[k / r]
                } else {
                    interp_line(data, start, h, start + k as f64 * h / r as f64)
                }
            })
            .collect()
    };
    let xf = refine(x_data, grid.x0, grid.hx, nxf);
    let yf = refine(y_data, grid.y0, grid.hy, nyf);

    let weight = hf * kf / 4.0;
    let mut phi = vec![0.0; grid.len()];
    phi[..grid.nx].copy_from_slice(x_data);
    let mut prev = xf;
    let mut next = vec![0.0; nxf];
    for jf in 1..nyf {
        next[0] = yf[jf];
        for i in 0..nxf - 1 {
            let base = prev[i + 1] + next[i] - prev[i];
            let known = prev[i].sin() + prev[i + 1].sin() + next[i].sin();
            let mut v = base + weight * (known + base.sin());
            let mut converged = false;
            for _ in 0..opts.max_picard {
                let updated = base + weight * (known + v.sin());
                let change = (updated - v).abs();
                v = updated;
                if change <= opts.picard_tol * (1.0 + v.abs()) {
                    converged = true;
                    break;
                }
            }
            if !converged || !v.is_finite() {
                return Err(Error::NonconvergentCell { i: i / r, j: (jf - 1) / r });
            }
            next[i + 1] = v;
        }
        if jf % r == 0 {
            let j = jf / r;
            for i in 0..grid.nx {
                phi[grid.index(i, j)] = next[i * r];
            }
            phi[grid.index(0, j)] = y_data[j];
        }
        std::mem::swap(&mut prev, &mut next);
    }
    AngleField::from_samples(grid, phi)
}

/// Finite-difference `phi_xy - sin(phi)` at every node.
pub fn sg_residual(f: &AngleField) -> ScalarField {
    let g = f.grid;
    let mixed = diff_y(&g, &diff_x(&g, &f.phi));
    let values = mixed.iter().zip(&f.phi).map(|(m, p)| m - p.sin()).collect();
    ScalarField::new(g, values)
}

/// `phi_xy - sin(phi)` from the closed form, when the field carries one.
pub fn analytic_residual(f: &AngleField) -> Option<ScalarField> {
    f.exact?;
    let mixed = f.phi_xy();
    let values = mixed.iter().zip(&f.phi).map(|(m, p)| m - p.sin()).collect();
    Some(ScalarField::new(f.grid, values))
}
