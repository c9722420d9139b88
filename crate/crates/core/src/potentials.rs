//! Normalized x- and y-potentials read off the axis data of the angle, the
//! Birkhoff factors `U+`, `U-` they generate, and a cross-check of those
//! factors against numerical splits of the extended frame.
//!
//! Conventions: `U+^{-1} U+' = -lambda eta^x` along `y = 0` and
//! `U-^{-1} U-' = -lambda^{-1} eta^y` along `x = 0`, both equal to `I` at the origin.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{ComplexField, Matrix3};
use rayon::prelude::*;

use crate::algebra::{e12, e23, gauge_rotation, Mat2C, Mat3, Mat3C, C64};
use crate::error::{Error, Result};
use crate::frames::{frame_at_node_complex, integrate_line, line_samples, PathOrder};
use crate::io::fmt_f64;
use crate::loops::{birkhoff_split_sampled, loop_norm, multiply, Direction, LaurentLoop, SampledLoop, Split, SplitOptions};
use crate::sinegordon::AngleField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

/// Restrictions of the Maurer–Cartan coefficients to the two axes.
#[derive(Debug, Clone)]
pub struct BoundaryForms {
    /// `lambda^0` part of the dx coefficient along `y = 0`.
    pub beta0: Vec<Mat3>,
    /// `lambda^1` part of the dx coefficient along `y = 0`.
    pub beta1: Vec<Mat3>,
    /// `lambda^0` part of the dy coefficient along `x = 0`.
    pub gamma0: Vec<Mat3>,
    /// `lambda^-1` part of the dy coefficient along `x = 0`.
    pub gamma1: Vec<Mat3>,
}

/// A one-form along one axis, `lambda^{lambda_power} * sample * d(axis)`.
#[derive(Debug, Clone)]
pub struct PotentialForm {
    pub axis: Axis,
    pub coords: Vec<f64>,
    pub samples: Vec<Mat3>,
    /// Values halfway between consecutive nodes, used by the integrators.
    pub mids: Vec<Mat3>,
    pub lambda_power: i32,
    /// Index of the node at the origin.
    pub origin: usize,
    pub h: f64,
}

/// Complex 2×2 form of a potential along one axis.
#[derive(Debug, Clone)]
pub struct Potential2x2 {
    pub axis: Axis,
    pub coords: Vec<f64>,
    pub samples: Vec<Mat2C>,
}

fn p_valued(a13: f64, a23: f64) -> Mat3 {
    Mat3::new(0.0, 0.0, a13, 0.0, 0.0, a23, -a13, -a23, 0.0)
}

/// `V0 beta1 V0^{-1}` with `V0` the rotation by `delta = xi(0) - xi(x)`.
fn eta_x_value(delta: f64) -> Mat3 {
    let (s, c) = delta.sin_cos();
    p_valued(-s, -c)
}

fn gamma1_value(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    p_valued(s, c)
}

pub fn boundary_forms(f: &AngleField) -> Result<BoundaryForms> {
    let g = f.grid;
    let (i0, j0) = g.origin()?;
    let beta0 = (0..g.nx).map(|i| e12() * f.phi_x_at(i, j0)).collect();
    let beta1 = vec![-e23(); g.nx];
    let gamma0 = vec![Mat3::zeros(); g.ny];
    let gamma1 = (0..g.ny).map(|j| gamma1_value(f.at(i0, j))).collect();
    Ok(BoundaryForms { beta0, beta1, gamma0, gamma1 })
}

pub fn eta_x(f: &AngleField) -> Result<PotentialForm> {
    let g = f.grid;
    let (i0, j0) = g.origin()?;
    let (nodes, mids) = line_samples(f, true, j0);
    let xi0 = nodes[i0].0;
    Ok(PotentialForm {
        axis: Axis::X,
        coords: (0..g.nx).map(|i| g.x(i)).collect(),
        samples: nodes.iter().map(|v| eta_x_value(xi0 - v.0)).collect(),
        mids: mids.iter().map(|v| eta_x_value(xi0 - v.0)).collect(),
        lambda_power: 1,
        origin: i0,
        h: g.hx,
    })
}

pub fn eta_y(f: &AngleField) -> Result<PotentialForm> {
    let g = f.grid;
    let (i0, j0) = g.origin()?;
    let (nodes, mids) = line_samples(f, false, i0);
    Ok(PotentialForm {
        axis: Axis::Y,
        coords: (0..g.ny).map(|j| g.y(j)).collect(),
        samples: nodes.iter().map(|v| gamma1_value(v.0)).collect(),
        mids: mids.iter().map(|v| gamma1_value(v.0)).collect(),
        lambda_power: -1,
        origin: j0,
        h: g.hy,
    })
}

/// Solves `V0^{-1} V0' = -beta0` along `y = 0` with `V0(0) = I`; an independent
/// check of the closed-form rotation used by [`eta_x`].
pub fn solve_v0(f: &AngleField) -> Result<Vec<Mat3>> {
    let (i0, j0) = f.grid.origin()?;
    let (nodes, mids) = line_samples(f, true, j0);
    let gen = |v: &(f64, f64)| e12() * (-v.1);
    let n: Vec<Mat3> = nodes.iter().map(gen).collect();
    let m: Vec<Mat3> = mids.iter().map(gen).collect();
    integrate_line(&n, &m, i0, f.grid.hx, Mat3::identity())
}

/// Closed-form `V0(x)` along `y = 0`.
pub fn v0_closed_form(f: &AngleField) -> Result<Vec<Mat3>> {
    let (i0, j0) = f.grid.origin()?;
    let xi0 = f.at(i0, j0);
    Ok((0..f.grid.nx).map(|i| gauge_rotation(xi0 - f.at(i, j0))).collect())
}

pub fn eta_2x2(f: &AngleField) -> Result<(Potential2x2, Potential2x2)> {
    let g = f.grid;
    eta_general(f, &vec![1.0; g.nx], &vec![1.0; g.ny])
}

/// 2×2 potentials with amplitude profiles `a(x)` along `y = 0` and `b(y)` along `x = 0`.
pub fn eta_general(f: &AngleField, a: &[f64], b: &[f64]) -> Result<(Potential2x2, Potential2x2)> {
    let g = f.grid;
    if a.len() != g.nx || b.len() != g.ny {
        return Err(Error::ShapeMismatch(format!(
            "profiles need {} and {} values, got {} and {}",
            g.nx,
            g.ny,
            a.len(),
            b.len()
        )));
    }
    for (index, &value) in a.iter().chain(b).enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonpositiveProfile { index, value });
        }
    }
    let (i0, j0) = g.origin()?;
    let phi00 = f.at(i0, j0);
    let i = C64::i();
    let x_samples = (0..g.nx)
        .map(|k| {
            let w = C64::from_polar(1.0, f.at(k, j0) - phi00);
            let s = i * (a[k] / 2.0);
            Mat2C::new(C64::new(0.0, 0.0), s * w, s * w.conj(), C64::new(0.0, 0.0))
        })
        .collect();
    let y_samples = (0..g.ny)
        .map(|k| {
            let w = C64::from_polar(1.0, f.at(i0, k));
            let s = -i * (b[k] / 2.0);
            Mat2C::new(C64::new(0.0, 0.0), s * w.conj(), s * w, C64::new(0.0, 0.0))
        })
        .collect();
    Ok((
        Potential2x2 { axis: Axis::X, coords: (0..g.nx).map(|k| g.x(k)).collect(), samples: x_samples },
        Potential2x2 { axis: Axis::Y, coords: (0..g.ny).map(|k| g.y(k)).collect(), samples: y_samples },
    ))
}

impl PotentialForm {
    /// Largest deviation from a skew matrix with vanishing (1,2) block.
    pub fn p_defect(&self) -> f64 {
        self.samples
            .iter()
            .map(|m| {
                let skew = (m + m.transpose()).amax();
                skew.max(m[(0, 1)].abs()).max(m[(1, 0)].abs()).max(m[(0, 0)].abs().max(m[(1, 1)].abs()))
            })
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# axis,coord,m12,m13,m21,m23,m31,m32\n");
        for (c, m) in self.coords.iter().zip(&self.samples) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.axis.name(),
                fmt_f64(*c),
                fmt_f64(m[(0, 1)]),
                fmt_f64(m[(0, 2)]),
                fmt_f64(m[(1, 0)]),
                fmt_f64(m[(1, 2)]),
                fmt_f64(m[(2, 0)]),
                fmt_f64(m[(2, 1)])
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    fn scaled_generators<T: ComplexField<RealField = f64> + Copy>(&self, lambda: T) -> (Vec<Matrix3<T>>, Vec<Matrix3<T>>) {
        let scale = if self.lambda_power >= 0 { -lambda } else { -(T::one() / lambda) };
        let conv = |m: &Mat3| m.map(|v| T::from_real(v) * scale);
        (self.samples.iter().map(conv).collect(), self.mids.iter().map(conv).collect())
    }

    /// Solves `W^{-1} W' = -lambda^{power} * eta` with `W = I` at the origin.
    pub fn integrate<T: ComplexField<RealField = f64> + Copy>(&self, lambda: T) -> Result<Vec<Matrix3<T>>> {
        if lambda.modulus() == 0.0 {
            return Err(Error::ZeroSpectralParameter);
        }
        let (nodes, mids) = self.scaled_generators(lambda);
        integrate_line(&nodes, &mids, self.origin, self.h, Matrix3::identity())
    }
}

impl Potential2x2 {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# axis,coord,re12,im12,re21,im21\n");
        for (c, m) in self.coords.iter().zip(&self.samples) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.axis.name(),
                fmt_f64(*c),
                fmt_f64(m[(0, 1)].re),
                fmt_f64(m[(0, 1)].im),
                fmt_f64(m[(1, 0)].re),
                fmt_f64(m[(1, 0)].im)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn check_positive(lambda: f64) -> Result<()> {
    if lambda == 0.0 {
        return Err(Error::ZeroSpectralParameter);
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("spectral parameter must be positive, got {lambda}")));
    }
    Ok(())
}

fn expect_axis(eta: &PotentialForm, axis: Axis) -> Result<()> {
    if eta.axis != axis {
        return Err(Error::InvalidParameter(format!(
            "expected a potential along {}, got one along {}",
            axis.name(),
            eta.axis.name()
        )));
    }
    Ok(())
}

/// `U+` along `y = 0`.
pub fn integrate_plus(eta: &PotentialForm, lambda: f64) -> Result<Vec<Mat3>> {
    expect_axis(eta, Axis::X)?;
    check_positive(lambda)?;
    eta.integrate(lambda)
}

/// `U-` along `x = 0`.
pub fn integrate_minus(eta: &PotentialForm, lambda: f64) -> Result<Vec<Mat3>> {
    expect_axis(eta, Axis::Y)?;
    check_positive(lambda)?;
    eta.integrate(lambda)
}

/// Fourier coefficients of `lambda -> W(node; lambda)` from `n` samples on the unit circle.
pub fn sampled_factor(eta: &PotentialForm, node: usize, n: usize) -> Result<LaurentLoop> {
    if node >= eta.samples.len() {
        return Err(Error::InvalidParameter(format!("node {node} outside the axis")));
    }
    let values = SampledLoop::sample_points(n)
        .into_par_iter()
        .map(|mu| eta.integrate(mu).map(|w| w[node]))
        .collect::<Result<Vec<Mat3C>>>()?;
    Ok(SampledLoop { values }.to_laurent(1e-8)?.trimmed(1e-14))
}

#[derive(Debug, Clone, Copy)]
pub struct CrossCheckOptions {
    /// Number of spectral samples on the unit circle.
    pub samples: usize,
    pub split: SplitOptions,
    pub order: PathOrder,
}

impl Default for CrossCheckOptions {
    fn default() -> Self {
        Self { samples: 64, split: SplitOptions::default(), order: PathOrder::XThenY }
    }
}

/// Loop-norm discrepancies between split factors of the frame loop and the
/// factors integrated from the potentials.
#[derive(Debug, Clone)]
pub struct SplitCrossCheck {
    pub node: (usize, usize),
    pub x: f64,
    pub y: f64,
    /// Plus-first factor of `U(x, y)` against `U+(x)`.
    pub plus_error: f64,
    /// Minus-first factor of `U(x, y)` against `U-(y)`.
    pub minus_error: f64,
    /// On `y = 0`: the nonnegative minus-first factor against `U+(x) V0(x)`.
    pub v0_error: Option<f64>,
    /// Off `y = 0`: plus-first factors at `(x, y)` and `(x, 0)` compared.
    pub plus_independence: Option<f64>,
    /// Off `x = 0`: minus-first factors at `(x, y)` and `(0, y)` compared.
    pub minus_independence: Option<f64>,
    pub max_residual: f64,
    pub max_condition: f64,
}

impl SplitCrossCheck {
    pub fn max_error(&self) -> f64 {
        [Some(self.plus_error), Some(self.minus_error), self.v0_error, self.plus_independence, self.minus_independence]
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }
}

fn frame_loop(f: &AngleField, i: usize, j: usize, opts: &CrossCheckOptions) -> Result<SampledLoop> {
    let values = SampledLoop::sample_points(opts.samples)
        .into_par_iter()
        .map(|mu| frame_at_node_complex(f, mu, i, j, opts.order))
        .collect::<Result<Vec<Mat3C>>>()?;
    Ok(SampledLoop { values })
}

fn diff(a: &LaurentLoop, b: &LaurentLoop) -> f64 {
    loop_norm(&a.sub(b))
}

pub fn cross_check_split(f: &AngleField, i: usize, j: usize, opts: CrossCheckOptions) -> Result<SplitCrossCheck> {
    let g = f.grid;
    if i >= g.nx || j >= g.ny {
        return Err(Error::InvalidParameter(format!("node ({i}, {j}) outside {}x{} grid", g.nx, g.ny)));
    }
    let (i0, j0) = g.origin()?;
    let ex = eta_x(f)?;
    let ey = eta_y(f)?;
    let u_plus = sampled_factor(&ex, i, opts.samples)?;
    let u_minus = sampled_factor(&ey, j, opts.samples)?;

    let mut residual = 0.0_f64;
    let mut condition = 0.0_f64;
    let mut split = |i: usize, j: usize, dir: Direction| -> Result<Split> {
        let s = birkhoff_split_sampled(&frame_loop(f, i, j, &opts)?, dir, true, opts.split)?;
        residual = residual.max(s.residual);
        condition = condition.max(s.condition);
        Ok(s)
    };

    let plus = split(i, j, Direction::PlusFirst)?;
    let minus = split(i, j, Direction::MinusFirst)?;
    let plus_error = diff(&plus.factor1, &u_plus);
    let minus_error = diff(&minus.factor1, &u_minus);

    let v0_error = if j == j0 {
        let v0 = LaurentLoop::constant(v0_closed_form(f)?[i]);
        Some(diff(&minus.factor2, &multiply(&u_plus, &v0)))
    } else {
        None
    };
    let plus_independence = if j != j0 {
        Some(diff(&plus.factor1, &split(i, j0, Direction::PlusFirst)?.factor1))
    } else {
        None
    };
    let minus_independence = if i != i0 {
        Some(diff(&minus.factor1, &split(i0, j, Direction::MinusFirst)?.factor1))
    } else {
        None
    };

    Ok(SplitCrossCheck {
        node: (i, j),
        x: g.x(i),
        y: g.y(j),
        plus_error,
        minus_error,
        v0_error,
        plus_independence,
        minus_independence,
        max_residual: residual,
        max_condition: condition,
    })
}
