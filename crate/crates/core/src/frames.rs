//! Lax matrices, extended frames `U(x, y; lambda)` normalized at the origin,
//! the extended Maurer–Cartan form, and the structure equations (K).
//!
//! Frames solve `U^{-1} U_x = A`, `U^{-1} U_y = B` with
//!
//! ```text
//! A = [[0, -phi_x, 0], [phi_x, 0, lambda], [0, -lambda, 0]]
//! B = (1/lambda) [[0, 0, -sin phi], [0, 0, -cos phi], [sin phi, cos phi, 0]]
//! ```
//!
//! integrated with the grid step (fourth-order Magnus by default, RK4 on
//! request), first along `y = 0` and then along each column (or the other
//! way round).

use std::io::{Read as _, Write as _};
use std::path::Path;

use nalgebra::{ComplexField, Matrix2, Matrix3, SMatrix};
use rayon::prelude::*;

use crate::algebra::{e12, e13, e23, gauge_rotation, project_so3, project_su2, twist_p, Mat2C, Mat3, Mat3C, C64};
use crate::error::{Error, Result};
use crate::grid::{diff_x, diff_y, interp_line, GridSpec, ScalarField};
use crate::io::{fmt_f64, grid_header};
use crate::sinegordon::AngleField;

/// `(A, B)` of the Lax system at one point.
pub fn lax_matrices(phi: f64, phi_x: f64, lambda: f64) -> (Mat3, Mat3) {
    lax_generic(phi, phi_x, lambda)
}

fn lax_generic<T: ComplexField<RealField = f64> + Copy>(phi: f64, phi_x: f64, lambda: T) -> (Matrix3<T>, Matrix3<T>) {
    let r = T::from_real;
    let (s, c) = phi.sin_cos();
    let z = T::zero();
    let a = Matrix3::new(z, r(-phi_x), z, r(phi_x), z, lambda, z, -lambda, z);
    let inv = T::one() / lambda;
    let b = Matrix3::new(z, z, -inv * r(s), z, z, -inv * r(c), inv * r(s), inv * r(c), z);
    (a, b)
}

/// `(dA/dlambda, dB/dlambda)`.
fn lax_lambda_generic<T: ComplexField<RealField = f64> + Copy>(phi: f64, lambda: T) -> (Matrix3<T>, Matrix3<T>) {
    let (s, c) = phi.sin_cos();
    let inv2 = T::one() / (lambda * lambda);
    let da = e23().map(T::from_real);
    let db = (e13() * s + e23() * c).map(T::from_real) * inv2;
    (da, db)
}

/// `(P^{-1} P_x, P^{-1} P_y)` of the SU(2) Lax system.
pub fn su2_lax_matrices(phi: f64, phi_x: f64, lambda: f64) -> (Mat2C, Mat2C) {
    let mi2 = C64::new(0.0, -0.5);
    let a = Mat2C::new(C64::from(-phi_x), C64::from(lambda), C64::from(lambda), C64::from(phi_x)) * mi2;
    let e = C64::from_polar(1.0, phi);
    let b = Mat2C::new(C64::from(0.0), e.conj(), e, C64::from(0.0)) * C64::new(0.0, 0.5 / lambda);
    (a, b)
}

// ---------------------------------------------------------------------------
// Generic path integration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Fourth-order Magnus step `U <- U exp(Omega)`: exact for constant
    /// coefficients, keeps the group constraint, and commutes with the
    /// SU(2) -> SO(3) cover.
    #[default]
    Magnus4,
    /// Classical RK4 (followed by re-projection for real frames).
    Rk4,
}

/// States advanced by `U' = U G` for a generator `G` sampled along a line.
trait FlowState: Clone + Send + Sync {
    type Gen: Copy + Send + Sync;
    /// `self + sum c_i k_i`.
    fn lincomb(&self, terms: &[(f64, &Self)]) -> Self;
    fn velocity(&self, g: &Self::Gen) -> Self;
    /// One step of length `h` from generators at the start, middle and end.
    fn magnus(&self, g0: &Self::Gen, gm: &Self::Gen, g1: &Self::Gen, h: f64) -> Self;
    fn is_finite(&self) -> bool;
}

/// `Omega = h/6 (G0 + 4 Gm + G1) + h^2/12 [G0, G1]` for right-multiplied flows.
macro_rules! magnus_omega {
    ($t:ty, $g0:expr, $gm:expr, $g1:expr, $h:expr) => {{
        let r = <$t>::from_real;
        ($g0 + $gm * r(4.0) + $g1) * r($h / 6.0) + ($g0 * $g1 - $g1 * $g0) * r($h * $h / 12.0)
    }};
}

macro_rules! square_flow {
    ($mat:ident) => {
        impl<T: ComplexField<RealField = f64> + Copy> FlowState for $mat<T> {
            type Gen = $mat<T>;
            fn lincomb(&self, terms: &[(f64, &Self)]) -> Self {
                let mut out = *self;
                for (c, k) in terms {
                    out += *k * T::from_real(*c);
                }
                out
            }
            fn velocity(&self, g: &Self::Gen) -> Self {
                self * g
            }
            fn magnus(&self, g0: &Self::Gen, gm: &Self::Gen, g1: &Self::Gen, h: f64) -> Self {
                self * magnus_omega!(T, g0, gm, g1, h).exp()
            }
            fn is_finite(&self) -> bool {
                self.iter().all(|v| v.is_finite())
            }
        }
    };
}

square_flow!(Matrix3);
square_flow!(Matrix2);

/// `(U, dU/dlambda)` driven by `(G, dG/dlambda)`.
impl<T: ComplexField<RealField = f64> + Copy> FlowState for (Matrix3<T>, Matrix3<T>) {
    type Gen = (Matrix3<T>, Matrix3<T>);
    fn lincomb(&self, terms: &[(f64, &Self)]) -> Self {
        let mut out = *self;
        for (c, k) in terms {
            out.0 += k.0 * T::from_real(*c);
            out.1 += k.1 * T::from_real(*c);
        }
        out
    }
    fn velocity(&self, g: &Self::Gen) -> Self {
        (self.0 * g.0, self.1 * g.0 + self.0 * g.1)
    }
    fn magnus(&self, g0: &Self::Gen, gm: &Self::Gen, g1: &Self::Gen, h: f64) -> Self {
        let omega = magnus_omega!(T, g0.0, gm.0, g1.0, h);
        let r = T::from_real;
        let d_omega = (g0.1 + gm.1 * r(4.0) + g1.1) * r(h / 6.0)
            + (g0.1 * g1.0 - g1.0 * g0.1 + g0.0 * g1.1 - g1.1 * g0.0) * r(h * h / 12.0);
        // exp([[W, W'], [0, W]]) = [[exp W, d/dlambda exp W], [0, exp W]].
        let mut block = SMatrix::<T, 6, 6>::zeros();
        block.fixed_view_mut::<3, 3>(0, 0).copy_from(&omega);
        block.fixed_view_mut::<3, 3>(3, 3).copy_from(&omega);
        block.fixed_view_mut::<3, 3>(0, 3).copy_from(&d_omega);
        let e = block.exp();
        let step: Matrix3<T> = e.fixed_view::<3, 3>(0, 0).into_owned();
        let d_step: Matrix3<T> = e.fixed_view::<3, 3>(0, 3).into_owned();
        (self.0 * step, self.1 * step + self.0 * d_step)
    }
    fn is_finite(&self) -> bool {
        self.0.iter().chain(self.1.iter()).all(|v| v.is_finite())
    }
}

/// `(phi, phi_x)` along one grid line at nodes and at midpoints between nodes.
struct LineSamples {
    nodes: Vec<(f64, f64)>,
    mids: Vec<(f64, f64)>,
}

impl LineSamples {
    fn new(f: &AngleField, nodes: Vec<(f64, f64)>, exact_mid: impl Fn(usize) -> (f64, f64)) -> Self {
        let mids = match f.exact {
            Some(_) => (0..nodes.len() - 1).map(exact_mid).collect(),
            None => {
                let p: Vec<f64> = nodes.iter().map(|v| v.0).collect();
                let px: Vec<f64> = nodes.iter().map(|v| v.1).collect();
                (0..nodes.len() - 1)
                    .map(|k| {
                        let t = k as f64 + 0.5;
                        (interp_line(&p, 0.0, 1.0, t), interp_line(&px, 0.0, 1.0, t))
                    })
                    .collect()
            }
        };
        Self { nodes, mids }
    }

    fn row(f: &AngleField, j: usize) -> Self {
        let g = f.grid;
        let nodes = (0..g.nx).map(|i| (f.at(i, j), f.phi_x_at(i, j))).collect();
        Self::new(f, nodes, |i| {
            let e = f.exact.expect("closed form present");
            let (x, y) = (g.x(i) + 0.5 * g.hx, g.y(j));
            (e.phi(x, y), e.phi_x(x, y))
        })
    }

    fn col(f: &AngleField, i: usize) -> Self {
        let g = f.grid;
        let nodes = (0..g.ny).map(|j| (f.at(i, j), f.phi_x_at(i, j))).collect();
        Self::new(f, nodes, |j| {
            let e = f.exact.expect("closed form present");
            let (x, y) = (g.x(i), g.y(j) + 0.5 * g.hy);
            (e.phi(x, y), e.phi_x(x, y))
        })
    }

    /// Samples at a position measured in node units; only nodes and half-nodes occur.
    fn at(&self, pos: f64) -> (f64, f64) {
        let k = pos.floor();
        let frac = pos - k;
        let k = k as usize;
        if frac < 0.25 {
            self.nodes[k]
        } else if frac > 0.75 {
            self.nodes[k + 1]
        } else {
            self.mids[k]
        }
    }
}

/// Generator sampler plus step rule for one axis.
struct Stepper<'a, S: FlowState, F: Fn((f64, f64)) -> S::Gen> {
    gen: &'a F,
    integrator: Integrator,
    post: &'a (dyn Fn(S) -> S + Sync),
}

impl<S: FlowState, F: Fn((f64, f64)) -> S::Gen> Stepper<'_, S, F> {
    fn step(&self, s: &S, line: &LineSamples, pos: f64, dir: f64, h: f64) -> S {
        let g0 = (self.gen)(line.at(pos));
        let gm = (self.gen)(line.at(pos + dir / 2.0));
        let g1 = (self.gen)(line.at(pos + dir));
        let hs = h * dir;
        let next = match self.integrator {
            Integrator::Magnus4 => s.magnus(&g0, &gm, &g1, hs),
            Integrator::Rk4 => {
                let k1 = s.velocity(&g0);
                let k2 = s.lincomb(&[(hs / 2.0, &k1)]).velocity(&gm);
                let k3 = s.lincomb(&[(hs / 2.0, &k2)]).velocity(&gm);
                let k4 = s.lincomb(&[(hs, &k3)]).velocity(&g1);
                s.lincomb(&[(hs / 6.0, &k1), (hs / 3.0, &k2), (hs / 3.0, &k3), (hs / 6.0, &k4)])
            }
        };
        (self.post)(next)
    }

    /// Integrates along one line in both directions from node `from`.
    fn sweep(&self, start: S, from: usize, h: f64, line: &LineSamples) -> Result<Vec<S>> {
        let n = line.nodes.len();
        let mut out: Vec<Option<S>> = vec![None; n];
        out[from] = Some(start.clone());
        let mut cur = start.clone();
        for k in from..n - 1 {
            cur = self.step(&cur, line, k as f64, 1.0, h);
            if !cur.is_finite() {
                return Err(Error::StepFailure(format!("non-finite state after node {k}")));
            }
            out[k + 1] = Some(cur.clone());
        }
        cur = start;
        for k in (1..=from).rev() {
            cur = self.step(&cur, line, k as f64, -1.0, h);
            if !cur.is_finite() {
                return Err(Error::StepFailure(format!("non-finite state before node {k}")));
            }
            out[k - 1] = Some(cur.clone());
        }
        Ok(out.into_iter().map(|s| s.expect("every node visited")).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathOrder {
    /// Along `y = 0` first, then along each column.
    #[default]
    XThenY,
    /// Along `x = 0` first, then along each row.
    YThenX,
}

fn integrate_paths<S: FlowState>(
    f: &AngleField,
    order: PathOrder,
    integrator: Integrator,
    init: S,
    gen_x: impl Fn((f64, f64)) -> S::Gen + Sync,
    gen_y: impl Fn((f64, f64)) -> S::Gen + Sync,
    post: impl Fn(S) -> S + Sync,
) -> Result<Vec<S>> {
    let g = f.grid;
    let (i0, j0) = g.origin()?;
    let sx = Stepper { gen: &gen_x, integrator, post: &post };
    let sy = Stepper { gen: &gen_y, integrator, post: &post };
    let mut out: Vec<Option<S>> = vec![None; g.len()];
    match order {
        PathOrder::XThenY => {
            let base = sx.sweep(init, i0, g.hx, &LineSamples::row(f, j0))?;
            let cols: Vec<Vec<S>> = base
                .into_par_iter()
                .enumerate()
                .map(|(i, s)| sy.sweep(s, j0, g.hy, &LineSamples::col(f, i)))
                .collect::<Result<_>>()?;
            for (i, col) in cols.into_iter().enumerate() {
                for (j, s) in col.into_iter().enumerate() {
                    out[g.index(i, j)] = Some(s);
                }
            }
        }
        PathOrder::YThenX => {
            let base = sy.sweep(init, j0, g.hy, &LineSamples::col(f, i0))?;
            let rows: Vec<Vec<S>> = base
                .into_par_iter()
                .enumerate()
                .map(|(j, s)| sx.sweep(s, i0, g.hx, &LineSamples::row(f, j)))
                .collect::<Result<_>>()?;
            for (j, row) in rows.into_iter().enumerate() {
                for (i, s) in row.into_iter().enumerate() {
                    out[g.index(i, j)] = Some(s);
                }
            }
        }
    }
    Ok(out.into_iter().map(|s| s.expect("every node visited")).collect())
}

// ---------------------------------------------------------------------------
// Extended frames

/// `U(x, y; lambda)` on a grid for real positive `lambda`.
#[derive(Debug, Clone)]
pub struct ExtendedFrame {
    pub grid: GridSpec,
    pub lambda: f64,
    pub u: Vec<Mat3>,
    pub du_dlambda: Option<Vec<Mat3>>,
}

#[derive(Debug, Clone, Copy)]
pub struct FrameOptions {
    pub order: PathOrder,
    pub integrator: Integrator,
    pub with_lambda_derivative: bool,
    /// Frame at the origin; the identity normalizes `U(0, 0) = I`.
    pub initial: Mat3,
    /// Polar re-projection onto SO(3) after each step.
    pub project: bool,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self {
            order: PathOrder::XThenY,
            integrator: Integrator::Magnus4,
            with_lambda_derivative: false,
            initial: Mat3::identity(),
            project: true,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("spectral parameter must be positive, got {lambda}")))
    }
}

pub fn integrate_frame(f: &AngleField, lambda: f64, with_lambda_derivative: bool) -> Result<ExtendedFrame> {
    integrate_frame_with(f, lambda, &FrameOptions { with_lambda_derivative, ..Default::default() })
}

pub fn integrate_frame_with(f: &AngleField, lambda: f64, opts: &FrameOptions) -> Result<ExtendedFrame> {
    check_lambda(lambda)?;
    let project = opts.project;
    if opts.with_lambda_derivative {
        let states = integrate_paths(
            f,
            opts.order,
            opts.integrator,
            (opts.initial, Mat3::zeros()),
            |(phi, phi_x)| (lax_generic(phi, phi_x, lambda).0, lax_lambda_generic(phi, lambda).0),
            |(phi, _)| (lax_generic(phi, 0.0, lambda).1, lax_lambda_generic(phi, lambda).1),
            |s: (Mat3, Mat3)| if project { (project_so3(&s.0), s.1) } else { s },
        )?;
        let (u, du) = states.into_iter().unzip();
        Ok(ExtendedFrame { grid: f.grid, lambda, u, du_dlambda: Some(du) })
    } else {
        let u = integrate_paths(
            f,
            opts.order,
            opts.integrator,
            opts.initial,
            |(phi, phi_x)| lax_generic(phi, phi_x, lambda).0,
            |(phi, _)| lax_generic(phi, 0.0, lambda).1,
            |s: Mat3| if project { project_so3(&s) } else { s },
        )?;
        Ok(ExtendedFrame { grid: f.grid, lambda, u, du_dlambda: None })
    }
}

/// Frame at a complex spectral parameter (no re-projection; the result is
/// complex orthogonal, `U^T U = I`).
pub fn integrate_frame_complex(f: &AngleField, lambda: C64, order: PathOrder) -> Result<Vec<Mat3C>> {
    if lambda.norm() == 0.0 {
        return Err(Error::ZeroSpectralParameter);
    }
    integrate_paths(
        f,
        order,
        Integrator::Magnus4,
        Mat3C::identity(),
        |(phi, phi_x)| lax_generic(phi, phi_x, lambda).0,
        |(phi, _)| lax_generic(phi, 0.0, lambda).1,
        |s: Mat3C| s,
    )
}

/// `(phi, phi_x)` pairs along one grid line.
pub(crate) type LineData = Vec<(f64, f64)>;

/// `(phi, phi_x)` at the nodes and midpoints of row `j` (`along_x`) or column `j`.
pub(crate) fn line_samples(f: &AngleField, along_x: bool, j: usize) -> (LineData, LineData) {
    let s = if along_x { LineSamples::row(f, j) } else { LineSamples::col(f, j) };
    (s.nodes, s.mids)
}

/// Frame at one node for a complex spectral parameter, integrating only along
/// the path through that node.
pub fn frame_at_node_complex(f: &AngleField, lambda: C64, i: usize, j: usize, order: PathOrder) -> Result<Mat3C> {
    if lambda.norm() == 0.0 {
        return Err(Error::ZeroSpectralParameter);
    }
    let g = f.grid;
    if i >= g.nx || j >= g.ny {
        return Err(Error::InvalidParameter(format!("node ({i}, {j}) outside {}x{} grid", g.nx, g.ny)));
    }
    let (i0, j0) = g.origin()?;
    let gen_x = |(phi, phi_x): (f64, f64)| lax_generic(phi, phi_x, lambda).0;
    let gen_y = |(phi, _): (f64, f64)| lax_generic(phi, 0.0, lambda).1;
    let post = |s: Mat3C| s;
    let sx = Stepper { gen: &gen_x, integrator: Integrator::Magnus4, post: &post };
    let sy = Stepper { gen: &gen_y, integrator: Integrator::Magnus4, post: &post };
    Ok(match order {
        PathOrder::XThenY => {
            let base = sx.sweep(Mat3C::identity(), i0, g.hx, &LineSamples::row(f, j0))?;
            sy.sweep(base[i], j0, g.hy, &LineSamples::col(f, i))?[j]
        }
        PathOrder::YThenX => {
            let base = sy.sweep(Mat3C::identity(), j0, g.hy, &LineSamples::col(f, i0))?;
            sx.sweep(base[j], i0, g.hx, &LineSamples::row(f, j))?[i]
        }
    })
}

/// Solves `V' = V G` along one line from node `from` (where `V = init`), given
/// the generator at every node and at every midpoint between nodes.
pub fn integrate_line<T: ComplexField<RealField = f64> + Copy>(
    nodes: &[Matrix3<T>],
    mids: &[Matrix3<T>],
    from: usize,
    h: f64,
    init: Matrix3<T>,
) -> Result<Vec<Matrix3<T>>> {
    if nodes.is_empty() || mids.len() + 1 != nodes.len() || from >= nodes.len() {
        return Err(Error::ShapeMismatch("line generators need n nodes and n - 1 midpoints".into()));
    }
    let n = nodes.len();
    let mut out = vec![init; n];
    for k in from..n - 1 {
        out[k + 1] = out[k].magnus(&nodes[k], &mids[k], &nodes[k + 1], h);
        if !FlowState::is_finite(&out[k + 1]) {
            return Err(Error::StepFailure(format!("non-finite state after node {k}")));
        }
    }
    for k in (1..=from).rev() {
        out[k - 1] = out[k].magnus(&nodes[k], &mids[k - 1], &nodes[k - 1], -h);
        if !FlowState::is_finite(&out[k - 1]) {
            return Err(Error::StepFailure(format!("non-finite state before node {k}")));
        }
    }
    Ok(out)
}

impl ExtendedFrame {
    pub fn at(&self, i: usize, j: usize) -> &Mat3 {
        &self.u[self.grid.index(i, j)]
    }

    /// `sup |U^T U - I|` (Frobenius) over the grid.
    pub fn orthogonality_defect(&self) -> f64 {
        self.u.iter().map(crate::algebra::orthogonality_defect).fold(0.0, f64::max)
    }

    pub fn det_defect(&self) -> f64 {
        self.u.iter().map(|m| (m.determinant() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Pointwise `U R(theta)^{-1}`; the third column is unchanged.
    pub fn gauge(&self, theta: &[f64]) -> Result<ExtendedFrame> {
        gauge(self, theta)
    }

    /// `(-U^{-1} U_x, -U^{-1} U_y)` by finite differences of the sampled frame.
    pub fn maurer_cartan_from_samples(&self) -> (Vec<Mat3>, Vec<Mat3>) {
        let ux = diff_x(&self.grid, &self.u);
        let uy = diff_y(&self.grid, &self.u);
        let p = self.u.iter().zip(&ux).map(|(u, d)| -(u.transpose() * d)).collect();
        let q = self.u.iter().zip(&uy).map(|(u, d)| -(u.transpose() * d)).collect();
        (p, q)
    }

    fn header(&self) -> String {
        format!("{} {}", grid_header(&self.grid), self.lambda)
    }

    /// CSV dump: `# nx ny x0 y0 hx hy lambda`, then one line of 9 row-major entries per node.
    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for m in &self.u {
            let row: Vec<String> = (0..9).map(|e| fmt_f64(m[(e / 3, e % 3)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Binary dump: magic `PSFRAME3`, `nx ny` as u64 LE, `x0 y0 hx hy lambda` as
    /// f64 LE, then 9 row-major f64 LE per node.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(FRAME_MAGIC)?;
        w.write_all(&(self.grid.nx as u64).to_le_bytes())?;
        w.write_all(&(self.grid.ny as u64).to_le_bytes())?;
        for v in [self.grid.x0, self.grid.y0, self.grid.hx, self.grid.hy, self.lambda] {
            w.write_all(&v.to_le_bytes())?;
        }
        for m in &self.u {
            for e in 0..9 {
                w.write_all(&m[(e / 3, e % 3)].to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 64 || &bytes[..8] != FRAME_MAGIC {
            return Err(Error::Parse("not a frame dump".into()));
        }
        let word = |k: usize| -> [u8; 8] { bytes[8 + 8 * k..16 + 8 * k].try_into().expect("8 bytes") };
        let nx = u64::from_le_bytes(word(0)) as usize;
        let ny = u64::from_le_bytes(word(1)) as usize;
        let real = |k: usize| f64::from_le_bytes(word(k));
        let grid = GridSpec::new(real(2), real(3), nx, ny, real(4), real(5))?;
        let lambda = real(6);
        let expected = 8 + 8 * 7 + 72 * grid.len();
        if bytes.len() != expected {
            return Err(Error::Parse(format!("frame dump has {} bytes, expected {expected}", bytes.len())));
        }
        let u = (0..grid.len())
            .map(|n| Mat3::from_row_slice(&(0..9).map(|e| real(7 + 9 * n + e)).collect::<Vec<_>>()))
            .collect();
        Ok(Self { grid, lambda, u, du_dlambda: None })
    }
}

const FRAME_MAGIC: &[u8; 8] = b"PSFRAME3";

pub fn gauge(frame: &ExtendedFrame, theta: &[f64]) -> Result<ExtendedFrame> {
    if theta.len() != frame.grid.len() {
        return Err(Error::ShapeMismatch("gauge angle must be sampled on the frame grid".into()));
    }
    let u = frame.u.iter().zip(theta).map(|(u, t)| u * gauge_rotation(*t).transpose()).collect();
    let du_dlambda = frame
        .du_dlambda
        .as_ref()
        .map(|d| d.iter().zip(theta).map(|(m, t)| m * gauge_rotation(*t).transpose()).collect());
    Ok(ExtendedFrame { grid: frame.grid, lambda: frame.lambda, u, du_dlambda })
}

/// SU(2) frame `P` with `P(0, 0) = I`.
pub fn su2_frame(f: &AngleField, lambda: f64) -> Result<Vec<Mat2C>> {
    su2_frame_with(f, lambda, PathOrder::XThenY)
}

pub fn su2_frame_with(f: &AngleField, lambda: f64, order: PathOrder) -> Result<Vec<Mat2C>> {
    check_lambda(lambda)?;
    integrate_paths(
        f,
        order,
        Integrator::Magnus4,
        Mat2C::identity(),
        |(phi, phi_x)| su2_lax_matrices(phi, phi_x, lambda).0,
        |(phi, _)| su2_lax_matrices(phi, 0.0, lambda).1,
        |s: Mat2C| project_su2(&s),
    )
}

/// CSV dump of an SU(2) frame: header `# nx ny x0 y0 hx hy lambda`, then per node
/// `re, im` of the four entries row-major (8 values).
pub fn su2_frame_csv(grid: &GridSpec, lambda: f64, p: &[Mat2C]) -> String {
    let mut out = format!("{} {}\n", grid_header(grid), lambda);
    for m in p {
        let row: Vec<String> = (0..4)
            .flat_map(|e| {
                let z = m[(e / 2, e % 2)];
                [fmt_f64(z.re), fmt_f64(z.im)]
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Residuals of the integrability conditions

/// Frobenius norm of `A_y - B_x - [A, B]` per node. Uses the closed-form
/// derivatives when the field carries them, finite differences otherwise.
pub fn compatibility_residual(f: &AngleField, lambda: f64) -> ScalarField {
    let g = f.grid;
    let pairs: Vec<(Mat3, Mat3)> =
        f.phi.iter().zip(&f.dphi_dx).map(|(&p, &px)| lax_matrices(p, px, lambda)).collect();
    let values: Vec<f64> = match f.exact {
        Some(_) => {
            let pxy = f.phi_xy();
            (0..g.len())
                .map(|n| {
                    let (a, b) = pairs[n];
                    let (s, c) = f.phi[n].sin_cos();
                    let a_y = e12() * (-pxy[n]);
                    let b_x = (e13() * (-c) + e23() * s) * (f.dphi_dx[n] / lambda);
                    (a_y - b_x - (a * b - b * a)).norm()
                })
                .collect()
        }
        None => {
            let a_field: Vec<Mat3> = pairs.iter().map(|p| p.0).collect();
            let b_field: Vec<Mat3> = pairs.iter().map(|p| p.1).collect();
            let a_y = diff_y(&g, &a_field);
            let b_x = diff_x(&g, &b_field);
            (0..g.len())
                .map(|n| {
                    let (a, b) = pairs[n];
                    (a_y[n] - b_x[n] - (a * b - b * a)).norm()
                })
                .collect()
        }
    };
    ScalarField::new(g, values)
}

/// Coefficient fields of `omega = -U^{-1} dU = lambda^{-1} alpha_{-1} + alpha_0 + lambda alpha_1`.
#[derive(Debug, Clone)]
pub struct MaurerCartanForm {
    pub grid: GridSpec,
    /// Coefficient of `lambda^{-1} dy`.
    pub alpha_m1: Vec<Mat3>,
    /// Coefficient of `dx` (the `dy` part of `alpha_0` vanishes).
    pub alpha0_prime: Vec<Mat3>,
    /// Coefficient of `lambda dx`.
    pub alpha1: Vec<Mat3>,
}

pub fn maurer_cartan(f: &AngleField) -> MaurerCartanForm {
    let alpha_m1 = f
        .phi
        .iter()
        .map(|p| {
            let (s, c) = p.sin_cos();
            e13() * s + e23() * c
        })
        .collect();
    let alpha0_prime = f.dphi_dx.iter().map(|px| e12() * *px).collect();
    let alpha1 = vec![-e23(); f.grid.len()];
    MaurerCartanForm { grid: f.grid, alpha_m1, alpha0_prime, alpha1 }
}

impl MaurerCartanForm {
    /// `(P, Q)` with `omega = P dx + Q dy` at spectral parameter `lambda`.
    pub fn assemble(&self, lambda: f64) -> (Vec<Mat3>, Vec<Mat3>) {
        let p = self.alpha0_prime.iter().zip(&self.alpha1).map(|(a0, a1)| a0 + a1 * lambda).collect();
        let q = self.alpha_m1.iter().map(|a| a / lambda).collect();
        (p, q)
    }
}

#[derive(Debug, Clone)]
pub struct FlatnessResidual {
    /// Frobenius norm of `d omega - omega ^ omega` per node.
    pub norm: ScalarField,
    /// Its (1,2) entry, which equals `sin phi - phi_xy`.
    pub entry12: ScalarField,
}

/// `d omega - omega ^ omega = (Q_x - P_y) - [P, Q]` with finite differences.
pub fn flatness_residual(form: &MaurerCartanForm, lambda: f64) -> FlatnessResidual {
    let g = form.grid;
    let (p, q) = form.assemble(lambda);
    let q_x = diff_x(&g, &q);
    let p_y = diff_y(&g, &p);
    let res: Vec<Mat3> = (0..g.len()).map(|n| (q_x[n] - p_y[n]) - (p[n] * q[n] - q[n] * p[n])).collect();
    FlatnessResidual {
        norm: ScalarField::new(g, res.iter().map(|m| m.norm()).collect()),
        entry12: ScalarField::new(g, res.iter().map(|m| m[(0, 1)]).collect()),
    }
}

// ---------------------------------------------------------------------------
// The five 1-forms and conditions (K)

/// The 1-form `p dx + q dy` sampled on a grid.
#[derive(Debug, Clone)]
pub struct FormField {
    pub grid: GridSpec,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub label: &'static str,
}

impl FormField {
    fn new(grid: GridSpec, label: &'static str, p: Vec<f64>, q: Vec<f64>) -> Self {
        Self { grid, p, q, label }
    }

    /// Coefficient of `dx ^ dy` in `d(p dx + q dy)`.
    pub fn d(&self) -> Vec<f64> {
        let qx = diff_x(&self.grid, &self.q);
        let py = diff_y(&self.grid, &self.p);
        qx.iter().zip(&py).map(|(a, b)| a - b).collect()
    }

    /// Coefficient of `dx ^ dy` in `self ^ other`.
    pub fn wedge(&self, other: &FormField) -> Vec<f64> {
        (0..self.p.len()).map(|n| self.p[n] * other.q[n] - self.q[n] * other.p[n]).collect()
    }

    fn combine(&self, a: f64, other: &FormField, b: f64, label: &'static str) -> FormField {
        let lin = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect();
        FormField::new(self.grid, label, lin(&self.p, &other.p), lin(&self.q, &other.q))
    }
}

#[derive(Debug, Clone)]
pub struct LambdaForms {
    pub w1: FormField,
    pub w2: FormField,
    pub w12: FormField,
    pub w13: FormField,
    pub w23: FormField,
}

/// The five forms of the associated family at `lambda`, in closed form.
pub fn lambda_forms(f: &AngleField, lambda: f64) -> LambdaForms {
    let g = f.grid;
    let inv = 1.0 / lambda;
    let half = |h: fn(f64) -> f64| f.phi.iter().map(move |p| h(p / 2.0));
    let cos: Vec<f64> = half(f64::cos).collect();
    let sin: Vec<f64> = half(f64::sin).collect();
    let scale = |v: &[f64], k: f64| v.iter().map(|x| x * k).collect::<Vec<_>>();
    LambdaForms {
        w1: FormField::new(g, "omega1", scale(&cos, inv), scale(&cos, lambda)),
        w2: FormField::new(g, "omega2", scale(&sin, inv), scale(&sin, -lambda)),
        w12: FormField::new(g, "omega12", scale(&f.dphi_dx, 0.5), scale(&f.dphi_dy, -0.5)),
        w13: FormField::new(g, "omega13", scale(&sin, inv), scale(&sin, lambda)),
        w23: FormField::new(g, "omega23", scale(&cos, -inv), scale(&cos, lambda)),
    }
}

/// The same forms obtained by mixing the `lambda = 1` forms with
/// coefficients `(lambda +- 1/lambda) / 2`.
pub fn lambda_forms_from_base(base: &LambdaForms, lambda: f64) -> LambdaForms {
    let cp = 0.5 * (lambda + 1.0 / lambda);
    let cm = 0.5 * (lambda - 1.0 / lambda);
    LambdaForms {
        w1: base.w1.combine(cp, &base.w23, cm, "omega1"),
        w2: base.w2.combine(cp, &base.w13, -cm, "omega2"),
        w12: base.w12.clone(),
        w13: base.w2.combine(-cm, &base.w13, cp, "omega13"),
        w23: base.w1.combine(cm, &base.w23, cp, "omega23"),
    }
}

/// Residual grids of the seven structure equations, labelled `a` to `g`.
#[derive(Debug, Clone)]
pub struct ConditionsK {
    pub residuals: [ScalarField; 7],
}

impl ConditionsK {
    pub const LABELS: [&'static str; 7] = ["a", "b", "c", "d", "e", "f", "g"];

    pub fn sups(&self) -> [f64; 7] {
        std::array::from_fn(|k| self.residuals[k].sup())
    }

    pub fn sups_where(&self, mask: &[bool]) -> [f64; 7] {
        std::array::from_fn(|k| self.residuals[k].sup_where(mask))
    }
}

pub fn check_conditions_k(forms: &LambdaForms) -> Result<ConditionsK> {
    let LambdaForms { w1, w2, w12, w13, w23 } = forms;
    let g = w1.grid;
    if [w2, w12, w13, w23].iter().any(|w| w.grid != g) {
        return Err(Error::ShapeMismatch("forms must share one grid".into()));
    }
    let diff = |a: Vec<f64>, b: Vec<f64>| ScalarField::new(g, a.iter().zip(&b).map(|(x, y)| x - y).collect());
    let sum = |a: Vec<f64>, b: Vec<f64>| ScalarField::new(g, a.iter().zip(&b).map(|(x, y)| x + y).collect());
    let neg = |a: Vec<f64>| a.into_iter().map(|v| -v).collect::<Vec<_>>();
    Ok(ConditionsK {
        residuals: [
            diff(w1.d(), w12.wedge(w2)),
            diff(w2.d(), w1.wedge(w12)),
            diff(w12.d(), neg(w13.wedge(w23))),
            diff(w13.d(), w12.wedge(w23)),
            diff(w23.d(), w13.wedge(w12)),
            sum(w1.wedge(w13), w2.wedge(w23)),
            sum(w1.wedge(w2), w13.wedge(w23)),
        ],
    })
}

/// Largest deviation from `U(-lambda) = P U(lambda) P^{-1}` over the grid.
pub fn twist_defect(f: &AngleField, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let plus = integrate_frame_complex(f, C64::from(lambda), PathOrder::XThenY)?;
    let minus = integrate_frame_complex(f, C64::from(-lambda), PathOrder::XThenY)?;
    let p = crate::algebra::to_complex(&twist_p());
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(a, b)| (b - p * a * p).map(|z| z.norm()).amax())
        .fold(0.0, f64::max))
}
