//! Sym reconstruction `psi = unhat(lambda dU/dlambda U^{-1})`, fundamental
//! forms and curvatures by finite differences, the Gauss map and its
//! harmonicity, and the associated family.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::algebra::{e12, unhat_with_tol, Vec3};
use crate::error::{Error, Result};
use crate::frames::{integrate_frame_with, ExtendedFrame, FrameOptions};
use crate::grid::{diff_x, diff_y, GridSpec, ScalarField};
use crate::io::fmt_f64;
use crate::sinegordon::AngleField;

/// Skewness tolerance for the Sym matrix; larger defects mean the frame
/// integration went wrong.
pub const SYM_SKEW_TOL: f64 = 1e-6;

/// Nodes with `EG - F^2` below this are treated as degenerate.
pub const DEGENERATE_METRIC: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Immersion {
    pub grid: GridSpec,
    pub lambda: f64,
    pub points: Vec<Vec3>,
}

impl Immersion {
    pub fn at(&self, i: usize, j: usize) -> Vec3 {
        self.points[self.grid.index(i, j)]
    }

    pub fn rotated(&self, r: &crate::algebra::Mat3) -> Immersion {
        Immersion { points: self.points.iter().map(|p| r * p).collect(), ..self.clone() }
    }
}

pub fn sym_immersion(f: &AngleField, lambda: f64) -> Result<Immersion> {
    let frame = integrate_frame_with(f, lambda, &FrameOptions { with_lambda_derivative: true, ..Default::default() })?;
    sym_from_frame(&frame)
}

/// Sym formula on a frame carrying its lambda-derivative.
pub fn sym_from_frame(frame: &ExtendedFrame) -> Result<Immersion> {
    let du = frame
        .du_dlambda
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("Sym formula needs the lambda-derivative of the frame".into()))?;
    let points = frame
        .u
        .iter()
        .zip(du)
        .map(|(u, w)| unhat_with_tol(&(w * u.transpose() * frame.lambda), SYM_SKEW_TOL))
        .collect::<Result<_>>()?;
    Ok(Immersion { grid: frame.grid, lambda: frame.lambda, points })
}

#[derive(Debug, Clone)]
pub struct SurfaceGeometry {
    pub grid: GridSpec,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub l: Vec<f64>,
    pub m: Vec<f64>,
    pub n2: Vec<f64>,
    /// NaN where the metric degenerates (likewise `h`, `k1`, `k2`).
    pub k: Vec<f64>,
    pub h: Vec<f64>,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub metric_a: Vec<f64>,
    pub metric_b: Vec<f64>,
    /// Unit normal `psi_x x psi_y / |psi_x x psi_y|`.
    pub normal: Vec<Vec3>,
    /// True where `EG - F^2 > DEGENERATE_METRIC`.
    pub nondegenerate: Vec<bool>,
}

impl SurfaceGeometry {
    pub fn field(&self, values: &[f64]) -> ScalarField {
        ScalarField::new(self.grid, values.to_vec())
    }

    /// Cosine of the angle between `psi_x` and `psi_y`.
    pub fn cos_angle(&self) -> Vec<f64> {
        (0..self.e.len()).map(|n| self.f[n] / (self.e[n] * self.g[n]).sqrt()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,x,y,E,F,G,L,M,N2,K,H\n");
        let g = &self.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let n = g.index(i, j);
                let vals = [g.x(i), g.y(j), self.e[n], self.f[n], self.g[n], self.l[n], self.m[n], self.n2[n], self.k[n], self.h[n]];
                let row: Vec<String> = vals.iter().map(|v| fmt_f64(*v)).collect();
                let _ = writeln!(out, "{i},{j},{}", row.join(","));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn require_stencil(grid: &GridSpec) -> Result<()> {
    if grid.nx < 5 || grid.ny < 5 {
        return Err(Error::InvalidGrid(format!("need at least 5x5 nodes, got {}x{}", grid.nx, grid.ny)));
    }
    Ok(())
}

pub fn fundamental_forms(s: &Immersion) -> Result<SurfaceGeometry> {
    let grid = s.grid;
    require_stencil(&grid)?;
    let px = diff_x(&grid, &s.points);
    let py = diff_y(&grid, &s.points);
    let pxx = diff_x(&grid, &px);
    let pxy = diff_y(&grid, &px);
    let pyy = diff_y(&grid, &py);
    let n = grid.len();
    let mut geo = SurfaceGeometry {
        grid,
        e: vec![0.0; n],
        f: vec![0.0; n],
        g: vec![0.0; n],
        l: vec![0.0; n],
        m: vec![0.0; n],
        n2: vec![0.0; n],
        k: vec![f64::NAN; n],
        h: vec![f64::NAN; n],
        k1: vec![f64::NAN; n],
        k2: vec![f64::NAN; n],
        metric_a: vec![0.0; n],
        metric_b: vec![0.0; n],
        normal: vec![Vec3::zeros(); n],
        nondegenerate: vec![false; n],
    };
    for k in 0..n {
        let (e, f, g) = (px[k].dot(&px[k]), px[k].dot(&py[k]), py[k].dot(&py[k]));
        let cross = px[k].cross(&py[k]);
        let normal = cross.try_normalize(0.0).unwrap_or_else(Vec3::zeros);
        let (l, m, n2) = (pxx[k].dot(&normal), pxy[k].dot(&normal), pyy[k].dot(&normal));
        let det = e * g - f * f;
        geo.e[k] = e;
        geo.f[k] = f;
        geo.g[k] = g;
        geo.l[k] = l;
        geo.m[k] = m;
        geo.n2[k] = n2;
        geo.metric_a[k] = e.sqrt();
        geo.metric_b[k] = g.sqrt();
        geo.normal[k] = normal;
        if det > DEGENERATE_METRIC {
            let curv = (l * n2 - m * m) / det;
            let mean = (e * n2 - 2.0 * f * m + g * l) / (2.0 * det);
            let disc = (mean * mean - curv).max(0.0).sqrt();
            geo.nondegenerate[k] = true;
            geo.k[k] = curv;
            geo.h[k] = mean;
            geo.k1[k] = mean + disc;
            geo.k2[k] = mean - disc;
        }
    }
    Ok(geo)
}

/// `(tan(phi/2), -cot(phi/2))`.
pub fn principal_curvatures(phi: f64) -> Result<(f64, f64)> {
    let s = phi.sin();
    if s.abs() < 1e-12 {
        return Err(Error::SingularAngle { phi });
    }
    let t = (phi / 2.0).tan();
    Ok((t, -1.0 / t))
}

/// Third column of the frame at each node.
pub fn gauss_map(frame: &ExtendedFrame) -> Vec<Vec3> {
    frame.u.iter().map(|u| u.column(2).into_owned()).collect()
}

/// `unhat(U E12 U^{-1})`; under the crate's conventions this is `-N`.
pub fn adjoint_orbit_normal(frame: &ExtendedFrame) -> Vec<Vec3> {
    frame
        .u
        .iter()
        .map(|u| {
            let s = u * e12() * u.transpose();
            Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)])
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct HarmonicityReport {
    /// `<N_xy, N>`.
    pub q: ScalarField,
    /// `|N_xy - q N|`.
    pub tangential_residual: ScalarField,
    pub norm_nx: ScalarField,
    pub norm_ny: ScalarField,
    /// `| |N_x| - A |` and `| |N_y| - B |`.
    pub metric_gap_a: ScalarField,
    pub metric_gap_b: ScalarField,
}

pub fn harmonicity_check(normals: &[Vec3], geom: &SurfaceGeometry) -> Result<HarmonicityReport> {
    let grid = geom.grid;
    require_stencil(&grid)?;
    if normals.len() != grid.len() {
        return Err(Error::ShapeMismatch("normal field does not match the geometry grid".into()));
    }
    let nx = diff_x(&grid, normals);
    let ny = diff_y(&grid, normals);
    let nxy = diff_y(&grid, &nx);
    let q: Vec<f64> = (0..grid.len()).map(|k| nxy[k].dot(&normals[k])).collect();
    let tangential = (0..grid.len()).map(|k| (nxy[k] - normals[k] * q[k]).norm()).collect();
    let norm_nx: Vec<f64> = nx.iter().map(|v| v.norm()).collect();
    let norm_ny: Vec<f64> = ny.iter().map(|v| v.norm()).collect();
    let gap = |a: &[f64], b: &[f64]| ScalarField::new(grid, a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect());
    Ok(HarmonicityReport {
        metric_gap_a: gap(&norm_nx, &geom.metric_a),
        metric_gap_b: gap(&norm_ny, &geom.metric_b),
        q: ScalarField::new(grid, q),
        tangential_residual: ScalarField::new(grid, tangential),
        norm_nx: ScalarField::new(grid, norm_nx),
        norm_ny: ScalarField::new(grid, norm_ny),
    })
}

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub lambda: f64,
    pub immersion: Immersion,
    pub geometry: SurfaceGeometry,
}

#[derive(Debug, Clone)]
pub struct FamilyReport {
    pub members: Vec<FamilyMember>,
    /// Largest `|M^lambda - M^1|` over members and masked nodes.
    pub max_second_form_deviation: f64,
    /// Largest `|cos(angle(psi_x, psi_y)) - cos(phi)|` over members and masked nodes.
    pub max_angle_deviation: f64,
    /// Largest `|A - lambda|` and `|B - 1/lambda|`.
    pub max_metric_deviation: f64,
}

/// Sym immersions and geometry for each `lambda`. Statistics use `mask`
/// (all nodes when `None`).
pub fn associated_family(f: &AngleField, lambdas: &[f64], mask: Option<&[bool]>) -> Result<FamilyReport> {
    if let Some(bad) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidParameter(format!("spectral parameter must be positive, got {bad}")));
    }
    let build = |lambda: f64| -> Result<FamilyMember> {
        let immersion = sym_immersion(f, lambda)?;
        let geometry = fundamental_forms(&immersion)?;
        Ok(FamilyMember { lambda, immersion, geometry })
    };
    let members: Vec<FamilyMember> = lambdas.par_iter().map(|&l| build(l)).collect::<Result<_>>()?;
    let reference = match members.iter().find(|m| m.lambda == 1.0) {
        Some(m) => m.geometry.m.clone(),
        None => build(1.0)?.geometry.m,
    };
    let all = vec![true; f.grid.len()];
    let mask = mask.unwrap_or(&all);
    let mut report = FamilyReport {
        members: Vec::new(),
        max_second_form_deviation: 0.0,
        max_angle_deviation: 0.0,
        max_metric_deviation: 0.0,
    };
    for member in &members {
        let geo = &member.geometry;
        let cosines = geo.cos_angle();
        for k in (0..f.grid.len()).filter(|k| mask[*k]) {
            report.max_second_form_deviation = report.max_second_form_deviation.max((geo.m[k] - reference[k]).abs());
            report.max_angle_deviation = report.max_angle_deviation.max((cosines[k] - f.phi[k].cos()).abs());
            let da = (geo.metric_a[k] - member.lambda).abs();
            let db = (geo.metric_b[k] - 1.0 / member.lambda).abs();
            report.max_metric_deviation = report.max_metric_deviation.max(da.max(db));
        }
    }
    report.members = members;
    Ok(report)
}

/// Wavefront OBJ: all `nx * ny` vertices row-major, two triangles per cell;
/// cells touching a node with `keep[n] == false` or a non-finite point are dropped.
pub fn mesh_obj(s: &Immersion, keep: Option<&[bool]>) -> String {
    let g = s.grid;
    let ok = |n: usize| keep.is_none_or(|k| k[n]) && s.points[n].iter().all(|v| v.is_finite());
    let mut out = String::new();
    let _ = writeln!(out, "# psforge immersion lambda={} nx={} ny={}", s.lambda, g.nx, g.ny);
    for p in &s.points {
        let _ = writeln!(out, "v {} {} {}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z));
    }
    for j in 0..g.ny.saturating_sub(1) {
        for i in 0..g.nx.saturating_sub(1) {
            let (a, b, c, d) = (g.index(i, j), g.index(i + 1, j), g.index(i + 1, j + 1), g.index(i, j + 1));
            if [a, b, c, d].iter().all(|&n| ok(n)) {
                let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
                let _ = writeln!(out, "f {} {} {}", a + 1, c + 1, d + 1);
            }
        }
    }
    out
}

pub fn export_mesh(s: &Immersion, path: &Path, keep: Option<&[bool]>) -> Result<()> {
    std::fs::write(path, mesh_obj(s, keep))?;
    Ok(())
}

/// Vertices and (0-based) triangles of an OBJ file; other records are ignored.
pub fn parse_obj(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(Error::Parse(format!("vertex needs 3 coordinates: {line:?}")));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or(t);
                        head.parse::<usize>().map_err(|e| Error::Parse(format!("{t:?}: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 || idx.iter().any(|&k| k == 0 || k > verts.len()) {
                    return Err(Error::Parse(format!("bad triangle: {line:?}")));
                }
                faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    Ok((verts, faces))
}

pub fn read_obj(path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    parse_obj(&std::fs::read_to_string(path)?)
}

/// `II I^{-1}` of the Chebyshev net with angle `phi`.
pub fn shape_matrix(phi: f64) -> Matrix2<f64> {
    let (s, c) = phi.sin_cos();
    Matrix2::new(-c / s, 1.0 / s, 1.0 / s, -c / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Mat3;
    use crate::frames::integrate_frame;
    use crate::sinegordon::soliton_angle;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn square(lo: f64, hi: f64, h: f64) -> GridSpec {
        GridSpec::from_domain(lo, hi, lo, hi, h, h).unwrap()
    }

    fn sin_mask(f: &AngleField) -> Vec<bool> {
        f.phi.iter().map(|p| p.sin() > 0.1).collect()
    }

    #[test]
    fn principal_curvature_examples() {
        let (k1, k2) = principal_curvatures(FRAC_PI_2).unwrap();
        assert!((k1 - 1.0).abs() < 1e-15 && (k2 + 1.0).abs() < 1e-15);
        assert!(matches!(principal_curvatures(0.0), Err(Error::SingularAngle { .. })));
    }

    proptest! {
        #[test]
        fn principal_curvatures_are_shape_eigenvalues(phi in 0.05f64..3.09) {
            let (k1, k2) = principal_curvatures(phi).unwrap();
            prop_assert!((k1 * k2 + 1.0).abs() < 1e-12);
            let eig = shape_matrix(phi).symmetric_eigen().eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            prop_assert!((lo - k2).abs() < 1e-9 * (1.0 + k2.abs()));
            prop_assert!((hi - k1).abs() < 1e-9 * (1.0 + k1.abs()));
        }
    }

    #[test]
    fn sym_immersion_vanishes_at_origin_and_scales_metric() {
        let g = square(-1.0, 1.0, 0.02);
        let f = soliton_angle(1.0, g).unwrap();
        let (i0, j0) = g.origin().unwrap();
        for lambda in [0.5, 1.0, 2.0] {
            let s = sym_immersion(&f, lambda).unwrap();
            assert_eq!(s.at(i0, j0), Vec3::zeros());
            let geo = fundamental_forms(&s).unwrap();
            let a = geo.field(&geo.metric_a.iter().map(|v| v - lambda).collect::<Vec<_>>());
            let b = geo.field(&geo.metric_b.iter().map(|v| v - 1.0 / lambda).collect::<Vec<_>>());
            assert!(a.sup() < 1e-4 && b.sup() < 1e-4, "{} {}", a.sup(), b.sup());
        }
    }

    #[test]
    fn pseudosphere_geometry() {
        let g = square(-2.0, 2.0, 0.02);
        let f = soliton_angle(1.0, g).unwrap();
        let mask = sin_mask(&f);
        let geo = fundamental_forms(&sym_immersion(&f, 1.0).unwrap()).unwrap();
        let k = geo.field(&geo.k.iter().map(|v| v + 1.0).collect::<Vec<_>>());
        assert!(k.sup_where(&mask) < 1e-3, "{}", k.sup_where(&mask));
        let cheb = |v: &[f64], t: f64| geo.field(&v.iter().map(|x| x - t).collect::<Vec<_>>()).sup();
        assert!(cheb(&geo.e, 1.0) < 1e-4 && cheb(&geo.g, 1.0) < 1e-4);
        let f_dev = (0..g.len()).map(|n| (geo.f[n] - f.phi[n].cos()).abs()).fold(0.0, f64::max);
        assert!(f_dev < 1e-4, "{f_dev}");
        let m_dev = (0..g.len()).filter(|n| mask[*n]).map(|n| (geo.m[n] - f.phi[n].sin().abs()).abs()).fold(0.0, f64::max);
        assert!(m_dev < 1e-4, "{m_dev}");
        let (l, n2) = (geo.field(&geo.l).sup_where(&mask), geo.field(&geo.n2).sup_where(&mask));
        assert!(l < 1e-4 && n2 < 1e-4, "{l} {n2}");
        // Numerical principal curvatures follow the closed forms on the regular part.
        for n in (0..g.len()).filter(|n| mask[*n] && f.phi[*n] < std::f64::consts::PI) {
            let (k1, k2) = principal_curvatures(f.phi[n]).unwrap();
            assert!((geo.k1[n] - k1).abs() < 1e-2 * (1.0 + k1.abs()));
            assert!((geo.k2[n] - k2).abs() < 1e-2 * (1.0 + k2.abs()));
        }
    }

    #[test]
    fn gauss_map_examples() {
        let g = square(-1.0, 1.0, 0.02);
        let f = soliton_angle(1.0, g).unwrap();
        let frame = integrate_frame(&f, 1.0, true).unwrap();
        let n = gauss_map(&frame);
        let (i0, j0) = g.origin().unwrap();
        assert_eq!(n[g.index(i0, j0)], Vec3::new(0.0, 0.0, 1.0));
        assert!(n.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        let s = sym_from_frame(&frame).unwrap();
        let px = diff_x(&g, &s.points);
        let py = diff_y(&g, &s.points);
        let worst = (0..g.len()).map(|k| n[k].dot(&px[k]).abs().max(n[k].dot(&py[k]).abs())).fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
        let orbit = adjoint_orbit_normal(&frame);
        assert!(orbit.iter().zip(&n).all(|(a, b)| (a + b).norm() < 1e-12));
        // Gauge invariance.
        let theta: Vec<f64> = (0..g.len()).map(|k| (k as f64).sin()).collect();
        let gauged = gauss_map(&frame.gauge(&theta).unwrap());
        assert!(gauged.iter().zip(&n).all(|(a, b)| (a - b).norm() < 1e-15));
    }

    #[test]
    fn gauss_map_is_harmonic() {
        let g = square(-2.0, 2.0, 0.02);
        let f = soliton_angle(1.0, g).unwrap();
        let frame = integrate_frame(&f, 1.0, true).unwrap();
        let geo = fundamental_forms(&sym_from_frame(&frame).unwrap()).unwrap();
        let n = gauss_map(&frame);
        let rep = harmonicity_check(&n, &geo).unwrap();
        assert!(rep.tangential_residual.sup() < 1e-3, "{}", rep.tangential_residual.sup());
        assert!(rep.metric_gap_a.sup() < 1e-3 && rep.metric_gap_b.sup() < 1e-3);
        let q_dev = (0..g.len()).map(|k| (rep.q.values[k] - f.phi[k].cos()).abs()).fold(0.0, f64::max);
        assert!(q_dev < 1e-3, "{q_dev}");

        let tangent: Vec<Vec3> = frame.u.iter().map(|u| u.column(0).into_owned()).collect();
        let perturbed: Vec<Vec3> = n.iter().zip(&tangent).map(|(a, t)| a + t * 0.01).collect();
        let bad = harmonicity_check(&perturbed, &geo).unwrap().tangential_residual.sup();
        assert!(bad > 3e-3 && bad < 5e-2, "{bad}");
    }

    #[test]
    fn associated_family_preserves_second_form_and_angle() {
        let g = square(-2.0, 2.0, 0.02);
        let f = soliton_angle(1.0, g).unwrap();
        let mask = sin_mask(&f);
        let rep = associated_family(&f, &[0.5, 1.0, 2.0], Some(&mask)).unwrap();
        assert_eq!(rep.members.len(), 3);
        assert!(rep.max_second_form_deviation < 1e-3, "{}", rep.max_second_form_deviation);
        assert!(rep.max_angle_deviation < 1e-3, "{}", rep.max_angle_deviation);
        assert!(rep.max_metric_deviation < 1e-3);
        assert!(associated_family(&f, &[1.0, -1.0], None).is_err());
    }

    #[test]
    fn rigid_motion_equivariance() {
        let g = square(-1.0, 1.0, 0.02);
        let f = soliton_angle(1.0, g).unwrap();
        let r0 = Mat3::new(0.36, 0.48, -0.8, -0.8, 0.6, 0.0, 0.48, 0.64, 0.6);
        let base = sym_immersion(&f, 1.3).unwrap();
        let opts = FrameOptions { with_lambda_derivative: true, initial: r0, ..Default::default() };
        let moved = sym_from_frame(&integrate_frame_with(&f, 1.3, &opts).unwrap()).unwrap();
        let rotated = base.rotated(&r0);
        let worst = rotated.points.iter().zip(&moved.points).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn lie_lorentz_reparametrization() {
        // psi^lambda of the a-soliton at (x, y) is psi^1 of the (a/lambda)-soliton at (lambda x, y/lambda).
        let lambda = 2.0;
        let fine = GridSpec::from_domain(-1.0, 1.0, -1.0, 1.0, 0.01, 0.01).unwrap();
        let coarse = GridSpec::from_domain(-0.5, 0.5, -1.0, 1.0, 0.005, 0.02).unwrap();
        let family = sym_immersion(&soliton_angle(1.0, coarse).unwrap(), lambda).unwrap();
        let base = sym_immersion(&soliton_angle(1.0 / lambda, fine).unwrap(), 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for j in (0..coarse.ny).step_by(5) {
            for i in (0..coarse.nx).step_by(5) {
                let (x, y) = (coarse.x(i), coarse.y(j));
                let (bi, bj) = (fine.x_node(lambda * x).unwrap(), fine.y_node(y / lambda).unwrap());
                worst = worst.max((family.at(i, j) - base.at(bi, bj)).norm());
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn mesh_export_round_trip() {
        let g = GridSpec::new(0.0, 0.0, 2, 2, 1.0, 1.0).unwrap();
        let s = Immersion { grid: g, lambda: 1.0, points: vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(1.0, 1.0, 0.5)] };
        let (v, faces) = parse_obj(&mesh_obj(&s, None)).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(faces.len(), 2);

        let dir = tempfile::tempdir().unwrap();
        let g = square(-0.5, 0.5, 0.1);
        let s = sym_immersion(&soliton_angle(1.0, g).unwrap(), 1.0).unwrap();
        let path = dir.path().join("m.obj");
        export_mesh(&s, &path, None).unwrap();
        let (v, faces) = read_obj(&path).unwrap();
        assert_eq!(v.len(), g.nx * g.ny);
        assert_eq!(faces.len(), 2 * (g.nx - 1) * (g.ny - 1));
        assert!(v.iter().zip(&s.points).all(|(a, b)| a == b));

        let mut keep = vec![true; g.len()];
        keep[g.index(5, 5)] = false;
        let (_, faces) = parse_obj(&mesh_obj(&s, Some(&keep))).unwrap();
        assert_eq!(faces.len(), 2 * (g.nx - 1) * (g.ny - 1) - 8);
    }

    #[test]
    fn small_grids_are_rejected() {
        let g = GridSpec::new(0.0, 0.0, 4, 6, 0.1, 0.1).unwrap();
        let s = Immersion { grid: g, lambda: 1.0, points: vec![Vec3::zeros(); g.len()] };
        assert!(matches!(fundamental_forms(&s), Err(Error::InvalidGrid(_))));
    }
}
