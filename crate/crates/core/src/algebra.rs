//! Fixed-size matrix kernels: the so(3) basis, the twist involution, Pauli
//! matrices, the spinor map between R^3 and su(2), and the Wiener row-sum norm.
//!
//! Conventions used throughout the crate:
//!
//! * `E_ij` (i < j) has (i,j)-entry 1 and (j,i)-entry -1.
//! * `hat(v)` is the usual cross-product matrix, `hat(v) w = v x w`, so
//!   `unhat(S) = (S32, S13, S21)`.
//! * The su(2)/so(3) correspondence is `E12 <-> (-i/2) sigma3`,
//!   `E13 <-> (-i/2) sigma2`, `E23 <-> (-i/2) sigma1`.

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat3 = Matrix3<f64>;
pub type Mat3C = Matrix3<Complex64>;
pub type Mat2C = Matrix2<Complex64>;
pub type Vec3 = Vector3<f64>;
pub type C64 = Complex64;

/// Default tolerance for unitarity and skewness checks.
pub const DEFAULT_TOL: f64 = 1e-9;

const I: C64 = C64::new(0.0, 1.0);

pub fn e12() -> Mat3 {
    Mat3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
}

pub fn e13() -> Mat3 {
    Mat3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0)
}

pub fn e23() -> Mat3 {
    Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0)
}

/// The twist involution `P = diag(1, 1, -1)`.
pub fn twist_p() -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))
}

pub fn sigma1() -> Mat2C {
    Mat2C::new(C64::ZERO, C64::ONE, C64::ONE, C64::ZERO)
}

pub fn sigma2() -> Mat2C {
    Mat2C::new(C64::ZERO, -I, I, C64::ZERO)
}

pub fn sigma3() -> Mat2C {
    Mat2C::new(C64::ONE, C64::ZERO, C64::ZERO, -C64::ONE)
}

/// Maximum over rows of the absolute row sum.
pub fn wiener_matrix_norm(a: &Mat3) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `J(r) = -(i/2) (r1 sigma1 + r2 sigma2 + r3 sigma3)`.
pub fn spinor_map(r: &Vec3) -> Mat2C {
    let (x, y, z) = (r.x, r.y, r.z);
    Mat2C::new(
        C64::new(0.0, -z),
        C64::new(-y, -x),
        C64::new(y, -x),
        C64::new(0.0, z),
    ) * C64::new(0.5, 0.0)
}

/// Preimage of a traceless anti-Hermitian matrix under [`spinor_map`].
/// Any Hermitian or trace part of `m` is discarded.
pub fn spinor_unmap(m: &Mat2C) -> Vec3 {
    let z = m[(1, 1)].im - m[(0, 0)].im;
    let y = (m[(1, 0)] - m[(0, 1)]).re;
    let x = -(m[(0, 1)] + m[(1, 0)]).im;
    Vec3::new(x, y, z)
}

/// so(3) element corresponding to an su(2) element under `E12 <-> (-i/2) sigma3`,
/// `E13 <-> (-i/2) sigma2`, `E23 <-> (-i/2) sigma1`.
pub fn so3_from_su2(m: &Mat2C) -> Mat3 {
    let v = spinor_unmap(m);
    e23() * v.x + e13() * v.y + e12() * v.z
}

/// Inverse of [`so3_from_su2`] on skew matrices.
pub fn su2_from_so3(s: &Mat3) -> Mat2C {
    spinor_map(&Vec3::new(s[(1, 2)], s[(0, 2)], s[(0, 1)]))
}

fn unitarity_defect(p: &Mat2C) -> f64 {
    (p.adjoint() * p - Mat2C::identity()).norm()
}

/// The SO(3) matrix representing conjugation by `p` on so(3), transported
/// through the `E_ij <-> (-i/2) sigma_k` correspondence. Satisfies
/// `adjoint_map(p) X adjoint_map(p)^T = so3_from_su2(p su2_from_so3(X) p^-1)`
/// and `adjoint_map(-p) = adjoint_map(p)`.
pub fn adjoint_map(p: &Mat2C) -> Result<Mat3> {
    adjoint_map_with_tol(p, DEFAULT_TOL)
}

pub fn adjoint_map_with_tol(p: &Mat2C, tol: f64) -> Result<Mat3> {
    let deviation = unitarity_defect(p);
    if !(deviation <= tol) {
        return Err(Error::NotUnitary { deviation });
    }
    let p_inv = p.adjoint();
    // Rotation acting on J-coordinates: column k is J^{-1}(p J(e_k) p^{-1}).
    let mut rot = Mat3::zeros();
    for k in 0..3 {
        let ek = Vec3::ith(k, 1.0);
        let col = spinor_unmap(&(p * spinor_map(&ek) * p_inv));
        rot.set_column(k, &col);
    }
    // The E_ij correspondence differs from hat o J^{-1} by D = diag(-1, 1, -1).
    let d = Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, -1.0));
    Ok(d * rot * d)
}

pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `unhat(S) = (S32, S13, S21)` for skew `S`.
pub fn unhat(s: &Mat3) -> Result<Vec3> {
    unhat_with_tol(s, DEFAULT_TOL)
}

pub fn unhat_with_tol(s: &Mat3, tol: f64) -> Result<Vec3> {
    let deviation = (s + s.transpose()).norm();
    if !(deviation <= tol) {
        return Err(Error::NotSkew { deviation });
    }
    Ok(Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// Rotation by `theta` about `e3`, in the row convention
/// `[[cos, sin, 0], [-sin, cos, 0], [0, 0, 1]]`.
pub fn gauge_rotation(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Nearest rotation to a nearly orthogonal matrix (Newton iteration for the polar factor).
pub fn project_so3(m: &Mat3) -> Mat3 {
    let mut x = *m;
    for _ in 0..3 {
        let Some(inv) = x.try_inverse() else {
            return x;
        };
        let next = (x + inv.transpose()) * 0.5;
        let change = (next - x).norm();
        x = next;
        if change < 1e-15 {
            break;
        }
    }
    x
}

/// Nearest SU(2) element of the form `[[a, -conj b], [b, conj a]]`.
pub fn project_su2(m: &Mat2C) -> Mat2C {
    let a = (m[(0, 0)] + m[(1, 1)].conj()) * 0.5;
    let b = (m[(1, 0)] - m[(0, 1)].conj()) * 0.5;
    let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if n == 0.0 {
        return *m;
    }
    let (a, b) = (a / n, b / n);
    Mat2C::new(a, -b.conj(), b, a.conj())
}

pub fn orthogonality_defect(u: &Mat3) -> f64 {
    (u.transpose() * u - Mat3::identity()).norm()
}

pub fn to_complex(m: &Mat3) -> Mat3C {
    m.map(|v| C64::new(v, 0.0))
}
