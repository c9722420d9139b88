//! Twisted 3x3 Laurent loops, their Wiener norm, and numerical Birkhoff
//! factorization `g = g_- g_+` (or `g_+ g_-`).
//!
//! Splitting works on the Fourier coefficients. For the minus-first split we
//! solve for `h = g_-^{-1} = I + sum_{k<0} h_k lambda^k` such that `h g` has no
//! negative powers down to `-N`; the block-Toeplitz system for the `h_k` is
//! square, and its condition number decides whether `g` lies in the big cell.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::algebra::{to_complex, twist_p, wiener_matrix_norm, Mat3, Mat3C, C64};
use crate::error::{Error, Result};

/// Finite Laurent polynomial `sum_{k=kmin}^{kmax} X_k lambda^k` with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentLoop {
    kmin: i32,
    coeffs: Vec<Mat3>,
    pub twisted: bool,
    pub real: bool,
}

impl LaurentLoop {
    /// Coefficients for powers `kmin, kmin + 1, ...`. The support is widened to contain 0.
    pub fn new(kmin: i32, coeffs: Vec<Mat3>) -> Self {
        let mut l = Self { kmin, coeffs, twisted: false, real: true };
        if l.coeffs.is_empty() {
            l.kmin = 0;
            l.coeffs.push(Mat3::zeros());
        }
        if l.kmin > 0 {
            let pad = l.kmin as usize;
            l.coeffs.splice(0..0, std::iter::repeat_n(Mat3::zeros(), pad));
            l.kmin = 0;
        }
        if l.kmax() < 0 {
            let pad = (-l.kmax()) as usize;
            l.coeffs.extend(std::iter::repeat_n(Mat3::zeros(), pad));
        }
        l
    }

    pub fn from_map(map: &BTreeMap<i32, Mat3>) -> Self {
        let (Some(&lo), Some(&hi)) = (map.keys().next(), map.keys().next_back()) else {
            return Self::zero();
        };
        let (lo, hi) = (lo.min(0), hi.max(0));
        let coeffs = (lo..=hi).map(|k| map.get(&k).copied().unwrap_or_else(Mat3::zeros)).collect();
        Self::new(lo, coeffs)
    }

    pub fn zero() -> Self {
        Self::new(0, vec![Mat3::zeros()])
    }

    pub fn constant(m: Mat3) -> Self {
        Self::new(0, vec![m])
    }

    pub fn identity() -> Self {
        Self::constant(Mat3::identity())
    }

    /// `m lambda^k`.
    pub fn monomial(k: i32, m: Mat3) -> Self {
        let mut map = BTreeMap::new();
        map.insert(k, m);
        Self::from_map(&map)
    }

    pub fn with_twisted(mut self, twisted: bool) -> Self {
        self.twisted = twisted;
        self
    }

    pub fn kmin(&self) -> i32 {
        self.kmin
    }

    pub fn kmax(&self) -> i32 {
        self.kmin + self.coeffs.len() as i32 - 1
    }

    pub fn coeff(&self, k: i32) -> Mat3 {
        if k < self.kmin || k > self.kmax() {
            return Mat3::zeros();
        }
        self.coeffs[(k - self.kmin) as usize]
    }

    pub fn powers(&self) -> impl Iterator<Item = (i32, &Mat3)> {
        self.coeffs.iter().enumerate().map(move |(n, m)| (self.kmin + n as i32, m))
    }

    pub fn to_map(&self) -> BTreeMap<i32, Mat3> {
        self.powers().map(|(k, m)| (k, *m)).collect()
    }

    /// Drops outer coefficients whose entries are all below `tol` (never past 0).
    pub fn trimmed(&self, tol: f64) -> Self {
        let small = |m: &Mat3| m.amax() <= tol;
        let mut lo = self.kmin;
        while lo < 0 && small(&self.coeff(lo)) {
            lo += 1;
        }
        let mut hi = self.kmax();
        while hi > 0 && small(&self.coeff(hi)) {
            hi -= 1;
        }
        let mut out = Self::new(lo, (lo..=hi).map(|k| self.coeff(k)).collect());
        out.twisted = self.twisted;
        out.real = self.real;
        out
    }

    /// `X(1/lambda)`.
    pub fn invert_parameter(&self) -> Self {
        let coeffs = (-self.kmax()..=-self.kmin).map(|k| self.coeff(-k)).collect();
        let mut out = Self::new(-self.kmax(), coeffs);
        out.twisted = self.twisted;
        out.real = self.real;
        out
    }

    /// Coefficientwise transpose.
    pub fn transpose(&self) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|m| *m = m.transpose());
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let (lo, hi) = (self.kmin.min(other.kmin), self.kmax().max(other.kmax()));
        let coeffs = (lo..=hi).map(|k| self.coeff(k) - other.coeff(k)).collect();
        let mut out = Self::new(lo, coeffs);
        out.twisted = self.twisted && other.twisted;
        out
    }

    pub fn eval(&self, lambda: C64) -> Result<Mat3C> {
        eval(self, lambda)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LoopFile {
            kmin: self.kmin,
            kmax: self.kmax(),
            twisted: self.twisted,
            real: self.real,
            coeffs: self
                .powers()
                .map(|(k, m)| {
                    let rows = (0..3).map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]).collect::<Vec<_>>();
                    (k.to_string(), [rows[0], rows[1], rows[2]])
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LoopFile = serde_json::from_str(text)?;
        if file.kmin > 0 || file.kmax < 0 || file.kmin > file.kmax {
            return Err(Error::Parse(format!("degree bounds [{}, {}] must contain 0", file.kmin, file.kmax)));
        }
        let mut map = BTreeMap::new();
        for (key, rows) in &file.coeffs {
            let k: i32 = key.trim().parse().map_err(|_| Error::Parse(format!("bad power {key:?}")))?;
            if k < file.kmin || k > file.kmax {
                return Err(Error::Parse(format!("power {k} outside [{}, {}]", file.kmin, file.kmax)));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            map.insert(k, Mat3::from_row_slice(&flat));
        }
        let mut out = Self::new(file.kmin, (file.kmin..=file.kmax).map(|k| map.get(&k).copied().unwrap_or_else(Mat3::zeros)).collect());
        out.twisted = file.twisted;
        out.real = file.real;
        Ok(out)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct LoopFile {
    kmin: i32,
    kmax: i32,
    twisted: bool,
    real: bool,
    coeffs: BTreeMap<String, [[f64; 3]; 3]>,
}

/// `sum_k |X_k|` with the row-sum matrix norm.
pub fn loop_norm(x: &LaurentLoop) -> f64 {
    x.coeffs.iter().map(wiener_matrix_norm).sum()
}

/// Cauchy product.
pub fn multiply(x: &LaurentLoop, y: &LaurentLoop) -> LaurentLoop {
    let kmin = x.kmin + y.kmin;
    let mut coeffs = vec![Mat3::zeros(); x.coeffs.len() + y.coeffs.len() - 1];
    for (r, a) in x.coeffs.iter().enumerate() {
        for (s, b) in y.coeffs.iter().enumerate() {
            coeffs[r + s] += a * b;
        }
    }
    let mut out = LaurentLoop::new(kmin, coeffs);
    out.twisted = x.twisted && y.twisted;
    out.real = x.real && y.real;
    out
}

pub fn eval(x: &LaurentLoop, lambda: C64) -> Result<Mat3C> {
    if lambda == C64::new(0.0, 0.0) {
        return Err(Error::ZeroSpectralParameter);
    }
    let mut acc = Mat3C::zeros();
    for (k, m) in x.powers() {
        acc += to_complex(m) * lambda.powi(k);
    }
    Ok(acc)
}

/// Part of `X_k` that breaks `P X_k P = (-1)^k X_k`, measured entrywise.
fn twist_violation(k: i32, m: &Mat3) -> Mat3 {
    let p = twist_p();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    (m - p * m * p * sign) * 0.5
}

/// Largest entry of any coefficient that breaks the twist, with its power.
pub fn twist_defect(x: &LaurentLoop) -> (i32, f64) {
    x.powers()
        .map(|(k, m)| (k, twist_violation(k, m).amax()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Property P: `E12`-type entries (and the diagonal) only at even powers,
/// `E13`/`E23`-type entries only at odd powers.
pub fn check_twist(x: &LaurentLoop) -> bool {
    check_twist_with_tol(x, crate::algebra::DEFAULT_TOL)
}

pub fn check_twist_with_tol(x: &LaurentLoop, tol: f64) -> bool {
    twist_defect(x).1 <= tol
}

/// Zeroes twist-breaking entries no larger than `tol`; larger ones are reported.
pub fn enforce_twist(x: &LaurentLoop, tol: f64) -> Result<LaurentLoop> {
    let mut out = x.clone();
    for (n, m) in out.coeffs.iter_mut().enumerate() {
        let k = x.kmin + n as i32;
        let bad = twist_violation(k, m);
        let magnitude = bad.amax();
        if magnitude > tol {
            return Err(Error::TwistViolation { power: k, magnitude });
        }
        *m -= bad;
    }
    out.twisted = true;
    Ok(out)
}

/// Values of a loop at the `n`-th roots of unity `exp(2 pi i j / n)`.
#[derive(Debug, Clone)]
pub struct SampledLoop {
    pub values: Vec<Mat3C>,
}

impl SampledLoop {
    pub fn sample_points(n: usize) -> Vec<C64> {
        (0..n).map(|j| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / n as f64)).collect()
    }

    pub fn from_fn(n: usize, f: impl Fn(C64) -> Mat3C) -> Self {
        Self { values: Self::sample_points(n).into_iter().map(f).collect() }
    }

    pub fn from_laurent(x: &LaurentLoop, n: usize) -> Self {
        Self::from_fn(n, |mu| eval(x, mu).expect("sample points are on the unit circle"))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest deviation from `A(conj mu) = conj A(mu)`; zero for real loops.
    pub fn reality_defect(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|j| {
                let partner = (n - j) % n;
                (self.values[j] - self.values[partner].map(|z| z.conj())).map(|z| z.norm()).amax()
            })
            .fold(0.0, f64::max)
    }

    /// Fourier coefficients for powers in `(-n/2, n/2)`. Coefficients whose
    /// imaginary part exceeds `real_tol` raise `NotReal`.
    pub fn to_laurent(&self, real_tol: f64) -> Result<LaurentLoop> {
        let n = self.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("sample count {n} must be a power of two >= 2")));
        }
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
        let mut spectra = vec![vec![Complex64::new(0.0, 0.0); n]; 9];
        for (e, spec) in spectra.iter_mut().enumerate() {
            for (j, v) in self.values.iter().enumerate() {
                spec[j] = v[(e / 3, e % 3)];
            }
            fft.process(spec);
        }
        let half = (n / 2) as i32;
        let kmin = -half + 1;
        let mut coeffs = Vec::with_capacity(n - 1);
        for k in kmin..half {
            let bin = k.rem_euclid(n as i32) as usize;
            let mut m = Mat3::zeros();
            for (e, spec) in spectra.iter().enumerate() {
                let c = spec[bin] / n as f64;
                if c.im.abs() > real_tol {
                    return Err(Error::NotReal { power: k, magnitude: c.im.abs() });
                }
                m[(e / 3, e % 3)] = c.re;
            }
            coeffs.push(m);
        }
        Ok(LaurentLoop::new(kmin, coeffs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `g = g_- g_+` with `g_- = I + O(1/lambda)`.
    MinusFirst,
    /// `g = g_+ g_-` with `g_+ = I + O(lambda)`.
    PlusFirst,
}

#[derive(Debug, Clone, Copy)]
pub struct SplitOptions {
    /// Initial number of negative Fourier blocks solved for.
    pub truncation: usize,
    pub max_truncation: usize,
    /// Accept when `loop_norm(g - factor1 factor2)` is below this.
    pub tol: f64,
    pub condition_limit: f64,
    /// Twist-breaking noise below this is zeroed; above it is an error.
    pub twist_tol: f64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { truncation: 16, max_truncation: 256, tol: 1e-10, condition_limit: 1e8, twist_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub factor1: LaurentLoop,
    pub factor2: LaurentLoop,
    pub residual: f64,
    pub truncation: usize,
    pub condition: f64,
}

pub fn birkhoff_split(g: &LaurentLoop, direction: Direction) -> Result<Split> {
    birkhoff_split_with(g, direction, SplitOptions::default())
}

pub fn birkhoff_split_with(g: &LaurentLoop, direction: Direction, opts: SplitOptions) -> Result<Split> {
    match direction {
        Direction::MinusFirst => split_minus_first(g, opts),
        Direction::PlusFirst => {
            let s = split_minus_first(&g.invert_parameter(), opts)?;
            Ok(Split {
                factor1: s.factor1.invert_parameter(),
                factor2: s.factor2.invert_parameter(),
                ..s
            })
        }
    }
}

/// Splits a sampled loop after converting it to Fourier coefficients.
pub fn birkhoff_split_sampled(g: &SampledLoop, direction: Direction, twisted: bool, opts: SplitOptions) -> Result<Split> {
    let mut x = g.to_laurent(1e-8)?.trimmed(1e-14);
    x.twisted = twisted;
    if twisted {
        x = enforce_twist(&x, opts.twist_tol)?;
    }
    birkhoff_split_with(&x, direction, opts)
}

fn split_minus_first(g: &LaurentLoop, opts: SplitOptions) -> Result<Split> {
    let spread = (g.kmax() - g.kmin()) as usize;
    let mut n = opts.truncation.max(spread).max(1);
    let mut last_residual = f64::INFINITY;
    loop {
        let attempt = split_at(g, n, opts)?;
        if attempt.residual <= opts.tol {
            return Ok(attempt);
        }
        // Stop when doubling no longer helps or the budget is exhausted.
        if attempt.residual >= 0.5 * last_residual || n * 2 > opts.max_truncation {
            return Err(Error::TruncationTooSmall { truncation: n, residual: attempt.residual });
        }
        last_residual = attempt.residual;
        n *= 2;
    }
}

fn split_at(g: &LaurentLoop, n: usize, opts: SplitOptions) -> Result<Split> {
    // Unknown H = [h_{-1} .. h_{-n}] (3 x 3n) with sum_k h_k g_{m-k} = -g_m for m = -1..-n.
    // Transposed: T^T H^T = -G^T, block (m, k) of T^T being g_{m-k}^T.
    let dim = 3 * n;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DMatrix::<f64>::zeros(dim, 3);
    for mi in 0..n {
        let m = -(mi as i32) - 1;
        for ki in 0..n {
            let k = -(ki as i32) - 1;
            let blk = g.coeff(m - k).transpose();
            a.view_mut((3 * mi, 3 * ki), (3, 3)).copy_from(&blk);
        }
        b.view_mut((3 * mi, 0), (3, 3)).copy_from(&(-g.coeff(m).transpose()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= opts.condition_limit) {
        return Err(Error::BigCellViolation { condition });
    }
    let sol = svd.solve(&b, 0.0).map_err(|e| Error::StepFailure(e.to_string()))?;

    let mut h = vec![Mat3::identity(); n + 1];
    for ki in 0..n {
        h[n - 1 - ki] = sol.fixed_view::<3, 3>(3 * ki, 0).transpose();
    }
    let h = LaurentLoop::new(-(n as i32), h);

    // factor1 = h^{-1} as a power series in 1/lambda, truncated at -n.
    let mut c: Vec<Mat3> = vec![Mat3::identity(); n + 1]; // c[p] is the coefficient of lambda^{-p}
    for p in 1..=n {
        let mut acc = Mat3::zeros();
        for q in 1..=p {
            acc -= h.coeff(-(q as i32)) * c[p - q];
        }
        c[p] = acc;
    }
    let factor1 = LaurentLoop::new(-(n as i32), c.into_iter().rev().collect());
    let hg = multiply(&h, g);
    let factor2 = LaurentLoop::new(0, (0..=hg.kmax()).map(|k| hg.coeff(k)).collect());

    let (mut factor1, mut factor2) = (factor1.trimmed(1e-15), factor2.trimmed(1e-15));
    if g.twisted {
        factor1 = enforce_twist(&factor1, opts.twist_tol)?;
        factor2 = enforce_twist(&factor2, opts.twist_tol)?;
    }
    factor1.real = g.real;
    factor2.real = g.real;
    let residual = loop_norm(&g.sub(&multiply(&factor1, &factor2)));
    Ok(Split { factor1, factor2, residual, truncation: n, condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{e12, e13, e23};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_diff(a: &LaurentLoop, b: &LaurentLoop) -> f64 {
        let (lo, hi) = (a.kmin().min(b.kmin()), a.kmax().max(b.kmax()));
        (lo..=hi).map(|k| (a.coeff(k) - b.coeff(k)).amax()).fold(0.0, f64::max)
    }

    #[test]
    fn norm_examples() {
        assert_eq!(loop_norm(&LaurentLoop::identity()), 1.0);
        let x = LaurentLoop::monomial(1, e23()).sub(&LaurentLoop::monomial(-1, -e13()));
        assert_eq!(loop_norm(&x), 2.0);
    }

    #[test]
    fn product_examples() {
        let x = LaurentLoop::monomial(1, e23());
        assert_eq!(multiply(&x, &LaurentLoop::identity()), x);
        let p = multiply(&x, &LaurentLoop::monomial(-1, e13()));
        assert_eq!(p.coeff(0), e23() * e13());
        assert_eq!(p.coeff(1), Mat3::zeros());
        assert_eq!(p.coeff(-1), Mat3::zeros());
    }

    #[test]
    fn eval_examples() {
        let one = LaurentLoop::identity();
        let z = C64::new(0.3, -1.7);
        assert_eq!(eval(&one, z).unwrap(), Mat3C::identity());
        let x = LaurentLoop::monomial(1, e23());
        assert_eq!(eval(&x, C64::new(2.0, 0.0)).unwrap(), to_complex(&(e23() * 2.0)));
        assert!(matches!(eval(&x, C64::new(0.0, 0.0)), Err(Error::ZeroSpectralParameter)));
    }

    #[test]
    fn twist_examples() {
        assert!(check_twist(&LaurentLoop::constant(e12())));
        assert!(!check_twist(&LaurentLoop::constant(e13())));
        let x = LaurentLoop::monomial(-1, e13() * 0.4 + e23() * 0.9)
            .sub(&LaurentLoop::constant(e12() * 1.3))
            .sub(&LaurentLoop::monomial(1, e23()));
        assert!(check_twist(&x));
        let p = to_complex(&twist_p());
        let z = C64::new(0.6, 0.8) * 1.7;
        let lhs = eval(&x, -z).unwrap();
        let rhs = p * eval(&x, z).unwrap() * p;
        assert!((lhs - rhs).map(|v| v.norm()).amax() < 1e-14);
    }

    #[test]
    fn enforce_twist_zeroes_noise_and_reports_violations() {
        let noisy = LaurentLoop::constant(e12() + e13() * 1e-12);
        let clean = enforce_twist(&noisy, 1e-8).unwrap();
        assert_eq!(clean.coeff(0), e12());
        assert!(matches!(
            enforce_twist(&LaurentLoop::constant(e13()), 1e-8),
            Err(Error::TwistViolation { power: 0, .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let x = LaurentLoop::monomial(-2, e13() * 0.25).sub(&LaurentLoop::monomial(3, e12() / 3.0)).with_twisted(false);
        let back = LaurentLoop::from_json(&x.to_json().unwrap()).unwrap();
        assert_eq!(back, x);
        assert!(LaurentLoop::from_json("{\"kmin\":1,\"kmax\":2,\"twisted\":false,\"real\":true,\"coeffs\":{}}").is_err());
    }

    #[test]
    fn split_identity() {
        for dir in [Direction::MinusFirst, Direction::PlusFirst] {
            let s = birkhoff_split(&LaurentLoop::identity(), dir).unwrap();
            assert!(max_diff(&s.factor1, &LaurentLoop::identity()) < 1e-15);
            assert!(max_diff(&s.factor2, &LaurentLoop::identity()) < 1e-15);
        }
    }

    /// Twisted loop `exp`-like factor `I + sum_{1<=p<=deg} c_p lambda^{s p}` with small random
    /// so(3)-type coefficients obeying the twist parity, scaled to norm < `size`.
    fn random_factor(rng: &mut ChaCha8Rng, sign: i32, deg: i32, size: f64) -> LaurentLoop {
        let mut map = BTreeMap::new();
        map.insert(0, Mat3::identity());
        let mut parts = Vec::new();
        for p in 1..=deg {
            let m = if p % 2 == 0 {
                e12() * rng.random_range(-1.0..1.0) + Mat3::from_diagonal(&crate::algebra::Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            } else {
                let mut m = Mat3::zeros();
                for (r, c) in [(0, 2), (1, 2), (2, 0), (2, 1)] {
                    m[(r, c)] = rng.random_range(-1.0..1.0);
                }
                m
            };
            parts.push((sign * p, m));
        }
        let total: f64 = parts.iter().map(|(_, m)| wiener_matrix_norm(m)).sum();
        let scale = size / total;
        for (k, m) in parts {
            map.insert(k, m * scale);
        }
        LaurentLoop::from_map(&map).with_twisted(true)
    }

    #[test]
    fn split_recovers_constructed_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10 {
            let deg = 1 + trial % 3;
            let gm = random_factor(&mut rng, -1, deg, 0.29);
            let gp = random_factor(&mut rng, 1, deg, 0.29);
            let g = multiply(&gm, &gp);
            assert!(check_twist(&g));
            let s = birkhoff_split(&g, Direction::MinusFirst).unwrap();
            assert!(max_diff(&s.factor1, &gm) < 1e-8, "trial {trial}: {}", max_diff(&s.factor1, &gm));
            assert!(max_diff(&s.factor2, &gp) < 1e-8);
            assert!(s.residual < 1e-10);
            assert!(check_twist(&s.factor1) && check_twist(&s.factor2));
            assert_eq!(s.factor1.coeff(0), Mat3::identity());
            assert!(s.factor1.kmax() == 0 && s.factor2.kmin() == 0);

            // Plus-first: g_+ g_- built the other way round.
            let g2 = multiply(&gp, &gm);
            let s2 = birkhoff_split(&g2, Direction::PlusFirst).unwrap();
            assert!(max_diff(&s2.factor1, &gp) < 1e-8);
            assert!(max_diff(&s2.factor2, &gm) < 1e-8);
        }
    }

    #[test]
    fn split_is_unique_across_truncations_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = multiply(&random_factor(&mut rng, -1, 2, 0.25), &random_factor(&mut rng, 1, 2, 0.25));
        let a = birkhoff_split_with(&g, Direction::MinusFirst, SplitOptions { truncation: 16, ..Default::default() }).unwrap();
        let b = birkhoff_split_with(&g, Direction::MinusFirst, SplitOptions { truncation: 64, ..Default::default() }).unwrap();
        assert!(max_diff(&a.factor1, &b.factor1) < 1e-10);
        assert!(max_diff(&a.factor2, &b.factor2) < 1e-10);
        let again = birkhoff_split(&multiply(&a.factor1, &a.factor2), Direction::MinusFirst).unwrap();
        assert!(max_diff(&again.factor1, &a.factor1) < 1e-10);
        assert!(max_diff(&again.factor2, &a.factor2) < 1e-10);
    }

    #[test]
    fn winding_loop_is_outside_the_big_cell() {
        let mut map = BTreeMap::new();
        map.insert(2, Mat3::from_diagonal(&crate::algebra::Vec3::new(1.0, 0.0, 0.0)));
        map.insert(-2, Mat3::from_diagonal(&crate::algebra::Vec3::new(0.0, 1.0, 0.0)));
        map.insert(0, Mat3::from_diagonal(&crate::algebra::Vec3::new(0.0, 0.0, 1.0)));
        let g = LaurentLoop::from_map(&map);
        assert!(matches!(birkhoff_split(&g, Direction::MinusFirst), Err(Error::BigCellViolation { .. })));
    }

    #[test]
    fn sampling_round_trip_and_reality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = multiply(&random_factor(&mut rng, -1, 3, 0.5), &random_factor(&mut rng, 1, 3, 0.5));
        let s = SampledLoop::from_laurent(&g, 64);
        assert!(s.reality_defect() < 1e-13);
        let back = s.to_laurent(1e-10).unwrap();
        assert!(max_diff(&back, &g) < 1e-14);

        let complex = SampledLoop::from_fn(16, |mu| Mat3C::identity() * (mu * C64::new(0.0, 1.0)));
        assert!(matches!(complex.to_laurent(1e-8), Err(Error::NotReal { power: 1, .. })));
        let split = birkhoff_split_sampled(&s, Direction::MinusFirst, true, SplitOptions::default()).unwrap();
        assert!(split.residual < 1e-10);
    }

    fn small_loop() -> impl Strategy<Value = LaurentLoop> {
        (-2i32..=0, proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 9), 1..5))
            .prop_map(|(kmin, cs)| LaurentLoop::new(kmin, cs.iter().map(|v| Mat3::from_row_slice(v)).collect()))
    }

    fn twisted_loop() -> impl Strategy<Value = LaurentLoop> {
        small_loop().prop_map(|x| {
            let mut y = x.clone();
            for (n, m) in y.coeffs.iter_mut().enumerate() {
                *m -= twist_violation(x.kmin + n as i32, m);
            }
            y.with_twisted(true)
        })
    }

    proptest! {
        #[test]
        fn norm_is_submultiplicative(x in small_loop(), y in small_loop()) {
            prop_assert!(loop_norm(&multiply(&x, &y)) <= loop_norm(&x) * loop_norm(&y) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn product_of_twisted_loops_is_twisted(x in twisted_loop(), y in twisted_loop()) {
            prop_assert!(check_twist_with_tol(&multiply(&x, &y), 1e-12));
        }

        #[test]
        fn product_evaluates_pointwise(x in small_loop(), y in small_loop(), t in 0.0f64..std::f64::consts::TAU, r in 0.5f64..2.0) {
            let z = C64::from_polar(r, t);
            let lhs = eval(&multiply(&x, &y), z).unwrap();
            let rhs = eval(&x, z).unwrap() * eval(&y, z).unwrap();
            let scale = 1.0 + loop_norm(&x) * loop_norm(&y) * 16.0;
            prop_assert!((lhs - rhs).map(|v| v.norm()).amax() < 1e-12 * scale);
        }
    }
}
