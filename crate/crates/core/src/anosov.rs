//! The linear Anosov automorphism: integer matrix arithmetic, the splitting
//! `E^s ⊕ E^u` with its adapted frame, cone fields, and exact enumeration of
//! periodic points.
//!
//! The adapted frame is `(e_s1, e_s2, e_u)` where `e_s1 + i·e_s2` is the
//! complex eigenvector of the contracting pair, rephased so the real and
//! imaginary parts are Euclidean-orthogonal and rescaled to unit geometric
//! mean. In that frame the matrix is block diagonal: a scaled rotation on
//! `E^s` and a scalar on `E^u`. All cone angles and norms in this crate are
//! measured in the adapted frame.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::torus::TorusPoint;

pub type IntMatrix3 = [[i64; 3]; 3];

/// Rows `(1,1,0), (0,0,1), (1,0,0)`; characteristic polynomial `λ³ − λ² − 1`.
pub const DEFAULT_MATRIX: IntMatrix3 = [[1, 1, 0], [0, 0, 1], [1, 0, 0]];

const UNIT_CIRCLE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnosovError {
    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(i64),
    #[error("not hyperbolic: eigenvalue modulus {0} on the unit circle")]
    NotHyperbolic(f64),
    #[error("unsupported spectrum: {0}")]
    UnsupportedSpectrum(String),
    #[error("power must be at least 1")]
    InvalidPower,
    #[error("integer overflow forming the matrix power")]
    Overflow,
    #[error("degenerate period {0}: det(A^n - I) = 0")]
    DegeneratePeriod(u32),
    #[error("period {0} outside the supported range 1..={1}")]
    PeriodOutOfRange(u32, u32),
    #[error("periodic-point group has {found} elements, expected {expected}")]
    CountMismatch { found: usize, expected: u64 },
    #[error("zero vector has no cone membership")]
    ZeroVector,
    #[error("cone half-angle {0} outside (0, pi/4)")]
    InvalidConeAngle(f64),
}

impl AnosovError {
    pub fn code(&self) -> &'static str {
        match self {
            AnosovError::NotUnimodular(_) => "linear.not_unimodular",
            AnosovError::NotHyperbolic(_) => "linear.not_hyperbolic",
            AnosovError::UnsupportedSpectrum(_) => "linear.unsupported_spectrum",
            AnosovError::InvalidPower => "linear.invalid_power",
            AnosovError::Overflow => "linear.overflow",
            AnosovError::DegeneratePeriod(_) => "linear.degenerate_period",
            AnosovError::PeriodOutOfRange(..) => "linear.period_out_of_range",
            AnosovError::CountMismatch { .. } => "linear.count_mismatch",
            AnosovError::ZeroVector => "linear.zero_vector",
            AnosovError::InvalidConeAngle(_) => "linear.invalid_cone_angle",
        }
    }
}

// ---------------------------------------------------------------------------
// integer matrix helpers

pub fn int_identity() -> IntMatrix3 {
    [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
}

pub fn int_mul(a: &IntMatrix3, b: &IntMatrix3) -> Option<IntMatrix3> {
    let mut out = [[0i64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0i64;
            for k in 0..3 {
                acc = acc.checked_add(a[i][k].checked_mul(b[k][j])?)?;
            }
            out[i][j] = acc;
        }
    }
    Some(out)
}

pub fn int_pow(a: &IntMatrix3, n: u32) -> Option<IntMatrix3> {
    let mut out = int_identity();
    for _ in 0..n {
        out = int_mul(&out, a)?;
    }
    Some(out)
}

pub fn int_det(a: &IntMatrix3) -> i64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Adjugate: `a · adj(a) = det(a) · I`.
pub fn int_adjugate(a: &IntMatrix3) -> IntMatrix3 {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
    [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ]
}

pub fn int_to_f64(a: &IntMatrix3) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| a[i][j] as f64)
}

fn int_apply_mod(a: &IntMatrix3, v: &[i64; 3], modulus: i64) -> [i64; 3] {
    let mut out = [0i64; 3];
    for i in 0..3 {
        let mut acc: i128 = 0;
        for k in 0..3 {
            acc += a[i][k] as i128 * v[k] as i128;
        }
        out[i] = acc.rem_euclid(modulus as i128) as i64;
    }
    out
}

// ---------------------------------------------------------------------------
// characteristic polynomial

/// Coefficients `(c2, c1, c0)` of the monic `det(λI − A) = λ³ + c2 λ² + c1 λ + c0`.
pub fn characteristic_coefficients(a: &IntMatrix3) -> [i64; 3] {
    let trace = a[0][0] + a[1][1] + a[2][2];
    let minors = (a[0][0] * a[1][1] - a[0][1] * a[1][0])
        + (a[0][0] * a[2][2] - a[0][2] * a[2][0])
        + (a[1][1] * a[2][2] - a[1][2] * a[2][1]);
    [-trace, minors, -int_det(a)]
}

fn cubic(c: &[f64; 3], x: f64) -> f64 {
    ((x + c[0]) * x + c[1]) * x + c[2]
}

fn cubic_derivative(c: &[f64; 3], x: f64) -> f64 {
    (3.0 * x + 2.0 * c[0]) * x + c[1]
}

/// A real root of a monic cubic by bisection on the Cauchy bracket,
/// polished with guarded Newton steps.
pub fn cubic_real_root(c: &[f64; 3]) -> f64 {
    let bound = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cubic(c, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..4 {
        let d = cubic_derivative(c, x);
        if d == 0.0 {
            break;
        }
        let next = x - cubic(c, x) / d;
        if cubic(c, next).abs() < cubic(c, x).abs() {
            x = next;
        } else {
            break;
        }
    }
    x
}

// ---------------------------------------------------------------------------
// model

/// The linear Anosov model with its adapted splitting. `lambda_u`,
/// `lambda_c_mod` and `theta_c` describe one application of `matrix`; the
/// `iterate_*` accessors describe `matrix^power`, the map actually used.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnosovModel {
    pub matrix: IntMatrix3,
    pub power: u32,
    pub lambda_u: f64,
    pub lambda_c_mod: f64,
    pub theta_c: f64,
    pub e_u: Vector3<f64>,
    pub e_s1: Vector3<f64>,
    pub e_s2: Vector3<f64>,
    pub adapted_transform: Matrix3<f64>,
    unstable_eigenvalue: f64,
    adapted_inverse: Matrix3<f64>,
    iterate: IntMatrix3,
    iterate_inverse: IntMatrix3,
    iterate_f64: Matrix3<f64>,
    iterate_inverse_f64: Matrix3<f64>,
    iterate_stable_block: Matrix2<f64>,
}

fn null_vector_real(m: &Matrix3<f64>) -> Vector3<f64> {
    let rows = [m.row(0).transpose(), m.row(1).transpose(), m.row(2).transpose()];
    let mut best = Vector3::zeros();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let c = rows[i].cross(&rows[j]);
        if c.norm() > best.norm() {
            best = c;
        }
    }
    best
}

fn null_vector_complex(m: &[[Complex64; 3]; 3]) -> [Complex64; 3] {
    let cross = |a: &[Complex64; 3], b: &[Complex64; 3]| {
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    };
    let norm = |v: &[Complex64; 3]| v.iter().map(|c| c.norm_sqr()).sum::<f64>();
    let mut best = [Complex64::new(0.0, 0.0); 3];
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let c = cross(&m[i], &m[j]);
        if norm(&c) > norm(&best) {
            best = c;
        }
    }
    best
}

/// Builds the model for `matrix^power`.
pub fn eigen_split(matrix: IntMatrix3, power: u32) -> Result<AnosovModel, AnosovError> {
    if power == 0 {
        return Err(AnosovError::InvalidPower);
    }
    let det = int_det(&matrix);
    if det.abs() != 1 {
        return Err(AnosovError::NotUnimodular(det));
    }
    let int_coeffs = characteristic_coefficients(&matrix);
    // With |det| = 1 a unimodular eigenvalue forces a root at ±1; test exactly.
    for x in [1i64, -1] {
        if ((x + int_coeffs[0]) * x + int_coeffs[1]) * x + int_coeffs[2] == 0 {
            return Err(AnosovError::NotHyperbolic(1.0));
        }
    }
    let coeffs = int_coeffs.map(|c| c as f64);
    let r = cubic_real_root(&coeffs);
    // deflate: λ³ + c2 λ² + c1 λ + c0 = (λ − r)(λ² + a λ + b)
    let a = coeffs[0] + r;
    let b = coeffs[1] + r * a;
    let disc = a * a - 4.0 * b;
    if (r.abs() - 1.0).abs() < UNIT_CIRCLE_TOL {
        return Err(AnosovError::NotHyperbolic(r.abs()));
    }
    if disc >= 0.0 {
        let s = disc.sqrt();
        for root in [(-a + s) / 2.0, (-a - s) / 2.0] {
            if (root.abs() - 1.0).abs() < UNIT_CIRCLE_TOL {
                return Err(AnosovError::NotHyperbolic(root.abs()));
            }
        }
        let repeated = s < 1e-9 || ((-a + s) / 2.0 - r).abs() < 1e-9 || ((-a - s) / 2.0 - r).abs() < 1e-9;
        return Err(AnosovError::UnsupportedSpectrum(if repeated {
            "repeated real roots".into()
        } else {
            "three real eigenvalues; the stable pair must be complex".into()
        }));
    }
    let modulus = b.sqrt();
    if (modulus - 1.0).abs() < UNIT_CIRCLE_TOL {
        return Err(AnosovError::NotHyperbolic(modulus));
    }
    if r.abs() < 1.0 || modulus > 1.0 {
        return Err(AnosovError::UnsupportedSpectrum(
            "two-dimensional unstable bundle; the contracting pair must be complex".into(),
        ));
    }

    let base = int_to_f64(&matrix);
    let mut e_u = null_vector_real(&(base - Matrix3::identity() * r));
    e_u /= e_u.norm();
    let mu = Complex64::new(-a / 2.0, (4.0 * b - a * a).sqrt() / 2.0);
    let shifted: [[Complex64; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| Complex64::new(base[(i, j)], 0.0) - if i == j { mu } else { Complex64::new(0.0, 0.0) })
    });
    let v = null_vector_complex(&shifted);
    let re = Vector3::new(v[0].re, v[1].re, v[2].re);
    let im = Vector3::new(v[0].im, v[1].im, v[2].im);
    let phi = 0.5 * (2.0 * re.dot(&im)).atan2(re.dot(&re) - im.dot(&im));
    let rot = Complex64::from_polar(1.0, -phi);
    let v: [Complex64; 3] = std::array::from_fn(|i| v[i] * rot);
    let mut e_s1 = Vector3::new(v[0].re, v[1].re, v[2].re);
    let mut e_s2 = Vector3::new(v[0].im, v[1].im, v[2].im);
    let scale = (e_s1.norm() * e_s2.norm()).sqrt();
    e_s1 /= scale;
    e_s2 /= scale;
    let mut p = Matrix3::from_columns(&[e_s1, e_s2, e_u]);
    if p.determinant() < 0.0 {
        e_u = -e_u;
        p = Matrix3::from_columns(&[e_s1, e_s2, e_u]);
    }
    let p_inv = p.try_inverse().ok_or_else(|| AnosovError::UnsupportedSpectrum("singular eigenframe".into()))?;
    let adapted = p_inv * base * p;
    let theta_c = adapted[(1, 0)].atan2(adapted[(0, 0)]);

    let iterate = int_pow(&matrix, power).ok_or(AnosovError::Overflow)?;
    let inv_base: IntMatrix3 = {
        let adj = int_adjugate(&matrix);
        adj.map(|row| row.map(|x| x * det))
    };
    let iterate_inverse = int_pow(&inv_base, power).ok_or(AnosovError::Overflow)?;
    let stable_mod = modulus.powi(power as i32);
    let stable_angle = theta_c * power as f64;
    let (sn, cs) = stable_angle.sin_cos();
    let iterate_stable_block = Matrix2::new(cs, -sn, sn, cs) * stable_mod;

    Ok(AnosovModel {
        matrix,
        power,
        lambda_u: r.abs(),
        lambda_c_mod: modulus,
        theta_c,
        e_u,
        e_s1,
        e_s2,
        adapted_transform: p,
        unstable_eigenvalue: r,
        adapted_inverse: p_inv,
        iterate_f64: int_to_f64(&iterate),
        iterate_inverse_f64: int_to_f64(&iterate_inverse),
        iterate,
        iterate_inverse,
        iterate_stable_block,
    })
}

impl AnosovModel {
    /// [`DEFAULT_MATRIX`] with power 1.
    pub fn standard() -> Self {
        eigen_split(DEFAULT_MATRIX, 1).expect("default matrix is hyperbolic")
    }

    /// `matrix^power` as integers.
    pub fn iterate(&self) -> &IntMatrix3 {
        &self.iterate
    }

    pub fn iterate_inverse(&self) -> &IntMatrix3 {
        &self.iterate_inverse
    }

    pub fn iterate_f64(&self) -> &Matrix3<f64> {
        &self.iterate_f64
    }

    pub fn iterate_inverse_f64(&self) -> &Matrix3<f64> {
        &self.iterate_inverse_f64
    }

    /// Signed real eigenvalue of `matrix` (|·| = `lambda_u`).
    pub fn unstable_eigenvalue(&self) -> f64 {
        self.unstable_eigenvalue
    }

    /// Unstable multiplier of the iterate, signed.
    pub fn iterate_unstable(&self) -> f64 {
        self.unstable_eigenvalue.powi(self.power as i32)
    }

    pub fn iterate_lambda_u(&self) -> f64 {
        self.lambda_u.powi(self.power as i32)
    }

    pub fn iterate_lambda_c(&self) -> f64 {
        self.lambda_c_mod.powi(self.power as i32)
    }

    /// The iterate restricted to `E^s`, in the `(e_s1, e_s2)` frame: a scaled rotation.
    pub fn iterate_stable_block(&self) -> &Matrix2<f64> {
        &self.iterate_stable_block
    }

    /// The iterate in adapted coordinates (block diagonal).
    pub fn iterate_adapted(&self) -> Matrix3<f64> {
        let s = &self.iterate_stable_block;
        Matrix3::new(s[(0, 0)], s[(0, 1)], 0.0, s[(1, 0)], s[(1, 1)], 0.0, 0.0, 0.0, self.iterate_unstable())
    }

    /// Ambient → adapted coordinates.
    pub fn adapted_inverse(&self) -> &Matrix3<f64> {
        &self.adapted_inverse
    }

    #[inline]
    pub fn to_adapted(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.adapted_inverse * v
    }

    #[inline]
    pub fn from_adapted(&self, w: &Vector3<f64>) -> Vector3<f64> {
        self.adapted_transform * w
    }

    #[inline]
    pub fn adapted_norm(&self, v: &Vector3<f64>) -> f64 {
        self.to_adapted(v).norm()
    }

    /// Conjugates an ambient linear map into the adapted frame.
    pub fn matrix_to_adapted(&self, m: &Matrix3<f64>) -> Matrix3<f64> {
        self.adapted_inverse * m * self.adapted_transform
    }

    /// Applies the iterate: `wrap(A^N · p)`.
    #[inline]
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        TorusPoint::from_vector(&self.apply_lift(&p.lift()))
    }

    /// `A^N · x` on the universal cover.
    #[inline]
    pub fn apply_lift(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.iterate_f64 * x
    }

    #[inline]
    pub fn apply_inverse(&self, p: &TorusPoint) -> TorusPoint {
        TorusPoint::from_vector(&(self.iterate_inverse_f64 * p.lift()))
    }

    /// Exact periodic points of the iterate with period dividing `period`.
    pub fn periodic_points(&self, period: u32) -> Result<Vec<PeriodicPoint>, AnosovError> {
        periodic_points(self, period)
    }

    /// Periodic points of exact period ≤ `max_period`, grouped into orbits.
    pub fn periodic_orbits(&self, max_period: u32) -> Result<Vec<PeriodicOrbit>, AnosovError> {
        let mut orbits = Vec::new();
        for n in 1..=max_period {
            orbits.extend(self.orbits_of_exact_period(n)?);
        }
        Ok(orbits)
    }

    pub fn orbits_of_exact_period(&self, n: u32) -> Result<Vec<PeriodicOrbit>, AnosovError> {
        let points = periodic_points(self, n)?;
        let mut orbits = Vec::new();
        let mut seen = BTreeSet::new();
        for p in points.iter().filter(|p| p.exact_period == n) {
            if seen.contains(&p.numerators) {
                continue;
            }
            let mut members = Vec::with_capacity(n as usize);
            let mut cur = p.numerators;
            for _ in 0..n {
                seen.insert(cur);
                members.push(PeriodicPoint::from_numerators(cur, p.denominator, n));
                cur = int_apply_mod(&self.iterate, &cur, p.denominator);
            }
            orbits.push(PeriodicOrbit { period: n, points: members });
        }
        Ok(orbits)
    }
}

pub fn apply_linear(m: &AnosovModel, p: &TorusPoint) -> TorusPoint {
    m.apply(p)
}

/// A periodic point of the iterate, with exact rational coordinates
/// `numerators / denominator`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub point: TorusPoint,
    pub exact_period: u32,
    pub numerators: [i64; 3],
    pub denominator: i64,
}

impl PeriodicPoint {
    fn from_numerators(num: [i64; 3], den: i64, exact_period: u32) -> Self {
        let point = TorusPoint::wrap_finite(num.map(|n| n as f64 / den as f64));
        PeriodicPoint { point, exact_period, numerators: num, denominator: den }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub period: u32,
    pub points: Vec<PeriodicPoint>,
}

impl PeriodicOrbit {
    pub fn distance_to(&self, p: &TorusPoint) -> f64 {
        self.points.iter().map(|q| q.point.distance(p)).fold(f64::INFINITY, f64::min)
    }
}

pub const MAX_PERIOD: u32 = 8;

/// Solutions of `(A^n − I)x ∈ Z³`, i.e. the finite group `B⁻¹Z³/Z³` with
/// `B = A^n − I`. It is generated by the columns of `B⁻¹ = adj(B)/det(B)`;
/// the group is closed by breadth-first search over those generators.
pub fn periodic_points(m: &AnosovModel, period: u32) -> Result<Vec<PeriodicPoint>, AnosovError> {
    if period == 0 || period > MAX_PERIOD {
        return Err(AnosovError::PeriodOutOfRange(period, MAX_PERIOD));
    }
    let mut b = int_pow(&m.iterate, period).ok_or(AnosovError::Overflow)?;
    for (i, row) in b.iter_mut().enumerate() {
        row[i] -= 1;
    }
    let det = int_det(&b);
    if det == 0 {
        return Err(AnosovError::DegeneratePeriod(period));
    }
    let den = det.abs();
    let adj = int_adjugate(&b);
    let sign = det.signum();
    let gens: Vec<[i64; 3]> =
        (0..3).map(|j| [0, 1, 2].map(|i| (sign * adj[i][j]).rem_euclid(den))).collect();

    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert([0i64; 3]);
    queue.push_back([0i64; 3]);
    while let Some(x) = queue.pop_front() {
        for g in &gens {
            let y = [0, 1, 2].map(|i| (x[i] + g[i]).rem_euclid(den));
            if seen.insert(y) {
                queue.push_back(y);
            }
        }
    }
    if seen.len() as u64 != den as u64 {
        return Err(AnosovError::CountMismatch { found: seen.len(), expected: den as u64 });
    }

    let divisors: Vec<u32> = (1..=period).filter(|k| period.is_multiple_of(*k)).collect();
    let mut out = Vec::with_capacity(seen.len());
    for num in seen {
        let mut cur = num;
        let mut exact = period;
        for k in 1..=period {
            cur = int_apply_mod(&m.iterate, &cur, den);
            if cur == num && divisors.contains(&k) {
                exact = k;
                break;
            }
        }
        out.push(PeriodicPoint::from_numerators(num, den, exact));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// cones

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeKind {
    Unstable,
    CenterStable,
}

/// Constant cone field around `E^u` and `E^s`, half-angles in the adapted metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeField {
    pub theta_u: f64,
    pub theta_cs: f64,
    /// Measured crossing length, filled in by the property verifier.
    pub l_crossing: Option<f64>,
}

impl ConeField {
    pub fn new(theta_u: f64, theta_cs: f64) -> Result<Self, AnosovError> {
        for t in [theta_u, theta_cs] {
            if !(t > 0.0 && t < std::f64::consts::FRAC_PI_4) {
                return Err(AnosovError::InvalidConeAngle(t));
            }
        }
        Ok(ConeField { theta_u, theta_cs, l_crossing: None })
    }
}

impl Default for ConeField {
    fn default() -> Self {
        ConeField { theta_u: 0.15, theta_cs: 0.15, l_crossing: None }
    }
}

/// Angle between an adapted-frame vector and `E^u`.
#[inline]
pub fn angle_to_unstable(w: &Vector3<f64>) -> f64 {
    w.xy().norm().atan2(w.z.abs())
}

/// Angle between an adapted-frame vector and `E^s`.
#[inline]
pub fn angle_to_stable(w: &Vector3<f64>) -> f64 {
    w.z.abs().atan2(w.xy().norm())
}

/// Closed-cone membership of an ambient vector.
pub fn cone_membership(m: &AnosovModel, c: &ConeField, v: &Vector3<f64>, which: ConeKind) -> Result<bool, AnosovError> {
    if v.norm() == 0.0 {
        return Err(AnosovError::ZeroVector);
    }
    let w = m.to_adapted(v);
    let (across, along, half) = match which {
        ConeKind::Unstable => (w.xy().norm(), w.z.abs(), c.theta_u),
        ConeKind::CenterStable => (w.z.abs(), w.xy().norm(), c.theta_cs),
    };
    Ok(across <= half.tan() * along * (1.0 + 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Bisection on the literal polynomial λ³ − λ² − 1 over [1, 2].
    fn oracle_root() -> f64 {
        let p = |x: f64| x * x * x - x * x - 1.0;
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn default_spectrum() {
        let m = AnosovModel::standard();
        let root = oracle_root();
        assert!((m.lambda_u - root).abs() < 1e-12);
        assert!((m.lambda_u - 1.4655712319).abs() < 1e-9);
        assert!((m.lambda_c_mod - root.powf(-0.5)).abs() < 1e-12);
        assert!((m.lambda_c_mod - 0.8260313).abs() < 1e-7);
    }

    #[test]
    fn characteristic_polynomial_of_default() {
        assert_eq!(characteristic_coefficients(&DEFAULT_MATRIX), [-1, 0, -1]);
        assert_eq!(int_det(&DEFAULT_MATRIX), 1);
    }

    #[test]
    fn eigenvector_residuals_and_similarity() {
        let m = AnosovModel::standard();
        let a = int_to_f64(&m.matrix);
        assert!((a * m.e_u - m.e_u * m.lambda_u).norm() < 1e-12);
        let ad = m.matrix_to_adapted(&a);
        let expected = m.iterate_adapted();
        assert!((ad - expected).abs().max() < 1e-12, "{ad} vs {expected}");
        // stable block is a similarity: equal singular values
        let block = ad.fixed_view::<2, 2>(0, 0).into_owned();
        let sv = block.singular_values();
        assert!((sv[0] - m.lambda_c_mod).abs() < 1e-12 && (sv[1] - m.lambda_c_mod).abs() < 1e-12);
    }

    #[test]
    fn conjugated_matrix_has_same_lambda_u() {
        let p: IntMatrix3 = [[1, 1, 0], [0, 1, 0], [0, 0, 1]];
        let p_inv: IntMatrix3 = [[1, -1, 0], [0, 1, 0], [0, 0, 1]];
        let conj = int_mul(&int_mul(&p, &DEFAULT_MATRIX).unwrap(), &p_inv).unwrap();
        let m = eigen_split(conj, 1).unwrap();
        assert!((m.lambda_u - AnosovModel::standard().lambda_u).abs() < 1e-13);
    }

    #[test]
    fn spectrum_errors() {
        assert!(matches!(eigen_split([[2, 0, 0], [0, 1, 0], [0, 0, 1]], 1), Err(AnosovError::NotUnimodular(2))));
        assert!(matches!(eigen_split(int_identity(), 1), Err(AnosovError::NotHyperbolic(_))));
        // cat map × identity: eigenvalue 1
        assert!(matches!(eigen_split([[2, 1, 0], [1, 1, 0], [0, 0, 1]], 1), Err(AnosovError::NotHyperbolic(_))));
        // inverse of the default matrix has a complex expanding pair
        let inv = int_adjugate(&DEFAULT_MATRIX);
        assert!(matches!(eigen_split(inv, 1), Err(AnosovError::UnsupportedSpectrum(_))));
        assert!(matches!(eigen_split(DEFAULT_MATRIX, 0), Err(AnosovError::InvalidPower)));
    }

    #[test]
    fn apply_linear_examples() {
        let m = AnosovModel::standard();
        assert_eq!(apply_linear(&m, &TorusPoint::ORIGIN), TorusPoint::ORIGIN);
        let p = TorusPoint::wrap([0.5, 0.5, 0.0]).unwrap();
        assert_eq!(apply_linear(&m, &p).coords(), [0.0, 0.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = TorusPoint::random(&mut rng);
            assert!(m.apply_inverse(&m.apply(&x)).distance(&x) < 1e-12);
        }
    }

    #[test]
    fn periodic_point_examples() {
        let m = AnosovModel::standard();
        let p1 = m.periodic_points(1).unwrap();
        assert_eq!(p1.len(), 1);
        assert_eq!(p1[0].point, TorusPoint::ORIGIN);
        let p2 = m.periodic_points(2).unwrap();
        assert_eq!(p2.len(), 3);
        assert_eq!(p2.iter().filter(|p| p.exact_period == 2).count(), 2);
    }

    #[test]
    fn periodic_counts_match_determinant_and_are_periodic() {
        let m = AnosovModel::standard();
        let a = int_to_f64(&m.matrix);
        for n in 1..=6u32 {
            // independent oracle: floating determinant of A^n − I
            let an = (0..n).fold(Matrix3::<f64>::identity(), |acc, _| acc * a);
            let expected = (an - Matrix3::identity()).determinant().abs().round() as usize;
            let pts = m.periodic_points(n).unwrap();
            assert_eq!(pts.len(), expected, "period {n}");
            for p in &pts {
                let mut x = p.point;
                for _ in 0..n {
                    x = m.apply(&x);
                }
                assert!(x.distance(&p.point) < 1e-9);
                assert_eq!(n % p.exact_period, 0);
            }
        }
    }

    #[test]
    fn orbits_partition_points() {
        let m = AnosovModel::standard();
        let orbits = m.periodic_orbits(4).unwrap();
        assert_eq!(orbits[0].period, 1);
        assert_eq!(orbits.iter().filter(|o| o.period == 2).count(), 1);
        for o in &orbits {
            assert_eq!(o.points.len() as u32, o.period);
        }
    }

    #[test]
    fn cone_membership_examples() {
        let m = AnosovModel::standard();
        let c = ConeField::default();
        assert!(cone_membership(&m, &c, &m.e_u, ConeKind::Unstable).unwrap());
        assert!(!cone_membership(&m, &c, &m.e_s1, ConeKind::Unstable).unwrap());
        assert!(cone_membership(&m, &c, &m.e_s2, ConeKind::CenterStable).unwrap());
        let boundary = m.from_adapted(&Vector3::new(c.theta_u.sin(), 0.0, c.theta_u.cos()));
        assert!(cone_membership(&m, &c, &boundary, ConeKind::Unstable).unwrap());
        assert_eq!(cone_membership(&m, &c, &Vector3::zeros(), ConeKind::Unstable), Err(AnosovError::ZeroVector));
        assert!(ConeField::new(0.9, 0.1).is_err());
    }

    #[test]
    fn cones_are_invariant_under_the_linear_map() {
        let m = AnosovModel::standard();
        let c = ConeField::default();
        let ad = m.iterate_adapted();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst_expansion = f64::INFINITY;
        for _ in 0..100_000 {
            let ang = rng.gen::<f64>() * c.theta_u;
            let az = rng.gen::<f64>() * std::f64::consts::TAU;
            let w = Vector3::new(ang.sin() * az.cos(), ang.sin() * az.sin(), ang.cos());
            let img = ad * w;
            if ang > 0.0 {
                assert!(angle_to_unstable(&img) < ang);
            }
            worst_expansion = worst_expansion.min(img.norm() / w.norm());
            // dual statement for the centre-stable cone under the inverse
            let ws = Vector3::new(ang.cos() * az.cos(), ang.cos() * az.sin(), ang.sin());
            let back = ad.try_inverse().unwrap() * ws;
            if ang > 0.0 {
                assert!(angle_to_stable(&back) < ang);
            }
        }
        assert!(worst_expansion >= m.lambda_u * c.theta_u.cos() - 1e-12);
    }
}
