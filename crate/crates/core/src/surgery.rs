//! The Derived-from-Anosov map: `A^N` modified inside a small neighbourhood
//! of the fixed point `q` so that `q` becomes a saddle with eigenvalues
//! `(mu_s, mu_w, lambda_u^N)`, while the stable foliation of `A` stays
//! invariant.
//!
//! Near `q` the map is written in adapted leaf coordinates `(s, u)`, with
//! `s ∈ E^s ≅ R²` and `u ∈ E^u ≅ R`. The unstable coordinate is never touched
//! (`u ↦ λ u`), so each plaque `{u = const}` is mapped into a plaque. Inside
//! the support the stable action is
//!
//! ```text
//! g(s, u) = c(W₁) · R(θ (1 − W₁)) · diag(1, e(W₂)) · s
//! c(W) = ρ^(1−W) μ_s^W,   e(W) = (μ_w / μ_s)^W
//! W₁ = τ₁(|s|) χ(|u|),    W₂ = τ₂(|s|) χ(|u|)
//! ```
//!
//! The outer profile `τ₁` blends the linear action `ρ R(θ)` into the
//! homothety `μ_s I`. On that annulus `g` is a scaled rotation with
//! `|g(s)| < |s|`, so backward orbits leave the support and the stable
//! manifold of `q` is long. The inner profile `τ₂` lives where `τ₁ ≡ 1` and
//! raises the `e_s2` multiplier from `μ_s` to `μ_w`: `q` becomes a saddle in
//! its plaque, and both branches of its weak-unstable curve end at plaque
//! sinks on the `e_s2` axis. Both profiles are quintic smoothsteps in
//! `log |s|`, spread over `outer_log_span` and `inner_log_span` e-folds.
//!
//! The support `{|s| < δ_s, |u| < δ_u}` lies inside the adapted ball of
//! radius `delta`, and `f = A` bit-for-bit outside it.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anosov::{AnosovError, AnosovModel, PeriodicOrbit, MAX_PERIOD};
use crate::maps::TorusMap;
use crate::torus::TorusPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurgeryError {
    #[error("invalid surgery parameter: {0}")]
    InvalidParameter(String),
    #[error("eigenvalue product mu_s*mu_w = {0} must exceed 1")]
    EigenvalueProduct(f64),
    #[error("mu_w = {mu_w} exceeds the cs-growth budget 1 + beta = {budget}")]
    WeakUnstableOverBudget { mu_w: f64, budget: f64 },
    #[error("surgery centre is not fixed by the linear iterate (moved by {0})")]
    CenterNotFixed(f64),
    #[error("surgery radius too large for a unique local lift (delta*|P| = {0} >= 0.5)")]
    RadiusTooLarge(f64),
    #[error("reference orbit lies within the surgery ball (adapted distance {0})")]
    ReferenceOrbitInBall(f64),
    #[error("no periodic orbit other than q with period <= {0}")]
    NoReferenceOrbit(u32),
    #[error("not a diffeomorphism: reduce correction strength ({0})")]
    NotDiffeomorphism(String),
    #[error("beta budget exceeded: cs-growth {measured} > {bound}")]
    BetaBudgetExceeded { measured: f64, bound: f64 },
    #[error("inverse iteration failed at {point}: residual {residual}")]
    InverseDiverged { point: TorusPoint, residual: f64 },
    #[error("operation requires surgery to be enabled")]
    SurgeryDisabled,
    #[error(transparent)]
    Linear(#[from] AnosovError),
}

impl SurgeryError {
    pub fn code(&self) -> &'static str {
        match self {
            SurgeryError::InvalidParameter(_) => "surgery.invalid_parameter",
            SurgeryError::EigenvalueProduct(_) => "surgery.eigenvalue_product",
            SurgeryError::WeakUnstableOverBudget { .. } => "surgery.mu_w_over_budget",
            SurgeryError::CenterNotFixed(_) => "surgery.center_not_fixed",
            SurgeryError::RadiusTooLarge(_) => "surgery.radius_too_large",
            SurgeryError::ReferenceOrbitInBall(_) => "surgery.reference_orbit_in_ball",
            SurgeryError::NoReferenceOrbit(_) => "surgery.no_reference_orbit",
            SurgeryError::NotDiffeomorphism(_) => "surgery.not_diffeomorphism",
            SurgeryError::BetaBudgetExceeded { .. } => "surgery.beta_budget_exceeded",
            SurgeryError::InverseDiverged { .. } => "surgery.inverse_diverged",
            SurgeryError::SurgeryDisabled => "surgery.disabled",
            SurgeryError::Linear(e) => e.code(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurgeryParams {
    /// When false the map is exactly the linear iterate.
    pub enabled: bool,
    pub q: TorusPoint,
    /// Radius of the adapted ball containing the support.
    pub delta: f64,
    pub mu_s: f64,
    pub mu_w: f64,
    pub beta: f64,
    /// Support radius in `E^s`, as a fraction of `delta`.
    pub s_radius_frac: f64,
    /// Support half-height along `E^u`, as a fraction of `delta`.
    pub u_radius_frac: f64,
    /// Fraction of the `E^u` half-height on which the profile is flat.
    pub u_plateau_frac: f64,
    /// E-folds of `|s|` over which the rotation is switched off.
    pub outer_log_span: f64,
    /// E-folds of `|s|` over which the weak direction turns expanding.
    pub inner_log_span: f64,
}

impl Default for SurgeryParams {
    fn default() -> Self {
        SurgeryParams {
            enabled: true,
            q: TorusPoint::ORIGIN,
            delta: 0.08,
            mu_s: 0.88,
            mu_w: 1.20,
            beta: 0.25,
            s_radius_frac: 0.3,
            u_radius_frac: 0.95,
            u_plateau_frac: 0.1,
            outer_log_span: 6.0,
            inner_log_span: 7.0,
        }
    }
}

impl SurgeryParams {
    pub fn disabled() -> Self {
        SurgeryParams { enabled: false, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SurgeryError> {
        let bad = |m: &str| Err(SurgeryError::InvalidParameter(m.to_string()));
        let finite = [
            self.delta,
            self.mu_s,
            self.mu_w,
            self.beta,
            self.s_radius_frac,
            self.u_radius_frac,
            self.u_plateau_frac,
            self.outer_log_span,
            self.inner_log_span,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite value");
        }
        if self.delta <= 0.0 {
            return bad("delta must be positive");
        }
        if !(self.mu_s > 0.0 && self.mu_s < 1.0) {
            return bad("mu_s must lie in (0, 1)");
        }
        if self.mu_w <= 1.0 {
            return bad("mu_w must exceed 1");
        }
        if self.beta <= 0.0 {
            return bad("beta must be positive");
        }
        if self.mu_s * self.mu_w <= 1.0 {
            return Err(SurgeryError::EigenvalueProduct(self.mu_s * self.mu_w));
        }
        if self.mu_w > 1.0 + self.beta {
            return Err(SurgeryError::WeakUnstableOverBudget { mu_w: self.mu_w, budget: 1.0 + self.beta });
        }
        if !(self.s_radius_frac > 0.0 && self.u_radius_frac > 0.0) {
            return bad("support fractions must be positive");
        }
        if self.s_radius_frac.hypot(self.u_radius_frac) >= 1.0 {
            return bad("support cylinder must fit inside the delta ball");
        }
        if !(0.0..1.0).contains(&self.u_plateau_frac) {
            return bad("u_plateau_frac must lie in [0, 1)");
        }
        if self.outer_log_span <= 0.0 || self.inner_log_span <= 0.0 {
            return bad("log spans must be positive");
        }
        Ok(())
    }
}

/// Quintic smoothstep `6t⁵ − 15t⁴ + 10t³`, clamped to `[0, 1]`.
#[inline]
pub fn smoothstep5(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

#[inline]
pub fn smoothstep5_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (1.0 - t) * (1.0 - t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Bump {
    ds: f64,
    du: f64,
    ln_ds: f64,
    outer_span: f64,
    ln_rc: f64,
    inner_span: f64,
    plateau: f64,
}

#[derive(Clone, Copy, Debug)]
struct Weight {
    w1: f64,
    w2: f64,
    grad1: Vector2<f64>,
    grad2: Vector2<f64>,
    du1: f64,
    du2: f64,
}

impl Weight {
    const ZERO: Weight =
        Weight { w1: 0.0, w2: 0.0, grad1: Vector2::new(0.0, 0.0), grad2: Vector2::new(0.0, 0.0), du1: 0.0, du2: 0.0 };
}

/// Log-radial smoothstep `φ((ln r0 − ln r)/span)` and its `r`-derivative.
#[inline]
fn log_profile(ln_r0: f64, span: f64, r: f64, ln_r: f64) -> (f64, f64) {
    let t = (ln_r0 - ln_r) / span;
    (smoothstep5(t), -smoothstep5_derivative(t) / (span * r))
}

impl Bump {
    fn new(p: &SurgeryParams, outer_span: f64, inner_span: f64) -> Self {
        let ds = p.s_radius_frac * p.delta;
        Bump {
            ds,
            du: p.u_radius_frac * p.delta,
            ln_ds: ds.ln(),
            outer_span,
            ln_rc: ds.ln() - outer_span,
            inner_span,
            plateau: p.u_plateau_frac,
        }
    }

    #[inline]
    fn contains(&self, y: &Vector3<f64>) -> bool {
        y.z.abs() < self.du && y.x.hypot(y.y) < self.ds
    }

    /// Radius below which the rotation is off.
    fn core_radius(&self) -> f64 {
        self.ln_rc.exp()
    }

    /// Radius below which the map is exactly `diag(μ_s, μ_w)` on `u = 0`.
    fn inner_radius(&self) -> f64 {
        (self.ln_rc - self.inner_span).exp()
    }

    #[inline]
    fn weight(&self, s: &Vector2<f64>, u: f64) -> Weight {
        let r = s.x.hypot(s.y);
        let au = u.abs();
        if r >= self.ds || au >= self.du {
            return Weight::ZERO;
        }
        let ((t1, d1), (t2, d2)) = if r > 0.0 {
            let ln_r = r.ln();
            (log_profile(self.ln_ds, self.outer_span, r, ln_r), log_profile(self.ln_rc, self.inner_span, r, ln_r))
        } else {
            ((1.0, 0.0), (1.0, 0.0))
        };
        let span_u = (1.0 - self.plateau) * self.du;
        let tu = (au - self.plateau * self.du) / span_u;
        let chi = 1.0 - smoothstep5(tu);
        let dchi = -smoothstep5_derivative(tu) / span_u * u.signum();
        let rhat = if r > 0.0 { s / r } else { Vector2::zeros() };
        Weight {
            w1: t1 * chi,
            w2: t2 * chi,
            grad1: rhat * (d1 * chi),
            grad2: rhat * (d2 * chi),
            du1: t1 * dchi,
            du2: t2 * dchi,
        }
    }
}

/// Diagnostics gathered while building and validating the map.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub outer_log_span: f64,
    pub inner_log_span: f64,
    pub retries: u32,
    pub grid_points: usize,
    pub min_det: f64,
    pub max_cs_growth_grid: f64,
    pub max_du_coupling: f64,
    pub inversion_samples: usize,
    pub max_inversion_residual: f64,
    /// `sup |g − A_s s|` in the adapted metric.
    pub g_sup_adapted: f64,
    /// Upper bound for `sup |f − A|` in ambient coordinates.
    pub g_sup: f64,
    pub core_radius: f64,
    pub inner_radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DAMap {
    pub model: AnosovModel,
    pub params: SurgeryParams,
    /// `diag(mu_s, mu_w) − A_s^N` in the `(e_s1, e_s2)` frame.
    pub correction_matrix: Matrix2<f64>,
    pub reference_orbit: PeriodicOrbit,
    pub build: BuildReport,
    q_lift: Vector3<f64>,
    p: Matrix3<f64>,
    p_inv: Matrix3<f64>,
    p_s: nalgebra::Matrix3x2<f64>,
    a_n: Matrix3<f64>,
    a_n_inv: Matrix3<f64>,
    a_s: Matrix2<f64>,
    lambda_n: f64,
    ln_rho_n: f64,
    theta_n: f64,
    ln_mu_s: f64,
    ln_mu_ratio: f64,
    bump: Bump,
}

#[inline]
fn rotation(phi: f64) -> Matrix2<f64> {
    let (s, c) = phi.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Largest singular value of a 2×2 matrix.
#[inline]
pub fn spectral_norm2(m: &Matrix2<f64>) -> f64 {
    let f2 = m.norm_squared();
    let det = m.determinant();
    ((f2 + (f2 * f2 - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
}

/// Adapted-frame pieces of the local map at one point.
#[derive(Clone, Copy, Debug)]
pub struct LocalJacobian {
    /// `∂g/∂s`: the derivative along the stable plaque.
    pub ss: Matrix2<f64>,
    /// `∂g/∂u`.
    pub su: Vector2<f64>,
    /// Unstable multiplier (signed).
    pub uu: f64,
}

impl LocalJacobian {
    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.ss[(0, 0)],
            self.ss[(0, 1)],
            self.su.x,
            self.ss[(1, 0)],
            self.ss[(1, 1)],
            self.su.y,
            0.0,
            0.0,
            self.uu,
        )
    }
}

/// Builds and validates the DA map.
pub fn build_da_map(model: AnosovModel, params: SurgeryParams) -> Result<DAMap, SurgeryError> {
    params.validate()?;
    let q = params.q;
    let moved = model.apply(&q).distance(&q);
    if moved > 1e-12 {
        return Err(SurgeryError::CenterNotFixed(moved));
    }
    let p_norm = model.adapted_transform.singular_values().max();
    if params.delta * p_norm >= 0.5 {
        return Err(SurgeryError::RadiusTooLarge(params.delta * p_norm));
    }
    let reference_orbit = select_reference_orbit(&model, &q)?;
    let p_inv = *model.adapted_inverse();
    let r_dist = reference_orbit
        .points
        .iter()
        .map(|x| (p_inv * q.nearest_lift(&x.point).0).norm())
        .fold(f64::INFINITY, f64::min);
    if r_dist <= params.delta {
        return Err(SurgeryError::ReferenceOrbitInBall(r_dist));
    }

    let n = model.power as f64;
    let theta_n = {
        let t = model.theta_c * n;
        t.sin().atan2(t.cos())
    };
    let rho_n = model.iterate_lambda_c();
    let a_s = *model.iterate_stable_block();
    let mut map = DAMap {
        correction_matrix: Matrix2::new(params.mu_s, 0.0, 0.0, params.mu_w) - a_s,
        reference_orbit,
        build: BuildReport::default(),
        q_lift: q.lift(),
        p: model.adapted_transform,
        p_inv,
        p_s: model.adapted_transform.fixed_columns::<2>(0).into_owned(),
        a_n: *model.iterate_f64(),
        a_n_inv: *model.iterate_inverse_f64(),
        a_s,
        lambda_n: model.iterate_unstable(),
        ln_rho_n: rho_n.ln(),
        theta_n,
        ln_mu_s: params.mu_s.ln(),
        ln_mu_ratio: (params.mu_w / params.mu_s).ln(),
        bump: Bump::new(&params, params.outer_log_span, params.inner_log_span),
        model,
        params,
    };
    if !params.enabled {
        return Ok(map);
    }

    // Steeper-than-budget ramps are relaxed by spreading the profile over
    // more scales before giving up.
    let budget = 1.0 + params.beta;
    let (mut outer, mut inner) = (params.outer_log_span, params.inner_log_span);
    let mut retries = 0;
    loop {
        map.bump = Bump::new(&params, outer, inner);
        let grid = map.grid_check();
        if grid.min_det <= 0.0 {
            return Err(SurgeryError::NotDiffeomorphism(format!(
                "Jacobian determinant {} at grid point",
                grid.min_det
            )));
        }
        if grid.max_cs <= budget {
            map.build = BuildReport {
                outer_log_span: outer,
                inner_log_span: inner,
                retries,
                grid_points: grid.points,
                min_det: grid.min_det,
                max_cs_growth_grid: grid.max_cs,
                max_du_coupling: grid.max_du,
                core_radius: map.bump.core_radius(),
                inner_radius: map.bump.inner_radius(),
                ..Default::default()
            };
            break;
        }
        if retries == 4 {
            return Err(SurgeryError::BetaBudgetExceeded { measured: grid.max_cs, bound: budget });
        }
        retries += 1;
        outer *= 1.25;
        inner *= 1.25;
    }
    let (g_ad, g_amb) = map.correction_sup();
    map.build.g_sup_adapted = g_ad;
    map.build.g_sup = g_amb;
    let (samples, worst) = map.inversion_check(10_000, 0x1d1e)?;
    map.build.inversion_samples = samples;
    map.build.max_inversion_residual = worst;
    Ok(map)
}

/// The reference saddle `r`: among periodic orbits of the smallest period
/// that has any orbit besides `q`, the one farthest from `q`.
fn select_reference_orbit(model: &AnosovModel, q: &TorusPoint) -> Result<PeriodicOrbit, SurgeryError> {
    for n in 1..=MAX_PERIOD {
        let orbits = match model.orbits_of_exact_period(n) {
            Ok(o) => o,
            Err(AnosovError::DegeneratePeriod(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        let best = orbits
            .into_iter()
            .filter(|o| o.distance_to(q) > 1e-12)
            .map(|o| (o.distance_to(q), o))
            .fold(None::<(f64, PeriodicOrbit)>, |acc, (d, o)| match acc {
                Some((bd, bo)) if bd >= d => Some((bd, bo)),
                _ => Some((d, o)),
            });
        if let Some((_, o)) = best {
            return Ok(o);
        }
    }
    Err(SurgeryError::NoReferenceOrbit(MAX_PERIOD))
}

struct GridSummary {
    points: usize,
    min_det: f64,
    max_cs: f64,
    max_du: f64,
}

impl DAMap {
    /// The unmodified linear map in the same parametrisation.
    pub fn linear(model: AnosovModel) -> Result<Self, SurgeryError> {
        build_da_map(model, SurgeryParams::disabled())
    }

    pub fn q(&self) -> TorusPoint {
        self.params.q
    }

    pub fn is_enabled(&self) -> bool {
        self.params.enabled
    }

    /// Radius of the support disc in `E^s`.
    pub fn support_s_radius(&self) -> f64 {
        self.bump.ds
    }

    pub fn support_u_radius(&self) -> f64 {
        self.bump.du
    }

    /// Adapted coordinates of `p` relative to `q`, via the nearest lift.
    #[inline]
    pub fn local_coords(&self, p: &TorusPoint) -> Vector3<f64> {
        self.p_inv * self.params.q.nearest_lift(p).0
    }

    /// Torus point with adapted coordinates `y` relative to `q`.
    #[inline]
    pub fn from_local(&self, y: &Vector3<f64>) -> TorusPoint {
        TorusPoint::from_vector(&(self.q_lift + self.p * y))
    }

    pub fn adapted_distance_to_q(&self, p: &TorusPoint) -> f64 {
        self.local_coords(p).norm()
    }

    #[inline]
    pub fn in_support(&self, p: &TorusPoint) -> bool {
        self.params.enabled && self.bump.contains(&self.local_coords(p))
    }

    /// `(c, rotation angle, e)` for given weights.
    #[inline]
    fn factors(&self, w1: f64, w2: f64) -> (f64, f64, f64) {
        let c = ((1.0 - w1) * self.ln_rho_n + w1 * self.ln_mu_s).exp();
        (c, self.theta_n * (1.0 - w1), (w2 * self.ln_mu_ratio).exp())
    }

    #[inline]
    fn stable_action(&self, s: &Vector2<f64>, wt: &Weight) -> Vector2<f64> {
        let (c, phi, e) = self.factors(wt.w1, wt.w2);
        rotation(phi) * Vector2::new(c * s.x, c * e * s.y)
    }

    /// The plaque map `g(s, u)` in adapted coordinates.
    pub fn plaque_map(&self, s: &Vector2<f64>, u: f64) -> Vector2<f64> {
        let wt = self.bump.weight(s, u);
        if wt.w1 == 0.0 {
            self.a_s * s
        } else {
            self.stable_action(s, &wt)
        }
    }

    fn local_jacobian_at(&self, s: &Vector2<f64>, u: f64) -> LocalJacobian {
        let wt = self.bump.weight(s, u);
        if wt.w1 == 0.0 {
            return LocalJacobian { ss: self.a_s, su: Vector2::zeros(), uu: self.lambda_n };
        }
        let (c, phi, e) = self.factors(wt.w1, wt.w2);
        let rot = rotation(phi);
        let base = rot * Matrix2::new(c, 0.0, 0.0, c * e);
        let g = base * s;
        let j = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        let dg_dw1 = g * (self.ln_mu_s - self.ln_rho_n) - j * g * self.theta_n;
        let dg_dw2 = rot * Vector2::new(0.0, c * e * self.ln_mu_ratio * s.y);
        LocalJacobian {
            ss: base + dg_dw1 * wt.grad1.transpose() + dg_dw2 * wt.grad2.transpose(),
            su: dg_dw1 * wt.du1 + dg_dw2 * wt.du2,
            uu: self.lambda_n,
        }
    }

    /// `f(p)`.
    #[inline]
    pub fn eval_forward(&self, p: &TorusPoint) -> TorusPoint {
        let ax = self.a_n * p.lift();
        if self.params.enabled {
            let y = self.local_coords(p);
            if self.bump.contains(&y) {
                let s = y.xy();
                let wt = self.bump.weight(&s, y.z);
                if wt.w1 > 0.0 {
                    let delta = self.stable_action(&s, &wt) - self.a_s * s;
                    return TorusPoint::from_vector(&(ax + self.p_s * delta));
                }
            }
        }
        TorusPoint::from_vector(&ax)
    }

    /// `P⁻¹(f(p) − A p)`: the correction in adapted coordinates. Its
    /// unstable component is identically zero.
    #[inline]
    pub fn stable_correction(&self, p: &TorusPoint) -> Vector2<f64> {
        if self.params.enabled {
            let y = self.local_coords(p);
            if self.bump.contains(&y) {
                let s = y.xy();
                let wt = self.bump.weight(&s, y.z);
                if wt.w1 > 0.0 {
                    return self.stable_action(&s, &wt) - self.a_s * s;
                }
            }
        }
        Vector2::zeros()
    }

    /// Linear map `A_s^N` of the stable plane in the adapted frame.
    pub fn stable_block(&self) -> &Matrix2<f64> {
        &self.a_s
    }

    /// `Df(p)` in the adapted frame.
    pub fn jacobian_adapted(&self, p: &TorusPoint) -> LocalJacobian {
        if self.params.enabled {
            let y = self.local_coords(p);
            if self.bump.contains(&y) {
                return self.local_jacobian_at(&y.xy(), y.z);
            }
        }
        LocalJacobian { ss: self.a_s, su: Vector2::zeros(), uu: self.lambda_n }
    }

    /// `Df(p)` in ambient coordinates; exactly the integer matrix off the support.
    pub fn eval_jacobian(&self, p: &TorusPoint) -> Matrix3<f64> {
        if self.in_support(p) {
            self.p * self.jacobian_adapted(p).to_matrix() * self.p_inv
        } else {
            self.a_n
        }
    }

    /// `f⁻¹(p)`. Since `f` maps the support onto its linear image, the
    /// preimage is `A⁻ᴺp` unless that point lies in the support; there the
    /// plaque equation `g(s, u) = A_s s_y` is solved by a contracting
    /// fixed-point iteration polished with Newton steps.
    pub fn eval_inverse(&self, p: &TorusPoint) -> Result<TorusPoint, SurgeryError> {
        let y = TorusPoint::from_vector(&(self.a_n_inv * p.lift()));
        if !self.params.enabled {
            return Ok(y);
        }
        let ly = self.local_coords(&y);
        if !self.bump.contains(&ly) {
            return Ok(y);
        }
        let u = ly.z;
        let target = self.a_s * ly.xy();
        let scale = target.norm();
        if scale == 0.0 {
            return Ok(self.from_local(&Vector3::new(0.0, 0.0, u)));
        }
        let mut s = ly.xy();
        for _ in 0..80 {
            let wt = self.bump.weight(&s, u);
            let (c, phi, e) = self.factors(wt.w1, wt.w2);
            let back = rotation(-phi) * target;
            let next = Vector2::new(back.x / c, back.y / (c * e));
            let step = (next - s).norm();
            s = next;
            if step <= 1e-15 * scale {
                break;
            }
        }
        let mut resid = (self.plaque_map(&s, u) - target).norm();
        for _ in 0..50 {
            if resid <= 1e-15 * scale {
                break;
            }
            let j = self.local_jacobian_at(&s, u).ss;
            let Some(ji) = j.try_inverse() else { break };
            let cand = s - ji * (self.plaque_map(&s, u) - target);
            let r2 = (self.plaque_map(&cand, u) - target).norm();
            if r2 < resid {
                s = cand;
                resid = r2;
            } else {
                break;
            }
        }
        if !(resid <= 1e-12) {
            return Err(SurgeryError::InverseDiverged { point: *p, residual: resid });
        }
        Ok(self.from_local(&Vector3::new(s.x, s.y, u)))
    }

    /// Jacobian determinant and cs-growth over a Cartesian 64³ grid of the
    /// adapted ball plus a log-polar grid resolving the radial profile.
    fn grid_check(&self) -> GridSummary {
        let n = 64usize;
        let delta = self.params.delta;
        let cart = (0..n * n * n).into_par_iter().filter_map(|idx| {
            let c = |k: usize| -delta + (k as f64 + 0.5) * 2.0 * delta / n as f64;
            let y = Vector3::new(c(idx / (n * n)), c((idx / n) % n), c(idx % n));
            (y.norm() < delta).then_some(y)
        });
        let (nr, nphi, nu) = (160usize, 32usize, 64usize);
        let b = self.bump;
        let span = b.outer_span + b.inner_span + 0.5;
        let polar = (0..nr * nphi * nu).into_par_iter().map(move |idx| {
            let (i, j, k) = (idx / (nphi * nu), (idx / nu) % nphi, idx % nu);
            let r = b.ds * (-span * i as f64 / (nr - 1) as f64).exp();
            let phi = 2.0 * PI * j as f64 / nphi as f64;
            let u = -b.du + (k as f64 + 0.5) * 2.0 * b.du / nu as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), u)
        });
        let (points, min_det, max_cs, max_du) = cart
            .chain(polar)
            .map(|y| {
                let j = self.local_jacobian_at(&y.xy(), y.z);
                (1usize, j.ss.determinant(), spectral_norm2(&j.ss), j.su.norm())
            })
            .reduce(
                || (0, f64::INFINITY, 0.0, 0.0),
                |a, b| (a.0 + b.0, a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)),
            );
        GridSummary { points, min_det, max_cs, max_du }
    }

    /// `sup |g(s,u) − A_s s|`: for fixed `|s| = r` the weights are
    /// `(τ₁ χ, τ₂ χ)` with `χ ∈ [0, 1]`, and the supremum over directions is
    /// an operator norm.
    fn correction_sup(&self) -> (f64, f64) {
        let b = self.bump;
        let nr = 6000;
        let span = b.outer_span + b.inner_span + 1.0;
        let sup = (0..nr)
            .into_par_iter()
            .map(|i| {
                let r = b.ds * (-span * i as f64 / (nr - 1) as f64).exp();
                let full = b.weight(&Vector2::new(r, 0.0), 0.0);
                (0..=64)
                    .map(|k| {
                        let chi = k as f64 / 64.0;
                        let (c, phi, e) = self.factors(full.w1 * chi, full.w2 * chi);
                        let m = rotation(phi) * Matrix2::new(c, 0.0, 0.0, c * e);
                        r * spectral_norm2(&(m - self.a_s))
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        let ps_norm = self.p_s.singular_values().max();
        (sup, sup * ps_norm)
    }

    fn inversion_check(&self, n: usize, seed: u64) -> Result<(usize, f64), SurgeryError> {
        let worst = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let y = random_in_ball(&mut rng, self.params.delta);
                let p = self.from_local(&y);
                let x = self.eval_inverse(&p)?;
                let r = self.eval_forward(&x).distance(&p);
                if r >= 1e-10 {
                    return Err(SurgeryError::NotDiffeomorphism(format!("round trip residual {r} at {p}")));
                }
                Ok(r)
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
        Ok((n, worst))
    }

    // -----------------------------------------------------------------------
    // invariant curves through q

    /// Grows one branch of an invariant curve of `q` inside its plaque,
    /// leaving `q` along `dir` (adapted). Fundamental segments
    /// `[t0, t0·m]` of the linear core are pushed by `f` (or `f⁻¹`) and
    /// refined by inserting midpoints wherever consecutive nodes separate by
    /// more than `h_max`.
    fn grow_branch(
        &self,
        dir: Vector2<f64>,
        forward: bool,
        target_len: f64,
        h_max: f64,
        max_segments: usize,
    ) -> Result<(Vec<Vector3<f64>>, bool), SurgeryError> {
        let m = if forward { self.params.mu_w } else { 1.0 / self.params.mu_s };
        let t0 = 0.25 * self.bump.inner_radius();
        // The plaque u = 0 is invariant, but forward iteration amplifies any
        // rounding in u by λ per step; forward images are projected back.
        let step = |p: &TorusPoint| -> Result<TorusPoint, SurgeryError> {
            if forward {
                let mut y = self.local_coords(&self.eval_forward(p));
                y.z = 0.0;
                Ok(self.from_local(&y))
            } else {
                self.eval_inverse(p)
            }
        };
        let base = |lam: f64| {
            let sig = t0 * m.powf(lam);
            self.from_local(&Vector3::new(dir.x * sig, dir.y * sig, 0.0))
        };
        let push = |lam: f64, k: usize| -> Result<TorusPoint, SurgeryError> {
            let mut x = base(lam);
            for _ in 0..k {
                x = step(&x)?;
            }
            Ok(x)
        };

        let mut lifts = vec![self.q_lift];
        let mut length = 0.0;
        let mut complete = true;
        let mut seg: Vec<(f64, TorusPoint)> = (0..=16).map(|i| i as f64 / 16.0).map(|l| (l, base(l))).collect();
        let mut last = self.params.q;
        let mut last_lift = self.q_lift;
        for k in 0..max_segments {
            if k > 0 {
                for node in seg.iter_mut() {
                    node.1 = step(&node.1)?;
                }
            }
            // refine
            let mut i = 0;
            while i + 1 < seg.len() {
                let gap = seg[i].1.distance(&seg[i + 1].1);
                if gap > h_max {
                    let lam = 0.5 * (seg[i].0 + seg[i + 1].0);
                    if seg[i + 1].0 - seg[i].0 < 1e-12 {
                        complete = false;
                        i += 1;
                        continue;
                    }
                    seg.insert(i + 1, (lam, push(lam, k)?));
                } else {
                    i += 1;
                }
            }
            let mut seg_len = 0.0;
            for node in seg.iter().take(seg.len() - 1) {
                let d = last.nearest_lift(&node.1).0;
                if length + d.norm() >= target_len {
                    let frac = (target_len - length) / d.norm();
                    lifts.push(last_lift + d * frac);
                    return Ok((lifts, complete));
                }
                last_lift += d;
                seg_len += d.norm();
                length += d.norm();
                lifts.push(last_lift);
                last = node.1;
            }
            if forward && seg_len < 1e-15 {
                return Ok((lifts, complete));
            }
        }
        Ok((lifts, forward && complete))
    }

    fn two_sided_arc(
        &self,
        dir: Vector2<f64>,
        forward: bool,
        arclength: f64,
        n_nodes: usize,
        max_segments: usize,
    ) -> Result<InvariantArc, SurgeryError> {
        if !self.params.enabled {
            return Err(SurgeryError::SurgeryDisabled);
        }
        let n_nodes = n_nodes.max(3);
        let h_max = (arclength / (4 * n_nodes) as f64).min(self.params.delta / 8.0);
        let (plus, c1) = self.grow_branch(dir, forward, arclength / 2.0, h_max, max_segments)?;
        let (minus, c2) = self.grow_branch(-dir, forward, arclength / 2.0, h_max, max_segments)?;
        let mut poly: Vec<Vector3<f64>> = minus.into_iter().rev().collect();
        poly.extend(plus.into_iter().skip(1));
        let mut cum = vec![0.0];
        for w in poly.windows(2) {
            cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
        }
        let total = *cum.last().unwrap();
        let lifts: Vec<Vector3<f64>> = (0..n_nodes)
            .map(|i| {
                let target = total * i as f64 / (n_nodes - 1) as f64;
                let j = cum.partition_point(|&c| c < target).clamp(1, poly.len() - 1);
                let span = cum[j] - cum[j - 1];
                let t = if span > 0.0 { (target - cum[j - 1]) / span } else { 0.0 };
                poly[j - 1] + (poly[j] - poly[j - 1]) * t
            })
            .collect();
        let nodes: Vec<TorusPoint> = lifts.iter().map(TorusPoint::from_vector).collect();
        let max_distance = nodes.iter().map(|x| self.adapted_distance_to_q(x)).fold(0.0, f64::max);
        let complete = c1 && c2 && (forward || total >= arclength * (1.0 - 1e-9));
        Ok(InvariantArc { nodes, lifts, arclength: total, complete, max_adapted_distance: max_distance })
    }

    /// The stable manifold of `q` (tangent to `e_s1`), grown by `f⁻¹`
    /// continuation to the requested immersed arclength and resampled to
    /// `n_nodes` points uniform in arclength. `complete` is false when the
    /// refinement could not keep up.
    pub fn stable_arc_of_q(&self, arclength: f64, n_nodes: usize) -> Result<InvariantArc, SurgeryError> {
        self.two_sided_arc(Vector2::new(1.0, 0.0), false, arclength, n_nodes, 2000)
    }

    /// The weak-unstable curve of `q` inside its plaque (tangent to `e_s2`),
    /// grown by forward iteration. It is bounded: both branches converge to
    /// plaque sinks near `q`, so `max_len` is only a cap.
    pub fn weak_unstable_arc_of_q(&self, max_len: f64, n_nodes: usize) -> Result<InvariantArc, SurgeryError> {
        self.two_sided_arc(Vector2::new(0.0, 1.0), true, max_len, n_nodes, 600)
    }
}

/// A resampled invariant curve through `q`; `lifts` is a continuous lift.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantArc {
    pub nodes: Vec<TorusPoint>,
    pub lifts: Vec<Vector3<f64>>,
    pub arclength: f64,
    pub complete: bool,
    pub max_adapted_distance: f64,
}

/// Uniform point of the adapted ball of radius `r`.
pub fn random_in_ball<R: Rng + ?Sized>(rng: &mut R, r: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
        if v.norm_squared() < 1.0 {
            return v * r;
        }
    }
}

impl TorusMap for DAMap {
    fn apply(&self, p: &TorusPoint) -> TorusPoint {
        self.eval_forward(p)
    }

    fn jacobian(&self, p: &TorusPoint) -> Matrix3<f64> {
        self.eval_jacobian(p)
    }

    fn frame(&self) -> (Matrix3<f64>, Matrix3<f64>) {
        (self.p, self.p_inv)
    }
}
