//! The semiconjugacy `h` with `h ∘ f = A ∘ h`, evaluated pointwise by a
//! truncated shadowing series, and the fiber diagnostics built on it.
//!
//! Writing `g = f − A` (supported near `q`), `h = id + w` solves
//! `A w(x) − w(f x) = g(x)`. In the adapted frame the stable part is
//! `w_s(x) = −Σ_{n≥1} A_s^{n−1} g_s(f^{−n} x)` and the unstable part
//! `w_u(x) = Σ_{n≥0} A_u^{−(n+1)} g_u(f^n x)`. The correction of a
//! [`DAMap`] lies in `E^s`, so `g_u ≡ 0` and only the backward half is summed.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Matrix3x2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anosov::{AnosovError, PeriodicOrbit};
use crate::surgery::{DAMap, SurgeryError};
use crate::torus::{BoxId, TorusPoint};

pub const DEFAULT_N_TRUNC: usize = 120;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShadowError {
    #[error("series needs lambda_c_mod < 1 < lambda_u (got {0}, {1})")]
    NotHyperbolic(f64, f64),
    #[error("terminal class refused: localization applies to non-terminal classes only")]
    TerminalClass,
    #[error("empty class")]
    EmptyClass,
    #[error(transparent)]
    Surgery(#[from] SurgeryError),
    #[error(transparent)]
    Anosov(#[from] AnosovError),
}

impl ShadowError {
    pub fn code(&self) -> &'static str {
        match self {
            ShadowError::NotHyperbolic(..) => "semiconj.not_hyperbolic",
            ShadowError::TerminalClass => "semiconj.terminal_class",
            ShadowError::EmptyClass => "semiconj.empty_class",
            ShadowError::Surgery(e) => e.code(),
            ShadowError::Anosov(e) => e.code(),
        }
    }
}

/// Pointwise evaluator of `h`.
pub struct ShadowEvaluator<'a> {
    pub map: &'a DAMap,
    pub n_trunc: usize,
    /// Bound for the truncation error of the series.
    pub tail_bound: f64,
    /// Bits of the running max of `d(h(x), x)`; non-negative floats order
    /// like their bit patterns, so `fetch_max` is an order-independent max.
    eps_bits: AtomicU64,
    p_s: Matrix3x2<f64>,
}

impl<'a> ShadowEvaluator<'a> {
    pub fn new(map: &'a DAMap, n_trunc: usize) -> Result<Self, ShadowError> {
        let rho = map.model.iterate_lambda_c();
        let lam = map.model.iterate_lambda_u();
        if !(rho < 1.0 && lam > 1.0) {
            return Err(ShadowError::NotHyperbolic(rho, lam));
        }
        let g = if map.is_enabled() { map.build.g_sup } else { 0.0 };
        let n = n_trunc as i32;
        let tail_bound = g * (rho.powi(n) / (1.0 - rho) + lam.powi(-n) / (1.0 - 1.0 / lam));
        Ok(ShadowEvaluator {
            map,
            n_trunc,
            tail_bound,
            eps_bits: AtomicU64::new(0),
            p_s: map.model.adapted_transform.fixed_columns::<2>(0).into_owned(),
        })
    }

    /// `sup ‖f − A‖` used in the bounds.
    pub fn correction_sup(&self) -> f64 {
        if self.map.is_enabled() {
            self.map.build.g_sup
        } else {
            0.0
        }
    }

    /// A priori bound for `sup d(h(x), x)`.
    pub fn eps_bound(&self) -> f64 {
        let g = self.correction_sup();
        let rho = self.map.model.iterate_lambda_c();
        let lam = self.map.model.iterate_lambda_u();
        g / (1.0 - rho) + g / (1.0 - 1.0 / lam) + self.tail_bound
    }

    pub fn eps_measured(&self) -> f64 {
        f64::from_bits(self.eps_bits.load(Ordering::Relaxed))
    }

    /// `w_s(x)` in adapted coordinates.
    pub fn stable_offset(&self, x: &TorusPoint) -> Result<Vector2<f64>, ShadowError> {
        let mut sum = Vector2::zeros();
        if !self.map.is_enabled() {
            return Ok(sum);
        }
        let a_s = *self.map.stable_block();
        let mut pow = nalgebra::Matrix2::identity();
        let mut y = *x;
        for _ in 1..=self.n_trunc {
            y = self.map.eval_inverse(&y)?;
            sum -= pow * self.map.stable_correction(&y);
            pow = a_s * pow;
        }
        Ok(sum)
    }

    pub fn eval_h(&self, x: &TorusPoint) -> Result<TorusPoint, ShadowError> {
        let w = self.p_s * self.stable_offset(x)?;
        let hx = TorusPoint::from_vector(&(x.lift() + w));
        let d = w.norm();
        self.eps_bits.fetch_max(d.to_bits(), Ordering::Relaxed);
        debug_assert!(d <= self.eps_bound() * (1.0 + 1e-9) + 1e-15);
        Ok(hx)
    }

    /// `d(A h(x), h(f x))`.
    pub fn residual_at(&self, x: &TorusPoint) -> Result<f64, ShadowError> {
        let hx = self.eval_h(x)?;
        let hfx = self.eval_h(&self.map.eval_forward(x))?;
        Ok(self.map.model.apply(&hx).distance(&hfx))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub n_samples: usize,
    pub max_residual: f64,
    pub eps_measured: f64,
    pub tail_bound: f64,
    pub eps_bound: f64,
}

/// Sup-norms of the semiconjugacy residual and of `h − id` over seeded
/// samples: half uniform on the torus, half in the δ-ball around `q`, whose
/// backward orbits are the ones that see the correction.
pub fn semiconjugacy_residual(e: &ShadowEvaluator, n_samples: usize, seed: u64) -> Result<ResidualSummary, ShadowError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = e.map.params.delta;
    let pts: Vec<TorusPoint> = (0..n_samples)
        .map(|i| {
            if i % 2 == 0 {
                TorusPoint::random(&mut rng)
            } else {
                e.map.from_local(&crate::surgery::random_in_ball(&mut rng, delta))
            }
        })
        .collect();
    let max_residual = pts
        .par_iter()
        .map(|x| e.residual_at(x))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(ResidualSummary {
        n_samples,
        max_residual,
        eps_measured: e.eps_measured(),
        tail_bound: e.tail_bound,
        eps_bound: e.eps_bound(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseWitness {
    pub x: TorusPoint,
    pub z: TorusPoint,
    pub distance: f64,
    pub image_distance: f64,
    pub tolerance: f64,
    /// `|u(x) − u(z)|` in adapted coordinates.
    pub leaf_offset: f64,
}

impl CollapseWitness {
    pub fn ratio(&self) -> f64 {
        if self.image_distance > 0.0 {
            self.distance / self.image_distance
        } else {
            f64::INFINITY
        }
    }
}

/// Searches the weak-unstable curve of `q` (within `search_radius` of `q`)
/// for the pair with largest separation whose `h`-images agree to
/// `tol = 100·tail_bound`. `None` means no such pair exists, which is the
/// outcome for the unmodified map.
pub fn collapse_witness(e: &ShadowEvaluator, search_radius: f64, n_probe: usize) -> Result<Option<CollapseWitness>, ShadowError> {
    let f = e.map;
    if !f.is_enabled() {
        return Ok(None);
    }
    let arc = f.weak_unstable_arc_of_q(2.0 * search_radius, n_probe)?;
    let pts: Vec<TorusPoint> = arc.nodes.into_iter().filter(|x| f.adapted_distance_to_q(x) <= search_radius).collect();
    let images = pts.par_iter().map(|x| e.eval_h(x)).collect::<Result<Vec<_>, _>>()?;
    // Floor keeps the tolerance meaningful when the tail is below rounding.
    let tol = (100.0 * e.tail_bound).max(1e-13);
    let mut best: Option<CollapseWitness> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = pts[i].distance(&pts[j]);
            let dh = images[i].distance(&images[j]);
            if d > 10.0 * tol && dh < tol && best.as_ref().is_none_or(|b| d > b.distance) {
                let leaf_offset = (f.local_coords(&pts[i]).z - f.local_coords(&pts[j]).z).abs();
                best = Some(CollapseWitness { x: pts[i], z: pts[j], distance: d, image_distance: dh, tolerance: tol, leaf_offset });
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationVerdict {
    pub pass: bool,
    pub n_boxes: usize,
    /// Best-matching `A`-periodic orbit (period and points).
    pub matched_period: Option<u32>,
    pub matched_orbit: Vec<TorusPoint>,
    pub worst_distance: f64,
    pub tolerance: f64,
    pub offending: Vec<BoxId>,
}

/// Maps box centres through `h` and looks for a single periodic orbit of
/// the linear model (period ≤ `max_period`) within `tol_loc` of every image,
/// with `tol_loc = 2 × box diagonal + tail_bound`.
pub fn localize_class_to_periodic_fiber(
    e: &ShadowEvaluator,
    class_boxes: &[BoxId],
    is_terminal: bool,
    orbits: &[PeriodicOrbit],
) -> Result<LocalizationVerdict, ShadowError> {
    if is_terminal {
        return Err(ShadowError::TerminalClass);
    }
    let first = class_boxes.first().ok_or(ShadowError::EmptyClass)?;
    let tol = 2.0 * 3f64.sqrt() * first.side() + e.tail_bound;
    let images = class_boxes.par_iter().map(|b| e.eval_h(&b.center())).collect::<Result<Vec<_>, _>>()?;
    let mut best: Option<(usize, f64)> = None;
    for (k, orb) in orbits.iter().enumerate() {
        let worst = images.iter().map(|y| orb.distance_to(y)).fold(0.0, f64::max);
        if best.is_none_or(|(_, w)| worst < w) {
            best = Some((k, worst));
        }
    }
    let Some((k, worst)) = best else {
        return Ok(LocalizationVerdict {
            pass: false,
            n_boxes: class_boxes.len(),
            matched_period: None,
            matched_orbit: Vec::new(),
            worst_distance: f64::INFINITY,
            tolerance: tol,
            offending: class_boxes.to_vec(),
        });
    };
    let orb = &orbits[k];
    let offending: Vec<BoxId> =
        class_boxes.iter().zip(&images).filter(|(_, y)| orb.distance_to(y) > tol).map(|(b, _)| *b).collect();
    Ok(LocalizationVerdict {
        pass: offending.is_empty(),
        n_boxes: class_boxes.len(),
        matched_period: Some(orb.period),
        matched_orbit: orb.points.iter().map(|p| p.point).collect(),
        worst_distance: worst,
        tolerance: tol,
        offending,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anosov::AnosovModel;
    use crate::surgery::{build_da_map, SurgeryParams};

    fn default_map() -> DAMap {
        build_da_map(AnosovModel::standard(), SurgeryParams::default()).unwrap()
    }

    #[test]
    fn disabled_map_gives_identity() {
        let f = DAMap::linear(AnosovModel::standard()).unwrap();
        let e = ShadowEvaluator::new(&f, DEFAULT_N_TRUNC).unwrap();
        let s = semiconjugacy_residual(&e, 500, 3).unwrap();
        assert_eq!(e.tail_bound, 0.0);
        assert_eq!(s.eps_measured, 0.0);
        assert!(s.max_residual < 1e-15);
        let x = TorusPoint::wrap_finite([0.3, 0.7, 0.1]);
        assert_eq!(e.eval_h(&x).unwrap(), x);
        assert!(collapse_witness(&e, 0.01, 100).unwrap().is_none());
    }

    #[test]
    fn h_fixes_q() {
        let f = default_map();
        let e = ShadowEvaluator::new(&f, DEFAULT_N_TRUNC).unwrap();
        assert!(e.eval_h(&f.q()).unwrap().distance(&TorusPoint::ORIGIN) < 1e-15);
    }

    #[test]
    fn residual_below_tail_bound() {
        let f = default_map();
        let e = ShadowEvaluator::new(&f, DEFAULT_N_TRUNC).unwrap();
        let s = semiconjugacy_residual(&e, 2000, 5).unwrap();
        assert!(s.max_residual < s.tail_bound, "{s:?}");
        assert!(s.eps_measured > 0.0 && s.eps_measured <= s.eps_bound);
        assert!(s.eps_measured < f.params.delta / 10.0);
    }

    #[test]
    fn shorter_series_residual() {
        let f = default_map();
        let e = ShadowEvaluator::new(&f, 60).unwrap();
        let s = semiconjugacy_residual(&e, 2000, 5).unwrap();
        assert!(s.max_residual < 1e-8, "{s:?}");
        // the sampled sup is not monotone in n_trunc (it depends on which
        // samples re-enter the support at step n); the certified bound is
        let mut prev = f64::INFINITY;
        for n in [20, 40, 80] {
            let e = ShadowEvaluator::new(&f, n).unwrap();
            let r = semiconjugacy_residual(&e, 2000, 5).unwrap();
            assert!(r.max_residual < r.tail_bound, "{n}: {r:?}");
            assert!(r.tail_bound <= prev * f.model.lambda_c_mod.powi(n as i32 / 2) * (1.0 + 1e-9));
            prev = r.tail_bound;
        }
    }

    #[test]
    fn witness_on_weak_unstable_curve() {
        let f = default_map();
        let e = ShadowEvaluator::new(&f, DEFAULT_N_TRUNC).unwrap();
        let w = collapse_witness(&e, f.params.delta, 400).unwrap().expect("witness");
        assert!(w.ratio() > 100.0, "{w:?}");
        assert!(w.leaf_offset < 1e-10);
    }

    #[test]
    fn localization_matches_fixed_orbit() {
        let f = default_map();
        let e = ShadowEvaluator::new(&f, DEFAULT_N_TRUNC).unwrap();
        let orbits = f.model.periodic_orbits(3).unwrap();
        let b = crate::torus::box_of_point(&f.q(), 6).unwrap();
        let v = localize_class_to_periodic_fiber(&e, &[b], false, &orbits).unwrap();
        assert!(v.pass);
        assert_eq!(v.matched_period, Some(1));
        assert_eq!(
            localize_class_to_periodic_fiber(&e, &[b], true, &orbits).unwrap_err(),
            ShadowError::TerminalClass
        );
    }
}
