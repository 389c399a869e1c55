//! Sampled verification of the properties (P1)–(P7) of a DA map.
//!
//! Every check works in the adapted frame `(e_s1, e_s2, e_u)` of the linear
//! model, where the cones, the stable foliation and the correction are
//! axis-aligned. Samples are split between the whole torus, the surgery ball
//! and a log-radial family concentrated where the profile varies.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anosov::ConeField;
use crate::surgery::{random_in_ball, spectral_norm2, DAMap};
use crate::torus::TorusPoint;

pub const PROPERTY_SCHEMA_VERSION: u32 = 1;

/// Length beyond which the crossing search for (P6) gives up.
pub const MAX_CROSSING_LENGTH: f64 = 200.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "N/A")]
    NotApplicable,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub id: String,
    pub statement: String,
    pub status: Status,
    /// Worst measured constant.
    pub measured: f64,
    /// Threshold the measured constant is compared with.
    pub bound: f64,
    pub worst_point: Option<[f64; 3]>,
    pub detail: String,
    pub extras: BTreeMap<String, f64>,
}

impl PropertyRecord {
    fn new(id: &str, statement: &str, status: Status, measured: f64, bound: f64) -> Self {
        PropertyRecord {
            id: id.into(),
            statement: statement.into(),
            status,
            measured,
            bound,
            worst_point: None,
            detail: String::new(),
            extras: BTreeMap::new(),
        }
    }

    fn at(mut self, p: Option<TorusPoint>) -> Self {
        self.worst_point = p.map(|p| p.coords());
        self
    }

    fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }

    fn extra(mut self, k: &str, v: f64) -> Self {
        self.extras.insert(k.into(), v);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub schema_version: u32,
    pub n_samples: usize,
    pub seed: u64,
    pub records: Vec<PropertyRecord>,
}

impl PropertyReport {
    pub fn get(&self, id: &str) -> Option<&PropertyRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Inserts or replaces the record with the same id, keeping id order.
    pub fn upsert(&mut self, rec: PropertyRecord) {
        match self.records.iter_mut().find(|r| r.id == rec.id) {
            Some(slot) => *slot = rec,
            None => {
                self.records.push(rec);
                self.records.sort_by(|a, b| a.id.cmp(&b.id));
            }
        }
    }

    /// True when no record failed.
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.status != Status::Fail)
    }
}

/// Record for (P5) built from a measured semiconjugacy residual.
pub fn p5_record(max_residual: f64, residual_bound: f64, eps_measured: f64, eps_max: f64) -> PropertyRecord {
    let ok = max_residual <= residual_bound && eps_measured < eps_max;
    PropertyRecord::new("P5", "h_f ∘ f = A ∘ h_f", Status::from_bool(ok), max_residual, residual_bound)
        .extra("eps_measured", eps_measured)
        .extra("eps_max", eps_max)
        .detail(format!("sup d(A h(x), h(f x)) = {max_residual:.3e}, sup d(h(x), x) = {eps_measured:.3e}"))
}

/// Worst value with its index; ties resolve to the smaller index so the
/// parallel reduction does not depend on scheduling.
#[derive(Clone, Copy, Debug)]
struct Worst {
    value: f64,
    index: usize,
}

impl Worst {
    fn none(maximize: bool) -> Self {
        Worst { value: if maximize { f64::NEG_INFINITY } else { f64::INFINITY }, index: usize::MAX }
    }

    fn pick(a: Self, b: Self, maximize: bool) -> Self {
        let better = if maximize { b.value > a.value } else { b.value < a.value };
        if better || (b.value == a.value && b.index < a.index) {
            b
        } else {
            a
        }
    }
}

fn par_extreme<F>(n: usize, maximize: bool, f: F) -> Worst
where
    F: Fn(usize) -> f64 + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| Worst { value: f(i), index: i })
        .reduce(|| Worst::none(maximize), |a, b| Worst::pick(a, b, maximize))
}

/// Sample points: a third uniform on the torus, a third uniform in the
/// adapted δ-ball, the rest log-uniform in `|s|` across the support.
fn sample_points(f: &DAMap, n: usize, seed: u64) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_torus = n / 3;
    let n_ball = n / 3;
    let delta = f.params.delta;
    let ds = f.support_s_radius();
    let du = f.support_u_radius();
    let decades = f.build.outer_log_span + f.build.inner_log_span + 2.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let p = if i < n_torus {
            TorusPoint::random(&mut rng)
        } else if i < n_torus + n_ball {
            f.from_local(&random_in_ball(&mut rng, delta))
        } else {
            let r = ds * (-decades * rng.gen::<f64>()).exp();
            let a = TAU * rng.gen::<f64>();
            let u = du * (2.0 * rng.gen::<f64>() - 1.0);
            f.from_local(&Vector3::new(r * a.cos(), r * a.sin(), u))
        };
        out.push(p);
    }
    out
}

/// Adapted-frame derivative of `f^k` along the orbit of `p`.
fn orbit_jacobian(f: &DAMap, p: &TorusPoint, k: u32) -> Matrix3<f64> {
    let mut m = Matrix3::identity();
    let mut x = *p;
    for _ in 0..k {
        m = f.jacobian_adapted(&x).to_matrix() * m;
        x = f.eval_forward(&x);
    }
    m
}

/// Coefficients `(e1, e2, e3)` of `λ³ − e1 λ² + e2 λ − e3`.
fn char_coefficients(m: &Matrix3<f64>) -> [f64; 3] {
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    [m.trace(), minors, m.determinant()]
}

fn stable_index(ss: &Matrix2<f64>, uu: f64) -> usize {
    let tr = ss.trace();
    let det = ss.determinant();
    let disc = tr * tr - 4.0 * det;
    let mut moduli = if disc < 0.0 {
        vec![det.sqrt(), det.sqrt()]
    } else {
        let r = disc.sqrt();
        vec![((tr + r) / 2.0).abs(), ((tr - r) / 2.0).abs()]
    };
    moduli.push(uu.abs());
    moduli.iter().filter(|&&m| m < 1.0).count()
}

fn check_p1(f: &DAMap) -> PropertyRecord {
    let statement = "the product of its two eigenvalues with smaller modulus is larger than 1";
    if !f.is_enabled() {
        return PropertyRecord::new("P1", statement, Status::NotApplicable, 0.0, 1.0)
            .detail("surgery disabled: q is a sink of the stable foliation, no index-1 saddle");
    }
    let mu_s = f.params.mu_s;
    let mu_w = f.params.mu_w;
    let lam = f.model.iterate_unstable();
    let q = f.q();
    let jq = f.jacobian_adapted(&q);
    let got = char_coefficients(&jq.to_matrix());
    let want = [mu_s + mu_w + lam, mu_s * mu_w + mu_s * lam + mu_w * lam, mu_s * mu_w * lam];
    let coeff_err = (0..3).map(|i| (got[i] - want[i]).abs()).fold(0.0, f64::max);
    let product = jq.ss.determinant();
    let q_index = stable_index(&jq.ss, jq.uu);

    let orbit = &f.reference_orbit;
    let r = orbit.points[0].point;
    let jr = orbit_jacobian(f, &r, orbit.period);
    let ss_r = jr.fixed_view::<2, 2>(0, 0).into_owned();
    let disc_r = ss_r.trace().powi(2) - 4.0 * ss_r.determinant();
    let r_index = stable_index(&ss_r, jr[(2, 2)]);
    let r_returns = (0..orbit.period).fold(r, |x, _| f.eval_forward(&x)).distance(&r);

    // Immersed arclength from q to the first exit from the δ-ball, per branch.
    let delta = f.params.delta;
    let (exit_len, arc_ok) = match f.stable_arc_of_q(8.0, 4001) {
        Ok(arc) => {
            let mid = arc.nodes.len() / 2;
            let step = arc.arclength / (arc.nodes.len() - 1) as f64;
            let plus = arc.nodes[mid..].iter().position(|x| f.adapted_distance_to_q(x) > delta);
            let minus = arc.nodes[..=mid].iter().rev().position(|x| f.adapted_distance_to_q(x) > delta);
            match (plus, minus) {
                (Some(a), Some(b)) => ((a.max(b)) as f64 * step, arc.complete),
                _ => (f64::INFINITY, false),
            }
        }
        Err(_) => (f64::INFINITY, false),
    };

    let ok = coeff_err < 1e-10
        && product > 1.0
        && q_index == 1
        && r_index == 2
        && disc_r < 0.0
        && r_returns < 1e-12
        && arc_ok
        && exit_len.is_finite();
    PropertyRecord::new("P1", statement, Status::from_bool(ok), product, 1.0)
        .at(Some(q))
        .extra("charpoly_coeff_error", coeff_err)
        .extra("q_stable_index", q_index as f64)
        .extra("r_period", orbit.period as f64)
        .extra("r_stable_index", r_index as f64)
        .extra("r_cs_discriminant", disc_r)
        .extra("stable_arclength_to_exit", exit_len)
        .detail(format!(
            "Df(q) eigenvalues {{{mu_s}, {mu_w}, {lam:.10}}} (char-poly error {coeff_err:.1e}); r-orbit of period {} has \
             cs-discriminant {disc_r:.4e}; stable arc of q leaves B(q,δ) after arclength {exit_len:.4}",
            orbit.period
        ))
}

/// Upper bound for the angle to `E^u` of `Df w` over the whole cone of
/// half-angle `theta`, from the adapted blocks.
fn cone_image_angle(ss: &Matrix2<f64>, su: &Vector2<f64>, uu: f64, theta: f64) -> f64 {
    ((spectral_norm2(ss) * theta.tan() + su.norm()) / uu.abs()).atan()
}

/// Smallest expansion of `Df` over sampled vectors of the `E^u` cone
/// (the axis and eight directions on the boundary).
fn cone_min_expansion(ss: &Matrix2<f64>, su: &Vector2<f64>, uu: f64, theta: f64) -> f64 {
    let mut worst = uu.abs();
    for k in 0..8 {
        let a = TAU * k as f64 / 8.0;
        let w = Vector2::new(a.cos(), a.sin()) * theta.sin();
        let wu = theta.cos();
        let img_s = ss * w + su * wu;
        let img = (img_s.norm_squared() + (uu * wu).powi(2)).sqrt();
        worst = worst.min(img);
    }
    worst
}

/// Crossing length of straight `E^u` segments through cs-discs of radius
/// `radius`: the largest first-hitting parameter over a grid of starts and
/// disc centres. Straight `E^u` lines are tangent to every cone and the
/// cs-foliation of `f` is the linear one, so discs are flat.
pub fn measure_crossing_length(f: &DAMap, radius: f64, n_starts: usize, n_centres: usize, seed: u64) -> (f64, Option<TorusPoint>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c405);
    let starts: Vec<TorusPoint> = (0..n_starts).map(|_| TorusPoint::random(&mut rng)).collect();
    let centres: Vec<TorusPoint> = (0..n_centres).map(|_| TorusPoint::random(&mut rng)).collect();
    let (p, p_inv) = (f.model.adapted_transform, *f.model.adapted_inverse());
    let e_u = p.column(2).into_owned();
    let h = 0.05;
    let n_steps = (MAX_CROSSING_LENGTH / h).ceil() as usize;
    let first_hit = |si: usize, ci: usize| -> f64 {
        let c = centres[ci];
        let base = c.nearest_lift(&starts[si]).0;
        for k in 0..=n_steps {
            let t = k as f64 * h;
            let d = base + e_u * t;
            let wrapped = d.map(|v| v - v.round());
            let mut best = f64::INFINITY;
            for sh in 0..27 {
                let shift = Vector3::new((sh % 3) as f64 - 1.0, ((sh / 3) % 3) as f64 - 1.0, (sh / 9) as f64 - 1.0);
                let w = p_inv * (wrapped + shift);
                if w.z.abs() <= h / 2.0 && w.xy().norm() <= radius {
                    best = best.min(t - w.z);
                }
            }
            if best.is_finite() {
                return best.max(0.0);
            }
        }
        f64::INFINITY
    };
    let w = par_extreme(n_starts * n_centres, true, |i| first_hit(i / n_centres, i % n_centres));
    let worst = (w.index != usize::MAX).then(|| starts[w.index / n_centres]);
    (w.value, worst)
}

/// Checks (P1)–(P4), (P6), (P7), locality and the diffeomorphism
/// certificate on `n_samples` seeded sample points. (P5) needs the
/// semiconjugacy and is added by the caller via [`p5_record`].
pub fn verify_da_properties(f: &DAMap, cones: &ConeField, n_samples: usize, seed: u64) -> PropertyReport {
    let pts = sample_points(f, n_samples.max(3), seed);
    let n = pts.len();
    let delta = f.params.delta;
    let lam_u = f.model.iterate_unstable();
    let rho = f.model.iterate_lambda_c();
    let a_n = *f.model.iterate_f64();
    let mut records = vec![check_p1(f)];

    // (P4): growth on the cs directions outside the ball, where f = A.
    let outside = |p: &TorusPoint| f.adapted_distance_to_q(p) >= delta;
    let tan_cs = cones.theta_cs.tan();
    let p4 = par_extreme(n, true, |i| {
        if f.is_enabled() && !outside(&pts[i]) {
            return f64::NEG_INFINITY;
        }
        spectral_norm2(&f.jacobian_adapted(&pts[i]).ss)
    });
    let p4_cone = {
        // vectors w = (w_s, w_u) with |w_u| ≤ tan θ_cs |w_s|
        let c2 = 1.0 / (1.0 + tan_cs * tan_cs);
        (rho * rho * c2 + lam_u * lam_u * (1.0 - c2)).sqrt()
    };
    let lambda = p4.value;
    records.push(
        PropertyRecord::new("P4", "‖D_x f v‖ ≤ λ ‖v‖", Status::from_bool(p4.value < 1.0), p4.value, 1.0)
            .at(pts.get(p4.index).copied())
            .extra("lambda_c_mod", rho)
            .extra("cone_wide_growth", p4_cone)
            .detail(format!(
                "growth on E^cs at samples outside B(q,δ) is {:.6}; over the whole cs-cone of half-angle {} it is {p4_cone:.4}",
                p4.value, cones.theta_cs
            )),
    );

    // (P2): cone invariance and expansion.
    let theta_u = cones.theta_u;
    let p2_angle = par_extreme(n, true, |i| {
        let j = f.jacobian_adapted(&pts[i]);
        cone_image_angle(&j.ss, &j.su, j.uu, theta_u)
    });
    let p2_exp = par_extreme(n, false, |i| {
        let j = f.jacobian_adapted(&pts[i]);
        cone_min_expansion(&j.ss, &j.su, j.uu, theta_u)
    });
    let exp_bound = 1.0 / lambda.max(p4_cone);
    let p2_ok = p2_angle.value < theta_u && p2_exp.value > 1.0 && p2_exp.value >= exp_bound;
    records.push(
        PropertyRecord::new("P2", "‖Df_x w‖ ≥ λ⁻¹ ‖w‖", Status::from_bool(p2_ok), p2_exp.value, exp_bound)
            .at(pts.get(p2_exp.index).copied())
            .extra("max_image_angle", p2_angle.value)
            .extra("theta_u", theta_u)
            .detail(format!(
                "image of the E^u cone stays within angle {:.4e} < {theta_u}; minimal expansion {:.6}",
                p2_angle.value, p2_exp.value
            )),
    );

    // (P3): pairs on a common stable plaque keep a common u-coordinate.
    let pair_offsets: Vec<Vector2<f64>> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
        (0..n)
            .map(|_| {
                let r = delta * rng.gen::<f64>();
                let a = TAU * rng.gen::<f64>();
                Vector2::new(r * a.cos(), r * a.sin())
            })
            .collect()
    };
    let p_inv = *f.model.adapted_inverse();
    let p_s = f.model.adapted_transform.fixed_columns::<2>(0).into_owned();
    let p3 = par_extreme(n, true, |i| {
        let x = pts[i];
        let x2 = TorusPoint::from_vector(&(x.lift() + p_s * pair_offsets[i]));
        let d = f.eval_forward(&x).nearest_lift(&f.eval_forward(&x2)).0;
        (p_inv * d).z.abs()
    });
    records.push(
        PropertyRecord::new("P3", "f preserves a foliation F^cs", Status::from_bool(p3.value < 1e-12), p3.value, 1e-12)
            .at(pts.get(p3.index).copied())
            .detail("u-coordinate mismatch of images of same-plaque pairs"),
    );

    // (P6): crossing length of E^u curves through cs-discs of radius 2δ.
    let (l_cross, l_worst) = measure_crossing_length(f, 2.0 * delta, 32, 32, seed);
    let l_bound = cones.l_crossing.unwrap_or(MAX_CROSSING_LENGTH);
    records.push(
        PropertyRecord::new(
            "P6",
            "Every curve of length L tangent to E^u will intersect any disc of radius 2δ in F^cs",
            Status::from_bool(l_cross <= l_bound),
            l_cross,
            l_bound,
        )
        .at(l_worst)
        .detail(format!("measured L = {l_cross:.3} over 32 starts × 32 disc centres")),
    );

    // (P7): cs-growth everywhere.
    let p7 = par_extreme(n, true, |i| spectral_norm2(&f.jacobian_adapted(&pts[i]).ss));
    let p7_cone = par_extreme(n, true, |i| {
        // bound over the cs-cone: v = cos θ·w_s + sin θ·e_u with |w_s| = 1
        let j = f.jacobian_adapted(&pts[i]);
        let (sn, cs) = cones.theta_cs.sin_cos();
        ((spectral_norm2(&j.ss) * cs + j.su.norm() * sn).powi(2) + (j.uu * sn).powi(2)).sqrt()
    });
    let growth = p7.value.max(if f.is_enabled() { f.build.max_cs_growth_grid } else { 0.0 });
    let bound7 = 1.0 + f.params.beta;
    records.push(
        PropertyRecord::new("P7", "‖D_xf v‖ ≤ (1+β) ‖v‖", Status::from_bool(growth <= bound7), growth, bound7)
            .at(pts.get(p7.index).copied())
            .extra("sampled", p7.value)
            .extra("grid", f.build.max_cs_growth_grid)
            .extra("cone_wide_growth", p7_cone.value)
            .detail(format!("max ‖Df|E^cs‖ = {growth:.6} (samples {:.6}, validation grid {:.6})", p7.value, f.build.max_cs_growth_grid)),
    );

    // Locality: f = A off the ball.
    let loc = par_extreme(n, true, |i| {
        let p = pts[i];
        if f.is_enabled() && !outside(&p) {
            return f64::NEG_INFINITY;
        }
        f.eval_forward(&p).distance(&TorusPoint::from_vector(&(a_n * p.lift())))
    });
    let loc_val = loc.value.max(0.0);
    records.push(
        PropertyRecord::new("LOCALITY", "F coincides with A outside B(q,δ)", Status::from_bool(loc_val < 1e-13), loc_val, 1e-13)
            .at(pts.get(loc.index).copied()),
    );

    // Diffeomorphism certificate.
    let det = par_extreme(n, false, |i| f.jacobian_adapted(&pts[i]).to_matrix().determinant());
    let inv = par_extreme(n, true, |i| match f.eval_inverse(&pts[i]) {
        Ok(x) => f.eval_forward(&x).distance(&pts[i]),
        Err(_) => f64::INFINITY,
    });
    let min_det = if f.is_enabled() { det.value.min(f.build.min_det) } else { det.value };
    let diffeo_ok = min_det > 0.0 && inv.value <= 1e-10;
    records.push(
        PropertyRecord::new("DIFFEO", "f is a diffeomorphism", Status::from_bool(diffeo_ok), min_det, 0.0)
            .at(pts.get(det.index).copied())
            .extra("max_round_trip", inv.value)
            .detail(format!("min det Df = {min_det:.4}; max d(f(f⁻¹ p), p) = {:.2e}", inv.value)),
    );

    records.sort_by(|a, b| a.id.cmp(&b.id));
    PropertyReport { schema_version: PROPERTY_SCHEMA_VERSION, n_samples: n, seed, records }
}
