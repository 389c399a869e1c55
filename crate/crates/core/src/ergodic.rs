//! Orbit statistics: Lyapunov spectra, center-stable exponents along
//! unstable arcs, Birkhoff averages, histogram comparisons between orbits,
//! basin mass of a box set and entropy bounds.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anosov::AnosovModel;
use crate::chain::TransitionGraph;
use crate::maps::TorusMap;
use crate::torus::{box_of_point, BoxId, TorusPoint};

/// Burn-in fraction discarded from every time average.
pub const BURN_IN_FRACTION: f64 = 0.1;

fn burn_in(n: usize) -> usize {
    (n as f64 * BURN_IN_FRACTION).round() as usize
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Built-in observables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Observable {
    One,
    Sin(usize),
    Cos(usize),
    /// `ψ(d(x, centre)/radius)` with `ψ(t) = (1 − t²)²` for `t < 1`.
    SmoothBox { centre: [f64; 3], radius: f64 },
}

impl Observable {
    pub fn eval(&self, p: &TorusPoint) -> f64 {
        match *self {
            Observable::One => 1.0,
            Observable::Sin(k) => (TAU * p.coords()[k]).sin(),
            Observable::Cos(k) => (TAU * p.coords()[k]).cos(),
            Observable::SmoothBox { centre, radius } => {
                let t = p.distance(&TorusPoint::wrap_finite(centre)) / radius;
                if t < 1.0 {
                    (1.0 - t * t).powi(2)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn id(&self) -> String {
        const AX: [&str; 3] = ["x", "y", "z"];
        match self {
            Observable::One => "one".into(),
            Observable::Sin(k) => format!("sin_{}", AX[*k]),
            Observable::Cos(k) => format!("cos_{}", AX[*k]),
            Observable::SmoothBox { centre, radius } => {
                format!("bump_{:.3}_{:.3}_{:.3}_r{:.3}", centre[0], centre[1], centre[2], radius)
            }
        }
    }

    /// Constant, the six coordinate sines and cosines, and bumps at the
    /// origin and at the torus centre.
    pub fn builtins() -> Vec<Observable> {
        let mut v = vec![Observable::One];
        for k in 0..3 {
            v.push(Observable::Sin(k));
            v.push(Observable::Cos(k));
        }
        v.push(Observable::SmoothBox { centre: [0.0; 3], radius: 0.25 });
        v.push(Observable::SmoothBox { centre: [0.5; 3], radius: 0.25 });
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitDiagnostics {
    pub start: TorusPoint,
    /// Per-iterate exponents, descending.
    pub exponents: [f64; 3],
    pub transient: usize,
    pub n_iters: usize,
    /// Time average of `log|det Df|` over the same window.
    pub log_det_average: f64,
    pub observable_averages: BTreeMap<String, f64>,
    pub seed: u64,
}

impl OrbitDiagnostics {
    pub fn exponent_sum(&self) -> f64 {
        self.exponents.iter().sum()
    }

    pub fn conservation_error(&self) -> f64 {
        (self.exponent_sum() - self.log_det_average).abs()
    }
}

fn random_orthonormal(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    loop {
        let m = Matrix3::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0);
        if m.determinant().abs() > 1e-3 {
            return m.qr().q();
        }
    }
}

/// Central-difference Jacobian with step `h`.
pub fn fd_jacobian<M: TorusMap + ?Sized>(f: &M, p: &TorusPoint, h: f64) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = h;
        let plus = f.apply(&TorusPoint::from_vector(&(p.lift() + e)));
        let minus = f.apply(&TorusPoint::from_vector(&(p.lift() - e)));
        j.set_column(k, &(minus.nearest_lift(&plus).0 / (2.0 * h)));
    }
    j
}

fn spectrum_with<M, J>(f: &M, x: &TorusPoint, n: usize, seed: u64, jac: J) -> OrbitDiagnostics
where
    M: TorusMap + ?Sized,
    J: Fn(&TorusPoint) -> Matrix3<f64>,
{
    let (p, p_inv) = f.frame();
    let mut q = random_orthonormal(&mut rng_for(seed, 0x1a9));
    let skip = burn_in(n);
    let obs = Observable::builtins();
    let mut obs_sum = vec![0.0; obs.len()];
    let mut log_r = [0.0; 3];
    let mut log_det = 0.0;
    let mut y = *x;
    for k in 0..n {
        let j = jac(&y);
        let m = p_inv * j * p;
        let qr = (m * q).qr();
        let r = qr.r();
        q = qr.q();
        // keep the diagonal of R positive so Q varies continuously
        for i in 0..3 {
            if r[(i, i)] < 0.0 {
                q.column_mut(i).neg_mut();
            }
        }
        if k >= skip {
            for i in 0..3 {
                log_r[i] += r[(i, i)].abs().ln();
            }
            log_det += j.determinant().abs().ln();
            for (s, o) in obs_sum.iter_mut().zip(&obs) {
                *s += o.eval(&y);
            }
        }
        y = f.apply(&y);
    }
    let m = (n - skip) as f64;
    let mut exponents = log_r.map(|v| v / m);
    exponents.sort_by(|a, b| b.partial_cmp(a).unwrap());
    OrbitDiagnostics {
        start: *x,
        exponents,
        transient: skip,
        n_iters: n,
        log_det_average: log_det / m,
        observable_averages: obs.iter().zip(obs_sum).map(|(o, s)| (o.id(), s / m)).collect(),
        seed,
    }
}

/// Lyapunov exponents by QR reorthonormalisation of the Jacobian cocycle
/// (in the map's frame), every step, discarding the first 10%.
pub fn lyapunov_spectrum<M: TorusMap + ?Sized>(f: &M, x: &TorusPoint, n: usize, seed: u64) -> OrbitDiagnostics {
    spectrum_with(f, x, n, seed, |p| f.jacobian(p))
}

/// Same cocycle with central-difference Jacobians.
pub fn lyapunov_spectrum_fd<M: TorusMap + ?Sized>(f: &M, x: &TorusPoint, n: usize, seed: u64, h: f64) -> OrbitDiagnostics {
    spectrum_with(f, x, n, seed, |p| fd_jacobian(f, p, h))
}

/// Largest exponent of the cocycle restricted to the plane of the first two
/// frame vectors (the cs-plane of the adapted frame, which the map keeps
/// invariant). Only the diagonal block is used: rounding in the off-block
/// entries would otherwise be amplified towards the unstable direction.
pub fn cs_exponent<M: TorusMap + ?Sized>(f: &M, x: &TorusPoint, n: usize) -> f64 {
    let (p, p_inv) = f.frame();
    let mut w = Matrix2::identity();
    let skip = burn_in(n);
    let mut acc = 0.0;
    let mut y = *x;
    for k in 0..n {
        let m = p_inv * f.jacobian(&y) * p;
        let qr = (m.fixed_view::<2, 2>(0, 0) * w).qr();
        let r = qr.r();
        w = qr.q();
        if k >= skip {
            acc += r[(0, 0)].abs().ln();
        }
        y = f.apply(&y);
    }
    acc / (n - skip) as f64
}

/// Unstable arc through `base`: a short segment along the last frame vector,
/// pushed forward `pushes` times with midpoint refinement, then resampled
/// to `n_points` points uniform in arclength.
pub fn unstable_arc<M: TorusMap + ?Sized>(f: &M, base: &TorusPoint, seed_len: f64, pushes: usize, n_points: usize) -> Vec<TorusPoint> {
    let (p, _) = f.frame();
    let e_u: Vector3<f64> = p.column(2).normalize();
    let m = 64;
    let mut nodes: Vec<TorusPoint> = (0..=m)
        .map(|i| TorusPoint::from_vector(&(base.lift() + e_u * seed_len * (i as f64 / m as f64 - 0.5))))
        .collect();
    let mut params: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
    let gap_max = 2.0 * seed_len / m as f64;
    for k in 0..pushes {
        nodes = nodes.iter().map(|x| f.apply(x)).collect();
        let mut i = 0;
        while i + 1 < nodes.len() {
            if nodes[i].distance(&nodes[i + 1]) > gap_max && params[i + 1] - params[i] > 1e-14 {
                let t = 0.5 * (params[i] + params[i + 1]);
                let mut x = TorusPoint::from_vector(&(base.lift() + e_u * seed_len * (t - 0.5)));
                for _ in 0..=k {
                    x = f.apply(&x);
                }
                nodes.insert(i + 1, x);
                params.insert(i + 1, t);
            } else {
                i += 1;
            }
        }
    }
    let mut lifts = vec![nodes[0].lift()];
    for w in nodes.windows(2) {
        let d = w[0].nearest_lift(&w[1]).0;
        lifts.push(lifts.last().unwrap() + d);
    }
    let mut cum = vec![0.0];
    for w in lifts.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    (0..n_points)
        .map(|i| {
            let target = total * (i as f64 + 0.5) / n_points as f64;
            let j = cum.partition_point(|&c| c < target).clamp(1, lifts.len() - 1);
            let span = cum[j] - cum[j - 1];
            let t = if span > 0.0 { (target - cum[j - 1]) / span } else { 0.0 };
            TorusPoint::from_vector(&(lifts[j - 1] + (lifts[j] - lifts[j - 1]) * t))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsExponentReport {
    pub n_points: usize,
    pub n_iters: usize,
    pub fraction_negative: f64,
    pub mean: f64,
    pub max: f64,
    pub worst_point: TorusPoint,
    pub exponents: Vec<f64>,
}

/// Fraction of points of an unstable arc through `base` whose largest
/// center-stable exponent over `n_iters` iterates is negative.
pub fn cs_exponent_on_unstable_arc<M: TorusMap + ?Sized>(f: &M, base: &TorusPoint, n_points: usize, n_iters: usize) -> CsExponentReport {
    let pts = unstable_arc(f, base, 1e-3, 12, n_points);
    let exps: Vec<f64> = pts.par_iter().map(|x| cs_exponent(f, x, n_iters)).collect();
    let (mut worst, mut worst_i) = (f64::NEG_INFINITY, 0);
    for (i, &e) in exps.iter().enumerate() {
        if e > worst {
            worst = e;
            worst_i = i;
        }
    }
    CsExponentReport {
        n_points,
        n_iters,
        fraction_negative: exps.iter().filter(|&&e| e < 0.0).count() as f64 / n_points as f64,
        mean: exps.iter().sum::<f64>() / n_points as f64,
        max: worst,
        worst_point: pts[worst_i],
        exponents: exps,
    }
}

pub fn birkhoff_average<M: TorusMap + ?Sized>(f: &M, x: &TorusPoint, obs: &Observable, n: usize) -> f64 {
    let mut y = *x;
    let mut s = 0.0;
    for _ in 0..n {
        s += obs.eval(&y);
        y = f.apply(&y);
    }
    s / n as f64
}

/// Empirical distribution of an orbit segment over the boxes of `depth`.
pub fn orbit_histogram<M: TorusMap + ?Sized>(f: &M, x: &TorusPoint, n: usize, depth: u32) -> Vec<f64> {
    let mut h = vec![0u64; 1 << (3 * depth)];
    let mut y = *x;
    for _ in 0..n {
        h[box_of_point(&y, depth).expect("histogram depth").linear_index() as usize] += 1;
        y = f.apply(&y);
    }
    h.into_iter().map(|c| c as f64 / n as f64).collect()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrbEvidence {
    pub n_starts: usize,
    pub n_iters: usize,
    pub seed: u64,
    pub starts: Vec<TorusPoint>,
    /// Histogram depth used for `max_pairwise_l1`.
    pub depth: u32,
    pub max_pairwise_l1: f64,
    /// Same statistic one depth finer.
    pub fine_depth: u32,
    pub max_pairwise_l1_fine: f64,
    pub observable_ids: Vec<String>,
    /// `averages[start][observable]`.
    pub averages: Vec<Vec<f64>>,
}

/// Orbits from `n_starts` Lebesgue-random points: the largest pairwise L¹
/// distance between their box histograms at `depth` and `depth + 1`, and
/// the Birkhoff averages of the built-in observables.
pub fn srb_evidence<M: TorusMap + ?Sized>(f: &M, n_starts: usize, n: usize, depth: u32, seed: u64) -> SrbEvidence {
    let mut rng = rng_for(seed, 0x5b);
    let starts: Vec<TorusPoint> = (0..n_starts).map(|_| TorusPoint::random(&mut rng)).collect();
    let obs = Observable::builtins();
    let fine = depth + 1;
    let runs: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = starts
        .par_iter()
        .map(|x| {
            let mut coarse = vec![0u64; 1 << (3 * depth)];
            let mut finer = vec![0u64; 1 << (3 * fine)];
            let mut sums = vec![0.0; obs.len()];
            let mut y = *x;
            for _ in 0..n {
                coarse[box_of_point(&y, depth).unwrap().linear_index() as usize] += 1;
                finer[box_of_point(&y, fine).unwrap().linear_index() as usize] += 1;
                for (s, o) in sums.iter_mut().zip(&obs) {
                    *s += o.eval(&y);
                }
                y = f.apply(&y);
            }
            let norm = |h: Vec<u64>| h.into_iter().map(|c| c as f64 / n as f64).collect::<Vec<f64>>();
            (norm(coarse), norm(finer), sums.into_iter().map(|s| s / n as f64).collect())
        })
        .collect();
    let mut max_c: f64 = 0.0;
    let mut max_f: f64 = 0.0;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            max_c = max_c.max(l1_distance(&runs[i].0, &runs[j].0));
            max_f = max_f.max(l1_distance(&runs[i].1, &runs[j].1));
        }
    }
    SrbEvidence {
        n_starts,
        n_iters: n,
        seed,
        starts,
        depth,
        max_pairwise_l1: max_c,
        fine_depth: fine,
        max_pairwise_l1_fine: max_f,
        observable_ids: obs.iter().map(Observable::id).collect(),
        averages: runs.into_iter().map(|r| r.2).collect(),
    }
}

/// Fraction of Lebesgue-random points whose orbit spends at least 90% of
/// its last 10% of `n_iters` in `boxes` or their 26-neighbours.
pub fn basin_fraction<M: TorusMap + ?Sized>(f: &M, boxes: &[BoxId], n_samples: usize, n_iters: usize, seed: u64) -> f64 {
    let Some(first) = boxes.first() else { return 0.0 };
    let depth = first.depth;
    let n = 1i64 << depth;
    let mut set = HashSet::with_capacity(boxes.len() * 4);
    for b in boxes {
        for d in 0..27 {
            let (dx, dy, dz) = ((d % 3) as i64 - 1, ((d / 3) % 3) as i64 - 1, (d / 9) as i64 - 1);
            let nb = BoxId::new(
                depth,
                (b.ix as i64 + dx).rem_euclid(n) as u32,
                (b.iy as i64 + dy).rem_euclid(n) as u32,
                (b.iz as i64 + dz).rem_euclid(n) as u32,
            )
            .expect("wrapped");
            set.insert(nb.linear_index());
        }
    }
    let full = set.len() as u64 == 1u64 << (3 * depth);
    let mut rng = rng_for(seed, 0xba5);
    let starts: Vec<TorusPoint> = (0..n_samples).map(|_| TorusPoint::random(&mut rng)).collect();
    let tail = (n_iters - burn_in(n_iters)).max(1);
    let hits = starts
        .par_iter()
        .filter(|x| {
            let mut y = **x;
            let mut inside = 0usize;
            for k in 0..n_iters {
                if k >= n_iters - tail && (full || set.contains(&box_of_point(&y, depth).unwrap().linear_index())) {
                    inside += 1;
                }
                y = f.apply(&y);
            }
            inside as f64 >= 0.9 * tail as f64
        })
        .count();
    hits as f64 / n_samples as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyBounds {
    /// Entropy of the linear factor, `N log λ_u`.
    pub lower: f64,
    /// Log spectral radius of the transition graph adjacency.
    pub graph_estimate: f64,
    pub power_iterations: usize,
    pub converged: bool,
    pub consistent: bool,
}

/// Factor entropy and graph estimate (200 power iterations).
pub fn entropy_bounds(model: &AnosovModel, g: &TransitionGraph) -> EntropyBounds {
    let lower = model.iterate_lambda_u().ln();
    let n = g.n_boxes();
    let iters = 200;
    let mut v = vec![1.0 / n as f64; n];
    let mut history = Vec::with_capacity(iters);
    for _ in 0..iters {
        let w: Vec<f64> = (0..n).into_par_iter().map(|i| g.successors(i).iter().map(|&j| v[j as usize]).sum()).collect();
        let norm: f64 = w.iter().sum();
        if norm == 0.0 {
            history.push(0.0);
            break;
        }
        history.push(norm);
        v = w.into_iter().map(|x| x / norm).collect();
    }
    let last = *history.last().unwrap_or(&0.0);
    let tail = &history[history.len().saturating_sub(10)..];
    let converged = last > 0.0 && tail.iter().all(|x| ((x - last) / last).abs() < 1e-6);
    let graph_estimate = if last > 0.0 { last.ln() } else { f64::NEG_INFINITY };
    EntropyBounds {
        lower,
        graph_estimate,
        power_iterations: history.len(),
        converged,
        consistent: lower <= graph_estimate + 0.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_transition_graph, full_cover};
    use crate::maps::{GradientFixture, Identity};
    use crate::torus::SampleScheme;

    const LN_LAMBDA_U: f64 = 0.38224508584003564;

    #[test]
    fn linear_spectrum_closed_form() {
        let a = AnosovModel::standard();
        let x = TorusPoint::wrap_finite([0.1234, 0.5678, 0.9012]);
        let d = lyapunov_spectrum(&a, &x, 10_000, 3);
        assert!((d.exponents[0] - LN_LAMBDA_U).abs() < 1e-6);
        assert!((d.exponents[1] + LN_LAMBDA_U / 2.0).abs() < 1e-6);
        assert!((d.exponents[2] + LN_LAMBDA_U / 2.0).abs() < 1e-6);
        assert!(d.conservation_error() < 1e-8);
        assert!(d.exponent_sum().abs() < 1e-8);
        let other = lyapunov_spectrum(&a, &x, 10_000, 99);
        for i in 0..3 {
            assert!((d.exponents[i] - other.exponents[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_observable_averages_to_one() {
        let a = AnosovModel::standard();
        assert_eq!(birkhoff_average(&a, &TorusPoint::ORIGIN, &Observable::One, 1000), 1.0);
    }

    #[test]
    fn fd_jacobian_of_linear_map() {
        let a = AnosovModel::standard();
        let j = fd_jacobian(&a, &TorusPoint::wrap_finite([0.3, 0.2, 0.9]), 1e-6);
        assert!((j - a.iterate_f64()).abs().max() < 1e-8);
    }

    #[test]
    fn linear_cs_exponents_all_negative() {
        let a = AnosovModel::standard();
        let r = cs_exponent_on_unstable_arc(&a, &TorusPoint::wrap_finite([0.3, 0.3, 0.3]), 50, 2000);
        assert_eq!(r.fraction_negative, 1.0);
        assert!((r.max + LN_LAMBDA_U / 2.0).abs() < 1e-9);
    }

    #[test]
    fn unstable_arc_is_long_and_even() {
        let a = AnosovModel::standard();
        let pts = unstable_arc(&a, &TorusPoint::wrap_finite([0.3, 0.3, 0.3]), 1e-3, 12, 100);
        assert_eq!(pts.len(), 100);
        let gaps: Vec<f64> = pts.windows(2).map(|w| w[0].distance(&w[1])).collect();
        let (lo, hi) = gaps.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &g| (l.min(g), h.max(g)));
        assert!(hi / lo < 1.01, "{lo} {hi}");
        assert!(lo * 99.0 > 1e-3 * 1.46f64.powi(12) * 0.9);
    }

    #[test]
    fn basin_of_sink_fixture() {
        let f = GradientFixture::single_sink();
        let sink = box_of_point(&TorusPoint::ORIGIN, 4).unwrap();
        let frac = basin_fraction(&f, &[sink], 400, 400, 2);
        assert!(frac > 0.99, "{frac}");
        let a = AnosovModel::standard();
        assert_eq!(basin_fraction(&a, &full_cover(2).unwrap(), 50, 100, 1), 1.0);
    }

    #[test]
    fn entropy_of_identity_graph_is_zero() {
        let g = build_transition_graph(&Identity, 2, full_cover(2).unwrap(), &SampleScheme { grid: 2, random: 0, seed: 0 }, 0.0, 1.0).unwrap();
        let e = entropy_bounds(&AnosovModel::standard(), &g);
        assert_eq!(e.graph_estimate, 0.0);
        assert!(e.converged);
        assert!((e.lower - LN_LAMBDA_U).abs() < 1e-12);
        assert!(!e.consistent);
    }

    #[test]
    fn histograms_are_probability_vectors() {
        let a = AnosovModel::standard();
        let h = orbit_histogram(&a, &TorusPoint::wrap_finite([0.1, 0.2, 0.3]), 5000, 2);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(l1_distance(&h, &h), 0.0);
    }
}
