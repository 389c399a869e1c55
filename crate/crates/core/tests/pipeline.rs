//! Cross-module checks through the public API, against values computed
//! independently of the library (bisection, determinants, brute force).

use approx::assert_relative_eq;
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use datorus::chain::{quasi_attractor_candidates, refine_recurrent, scc_condense, RefineOptions};
use datorus::ergodic::lyapunov_spectrum;
use datorus::maps::GradientFixture;
use datorus::torus::sample_box;
use datorus::*;

const LAMBDA_U: f64 = 1.4655712318767682;

fn default_map() -> DAMap {
    build_da_map(AnosovModel::standard(), SurgeryParams::default()).unwrap()
}

#[test]
fn torus_examples() {
    assert_eq!(wrap([1.25, -0.25, 0.0]).unwrap().coords(), [0.25, 0.75, 0.0]);
    assert_eq!(wrap([3.0, -2.0, 5.5]).unwrap().coords(), [0.0, 0.0, 0.5]);
    assert!(wrap([f64::NAN, 0.0, 0.0]).is_err());
    let a = wrap([0.9, 0.0, 0.0]).unwrap();
    let b = wrap([0.1, 0.0, 0.0]).unwrap();
    assert_relative_eq!(torus_distance(&a, &b), 0.2, epsilon = 1e-15);
    let bx = box_of_point(&wrap([0.7, 0.2, 0.9]).unwrap(), 1).unwrap();
    assert_eq!((bx.ix, bx.iy, bx.iz), (1, 0, 1));
    assert_eq!(bx.center().coords(), [0.75, 0.25, 0.75]);
    let pts = sample_box(&bx, &SampleScheme { grid: 3, random: 5, seed: 9 });
    assert_eq!(pts.len(), 32);
    assert!(pts.iter().all(|p| box_of_point(p, 1).unwrap() == bx));
    assert!(box_of_point(&a, 13).is_err());
}

#[test]
fn distance_matches_brute_force_and_triangle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10_000 {
        let (p, q, r) = (TorusPoint::random(&mut rng), TorusPoint::random(&mut rng), TorusPoint::random(&mut rng));
        let (pc, qc) = (p.coords(), q.coords());
        let mut brute = f64::INFINITY;
        for k in 0..27 {
            let s = [(k % 3) as f64 - 1.0, ((k / 3) % 3) as f64 - 1.0, (k / 9) as f64 - 1.0];
            let d: f64 = (0..3).map(|i| (qc[i] + s[i] - pc[i]).powi(2)).sum::<f64>().sqrt();
            brute = brute.min(d);
        }
        let d = torus_distance(&p, &q);
        assert!((d - brute).abs() < 1e-14);
        assert!(d <= 3f64.sqrt() / 2.0 + 1e-15);
        assert!(d <= torus_distance(&p, &r) + torus_distance(&r, &q) + 1e-12);
    }
}

#[test]
fn linear_model_constants() {
    let m = AnosovModel::standard();
    assert_relative_eq!(m.lambda_u, LAMBDA_U, epsilon = 1e-12);
    assert_relative_eq!(m.lambda_c_mod, LAMBDA_U.powf(-0.5), epsilon = 1e-12);
    assert_eq!(m.periodic_points(1).unwrap().len(), 1);
    assert_eq!(m.periodic_points(2).unwrap().len(), 3);
    assert!(eigen_split([[1, 0, 0], [0, 1, 0], [0, 0, 1]], 1).is_err());
    // the sixth power puts the contraction below 1/3
    let m6 = eigen_split(m.matrix, 6).unwrap();
    assert!(m6.iterate_lambda_c() < 1.0 / 3.0);
}

#[test]
fn jacobian_at_q_has_target_spectrum() {
    let f = default_map();
    let j: Matrix3<f64> = f.eval_jacobian(&f.q());
    let mut moduli: Vec<f64> = j.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_relative_eq!(moduli[0], 0.88, epsilon = 1e-9);
    assert_relative_eq!(moduli[1], 1.20, epsilon = 1e-9);
    assert_relative_eq!(moduli[2], LAMBDA_U, epsilon = 1e-9);
    assert!(moduli[0] * moduli[1] > 1.0);
}

#[test]
fn surgery_is_local_and_invertible() {
    let f = default_map();
    let a = &f.model;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20_000 {
        let p = TorusPoint::random(&mut rng);
        if f.adapted_distance_to_q(&p) >= f.params.delta {
            assert_eq!(f.eval_forward(&p), apply_linear(a, &p));
        }
        let back = f.eval_inverse(&f.eval_forward(&p)).unwrap();
        assert!(back.distance(&p) < 1e-10);
    }
}

#[test]
fn semiconjugacy_identity_without_surgery() {
    let f = DAMap::linear(AnosovModel::standard()).unwrap();
    let e = ShadowEvaluator::new(&f, 40).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let p = TorusPoint::random(&mut rng);
        assert_eq!(e.eval_h(&p).unwrap(), p);
    }
}

#[test]
fn semiconjugacy_residual_below_tail() {
    let f = default_map();
    let e = ShadowEvaluator::new(&f, 80).unwrap();
    let s = semiconjugacy_residual(&e, 1000, 2).unwrap();
    assert!(s.max_residual < s.tail_bound, "{s:?}");
    assert!(s.eps_measured < f.params.delta / 10.0);
    let w = collapse_witness(&e, f.params.delta, 801).unwrap().expect("witness");
    assert!(w.image_distance < w.distance / 100.0);
}

#[test]
fn linear_chain_graph_is_one_class() {
    let m = AnosovModel::standard();
    let g = build_transition_graph(&m, 3, datorus::chain::full_cover(3).unwrap(), &RefineOptions::default().scheme, 0.1, 1.62)
        .unwrap();
    let s = scc_condense(&g);
    assert_eq!(s.n_components, 1);
    assert_eq!(quasi_attractor_candidates(&s), vec![0]);
}

#[test]
fn two_sink_fixture_separates() {
    let f = GradientFixture::two_sinks();
    let levels = refine_recurrent(&f, 3, 5, &RefineOptions::default()).unwrap();
    let last = levels.last().unwrap();
    assert_eq!(last.candidates.len(), 2);
    for sink in f.sinks() {
        let b = box_of_point(&sink, 5).unwrap();
        let i = last.graph.index_of(&b).expect("sink box active");
        assert!(last.candidates.contains(&last.scc.component[i]));
    }
    // outer approximation: recurrent volume never grows
    let vols: Vec<f64> = levels.iter().map(|l| l.recurrent_volume()).collect();
    assert!(vols.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn linear_lyapunov_exponents() {
    let m = AnosovModel::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = TorusPoint::wrap_finite([rng.gen(), rng.gen(), rng.gen()]);
    let d = lyapunov_spectrum(&m, &x, 10_000, 3);
    let l = LAMBDA_U.ln();
    assert_relative_eq!(d.exponents[0], l, epsilon = 1e-6);
    assert_relative_eq!(d.exponents[1], -0.5 * l, epsilon = 1e-6);
    assert_relative_eq!(d.exponents[2], -0.5 * l, epsilon = 1e-6);
    assert!(d.conservation_error() < 1e-6);
}

#[test]
fn property_report_is_deterministic() {
    let f = default_map();
    let c = ConeField::default();
    let a = verify_da_properties(&f, &c, 4000, 3);
    let b = verify_da_properties(&f, &c, 4000, 3);
    assert_eq!(a, b);
    assert!(a.all_pass());
}
