//! Acceptance suite: twelve criteria at full size with the default
//! configuration. Each prints one PASS/FAIL line to stderr; the test fails
//! if any does.

use std::io::Write;
use std::time::Instant;

use datorus::anosov::{int_det, int_mul, AnosovModel, IntMatrix3, DEFAULT_MATRIX};
use datorus::chain::DepthLevel;
use datorus::ergodic::{basin_fraction, cs_exponent_on_unstable_arc, entropy_bounds, srb_evidence};
use datorus::surgery::DAMap;
use datorus::torus::box_of_point;
use datorus::Status;
use datorus_cli::run::{build_maps, chain_levels, locality_section, lyapunov_orbits, semiconj_section, SemiconjSection};
use datorus_cli::RunConfig;

// ─── Shared helpers ───

struct Line {
    n: usize,
    name: &'static str,
    pass: bool,
    secs: f64,
    limit: f64,
    detail: String,
}

struct Suite {
    lines: Vec<Line>,
}

impl Suite {
    fn record(&mut self, n: usize, name: &'static str, limit: f64, t: Instant, ok: bool, detail: String) {
        let secs = t.elapsed().as_secs_f64();
        let pass = ok && secs < limit;
        // written to the raw handle so the lines survive libtest's capture
        let _ = writeln!(
            std::io::stderr(),
            "criterion {n:>2} {name:<28} {}  ({secs:.2}s / limit {limit}s)  {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
        self.lines.push(Line { n, name, pass, secs, limit, detail });
    }
}

/// Real root of `λ³ − λ² − 1` by plain bisection on [1, 2].
fn bisect_root() -> f64 {
    let p = |x: f64| x * x * x - x * x - 1.0;
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if p(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn det_power_minus_identity(a: &IntMatrix3, n: u32) -> u64 {
    let mut m = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
    for _ in 0..n {
        m = int_mul(&m, a).unwrap();
    }
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= 1;
    }
    int_det(&m).unsigned_abs()
}

fn reference_in_single_candidate(map: &DAMap, level: &DepthLevel) -> bool {
    let g = &level.graph;
    map.reference_orbit.points.iter().all(|p| {
        let b = box_of_point(&p.point, g.depth).unwrap();
        g.index_of(&b).is_some_and(|i| level.candidates.contains(&level.scc.component[i]))
    })
}

// ─── The suite ───

#[test]
fn acceptance_suite() {
    let cfg = RunConfig::default();
    let (model, map) = build_maps(&cfg).expect("default build");
    let root = bisect_root();
    let mut s = Suite { lines: Vec::new() };

    // 1. spectrum
    let t = Instant::now();
    let m = AnosovModel::standard();
    let e1 = (m.lambda_u - root).abs();
    let e2 = (m.lambda_c_mod - root.powf(-0.5)).abs();
    s.record(1, "spectrum", 1.0, t, e1 < 1e-12 && e2 < 1e-12, format!("|Δλ_u| = {e1:.1e}, |Δλ_c| = {e2:.1e}"));

    // 2. periodic-point counts
    let t = Instant::now();
    let mut ok = true;
    let mut counts = Vec::new();
    for n in 1..=6 {
        let pts = model.periodic_points(n).unwrap();
        let want = det_power_minus_identity(&DEFAULT_MATRIX, n);
        let returns = pts.iter().all(|p| {
            let mut y = p.point;
            for _ in 0..n {
                y = model.apply(&y);
            }
            y.distance(&p.point) < 1e-9
        });
        ok &= pts.len() as u64 == want && returns;
        counts.push(format!("{}/{want}", pts.len()));
    }
    ok &= counts[0] == "1/1" && counts[1] == "3/3";
    s.record(2, "periodic-point counts", 5.0, t, ok, counts.join(" "));

    // 3. surgery locality and Jacobian
    let t = Instant::now();
    let loc = locality_section(&map, &cfg);
    s.record(
        3,
        "surgery locality",
        10.0,
        t,
        loc.n_outside == 100_000 && loc.max_outside < 1e-13 && loc.max_jacobian_error < 1e-6,
        format!("max d(f,A) = {:.1e} over {}, Jacobian FD error {:.1e}", loc.max_outside, loc.n_outside, loc.max_jacobian_error),
    );

    // 4. (P1)-(P7)
    let t = Instant::now();
    let props = datorus::verify_da_properties(&map, &cfg.cones(), cfg.property_samples, cfg.property_seed);
    let p1 = props.get("P1").unwrap();
    let p7 = props.get("P7").unwrap();
    let all = props.records.iter().all(|r| r.status == Status::Pass);
    s.record(
        4,
        "property report",
        60.0,
        t,
        all && p1.measured > 1.0 && (p1.measured - 1.056).abs() < 1e-9 && p7.measured <= 1.0 + cfg.beta,
        format!(
            "{} records all pass: {all}; product {:.4}; cs-growth {:.4} ≤ {}",
            props.records.len(),
            p1.measured,
            p7.measured,
            1.0 + cfg.beta
        ),
    );

    // 5. semiconjugacy
    let t = Instant::now();
    let sc: SemiconjSection = semiconj_section(&cfg, &map, None).unwrap();
    let r = &sc.residual;
    s.record(
        5,
        "semiconjugacy",
        60.0,
        t,
        r.n_samples == 10_000
            && r.max_residual < r.tail_bound
            && sc.disabled_identity_max == 0.0
            && r.eps_measured < cfg.delta / 10.0,
        format!(
            "residual {:.1e} < tail {:.1e}; disabled |h−id| = {}; eps {:.2e} < {:.0e}",
            r.max_residual,
            r.tail_bound,
            sc.disabled_identity_max,
            r.eps_measured,
            cfg.delta / 10.0
        ),
    );

    // 6. collapse witness
    let t = Instant::now();
    let w = sc.witness.clone();
    let ok = w.as_ref().is_some_and(|w| w.distance > 0.0 && w.image_distance < w.distance / 100.0);
    let detail = w.map_or("no witness".into(), |w| {
        format!("d(x,z) = {:.2e}, d(hx,hz) = {:.2e}, leaf offset {:.1e}", w.distance, w.image_distance, w.leaf_offset)
    });
    s.record(6, "collapse witness (EVIDENCE)", 60.0, t, ok, detail);

    // 7. chain graphs
    let t = Instant::now();
    let (linear, da) = chain_levels(&cfg, &model, &map).unwrap();
    let lin_ok = linear.len() == 3
        && linear.iter().all(|l| l.scc.n_components == 1 && l.graph.n_boxes() as u64 == 1u64 << (3 * l.graph.depth));
    let judged: Vec<&DepthLevel> = da.iter().filter(|l| (4..=6).contains(&l.graph.depth)).collect();
    let da_ok = judged.len() == 3
        && judged.iter().all(|l| {
            let terminal_rec = (0..l.scc.n_components as u32).filter(|&c| l.scc.recurrent[c as usize] && l.scc.is_terminal(c)).count();
            l.candidates.len() == 1 && terminal_rec == 1 && reference_in_single_candidate(&map, l)
        });
    s.record(
        7,
        "chain graphs",
        300.0,
        t,
        lin_ok && da_ok,
        format!(
            "linear components {:?}; DA candidates {:?}",
            linear.iter().map(|l| l.scc.n_components).collect::<Vec<_>>(),
            judged.iter().map(|l| l.candidates.len()).collect::<Vec<_>>()
        ),
    );

    // 8. localization at depth 6
    let t = Instant::now();
    let loc8 = semiconj_section(&RunConfig { semiconj_samples: 1, witness_probe: 3, ..cfg.clone() }, &map, Some(&da)).unwrap();
    let ok = loc8.localization_depth == Some(6) && loc8.localization.iter().all(|l| l.verdict.pass);
    s.record(
        8,
        "localization",
        120.0,
        t,
        ok,
        format!("{} non-terminal recurrent component(s) at depth 6", loc8.non_terminal_classes),
    );

    // 9. Lyapunov
    let t = Instant::now();
    let lin = lyapunov_orbits(&model, cfg.lyap_orbits, 10_000, cfg.lyap_seed);
    let want = [root.ln(), -0.5 * root.ln(), -0.5 * root.ln()];
    let err = lin.iter().flat_map(|o| o.exponents.iter().zip(&want).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
    let da_orbits = lyapunov_orbits(&map, cfg.lyap_orbits, 10_000, cfg.lyap_seed);
    let cons = lin.iter().chain(&da_orbits).map(|o| o.conservation_error()).fold(0.0, f64::max);
    s.record(
        9,
        "Lyapunov exponents",
        30.0,
        t,
        err < 1e-6 && cons < 1e-6,
        format!("linear error {err:.1e}; conservation {cons:.1e} over {} orbits", lin.len() + da_orbits.len()),
    );

    // 10. cs-negativity on an unstable arc
    let t = Instant::now();
    let cs = cs_exponent_on_unstable_arc(&map, &map.reference_orbit.points[0].point, 1000, 100_000);
    s.record(
        10,
        "cs-negativity (EVIDENCE)",
        300.0,
        t,
        cs.fraction_negative >= 0.99,
        format!("fraction {:.4}, mean {:.5}, max {:.5}", cs.fraction_negative, cs.mean, cs.max),
    );

    // 11. SRB and basin
    let t = Instant::now();
    let srb = srb_evidence(&map, 10, 1_000_000, 3, cfg.srb_seed);
    let deepest = da.last().unwrap();
    let target: Vec<_> = deepest.candidates.iter().flat_map(|&c| deepest.scc.boxes_of(&deepest.graph, c)).collect();
    let basin = basin_fraction(&map, &target, 10_000, 10_000, cfg.basin_seed);
    s.record(
        11,
        "SRB / basin (EVIDENCE)",
        600.0,
        t,
        srb.max_pairwise_l1 <= 0.05 && basin >= 0.99,
        format!("max L1 {:.4} (depth {}), basin {:.4}", srb.max_pairwise_l1, srb.depth, basin),
    );

    // 12. entropy
    let t = Instant::now();
    let d5 = da.iter().find(|l| l.graph.depth == 5).unwrap();
    let h = entropy_bounds(&model, &d5.graph);
    s.record(
        12,
        "entropy",
        60.0,
        t,
        (h.lower - 0.382245).abs() < 5e-7 && (h.lower - root.ln()).abs() < 1e-12 && h.graph_estimate >= h.lower - 0.1,
        format!("lower {:.6}, graph estimate {:.4} at depth 5", h.lower, h.graph_estimate),
    );

    let failed: Vec<String> = s
        .lines
        .iter()
        .filter(|l| !l.pass)
        .map(|l| format!("{} {} ({:.1}s/{}s): {}", l.n, l.name, l.secs, l.limit, l.detail))
        .collect();
    let _ = writeln!(std::io::stderr(), "{} of {} criteria pass", s.lines.len() - failed.len(), s.lines.len());
    assert!(failed.is_empty(), "failed criteria: {failed:#?}");
}
