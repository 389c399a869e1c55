//! Summary table: one row per checked statement, labelled PASS (tolerance
//! check), EVIDENCE (statistical, seed-dependent), FAIL or N/A.

use serde::{Deserialize, Serialize};

use datorus::properties::Status;

use crate::run::Report;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictStatus {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "EVIDENCE")]
    Evidence,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "N/A")]
    NotApplicable,
}

impl VerdictStatus {
    pub fn label(&self) -> &'static str {
        match self {
            VerdictStatus::Pass => "PASS",
            VerdictStatus::Evidence => "EVIDENCE",
            VerdictStatus::Fail => "FAIL",
            VerdictStatus::NotApplicable => "N/A",
        }
    }

    fn tolerance(ok: bool) -> Self {
        if ok {
            VerdictStatus::Pass
        } else {
            VerdictStatus::Fail
        }
    }

    fn statistical(ok: bool) -> Self {
        if ok {
            VerdictStatus::Evidence
        } else {
            VerdictStatus::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub claim: String,
    /// Quoted phrase of the statement being checked; `None` for rows that
    /// check tool plumbing rather than a stated result.
    pub anchor: Option<String>,
    pub status: VerdictStatus,
    pub measured: f64,
    pub bound: f64,
    pub detail: String,
}

fn row(id: &str, claim: &str, anchor: Option<&str>, status: VerdictStatus, measured: f64, bound: f64, detail: String) -> Verdict {
    Verdict { id: id.into(), claim: claim.into(), anchor: anchor.map(str::to_string), status, measured, bound, detail }
}

pub const ANCHOR_CHARPOLY: &str = "has characteristic polynomial 1 + λ² − λ³";
pub const ANCHOR_FIXED_POINTS: &str = "Let q and r be different fixed points of A";
pub const ANCHOR_LOCALITY: &str = "F coincides with A outside B(q,δ)";
pub const ANCHOR_MODIFY: &str = "We shall modify A inside B(q,δ)";
pub const ANCHOR_FOLIATION: &str = "F preserves the stable foliation of A";
pub const ANCHOR_PRODUCT: &str = "product of its two eigenvalues with smaller modulus is larger than 1";
pub const ANCHOR_STABLE_LENGTH: &str = "the length of the stable manifold of q is larger than δ";
pub const ANCHOR_P2: &str = "‖Df_x w‖ ≥ λ⁻¹ ‖w‖";
pub const ANCHOR_P4: &str = "‖D_x f v‖ ≤ λ ‖v‖";
pub const ANCHOR_P6: &str = "Every curve of length L tangent to 𝓔^u";
pub const ANCHOR_P7: &str = "‖D_x f v‖ ≤ (1+β) ‖v‖";
pub const ANCHOR_SEMICONJ: &str = "h_f ∘ f = A ∘ h_f";
pub const ANCHOR_EPS: &str = "d(h(x), x) < ε";
pub const ANCHOR_FIBER: &str = "compact connected set contained in W^cs_loc(x)";
pub const ANCHOR_LOCALIZE: &str = "contained in the preimage of a periodic orbit by h";
pub const ANCHOR_CHAIN: &str = "the chain-recurrent set of f";
pub const ANCHOR_QUASI: &str = "there exists an unique quasi-attractor Q_f";
pub const ANCHOR_NEIGHBORHOODS: &str = "decreasing sequence of open neighborhoods {U_n}";
pub const ANCHOR_FILTRATING: &str = "filtrating neighborhood";
pub const ANCHOR_SPLITTING: &str = "admitting a splitting E^s ⊕ E^u";
pub const ANCHOR_CS: &str = "negative Lyapunov exponents in the direction E^cs";
pub const ANCHOR_SRB: &str = "admits a unique SRB measure whose support coincides";
pub const ANCHOR_BASIN: &str = "the basin of Q_f has total Lebesgue measure";
pub const ANCHOR_MILNOR: &str = "unique Milnor attractor contained in Q_f";
pub const ANCHOR_ENTROPY: &str = "unique entropy maximizing measure";

fn from_status(s: Status) -> VerdictStatus {
    match s {
        Status::Pass => VerdictStatus::Pass,
        Status::Fail => VerdictStatus::Fail,
        Status::NotApplicable => VerdictStatus::NotApplicable,
    }
}

fn build_rows(r: &Report, out: &mut Vec<Verdict>) {
    let Some(b) = &r.build else { return };
    let s = &b.spectrum;
    let err = s.root_residual.max(s.modulus_residual);
    out.push(row(
        "spectrum",
        "λ_u is the real root of the characteristic cubic and |λ_c| = λ_u^(−1/2)",
        Some(ANCHOR_CHARPOLY),
        VerdictStatus::tolerance(err < 1e-12),
        err,
        1e-12,
        format!("lambda_u = {:.13}, lambda_c_mod = {:.13}", s.lambda_u, s.lambda_c_mod),
    ));
    let bad = b.periodic.iter().filter(|p| p.enumerated as u64 != p.expected).count();
    out.push(row(
        "periodic-points",
        "enumerated periodic points of period n number |det(A^n − I)|",
        Some(ANCHOR_FIXED_POINTS),
        VerdictStatus::tolerance(bad == 0),
        bad as f64,
        0.0,
        b.periodic.iter().map(|p| format!("n={}: {}/{}", p.period, p.enumerated, p.expected)).collect::<Vec<_>>().join(", "),
    ));
    let l = &b.locality;
    out.push(row(
        "jacobian",
        "analytic Jacobian agrees with central differences",
        None,
        VerdictStatus::tolerance(l.max_jacobian_error < 1e-6),
        l.max_jacobian_error,
        1e-6,
        format!("{} samples, step {:e}", l.jacobian_samples, l.fd_step),
    ));
    out.push(row(
        "locality",
        "f equals the linear map off the surgery ball",
        Some(ANCHOR_LOCALITY),
        VerdictStatus::tolerance(l.max_outside < 1e-13),
        l.max_outside,
        1e-13,
        format!("max d(f(x), A x) over {} samples outside B(q, delta)", l.n_outside),
    ));
    let anchors = [
        ("P1", Some(ANCHOR_PRODUCT)),
        ("P2", Some(ANCHOR_P2)),
        ("P3", Some(ANCHOR_FOLIATION)),
        ("P4", Some(ANCHOR_P4)),
        ("P6", Some(ANCHOR_P6)),
        ("P7", Some(ANCHOR_P7)),
        ("DIFFEO", Some(ANCHOR_MODIFY)),
    ];
    for (id, anchor) in anchors {
        if let Some(p) = b.properties.get(id) {
            out.push(row(id, &p.statement, anchor, from_status(p.status), p.measured, p.bound, p.detail.clone()));
        }
    }
    if let Some(p1) = b.properties.get("P1") {
        let len = p1.extras.get("stable_arclength_to_exit").copied();
        let status = match (p1.status, len) {
            (Status::NotApplicable, _) => VerdictStatus::NotApplicable,
            (_, Some(v)) => VerdictStatus::tolerance(v.is_finite() && v > r.config.delta),
            _ => VerdictStatus::Fail,
        };
        out.push(row(
            "stable-length",
            "the stable arc of q leaves B(q, δ) after finite arclength larger than δ",
            Some(ANCHOR_STABLE_LENGTH),
            status,
            len.unwrap_or(0.0),
            r.config.delta,
            "immersed arclength to the first exit, worst branch".into(),
        ));
    }
}

fn semiconj_rows(r: &Report, out: &mut Vec<Verdict>) {
    let Some(s) = &r.semiconj else { return };
    let res = &s.residual;
    out.push(row(
        "semiconjugacy",
        "h ∘ f = A ∘ h up to the certified truncation tail",
        Some(ANCHOR_SEMICONJ),
        VerdictStatus::tolerance(res.max_residual <= res.tail_bound),
        res.max_residual,
        res.tail_bound,
        format!("{} samples, n_trunc {}", res.n_samples, s.n_trunc),
    ));
    out.push(row(
        "semiconjugacy-size",
        "h stays close to the identity",
        Some(ANCHOR_EPS),
        VerdictStatus::tolerance(res.eps_measured < s.eps_max),
        res.eps_measured,
        s.eps_max,
        format!("certified bound {:.3e}", res.eps_bound),
    ));
    out.push(row(
        "semiconjugacy-identity",
        "without surgery h is exactly the identity",
        None,
        VerdictStatus::tolerance(s.disabled_identity_max == 0.0),
        s.disabled_identity_max,
        0.0,
        format!("{} samples", s.disabled_samples),
    ));
    let (status, measured, detail) = match (&s.witness, r.config.surgery_enabled) {
        (_, false) => (VerdictStatus::NotApplicable, 0.0, "surgery disabled: h is injective".to_string()),
        (Some(w), true) => (
            VerdictStatus::statistical(w.image_distance < w.distance / 100.0),
            w.image_distance / w.distance,
            format!("d(x,z) = {:.3e}, d(h x, h z) = {:.3e}, leaf offset {:.1e}", w.distance, w.image_distance, w.leaf_offset),
        ),
        (None, true) => (VerdictStatus::Fail, f64::INFINITY, "no collapsing pair on the weak-unstable arc".to_string()),
    };
    out.push(row("collapse", "h collapses a non-trivial arc of the centre-stable leaf of q", Some(ANCHOR_FIBER), status, measured, 0.01, detail));
    match s.localization_depth {
        None => out.push(row(
            "localization",
            "non-attracting chain classes lie in fibres of periodic orbits",
            Some(ANCHOR_LOCALIZE),
            VerdictStatus::NotApplicable,
            0.0,
            0.0,
            "no transition graph in this run".into(),
        )),
        Some(d) => {
            let failed = s.localization.iter().filter(|l| !l.verdict.pass).count();
            let detail = if s.non_terminal_classes == 0 {
                format!("depth {d}: no non-terminal recurrent component (vacuous)")
            } else {
                format!("depth {d}: {} classes, {} failed", s.non_terminal_classes, failed)
            };
            out.push(row(
                "localization",
                "non-attracting chain classes lie in fibres of periodic orbits",
                Some(ANCHOR_LOCALIZE),
                VerdictStatus::tolerance(failed == 0),
                failed as f64,
                0.0,
                detail,
            ));
        }
    }
}

fn chain_rows(r: &Report, out: &mut Vec<Verdict>) {
    let Some(c) = &r.chain else { return };
    let spans = c.linear.iter().all(|l| l.spans_all_boxes);
    out.push(row(
        "chain-linear",
        "the linear model is one chain class at every depth",
        Some(ANCHOR_CHAIN),
        VerdictStatus::tolerance(spans),
        c.linear.iter().filter(|l| !l.spans_all_boxes).count() as f64,
        0.0,
        c.linear.iter().map(|l| format!("d{}: {} comp / {} boxes", l.depth, l.n_components, l.n_boxes)).collect::<Vec<_>>().join(", "),
    ));
    let judged: Vec<_> = c.da.iter().filter(|l| l.depth >= c.judge_from).collect();
    let judged = if judged.is_empty() { c.da.iter().collect() } else { judged };
    let ok = judged.iter().all(|l| l.candidates.len() == 1 && l.reference_orbit_in_candidate);
    out.push(row(
        "quasi-attractor",
        "exactly one terminal recurrent component, containing the reference orbit",
        Some(ANCHOR_QUASI),
        VerdictStatus::statistical(ok),
        judged.iter().map(|l| l.candidates.len()).max().unwrap_or(0) as f64,
        1.0,
        judged
            .iter()
            .map(|l| format!("d{}: {} candidate(s), r-orbit inside {}", l.depth, l.candidates.len(), l.reference_orbit_in_candidate))
            .collect::<Vec<_>>()
            .join(", "),
    ));
    let isolated = judged.iter().all(|l| l.isolation.iter().all(|i| i.isolated));
    out.push(row(
        "isolation",
        "the candidate is separated from every other recurrent component",
        Some(ANCHOR_FILTRATING),
        VerdictStatus::statistical(isolated),
        judged.iter().flat_map(|l| l.isolation.iter().map(|i| i.touching_boxes)).max().unwrap_or(0) as f64,
        0.0,
        judged
            .iter()
            .map(|l| {
                let others: usize = l.isolation.iter().map(|i| i.other_recurrent_components).sum();
                format!("d{}: {} other recurrent component(s)", l.depth, others)
            })
            .collect::<Vec<_>>()
            .join(", "),
    ));
    match &c.refinement {
        None => out.push(row(
            "outer-approximation",
            "recurrent box sets decrease under refinement",
            Some(ANCHOR_NEIGHBORHOODS),
            VerdictStatus::NotApplicable,
            0.0,
            0.0,
            "single depth, no refinement".into(),
        )),
        Some(f) => out.push(row(
            "outer-approximation",
            "recurrent box sets decrease under refinement",
            Some(ANCHOR_NEIGHBORHOODS),
            VerdictStatus::tolerance(f.monotone),
            *f.recurrent_volumes.last().unwrap_or(&1.0),
            1.0,
            format!(
                "volumes {:?}; strictly smaller than the torus: {}",
                f.recurrent_volumes.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
                f.strictly_smaller
            ),
        )),
    }
}

fn ergodic_rows(r: &Report, out: &mut Vec<Verdict>) {
    let Some(e) = &r.ergodic else { return };
    let lam_u = r.build.as_ref().map(|b| b.spectrum.iterate_lambda_u);
    let lam_c = r.build.as_ref().map(|b| b.spectrum.iterate_lambda_c);
    if let (Some(u), Some(c)) = (lam_u, lam_c) {
        let want = [u.ln(), c.ln(), c.ln()];
        let err = e
            .linear_lyapunov
            .iter()
            .flat_map(|o| o.exponents.iter().zip(&want).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        out.push(row(
            "lyapunov-linear",
            "linear-model exponents equal log|eigenvalues|",
            Some(ANCHOR_SPLITTING),
            VerdictStatus::tolerance(err < 1e-6),
            err,
            1e-6,
            format!("{} orbits x {} iterates", e.linear_lyapunov.len(), e.linear_lyapunov.first().map_or(0, |o| o.n_iters)),
        ));
    }
    let cons = e.linear_lyapunov.iter().chain(&e.da_lyapunov).map(|o| o.conservation_error()).fold(0.0, f64::max);
    out.push(row(
        "lyapunov-conservation",
        "exponent sum equals the average log-determinant on every orbit",
        None,
        VerdictStatus::tolerance(cons < 1e-6),
        cons,
        1e-6,
        format!("{} orbits", e.linear_lyapunov.len() + e.da_lyapunov.len()),
    ));
    out.push(row(
        "cs-negative",
        "points of an unstable arc have negative centre-stable exponent",
        Some(ANCHOR_CS),
        VerdictStatus::statistical(e.cs.fraction_negative >= e.cs_fraction_min),
        e.cs.fraction_negative,
        e.cs_fraction_min,
        format!("{} points x {} iterates, mean {:.5}, max {:.5}", e.cs.n_points, e.cs.n_iters, e.cs.mean, e.cs.max),
    ));
    out.push(row(
        "srb",
        "Lebesgue-random orbits share one empirical measure",
        Some(ANCHOR_SRB),
        VerdictStatus::statistical(e.srb.max_pairwise_l1 <= e.srb_l1_max),
        e.srb.max_pairwise_l1,
        e.srb_l1_max,
        format!(
            "{} starts x {} iterates, depth {} (depth {}: {:.4}), seed {}",
            e.srb.n_starts, e.srb.n_iters, e.srb.depth, e.srb.fine_depth, e.srb.max_pairwise_l1_fine, e.srb.seed
        ),
    ));
    out.push(row(
        "basin",
        "almost every point is attracted to the quasi-attractor",
        Some(ANCHOR_BASIN),
        VerdictStatus::statistical(e.basin_fraction >= e.basin_min),
        e.basin_fraction,
        e.basin_min,
        format!("{} target boxes at depth {}", e.basin_boxes, e.basin_depth),
    ));
    let milnor = e.basin_fraction >= e.basin_min && e.srb.max_pairwise_l1 <= e.srb_l1_max;
    out.push(row(
        "milnor",
        "one attractor carries the statistics of almost every orbit",
        Some(ANCHOR_MILNOR),
        VerdictStatus::statistical(milnor),
        e.basin_fraction,
        e.basin_min,
        "joint reading of the basin and SRB rows".into(),
    ));
    let h = &e.entropy;
    out.push(row(
        "entropy",
        "graph entropy estimate is compatible with the factor lower bound log λ_u",
        Some(ANCHOR_ENTROPY),
        VerdictStatus::tolerance(h.converged && h.graph_estimate >= h.lower - 0.1),
        h.graph_estimate,
        h.lower - 0.1,
        format!("lower bound {:.6}, depth {}, {} power iterations", h.lower, e.entropy_depth, h.power_iterations),
    ));
}

pub fn verdicts(r: &Report) -> Vec<Verdict> {
    let mut out = Vec::new();
    build_rows(r, &mut out);
    semiconj_rows(r, &mut out);
    chain_rows(r, &mut out);
    ergodic_rows(r, &mut out);
    if r.build.is_some() && r.chain.is_some() && r.semiconj.is_some() && r.ergodic.is_some() {
        out.push(row(
            "generic",
            "C¹-generic statements (no attractors, infinitely many chain classes)",
            None,
            VerdictStatus::NotApplicable,
            0.0,
            0.0,
            "not decidable by finite computation; see the property and isolation rows".into(),
        ));
    }
    out
}

/// Fixed-width text rendering of the table.
pub fn render(rows: &[Verdict]) -> String {
    let mut s = String::new();
    for v in rows {
        s.push_str(&format!("{:<9} {:<24} {:>12.4e}  {}\n", v.status.label(), v.id, v.measured, v.claim));
    }
    s
}
