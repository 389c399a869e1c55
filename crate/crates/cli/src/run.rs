//! The commands and the sections of the report they produce.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use datorus::anosov::{characteristic_coefficients, int_det, int_pow, AnosovModel};
use datorus::chain::{
    build_transition_graph, full_cover, isolation_record, lipschitz_estimate, refine_recurrent, DepthLevel,
    IsolationRecord, RefineOptions,
};
use datorus::ergodic::{
    basin_fraction, cs_exponent_on_unstable_arc, entropy_bounds, fd_jacobian, lyapunov_spectrum, srb_evidence,
    CsExponentReport, EntropyBounds, OrbitDiagnostics, SrbEvidence,
};
use datorus::properties::{p5_record, verify_da_properties, PropertyReport};
use datorus::shadow::{
    collapse_witness, localize_class_to_periodic_fiber, semiconjugacy_residual, CollapseWitness,
    LocalizationVerdict, ResidualSummary, ShadowEvaluator,
};
use datorus::surgery::{build_da_map, random_in_ball, BuildReport, DAMap};
use datorus::torus::{box_of_point, BoxId, TorusPoint};
use datorus::TorusMap;

use crate::{verdict, CliError, RunConfig, Verdict, REPORT_SCHEMA_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    BuildVerify,
    Chain,
    Semiconj,
    Ergodic,
    Full,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::BuildVerify => "build-verify",
            Command::Chain => "chain",
            Command::Semiconj => "semiconj",
            Command::Ergodic => "ergodic",
            Command::Full => "full",
        }
    }
}

// ─── Sections ───

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumSection {
    /// `(c2, c1, c0)` of `λ³ + c2 λ² + c1 λ + c0`.
    pub char_coefficients: [i64; 3],
    pub lambda_u: f64,
    pub lambda_c_mod: f64,
    pub theta_c: f64,
    /// `|p(λ_u)/p'(λ_u)|`, the Newton correction left at the computed root.
    pub root_residual: f64,
    /// `|λ_c_mod − λ_u^(−1/2)|`.
    pub modulus_residual: f64,
    pub iterate_lambda_u: f64,
    pub iterate_lambda_c: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicCount {
    pub period: u32,
    pub enumerated: usize,
    /// `|det(A^n − I)|`.
    pub expected: u64,
    pub exact_period_orbits: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalitySection {
    pub n_outside: usize,
    pub max_outside: f64,
    pub jacobian_samples: usize,
    pub fd_step: f64,
    pub max_jacobian_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildSection {
    pub spectrum: SpectrumSection,
    pub periodic: Vec<PeriodicCount>,
    pub locality: LocalitySection,
    pub construction: BuildReport,
    pub properties: PropertyReport,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainDepthRow {
    pub depth: u32,
    pub n_boxes: usize,
    pub n_edges: usize,
    pub bloat: f64,
    pub n_components: usize,
    pub n_recurrent_components: usize,
    pub recurrent_boxes: usize,
    pub largest_component: usize,
    /// Recurrent components with no outgoing condensation edge.
    pub terminal_recurrent: usize,
    pub candidates: Vec<u32>,
    pub candidate_sizes: Vec<usize>,
    pub spans_all_boxes: bool,
    /// Every point of the reference orbit lies in a candidate box.
    pub reference_orbit_in_candidate: bool,
    pub isolation: Vec<IsolationRecord>,
    pub recurrent_volume: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RefinementSummary {
    pub depths: Vec<u32>,
    pub recurrent_volumes: Vec<f64>,
    /// Recurrent volume never increases under subdivision.
    pub monotone: bool,
    /// The final active set is strictly smaller than the torus.
    pub strictly_smaller: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainSection {
    pub lipschitz_linear: f64,
    pub lipschitz_da: f64,
    pub linear: Vec<ChainDepthRow>,
    pub da: Vec<ChainDepthRow>,
    pub judge_from: u32,
    /// Absent when a single depth was requested.
    pub refinement: Option<RefinementSummary>,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub component: u32,
    pub verdict: LocalizationVerdict,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemiconjSection {
    pub n_trunc: usize,
    pub residual: ResidualSummary,
    pub eps_max: f64,
    /// `max d(h(x), x)` for the surgery-disabled map.
    pub disabled_identity_max: f64,
    pub disabled_samples: usize,
    pub witness: Option<CollapseWitness>,
    pub localization_depth: Option<u32>,
    pub non_terminal_classes: usize,
    pub localization: Vec<LocalizationRow>,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErgodicSection {
    pub linear_lyapunov: Vec<OrbitDiagnostics>,
    pub da_lyapunov: Vec<OrbitDiagnostics>,
    pub cs: CsExponentReport,
    pub cs_fraction_min: f64,
    pub srb: SrbEvidence,
    pub srb_l1_max: f64,
    pub basin_fraction: f64,
    pub basin_depth: u32,
    pub basin_boxes: usize,
    pub basin_min: f64,
    pub entropy: EntropyBounds,
    pub entropy_depth: u32,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: Command,
    pub generated_unix: u64,
    pub config: RunConfig,
    pub config_hash: String,
    pub build: Option<BuildSection>,
    pub chain: Option<ChainSection>,
    pub semiconj: Option<SemiconjSection>,
    pub ergodic: Option<ErgodicSection>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn any_fail(&self) -> bool {
        self.verdicts.iter().any(|v| v.status == crate::VerdictStatus::Fail)
    }
}

/// Everything a run computes, including the in-memory graphs the output
/// writer needs.
pub struct RunArtifacts {
    pub report: Report,
    pub da_levels: Vec<DepthLevel>,
}

// ─── Construction ───

pub fn build_maps(cfg: &RunConfig) -> Result<(AnosovModel, DAMap), CliError> {
    cfg.validate()?;
    let model = cfg.model()?;
    let map = build_da_map(model.clone(), cfg.surgery_params())?;
    Ok((model, map))
}

pub fn spectrum_section(model: &AnosovModel) -> SpectrumSection {
    let c = characteristic_coefficients(&model.matrix);
    let cf = c.map(|v| v as f64);
    let l = model.lambda_u;
    let p = ((l + cf[0]) * l + cf[1]) * l + cf[2];
    let dp = (3.0 * l + 2.0 * cf[0]) * l + cf[1];
    SpectrumSection {
        char_coefficients: c,
        lambda_u: l,
        lambda_c_mod: model.lambda_c_mod,
        theta_c: model.theta_c,
        root_residual: (p / dp).abs(),
        modulus_residual: (model.lambda_c_mod - l.powf(-0.5)).abs(),
        iterate_lambda_u: model.iterate_lambda_u(),
        iterate_lambda_c: model.iterate_lambda_c(),
    }
}

pub fn periodic_section(model: &AnosovModel, max_period: u32) -> Result<Vec<PeriodicCount>, CliError> {
    (1..=max_period)
        .map(|n| {
            let mut b = int_pow(model.iterate(), n).ok_or_else(|| CliError::internal("linear.overflow", "A^n"))?;
            for (i, row) in b.iter_mut().enumerate() {
                row[i] -= 1;
            }
            Ok(PeriodicCount {
                period: n,
                enumerated: model.periodic_points(n)?.len(),
                expected: int_det(&b).unsigned_abs(),
                exact_period_orbits: model.orbits_of_exact_period(n)?.len(),
            })
        })
        .collect()
}

/// `d(f(x), A x)` on points outside the support ball and the Jacobian
/// against central differences on ball and torus samples.
pub fn locality_section(map: &DAMap, cfg: &RunConfig) -> LocalitySection {
    use rayon::prelude::*;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.property_seed ^ 0x10ca1);
    let mut outside = Vec::with_capacity(cfg.locality_samples);
    while outside.len() < cfg.locality_samples {
        let p = TorusPoint::random(&mut rng);
        if map.adapted_distance_to_q(&p) >= cfg.delta {
            outside.push(p);
        }
    }
    let max_outside = outside
        .par_iter()
        .map(|p| map.apply(p).distance(&map.model.apply(p)))
        .reduce(|| 0.0, f64::max);
    let fd_step = 1e-6;
    let jac: Vec<TorusPoint> = (0..cfg.jacobian_samples)
        .map(|i| if i % 2 == 0 { TorusPoint::random(&mut rng) } else { map.from_local(&random_in_ball(&mut rng, cfg.delta)) })
        .collect();
    let max_jacobian_error = jac
        .par_iter()
        .map(|p| (fd_jacobian(map, p, fd_step) - map.jacobian(p)).abs().max())
        .reduce(|| 0.0, f64::max);
    LocalitySection { n_outside: outside.len(), max_outside, jacobian_samples: jac.len(), fd_step, max_jacobian_error }
}

pub fn build_section(cfg: &RunConfig, model: &AnosovModel, map: &DAMap) -> Result<BuildSection, CliError> {
    let t = Instant::now();
    let spectrum = spectrum_section(model);
    let periodic = periodic_section(model, cfg.max_period)?;
    let locality = locality_section(map, cfg);
    let properties = verify_da_properties(map, &cfg.cones(), cfg.property_samples, cfg.property_seed);
    Ok(BuildSection {
        spectrum,
        periodic,
        locality,
        construction: map.build.clone(),
        properties,
        elapsed_s: t.elapsed().as_secs_f64(),
    })
}

// ─── Chain recurrence ───

fn refine_options(cfg: &RunConfig) -> RefineOptions {
    RefineOptions { scheme: cfg.chain_scheme(), bloat: cfg.chain_bloat, ..RefineOptions::default() }
}

fn reference_boxes(map: &DAMap, depth: u32) -> Result<Vec<BoxId>, CliError> {
    map.reference_orbit.points.iter().map(|p| box_of_point(&p.point, depth).map_err(CliError::from)).collect()
}

fn depth_row(level: &DepthLevel, reference: &[BoxId]) -> ChainDepthRow {
    let (g, s) = (&level.graph, &level.scc);
    let candidate_of = |b: &BoxId| g.index_of(b).map(|i| s.component[i]).filter(|c| level.candidates.contains(c));
    ChainDepthRow {
        depth: g.depth,
        n_boxes: g.n_boxes(),
        n_edges: g.n_edges(),
        bloat: g.bloat,
        n_components: s.n_components,
        n_recurrent_components: s.n_recurrent_components(),
        recurrent_boxes: s.recurrent_boxes(g).len(),
        largest_component: s.sizes.iter().copied().max().unwrap_or(0) as usize,
        terminal_recurrent: (0..s.n_components as u32).filter(|&c| s.recurrent[c as usize] && s.is_terminal(c)).count(),
        candidates: level.candidates.clone(),
        candidate_sizes: level.candidates.iter().map(|&c| s.sizes[c as usize] as usize).collect(),
        spans_all_boxes: s.n_components == 1 && g.n_boxes() as u64 == 1u64 << (3 * g.depth),
        reference_orbit_in_candidate: !reference.is_empty() && reference.iter().all(|b| candidate_of(b).is_some()),
        isolation: level.candidates.iter().map(|&c| isolation_record(g, s, c)).collect(),
        recurrent_volume: level.recurrent_volume(),
    }
}

/// Subdivision for the linear model and the DA map.
pub fn chain_levels(cfg: &RunConfig, model: &AnosovModel, map: &DAMap) -> Result<(Vec<DepthLevel>, Vec<DepthLevel>), CliError> {
    let opts = refine_options(cfg);
    let linear_end = cfg.linear_chain_end.max(cfg.chain_start);
    let linear = refine_recurrent(model, cfg.chain_start, linear_end, &opts)?;
    let da = refine_recurrent(map, cfg.chain_start, cfg.chain_end, &opts)?;
    Ok((linear, da))
}

pub fn chain_section(
    cfg: &RunConfig,
    model: &AnosovModel,
    map: &DAMap,
    linear: &[DepthLevel],
    da: &[DepthLevel],
    elapsed_s: f64,
) -> Result<ChainSection, CliError> {
    let opts = refine_options(cfg);
    let linear_rows = linear.iter().map(|l| depth_row(l, &[])).collect();
    let da_rows: Vec<ChainDepthRow> =
        da.iter().map(|l| Ok(depth_row(l, &reference_boxes(map, l.graph.depth)?))).collect::<Result<_, CliError>>()?;
    let refinement = (da_rows.len() > 1).then(|| {
        let vols: Vec<f64> = da_rows.iter().map(|r| r.recurrent_volume).collect();
        RefinementSummary {
            depths: da_rows.iter().map(|r| r.depth).collect(),
            monotone: vols.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            strictly_smaller: vols.last().is_some_and(|&v| v < 1.0 - 1e-12),
            recurrent_volumes: vols,
        }
    });
    Ok(ChainSection {
        lipschitz_linear: lipschitz_estimate(model, opts.lipschitz_samples, opts.scheme.seed),
        lipschitz_da: lipschitz_estimate(map, opts.lipschitz_samples, opts.scheme.seed),
        linear: linear_rows,
        da: da_rows,
        judge_from: cfg.chain_judge_from,
        refinement,
        elapsed_s,
    })
}

// ─── Semiconjugacy ───

pub fn semiconj_section(cfg: &RunConfig, map: &DAMap, da: Option<&[DepthLevel]>) -> Result<SemiconjSection, CliError> {
    use rayon::prelude::*;
    let t = Instant::now();
    let e = ShadowEvaluator::new(map, cfg.n_trunc)?;
    let residual = semiconjugacy_residual(&e, cfg.semiconj_samples, cfg.semiconj_seed)?;
    let witness = if map.is_enabled() { collapse_witness(&e, cfg.delta, cfg.witness_probe)? } else { None };

    let linear = DAMap::linear(map.model.clone())?;
    let id = ShadowEvaluator::new(&linear, cfg.n_trunc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.semiconj_seed ^ 0x1d);
    let pts: Vec<TorusPoint> = (0..cfg.semiconj_samples).map(|_| TorusPoint::random(&mut rng)).collect();
    let disabled_identity_max = pts
        .par_iter()
        .map(|p| id.eval_h(p).map(|h| h.distance(p)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let mut localization = Vec::new();
    let mut non_terminal = 0;
    let level = da.and_then(|l| l.last());
    if let Some(level) = level {
        let orbits = map.model.periodic_orbits(cfg.localization_max_period)?;
        let s = &level.scc;
        for c in 0..s.n_components as u32 {
            if !s.recurrent[c as usize] || level.candidates.contains(&c) {
                continue;
            }
            non_terminal += 1;
            let boxes = s.boxes_of(&level.graph, c);
            let verdict = localize_class_to_periodic_fiber(&e, &boxes, false, &orbits)?;
            localization.push(LocalizationRow { component: c, verdict });
        }
    }
    let residual = ResidualSummary { eps_measured: residual.eps_measured.max(e.eps_measured()), ..residual };
    Ok(SemiconjSection {
        n_trunc: cfg.n_trunc,
        residual,
        eps_max: cfg.eps_frac * cfg.delta,
        disabled_identity_max,
        disabled_samples: pts.len(),
        witness,
        localization_depth: level.map(|l| l.graph.depth),
        non_terminal_classes: non_terminal,
        localization,
        elapsed_s: t.elapsed().as_secs_f64(),
    })
}

// ─── Ergodic diagnostics ───

pub fn lyapunov_orbits<M: TorusMap + ?Sized>(f: &M, n_orbits: usize, n_iters: usize, seed: u64) -> Vec<OrbitDiagnostics> {
    use rayon::prelude::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<TorusPoint> = (0..n_orbits).map(|_| TorusPoint::random(&mut rng)).collect();
    starts.par_iter().enumerate().map(|(i, x)| lyapunov_spectrum(f, x, n_iters, seed.wrapping_add(i as u64))).collect()
}

/// Attractor candidate boxes at the deepest level, or the whole torus at
/// `depth` when no graph is available.
fn basin_target(da: &[DepthLevel], fallback_depth: u32) -> Result<Vec<BoxId>, CliError> {
    match da.last() {
        Some(level) => Ok(level.candidates.iter().flat_map(|&c| level.scc.boxes_of(&level.graph, c)).collect()),
        None => Ok(full_cover(fallback_depth)?),
    }
}

pub fn ergodic_section(cfg: &RunConfig, model: &AnosovModel, map: &DAMap, da: &[DepthLevel]) -> Result<ErgodicSection, CliError> {
    let t = Instant::now();
    let linear_lyapunov = lyapunov_orbits(model, cfg.lyap_orbits, cfg.lyap_iters, cfg.lyap_seed);
    let da_lyapunov = lyapunov_orbits(map, cfg.lyap_orbits, cfg.lyap_da_iters, cfg.lyap_seed);
    let cs = cs_exponent_on_unstable_arc(map, &map.reference_orbit.points[0].point, cfg.cs_points, cfg.cs_iters);
    let srb = srb_evidence(map, cfg.srb_starts, cfg.srb_iters, cfg.srb_depth, cfg.srb_seed);
    let target = basin_target(da, cfg.chain_end)?;
    let basin = basin_fraction(map, &target, cfg.basin_samples, cfg.basin_iters, cfg.basin_seed);
    let full = 1u64 << (3 * cfg.entropy_depth);
    let entropy = match da.iter().find(|l| l.graph.depth == cfg.entropy_depth && l.graph.n_boxes() as u64 == full) {
        Some(l) => entropy_bounds(model, &l.graph),
        None => {
            let opts = refine_options(cfg);
            let lip = lipschitz_estimate(map, opts.lipschitz_samples, opts.scheme.seed);
            let bloat = cfg.chain_bloat.unwrap_or_else(|| datorus::chain::default_bloat(cfg.entropy_depth, &opts.scheme, lip));
            let g = build_transition_graph(map, cfg.entropy_depth, full_cover(cfg.entropy_depth)?, &opts.scheme, bloat, lip)?;
            entropy_bounds(model, &g)
        }
    };
    Ok(ErgodicSection {
        linear_lyapunov,
        da_lyapunov,
        cs,
        cs_fraction_min: cfg.cs_fraction_min,
        srb,
        srb_l1_max: cfg.srb_l1_max,
        basin_fraction: basin,
        basin_depth: target.first().map_or(0, |b| b.depth),
        basin_boxes: target.len(),
        basin_min: cfg.basin_min,
        entropy,
        entropy_depth: cfg.entropy_depth,
        elapsed_s: t.elapsed().as_secs_f64(),
    })
}

// ─── Commands ───

const NOTES: &[&str] = &[
    "EVIDENCE rows are statistical and seed-dependent; their thresholds (0.05 L1 distance, 0.99 fractions) are acceptance knobs, not derived from the theory.",
    "Generic statements (no attractors, infinitely many chain classes for generic f) are not desk-reproducible; the property checks and the per-depth isolation tracker stand in for them.",
];

fn now_unix() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs `cmd` and assembles the report; nothing is written.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<RunArtifacts, CliError> {
    let (model, map) = build_maps(cfg)?;
    let full = cmd == Command::Full;
    let mut report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd,
        generated_unix: now_unix(),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        build: None,
        chain: None,
        semiconj: None,
        ergodic: None,
        verdicts: Vec::new(),
        notes: NOTES.iter().map(|s| s.to_string()).collect(),
    };
    if matches!(cmd, Command::BuildVerify | Command::Full) {
        report.build = Some(build_section(cfg, &model, &map)?);
    }
    let want_chain = cmd == Command::Chain || (full && cfg.run_chain);
    let want_semiconj = cmd == Command::Semiconj || (full && cfg.run_semiconj);
    let want_ergodic = cmd == Command::Ergodic || (full && cfg.run_ergodic);
    let mut da_levels = Vec::new();
    if want_chain || want_ergodic || (want_semiconj && full) {
        let t = Instant::now();
        let (linear, da) = chain_levels(cfg, &model, &map)?;
        if want_chain {
            report.chain = Some(chain_section(cfg, &model, &map, &linear, &da, t.elapsed().as_secs_f64())?);
        }
        da_levels = da;
    }
    if want_semiconj {
        let levels = (!da_levels.is_empty()).then_some(da_levels.as_slice());
        let s = semiconj_section(cfg, &map, levels)?;
        if let Some(b) = report.build.as_mut() {
            b.properties.upsert(p5_record(s.residual.max_residual, s.residual.tail_bound, s.residual.eps_measured, s.eps_max));
        }
        report.semiconj = Some(s);
    }
    if want_ergodic {
        report.ergodic = Some(ergodic_section(cfg, &model, &map, &da_levels)?);
    }
    report.verdicts = verdict::verdicts(&report);
    Ok(RunArtifacts { report, da_levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use datorus::surgery::SurgeryParams;

    #[test]
    fn periodic_counts_match_determinant() {
        let m = AnosovModel::standard();
        let rows = periodic_section(&m, 4).unwrap();
        assert_eq!((rows[0].expected, rows[1].expected), (1, 3));
        assert!(rows.iter().all(|r| r.enumerated as u64 == r.expected));
    }

    #[test]
    fn spectrum_residuals_small() {
        let s = spectrum_section(&AnosovModel::standard());
        assert_eq!(s.char_coefficients, [-1, 0, -1]);
        assert!(s.root_residual < 1e-14 && s.modulus_residual < 1e-14);
    }

    #[test]
    fn disabled_map_has_no_surgery() {
        let cfg = RunConfig { surgery_enabled: false, ..RunConfig::default() };
        let (_, map) = build_maps(&cfg).unwrap();
        assert_eq!(map.params, SurgeryParams { enabled: false, ..cfg.surgery_params() });
        let loc = locality_section(&map, &RunConfig { locality_samples: 100, jacobian_samples: 10, ..cfg });
        assert_eq!(loc.max_outside, 0.0);
    }
}
