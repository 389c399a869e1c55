//! Run configuration: a flat `key = value` file plus `--set key=value`
//! overrides. Defaults reproduce the acceptance suite.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use datorus::anosov::{eigen_split, AnosovModel, ConeField, IntMatrix3, DEFAULT_MATRIX};
use datorus::surgery::SurgeryParams;
use datorus::torus::{SampleScheme, TorusPoint};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub matrix: IntMatrix3,
    pub power: u32,

    pub surgery_enabled: bool,
    pub q: [f64; 3],
    pub delta: f64,
    pub mu_s: f64,
    pub mu_w: f64,
    pub beta: f64,
    pub theta_u: f64,
    pub theta_cs: f64,
    /// Crossing length for (P6); `None` measures it.
    pub l_crossing: Option<f64>,

    pub property_samples: usize,
    pub property_seed: u64,
    pub locality_samples: usize,
    pub jacobian_samples: usize,
    pub max_period: u32,

    pub n_trunc: usize,
    pub semiconj_samples: usize,
    pub semiconj_seed: u64,
    /// `eps_measured` must stay below `eps_frac · delta`.
    pub eps_frac: f64,
    pub witness_probe: usize,
    pub localization_max_period: u32,

    pub chain_start: u32,
    pub chain_end: u32,
    /// First depth at which the quasi-attractor count is judged.
    pub chain_judge_from: u32,
    pub linear_chain_end: u32,
    pub chain_grid: u32,
    pub chain_random: u32,
    pub chain_seed: u64,
    /// Fixed bloat; `None` uses the Lipschitz rule.
    pub chain_bloat: Option<f64>,
    /// Edge files are written up to this depth.
    pub edges_max_depth: u32,

    pub lyap_orbits: usize,
    pub lyap_iters: usize,
    pub lyap_da_iters: usize,
    pub lyap_seed: u64,
    pub cs_points: usize,
    pub cs_iters: usize,
    pub cs_fraction_min: f64,
    pub srb_starts: usize,
    pub srb_iters: usize,
    pub srb_depth: u32,
    pub srb_seed: u64,
    pub srb_l1_max: f64,
    pub basin_samples: usize,
    pub basin_iters: usize,
    pub basin_seed: u64,
    pub basin_min: f64,
    pub entropy_depth: u32,

    pub run_chain: bool,
    pub run_semiconj: bool,
    pub run_ergodic: bool,

    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SurgeryParams::default();
        RunConfig {
            matrix: DEFAULT_MATRIX,
            power: 1,
            surgery_enabled: true,
            q: [0.0; 3],
            delta: s.delta,
            mu_s: s.mu_s,
            mu_w: s.mu_w,
            beta: s.beta,
            theta_u: 0.15,
            theta_cs: 0.15,
            l_crossing: None,
            property_samples: 100_000,
            property_seed: 7,
            locality_samples: 100_000,
            jacobian_samples: 2000,
            max_period: 6,
            n_trunc: 120,
            semiconj_samples: 10_000,
            semiconj_seed: 5,
            eps_frac: 0.1,
            witness_probe: 2001,
            localization_max_period: 6,
            chain_start: 3,
            chain_end: 6,
            chain_judge_from: 4,
            linear_chain_end: 5,
            chain_grid: 3,
            chain_random: 5,
            chain_seed: 1,
            chain_bloat: None,
            edges_max_depth: 4,
            lyap_orbits: 10,
            lyap_iters: 10_000,
            lyap_da_iters: 100_000,
            lyap_seed: 11,
            cs_points: 1000,
            cs_iters: 100_000,
            cs_fraction_min: 0.99,
            srb_starts: 10,
            srb_iters: 1_000_000,
            srb_depth: 3,
            srb_seed: 17,
            srb_l1_max: 0.05,
            basin_samples: 10_000,
            basin_iters: 10_000,
            basin_seed: 19,
            basin_min: 0.99,
            entropy_depth: 5,
            run_chain: true,
            run_semiconj: true,
            run_ergodic: true,
            out: PathBuf::from("datorus-out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str, n: usize) -> Result<Vec<T>, CliError> {
    let items: Vec<&str> = v.split(',').map(str::trim).collect();
    if items.len() != n {
        return Err(CliError::Config(format!("{key}: expected {n} comma-separated values")));
    }
    items.into_iter().map(|s| parse(key, s)).collect()
}

fn parse_opt(key: &str, v: &str) -> Result<Option<f64>, CliError> {
    match v {
        "auto" | "none" => Ok(None),
        _ => parse(key, v).map(Some),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "matrix" => {
                let e: Vec<i64> = parse_list(key, v, 9)?;
                self.matrix = [[e[0], e[1], e[2]], [e[3], e[4], e[5]], [e[6], e[7], e[8]]];
            }
            "power" => self.power = parse(key, v)?,
            "surgery_enabled" => self.surgery_enabled = parse_bool(key, v)?,
            "q" => {
                let e: Vec<f64> = parse_list(key, v, 3)?;
                self.q = [e[0], e[1], e[2]];
            }
            "delta" => self.delta = parse(key, v)?,
            "mu_s" => self.mu_s = parse(key, v)?,
            "mu_w" => self.mu_w = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "theta_u" => self.theta_u = parse(key, v)?,
            "theta_cs" => self.theta_cs = parse(key, v)?,
            "l_crossing" => self.l_crossing = parse_opt(key, v)?,
            "property_samples" => self.property_samples = parse(key, v)?,
            "property_seed" => self.property_seed = parse(key, v)?,
            "locality_samples" => self.locality_samples = parse(key, v)?,
            "jacobian_samples" => self.jacobian_samples = parse(key, v)?,
            "max_period" => self.max_period = parse(key, v)?,
            "n_trunc" => self.n_trunc = parse(key, v)?,
            "semiconj_samples" => self.semiconj_samples = parse(key, v)?,
            "semiconj_seed" => self.semiconj_seed = parse(key, v)?,
            "eps_frac" => self.eps_frac = parse(key, v)?,
            "witness_probe" => self.witness_probe = parse(key, v)?,
            "localization_max_period" => self.localization_max_period = parse(key, v)?,
            "chain_start" => self.chain_start = parse(key, v)?,
            "chain_end" => self.chain_end = parse(key, v)?,
            "chain_judge_from" => self.chain_judge_from = parse(key, v)?,
            "linear_chain_end" => self.linear_chain_end = parse(key, v)?,
            "chain_grid" => self.chain_grid = parse(key, v)?,
            "chain_random" => self.chain_random = parse(key, v)?,
            "chain_seed" => self.chain_seed = parse(key, v)?,
            "chain_bloat" => self.chain_bloat = parse_opt(key, v)?,
            "edges_max_depth" => self.edges_max_depth = parse(key, v)?,
            "lyap_orbits" => self.lyap_orbits = parse(key, v)?,
            "lyap_iters" => self.lyap_iters = parse(key, v)?,
            "lyap_da_iters" => self.lyap_da_iters = parse(key, v)?,
            "lyap_seed" => self.lyap_seed = parse(key, v)?,
            "cs_points" => self.cs_points = parse(key, v)?,
            "cs_iters" => self.cs_iters = parse(key, v)?,
            "cs_fraction_min" => self.cs_fraction_min = parse(key, v)?,
            "srb_starts" => self.srb_starts = parse(key, v)?,
            "srb_iters" => self.srb_iters = parse(key, v)?,
            "srb_depth" => self.srb_depth = parse(key, v)?,
            "srb_seed" => self.srb_seed = parse(key, v)?,
            "srb_l1_max" => self.srb_l1_max = parse(key, v)?,
            "basin_samples" => self.basin_samples = parse(key, v)?,
            "basin_iters" => self.basin_iters = parse(key, v)?,
            "basin_seed" => self.basin_seed = parse(key, v)?,
            "basin_min" => self.basin_min = parse(key, v)?,
            "entropy_depth" => self.entropy_depth = parse(key, v)?,
            "run_chain" => self.run_chain = parse_bool(key, v)?,
            "run_semiconj" => self.run_semiconj = parse_bool(key, v)?,
            "run_ergodic" => self.run_ergodic = parse_bool(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a `key = value` document; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// `--set key=value`.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), CliError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("override {kv:?} is not key=value")))?;
        self.set(k, v)
    }

    /// Canonical `key = value` text; parsing it back yields the same config.
    pub fn to_text(&self) -> String {
        let m = &self.matrix;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("matrix", m.iter().flatten().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        put("power", self.power.to_string());
        put("surgery_enabled", self.surgery_enabled.to_string());
        put("q", self.q.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        put("delta", self.delta.to_string());
        put("mu_s", self.mu_s.to_string());
        put("mu_w", self.mu_w.to_string());
        put("beta", self.beta.to_string());
        put("theta_u", self.theta_u.to_string());
        put("theta_cs", self.theta_cs.to_string());
        put("l_crossing", fmt_opt(self.l_crossing));
        put("property_samples", self.property_samples.to_string());
        put("property_seed", self.property_seed.to_string());
        put("locality_samples", self.locality_samples.to_string());
        put("jacobian_samples", self.jacobian_samples.to_string());
        put("max_period", self.max_period.to_string());
        put("n_trunc", self.n_trunc.to_string());
        put("semiconj_samples", self.semiconj_samples.to_string());
        put("semiconj_seed", self.semiconj_seed.to_string());
        put("eps_frac", self.eps_frac.to_string());
        put("witness_probe", self.witness_probe.to_string());
        put("localization_max_period", self.localization_max_period.to_string());
        put("chain_start", self.chain_start.to_string());
        put("chain_end", self.chain_end.to_string());
        put("chain_judge_from", self.chain_judge_from.to_string());
        put("linear_chain_end", self.linear_chain_end.to_string());
        put("chain_grid", self.chain_grid.to_string());
        put("chain_random", self.chain_random.to_string());
        put("chain_seed", self.chain_seed.to_string());
        put("chain_bloat", fmt_opt(self.chain_bloat));
        put("edges_max_depth", self.edges_max_depth.to_string());
        put("lyap_orbits", self.lyap_orbits.to_string());
        put("lyap_iters", self.lyap_iters.to_string());
        put("lyap_da_iters", self.lyap_da_iters.to_string());
        put("lyap_seed", self.lyap_seed.to_string());
        put("cs_points", self.cs_points.to_string());
        put("cs_iters", self.cs_iters.to_string());
        put("cs_fraction_min", self.cs_fraction_min.to_string());
        put("srb_starts", self.srb_starts.to_string());
        put("srb_iters", self.srb_iters.to_string());
        put("srb_depth", self.srb_depth.to_string());
        put("srb_seed", self.srb_seed.to_string());
        put("srb_l1_max", self.srb_l1_max.to_string());
        put("basin_samples", self.basin_samples.to_string());
        put("basin_iters", self.basin_iters.to_string());
        put("basin_seed", self.basin_seed.to_string());
        put("basin_min", self.basin_min.to_string());
        put("entropy_depth", self.entropy_depth.to_string());
        put("run_chain", self.run_chain.to_string());
        put("run_semiconj", self.run_semiconj.to_string());
        put("run_ergodic", self.run_ergodic.to_string());
        s
    }

    /// SHA-256 of [`RunConfig::to_text`]. The output directory is excluded,
    /// so the same computation in two places hashes equal.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks everything that can be checked without computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.surgery_params().validate().map_err(|e| CliError::Config(format!("{} ({})", e, e.code())))?;
        if self.q.iter().any(|v| !v.is_finite()) {
            return bad("q must be finite".into());
        }
        ConeField::new(self.theta_u, self.theta_cs).map_err(|e| CliError::Config(e.to_string()))?;
        if self.power == 0 {
            return bad("power must be at least 1".into());
        }
        if !(1..=datorus::chain::MAX_GRAPH_DEPTH).contains(&self.chain_start) || self.chain_start > self.chain_end {
            return bad(format!("chain depths {}..={} invalid", self.chain_start, self.chain_end));
        }
        if self.chain_end > datorus::chain::MAX_GRAPH_DEPTH || self.linear_chain_end > datorus::chain::MAX_GRAPH_DEPTH {
            return bad(format!("chain depth above the cap {}", datorus::chain::MAX_GRAPH_DEPTH));
        }
        if !(1..=datorus::torus::MAX_BOX_DEPTH).contains(&self.srb_depth)
            || !(1..=datorus::chain::MAX_GRAPH_DEPTH).contains(&self.entropy_depth)
        {
            return bad("srb_depth / entropy_depth out of range".into());
        }
        if !(1..=datorus::anosov::MAX_PERIOD).contains(&self.max_period)
            || !(1..=datorus::anosov::MAX_PERIOD).contains(&self.localization_max_period)
        {
            return bad(format!("periods must lie in 1..={}", datorus::anosov::MAX_PERIOD));
        }
        if self.n_trunc == 0 || self.eps_frac <= 0.0 {
            return bad("n_trunc and eps_frac must be positive".into());
        }
        if let Some(b) = self.chain_bloat {
            if !(b >= 0.0 && b.is_finite()) {
                return bad("chain_bloat must be finite and non-negative".into());
            }
        }
        if let Some(l) = self.l_crossing {
            if !(l > 0.0 && l.is_finite()) {
                return bad("l_crossing must be positive".into());
            }
        }
        Ok(())
    }

    pub fn surgery_params(&self) -> SurgeryParams {
        SurgeryParams {
            enabled: self.surgery_enabled,
            q: TorusPoint::wrap_finite(self.q),
            delta: self.delta,
            mu_s: self.mu_s,
            mu_w: self.mu_w,
            beta: self.beta,
            ..SurgeryParams::default()
        }
    }

    pub fn cones(&self) -> ConeField {
        let mut c = ConeField::new(self.theta_u, self.theta_cs).unwrap_or_default();
        c.l_crossing = self.l_crossing;
        c
    }

    pub fn chain_scheme(&self) -> SampleScheme {
        SampleScheme { grid: self.chain_grid, random: self.chain_random, seed: self.chain_seed }
    }

    pub fn model(&self) -> Result<AnosovModel, CliError> {
        eigen_split(self.matrix, self.power).map_err(|e| CliError::Config(format!("{} ({})", e, e.code())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("delta", "0.07").unwrap();
        c.set("chain_bloat", "0.01").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.hash(), d.hash());
        assert_ne!(c.hash(), RunConfig::default().hash());
    }

    #[test]
    fn comments_and_errors() {
        let mut c = RunConfig::default();
        c.apply_text("# header\n\nmu_w = 1.1  # weaker\n").unwrap();
        assert_eq!(c.mu_w, 1.1);
        assert!(matches!(c.apply_text("nonsense"), Err(CliError::Config(_))));
        assert!(matches!(c.set("no_such_key", "1"), Err(CliError::Config(_))));
        assert!(matches!(c.set("matrix", "1,2,3"), Err(CliError::Config(_))));
        assert!(matches!(c.set("run_chain", "maybe"), Err(CliError::Config(_))));
    }

    #[test]
    fn product_gate() {
        let mut c = RunConfig::default();
        c.validate().unwrap();
        c.mu_s = 0.8;
        c.mu_w = 1.2;
        let err = c.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("eigenvalue_product"), "{err}");
    }

    #[test]
    fn out_dir_not_hashed() {
        let mut c = RunConfig::default();
        let h = c.hash();
        c.out = PathBuf::from("/elsewhere");
        assert_eq!(c.hash(), h);
    }
}
