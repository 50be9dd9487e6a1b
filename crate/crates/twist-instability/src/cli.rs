//! Command-line front end: configuration, pipeline stages, the homoclinic
//! cache, JSON reports and CSV plot data.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aubry::{compute_homoclinics, delta0_direct, ordering_violations, HomoclinicPair};
use crate::error::{Error, Result};
use crate::gradflow::{flux_audit_with_kappa2, integrate, kappa2, FluxAuditRecord, FlowOptions};
use crate::instability::{delta1_both, delta2, Connectivity, Delta1Options, Delta1Result, InstabilityReport};
use crate::shadowing::{choose_n, glue, instability_report, perturb, shadow_many, ShadowOptions, ShadowResult, SymbolSequence};
use crate::twistmap::{
    fixed_point_trace, linearize_eigen, locate_minimum, residual, window_action, Configuration, FixedPointData, GeneratingFunction, FIXED_POINT_GRID,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FixedPoint,
    Homoclinic,
    Delta0,
    Delta1,
    Delta2,
    Flow,
    AuditFlux,
    Shadow,
    EntropyBound,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Emit {
    SCurve,
    Homoclinics,
    FluxAudit,
    Orbit,
}

#[derive(Debug, Parser)]
#[command(name = "twist-instability", version, about = "Instability measures and shadowing orbits for twist maps")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration; defaults are used for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for CSV side files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub emit: Vec<Emit>,
    /// Record the wall-clock time in the report (breaks byte-identical output).
    #[arg(long)]
    pub stamp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub kind: String,
    pub k: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { kind: "standard".into(), k: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    #[serde(rename = "M")]
    pub m: usize,
    pub grid_n: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { m: 64, grid_n: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Delta1Config {
    pub e_grid: usize,
    pub n_starts: usize,
    pub tol: f64,
    pub refine_connectivity: bool,
    /// Half-width of the perturbation window, also used for delta2.
    #[serde(rename = "N")]
    pub window: usize,
}

impl Default for Delta1Config {
    fn default() -> Self {
        let d = Delta1Options::default();
        Delta1Config { e_grid: d.e_grid, n_starts: d.n_starts, tol: d.tol, refine_connectivity: false, window: d.window }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

/// Block half-length: chosen from the report, or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NChoice {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    pub omega: Vec<u8>,
    /// Further words relaxed alongside `omega`.
    pub words: Vec<Vec<u8>>,
    #[serde(rename = "N")]
    pub n: NChoice,
    pub n_periods: usize,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig { omega: vec![1, 0, 1, 0], words: Vec::new(), n: NChoice::Auto(AutoTag::Auto), n_periods: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub atol: f64,
    pub rtol: f64,
    pub sample_dt: f64,
    pub t_end: f64,
    /// Size of the uniform noise added to the glued configuration for
    /// `flow` and `audit-flux`.
    pub perturbation: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { atol: 1e-13, rtol: 1e-12, sample_dt: 0.002, t_end: 5.0, perturbation: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapConfig,
    pub window: WindowConfig,
    pub delta1: Delta1Config,
    pub shadow: ShadowConfig,
    pub flow: FlowConfig,
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            map: MapConfig::default(),
            window: WindowConfig::default(),
            delta1: Delta1Config::default(),
            shadow: ShadowConfig::default(),
            flow: FlowConfig::default(),
            seed: 0,
            cache_dir: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.map.kind != "standard" {
            return Err(invalid(format!("map kind {:?} is not available from a config file", self.map.kind)));
        }
        if !self.map.k.is_finite() {
            return Err(invalid("map.k must be finite"));
        }
        if self.window.m < 8 || self.window.grid_n < 16 {
            return Err(invalid("window needs M >= 8 and grid_n >= 16"));
        }
        let d = &self.delta1;
        if d.e_grid < 2 || d.n_starts == 0 || d.window == 0 || !(d.tol > 0.0) {
            return Err(invalid("delta1 needs e_grid >= 2, n_starts >= 1, N >= 1 and tol > 0"));
        }
        let f = &self.flow;
        if !(f.atol > 0.0 && f.rtol > 0.0 && f.sample_dt > 0.0 && f.t_end > 0.0 && f.perturbation >= 0.0) {
            return Err(invalid("flow tolerances, sample_dt and t_end must be positive"));
        }
        for w in std::iter::once(&self.shadow.omega).chain(&self.shadow.words) {
            SymbolSequence::new(w.clone())?;
        }
        if self.shadow.n_periods == 0 || self.shadow.n == NChoice::Fixed(0) {
            return Err(invalid("shadow needs n_periods >= 1 and N >= 1"));
        }
        Ok(())
    }

    fn flow_options(&self) -> FlowOptions {
        FlowOptions { atol: self.flow.atol, rtol: self.flow.rtol, sample_dt: self.flow.sample_dt, ..FlowOptions::default() }
    }

    fn delta1_options(&self) -> Delta1Options {
        Delta1Options {
            e_grid: self.delta1.e_grid,
            n_starts: self.delta1.n_starts,
            tol: self.delta1.tol,
            connectivity: if self.delta1.refine_connectivity { Connectivity::SegmentThenDescent } else { Connectivity::Segment },
            seed: self.seed,
            window: self.delta1.window,
            ..Delta1Options::default()
        }
    }

    /// Cache directory: the environment variable wins over the config.
    pub fn effective_cache_dir(&self) -> Option<PathBuf> {
        std::env::var_os("TWIST_CACHE_DIR").map(PathBuf::from).or_else(|| self.cache_dir.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub map_kind: String,
    pub k: f64,
    pub crate_version: String,
    /// Seconds since the Unix epoch, only with `--stamp`.
    pub timestamp: Option<u64>,
    pub homoclinic_cache_hit: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub y0: f64,
    pub p0: f64,
    pub trace: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicReport {
    #[serde(rename = "M")]
    pub m: usize,
    pub z: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub residual_z: f64,
    pub residual_z_tilde: f64,
    pub ordering_violations: Vec<String>,
    pub kappa1: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta0Report {
    pub delta0: f64,
    pub delta0_direct: f64,
    pub s_min: f64,
    pub s_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub samples: usize,
    pub action_start: f64,
    pub action_end: f64,
    pub residual_end: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxAuditSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub kappa2: f64,
    pub samples: usize,
    /// Balance residual over max(1e-8, 1e-4 ||grad E||^2); at most 1 passes.
    pub max_balance_violation: f64,
    pub max_f_over_bound: f64,
    /// |F direct - F reconstructed| over max(1e-8, 1e-4 |F|); at most 1 passes.
    pub max_direct_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorObject {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: Command,
    pub config: RunConfig,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_point: Option<FixedPointReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homoclinic: Option<HomoclinicReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0: Option<Delta0Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta1: Option<Delta1Result>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instability: Option<InstabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux_audit: Option<FluxAuditSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shadow: Option<Vec<ShadowResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorObject>,
    /// Bulk series kept out of the JSON and written as CSV on request.
    #[serde(skip)]
    pub s_samples: Option<Vec<(f64, f64)>>,
    #[serde(skip)]
    pub pair: Option<HomoclinicPair>,
    #[serde(skip)]
    pub flux_records: Option<Vec<FluxAuditRecord>>,
}

impl Report {
    fn new(command: Command, cfg: &RunConfig, stamp: bool) -> Self {
        let timestamp = stamp
            .then(|| std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        Report {
            schema_version: SCHEMA_VERSION,
            command,
            config: cfg.clone(),
            provenance: Provenance {
                map_kind: cfg.map.kind.clone(),
                k: cfg.map.k,
                crate_version: env!("CARGO_PKG_VERSION").into(),
                timestamp,
                homoclinic_cache_hit: None,
            },
            fixed_point: None,
            homoclinic: None,
            delta0: None,
            delta1: None,
            delta2: None,
            instability: None,
            flow: None,
            flux_audit: None,
            shadow: None,
            error: None,
            s_samples: None,
            pair: None,
            flux_records: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Exit status for an error: 2 for bad input, 3 for numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Io(_) | Error::MissingData(_) => 2,
        _ => 3,
    }
}

/// Key of the homoclinic cache: every input that changes the pair.
pub fn cache_key(cfg: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"homoclinic/v1");
    h.update(cfg.map.kind.as_bytes());
    h.update(cfg.map.k.to_bits().to_le_bytes());
    h.update((cfg.window.m as u64).to_le_bytes());
    h.update((cfg.window.grid_n as u64).to_le_bytes());
    h.update((FIXED_POINT_GRID as u64).to_le_bytes());
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    hex::encode(h.finalize())
}

/// Stages computed so far in one run.
struct Pipeline<'a> {
    cfg: &'a RunConfig,
    gf: GeneratingFunction,
    fp: Option<FixedPointData>,
    pair: Option<HomoclinicPair>,
    cache_hit: Option<bool>,
    d1: Option<Delta1Result>,
    d2: Option<f64>,
    k2: Option<f64>,
}

impl<'a> Pipeline<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Pipeline { cfg, gf: GeneratingFunction::standard(cfg.map.k), fp: None, pair: None, cache_hit: None, d1: None, d2: None, k2: None }
    }

    /// Hyperbolicity is checked before uniqueness of the minimum.
    fn fixed_point(&mut self) -> Result<(FixedPointData, f64)> {
        let (y0, rival) = locate_minimum(&self.gf, FIXED_POINT_GRID);
        let trace = fixed_point_trace(&self.gf, y0);
        let mut fp = FixedPointData { y0, p0: -self.gf.v1(y0, y0), lambda: None, kappa1: None };
        let lambda = linearize_eigen(&self.gf, &fp)?;
        if let Some(second) = rival {
            return Err(Error::NonUniqueMinimum { first: y0, second });
        }
        fp.lambda = Some(lambda);
        self.fp = Some(fp);
        Ok((fp, trace))
    }

    fn fp(&mut self) -> Result<FixedPointData> {
        match self.fp {
            Some(fp) => Ok(fp),
            None => self.fixed_point().map(|r| r.0),
        }
    }

    fn pair(&mut self) -> Result<HomoclinicPair> {
        if let Some(p) = &self.pair {
            return Ok(p.clone());
        }
        let fp = self.fp()?;
        let cache = self.cfg.effective_cache_dir().map(|d| d.join(format!("homoclinic-{}.json", cache_key(self.cfg))));
        if let Some(path) = &cache {
            if let Some(p) = std::fs::read_to_string(path).ok().and_then(|t| serde_json::from_str::<HomoclinicPair>(&t).ok()) {
                self.cache_hit = Some(true);
                self.pair = Some(p.clone());
                return Ok(p);
            }
        }
        let p = compute_homoclinics(&self.gf, &fp, self.cfg.window.m, self.cfg.window.grid_n)?;
        if let Some(path) = &cache {
            self.cache_hit = Some(false);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
            }
            let text = serde_json::to_string(&p).map_err(|e| Error::Io(e.to_string()))?;
            std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        self.pair = Some(p.clone());
        Ok(p)
    }

    fn delta1(&mut self) -> Result<Delta1Result> {
        if let Some(d) = &self.d1 {
            return Ok(d.clone());
        }
        let (fp, pair) = (self.fp()?, self.pair()?);
        let d = delta1_both(&self.gf, &pair, &fp, &self.cfg.delta1_options())?;
        self.d1 = Some(d.clone());
        Ok(d)
    }

    fn delta2(&mut self) -> Result<f64> {
        if let Some(d) = self.d2 {
            return Ok(d);
        }
        let pair = self.pair()?;
        let d = delta2(&self.gf, &pair, self.cfg.delta1.window)?;
        self.d2 = Some(d);
        Ok(d)
    }

    fn kappa2(&mut self) -> f64 {
        *self.k2.get_or_insert_with(|| kappa2(&self.gf))
    }

    fn report(&mut self) -> Result<InstabilityReport> {
        let pair = self.pair()?;
        let d1 = self.delta1()?;
        let d2 = self.delta2()?;
        let k2 = self.kappa2();
        instability_report(&pair, &d1, d2, k2)
    }

    fn block_n(&mut self) -> Result<usize> {
        match self.cfg.shadow.n {
            NChoice::Fixed(n) => Ok(n),
            NChoice::Auto(_) => choose_n(&self.report()?),
        }
    }

    /// Glued configuration of `omega`, perturbed by the configured noise.
    fn perturbed_start(&mut self, n: usize) -> Result<Configuration> {
        let pair = self.pair()?;
        let omega = SymbolSequence::new(self.cfg.shadow.omega.clone())?;
        let sets = glue(&pair, &omega, n, self.cfg.shadow.n_periods, 0.0)?;
        Ok(perturb(&sets.x_omega, self.cfg.flow.perturbation, self.cfg.seed))
    }
}

/// Runs one command. Errors are returned, not folded into the report.
pub fn run(command: Command, cfg: &RunConfig, stamp: bool) -> Result<Report> {
    cfg.validate()?;
    let mut out = Report::new(command, cfg, stamp);
    let mut p = Pipeline::new(cfg);
    match command {
        Command::FixedPoint => {
            let (fp, trace) = p.fixed_point()?;
            out.fixed_point = Some(FixedPointReport { y0: fp.y0, p0: fp.p0, trace, lambda: fp.lambda.unwrap_or(f64::NAN) });
        }
        Command::Homoclinic | Command::Delta0 => {
            let pair = p.pair()?;
            let m = pair.m as i64;
            if command == Command::Homoclinic {
                out.homoclinic = Some(HomoclinicReport {
                    m: pair.m,
                    z: (-m..=m).map(|j| pair.z.get(j)).collect(),
                    z_tilde: (-m..=m).map(|j| pair.z_tilde.get(j)).collect(),
                    residual_z: residual(&p.gf, &pair.z),
                    residual_z_tilde: residual(&p.gf, &pair.z_tilde),
                    ordering_violations: ordering_violations(&pair),
                    kappa1: pair.kappa1,
                    lambda: pair.lambda,
                });
            }
            out.delta0 = Some(Delta0Report {
                delta0: pair.delta0,
                delta0_direct: delta0_direct(&p.gf, &pair),
                s_min: pair.s_min,
                s_max: pair.s_max,
            });
            out.s_samples = Some(pair.s_samples.clone());
            out.pair = Some(pair);
        }
        Command::Delta1 => out.delta1 = Some(p.delta1()?),
        Command::Delta2 => out.delta2 = Some(p.delta2()?),
        Command::Flow | Command::AuditFlux => {
            let n = p.block_n()?;
            let start = p.perturbed_start(n)?;
            let traj = integrate(&p.gf, &start, cfg.flow.t_end, &cfg.flow_options())?;
            let last = traj.states.last().unwrap_or(&start);
            out.flow = Some(FlowReport {
                n,
                samples: traj.times.len(),
                action_start: window_action(&p.gf, &start),
                action_end: window_action(&p.gf, last),
                residual_end: residual(&p.gf, last),
                accepted_steps: traj.step_stats.accepted,
                rejected_steps: traj.step_stats.rejected,
            });
            if command == Command::AuditFlux {
                let pair = p.pair()?;
                let k2 = p.kappa2();
                let recs = flux_audit_with_kappa2(&p.gf, &pair, &traj, n, k2)?;
                out.flux_audit = Some(summarize_audit(&recs, n, k2));
                out.flux_records = Some(recs);
            }
        }
        Command::Shadow => {
            let rep = p.report()?;
            out.shadow = Some(shadow_words(&mut p, &rep)?);
            out.instability = Some(rep);
        }
        Command::EntropyBound => out.instability = Some(p.report()?),
        Command::Full => {
            let rep = p.report()?;
            let pair = p.pair()?;
            out.delta0 = Some(Delta0Report {
                delta0: pair.delta0,
                delta0_direct: delta0_direct(&p.gf, &pair),
                s_min: pair.s_min,
                s_max: pair.s_max,
            });
            out.delta1 = p.d1.clone();
            out.delta2 = p.d2;
            out.shadow = Some(shadow_words(&mut p, &rep)?);
            out.instability = Some(rep);
            out.s_samples = Some(pair.s_samples.clone());
            out.pair = Some(pair);
        }
    }
    out.provenance.homoclinic_cache_hit = p.cache_hit;
    Ok(out)
}

fn shadow_words(p: &mut Pipeline, rep: &InstabilityReport) -> Result<Vec<ShadowResult>> {
    let fp = p.fp()?;
    let pair = p.pair()?;
    let words = std::iter::once(&p.cfg.shadow.omega)
        .chain(&p.cfg.shadow.words)
        .map(|w| SymbolSequence::new(w.clone()))
        .collect::<Result<Vec<_>>>()?;
    let opts = ShadowOptions {
        n: match p.cfg.shadow.n {
            NChoice::Fixed(n) => Some(n),
            NChoice::Auto(_) => None,
        },
        n_periods: p.cfg.shadow.n_periods,
        flow: p.cfg.flow_options(),
        connectivity: p.cfg.delta1_options().connectivity,
        ..ShadowOptions::default()
    };
    shadow_many(&p.gf, &pair, &fp, &words, rep, &opts).into_iter().collect()
}

fn summarize_audit(recs: &[FluxAuditRecord], n: usize, k2: f64) -> FluxAuditSummary {
    let mut s = FluxAuditSummary { n, kappa2: k2, samples: recs.len(), max_balance_violation: 0.0, max_f_over_bound: 0.0, max_direct_gap: 0.0 };
    for r in recs {
        let allowed = (1e-4 * r.grad_norm_sq).max(1e-8);
        s.max_balance_violation = s.max_balance_violation.max(r.balance_residual() / allowed);
        if r.f_bound > 0.0 {
            s.max_f_over_bound = s.max_f_over_bound.max(r.f_direct.abs() / r.f_bound);
        }
        let allowed = (1e-4 * r.f_direct.abs()).max(1e-8);
        s.max_direct_gap = s.max_direct_gap.max((r.f_direct - r.f_reconstructed).abs() / allowed);
    }
    s
}

/// Writes the requested CSV to `dir` and returns its path.
pub fn emit_plot_data(report: &Report, what: Emit, dir: &Path) -> Result<PathBuf> {
    let mut csv = String::new();
    let name = match what {
        Emit::SCurve => {
            let s = report.s_samples.as_ref().ok_or_else(|| Error::MissingData("S samples (run homoclinic, delta0 or full)".into()))?;
            csv.push_str("x,S\n");
            for (x, v) in s {
                let _ = writeln!(csv, "{x},{v}");
            }
            "s_curve.csv"
        }
        Emit::Homoclinics => {
            let p = report.pair.as_ref().ok_or_else(|| Error::MissingData("homoclinics (run homoclinic, delta0 or full)".into()))?;
            csv.push_str("j,z,z_tilde\n");
            let m = p.m as i64;
            for j in -m..=m {
                let _ = writeln!(csv, "{j},{},{}", p.z.get(j), p.z_tilde.get(j));
            }
            "homoclinics.csv"
        }
        Emit::FluxAudit => {
            let recs = report.flux_records.as_ref().ok_or_else(|| Error::MissingData("flux audit (run audit-flux)".into()))?;
            csv.push_str("t,dE_dt,grad_norm_sq,F,F_bound\n");
            for r in recs {
                let _ = writeln!(csv, "{},{},{},{},{}", r.t, r.de_dt_numeric, r.grad_norm_sq, r.f_direct, r.f_bound);
            }
            "flux_audit.csv"
        }
        Emit::Orbit => {
            let res = report.shadow.as_ref().ok_or_else(|| Error::MissingData("shadow orbits (run shadow or full)".into()))?;
            csv.push_str("word,site,x,p\n");
            for r in res {
                let w: String = r.word.word.iter().map(|b| char::from(b'0' + b)).collect();
                // the orbit starts at the first site of the middle period
                let lo = 1 - r.n as i64;
                for (i, q) in r.orbit.iter().enumerate() {
                    let _ = writeln!(csv, "{w},{},{},{}", lo + i as i64, q.x, q.p);
                }
            }
            "orbit.csv"
        }
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, csv).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn error_json(command: Option<Command>, e: &Error) -> String {
    let v = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "error": ErrorObject { kind: e.kind().into(), message: e.to_string() },
    });
    serde_json::to_string_pretty(&v).expect("error serializes")
}

// a closed pipe (`| head`) is not an error worth a panic
fn print_stdout(text: &str) {
    use std::io::Write as _;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// Parses arguments, runs, prints the JSON report and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let result = cfg.and_then(|cfg| {
        let report = run(cli.command, &cfg, cli.stamp)?;
        for &what in &cli.emit {
            emit_plot_data(&report, what, &cli.out)?;
        }
        Ok(report)
    });
    match result {
        Ok(report) => {
            if let Some(res) = &report.shadow {
                for r in res.iter().filter(|r| !r.monitor_log.all_inside()) {
                    eprintln!("warning: word {:?} left the invariant sets: {:?}", r.word.word, r.monitor_log.summary());
                }
            }
            print_stdout(&report.to_json());
            0
        }
        Err(e) => {
            print_stdout(&error_json(Some(cli.command), &e));
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
