//! Monte Carlo drivers and exponent regression.

use crate::ensembles::{self, LineEnsemble};
use crate::environment::{Environment, GridSpec};
use crate::error::{param, LppError, Result};
use crate::events::{self, CertificateSearch, DisjointSearch, EventSpec, Span};
use crate::lpp::{self, LatticePoint, TieRule};
use crate::scaled::{self, CompatibleTriple};
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Version tag written in the header line of every CSV table.
pub const TABLE_FORMAT: &str = "blpp-estimate-table v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TransversalFluctuation,
    WeightSd,
    WeightDifference,
    DisjointRarity,
    NearPolyRarity,
    DevRegTail,
    RegularityAudit,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::TransversalFluctuation => "transversal_fluctuation",
            ExperimentKind::WeightSd => "weight_sd",
            ExperimentKind::WeightDifference => "weight_difference",
            ExperimentKind::DisjointRarity => "disjoint_rarity",
            ExperimentKind::NearPolyRarity => "near_poly_rarity",
            ExperimentKind::DevRegTail => "dev_reg_tail",
            ExperimentKind::RegularityAudit => "regularity_audit",
        }
    }
}

/// How the grid step depends on `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridPolicy {
    /// `delta = 2 n^{2/3} resolution`: constant spacing in scaled units.
    ScaledConstant { resolution: f64 },
    /// The same `delta` for every `n`.
    Fixed { delta: f64 },
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy::ScaledConstant { resolution: 0.0025 }
    }
}

impl GridPolicy {
    pub fn delta(&self, n: u64) -> f64 {
        match *self {
            GridPolicy::ScaledConstant { resolution } => 2.0 * scaled::n_two_thirds(n) * resolution,
            GridPolicy::Fixed { delta } => delta,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            GridPolicy::ScaledConstant { resolution } => resolution,
            GridPolicy::Fixed { delta } => delta,
        };
        if !(v > 0.0 && v.is_finite()) {
            return param("grid step must be positive and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub n: Vec<u64>,
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub a: Vec<f64>,
}

fn default_tolerances() -> Vec<f64> {
    vec![events::DEFAULT_TOL, 10.0 * events::DEFAULT_TOL, 0.1 * events::DEFAULT_TOL]
}

fn default_k() -> usize {
    2
}

fn default_endpoint_grid() -> usize {
    events::DEFAULT_ENDPOINT_GRID
}

fn default_s_grid() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
}

/// A Monte Carlo experiment. Unknown keys are rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub master_seed: u64,
    pub replicate_count: usize,
    pub sweep: Sweep,
    #[serde(default)]
    pub grid: GridPolicy,
    /// Certificate tolerances; rows are emitted for each.
    #[serde(default = "default_tolerances")]
    pub tolerances: Vec<f64>,
    /// Path count for the disjointness and near-polymer experiments, and the
    /// number of ensemble curves in the audit.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_endpoint_grid")]
    pub endpoint_grid: usize,
    /// Tail levels of the regularity audit.
    #[serde(default = "default_s_grid")]
    pub s_grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, master_seed: u64, replicate_count: usize, sweep: Sweep) -> Self {
        ExperimentConfig {
            kind,
            master_seed,
            replicate_count,
            sweep,
            grid: GridPolicy::default(),
            tolerances: default_tolerances(),
            k: default_k(),
            endpoint_grid: default_endpoint_grid(),
            s_grid: default_s_grid(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| LppError::Parameter(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicate_count == 0 {
            return param("replicate_count must be at least 1");
        }
        if self.sweep.n.is_empty() || self.sweep.n.contains(&0) {
            return param("sweep.n must be a nonempty list of positive integers");
        }
        self.grid.validate()?;
        if self.endpoint_grid == 0 {
            return param("endpoint_grid must be positive");
        }
        let need = |name: &str, v: &Vec<f64>| {
            if v.is_empty() {
                param(format!("sweep.{name} must be nonempty for {}", self.kind.as_str()))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ExperimentKind::WeightDifference => need("epsilon", &self.sweep.epsilon)?,
            ExperimentKind::DisjointRarity => {
                need("epsilon", &self.sweep.epsilon)?;
                if self.tolerances.is_empty() || self.tolerances.iter().any(|t| !(*t >= 0.0)) {
                    return param("tolerances must be a nonempty list of nonnegative values");
                }
                if self.k < 2 {
                    return param("k must be at least 2");
                }
            }
            ExperimentKind::NearPolyRarity => {
                need("eta", &self.sweep.eta)?;
                if self.k < 2 {
                    return param("k must be at least 2");
                }
            }
            ExperimentKind::DevRegTail => {
                need("r", &self.sweep.r)?;
                need("a", &self.sweep.a)?;
            }
            ExperimentKind::RegularityAudit => {
                if self.s_grid.is_empty() {
                    return param("s_grid must be nonempty");
                }
                if self.k == 0 {
                    return param("k must be at least 1");
                }
            }
            _ => {}
        }
        for v in [&self.sweep.epsilon, &self.sweep.eta, &self.sweep.r] {
            if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return param("sweep values must be finite and nonnegative");
            }
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Environment seed of replicate `r`: `splitmix64(splitmix64(master) ^ r)`.
pub fn derive_seed(master_seed: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ replicate)
}

/// Location of a row in the parameter sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: u64,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
    pub r: Option<f64>,
    pub a: Option<f64>,
    pub tol: Option<f64>,
}

impl SweepPoint {
    /// `n=.. epsilon=..` with the set coordinates.
    pub fn describe(&self) -> String {
        let mut s = format!("n={}", self.n);
        for (k, v) in [("epsilon", self.epsilon), ("eta", self.eta), ("r", self.r), ("a", self.a), ("tol", self.tol)] {
            if let Some(v) = v {
                let _ = write!(s, " {k}={v}");
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Frequency,
    StandardDeviation,
    Mean,
}

impl Statistic {
    fn as_str(self) -> &'static str {
        match self {
            Statistic::Frequency => "frequency",
            Statistic::StandardDeviation => "sd",
            Statistic::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub point: SweepPoint,
    pub delta: f64,
    pub statistic: Statistic,
    pub value: f64,
    pub replicates: usize,
    /// Wilson 95% interval for frequencies, `value ± 1.96 stderr` otherwise.
    pub lo: f64,
    pub hi: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedPoint {
    pub point: String,
    pub reason: String,
}

/// Outcome of the audit lattice search for one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub n: u64,
    pub delta: f64,
    pub dominating: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub kind: ExperimentKind,
    pub rows: Vec<EstimateRow>,
    pub rejected: Vec<RejectedPoint>,
    #[serde(default)]
    pub audits: Vec<AuditSummary>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl EstimateTable {
    /// CSV with a versioned comment header and fixed columns.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# {TABLE_FORMAT}\n");
        s.push_str("kind,n,epsilon,eta,r,a,tol,delta,statistic,value,replicates,lo,hi,stderr\n");
        for row in &self.rows {
            let p = &row.point;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.kind.as_str(),
                p.n,
                fmt_opt(p.epsilon),
                fmt_opt(p.eta),
                fmt_opt(p.r),
                fmt_opt(p.a),
                fmt_opt(p.tol),
                row.delta,
                row.statistic.as_str(),
                row.value,
                row.replicates,
                row.lo,
                row.hi,
                row.stderr
            );
        }
        s
    }

    /// Rows matching `pred`.
    pub fn select(&self, pred: impl Fn(&SweepPoint) -> bool) -> Vec<&EstimateRow> {
        self.rows.iter().filter(|r| pred(&r.point)).collect()
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = trials as f64;
    let p = successes as f64 / nf;
    let d = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / d;
    let half = z / d * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

fn aggregate(point: SweepPoint, delta: f64, stat: Statistic, values: &[f64]) -> EstimateRow {
    let m = values.len();
    let z = 1.959_963_984_540_054;
    let mean = values.iter().sum::<f64>() / m as f64;
    let var = if m > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64 } else { 0.0 };
    let sd = var.sqrt();
    let (value, lo, hi, stderr) = match stat {
        Statistic::Frequency => {
            let hits = values.iter().filter(|&&v| v > 0.5).count();
            let (lo, hi) = wilson_interval(hits, m);
            let p = hits as f64 / m as f64;
            (p, lo, hi, (p * (1.0 - p) / m as f64).sqrt())
        }
        Statistic::Mean => {
            let se = if m > 1 { sd / (m as f64).sqrt() } else { f64::INFINITY };
            (mean, mean - z * se, mean + z * se, se)
        }
        Statistic::StandardDeviation => {
            let se = if m > 1 { sd / (2.0 * (m - 1) as f64).sqrt() } else { f64::INFINITY };
            (sd, (sd - z * se).max(0.0), sd + z * se, se)
        }
    };
    EstimateRow { point, delta, statistic: stat, value, replicates: m, lo, hi, stderr }
}

/// Environment covering unscaled `[lo, hi]` on lines `line_min..=line_max`,
/// with one extra cell on each side.
pub fn environment_for(seed: u64, line_min: i64, line_max: i64, lo: f64, hi: f64, delta: f64) -> Result<Environment<f64>> {
    let grid = GridSpec::covering(lo - delta, hi + delta, delta)?;
    Environment::generate(seed, line_min, line_max, grid)
}

fn to_parameter(e: LppError) -> LppError {
    match e {
        LppError::Domain(m) => LppError::Parameter(format!("window too small: {m}")),
        e => e,
    }
}

/// Signed unscaled deviation at line `floor(n/2)` of the geodesic from
/// `(0, 0)` to `(n, n)`, measured from the interpolating segment with the
/// farthest-point convention.
pub fn midpoint_deviation<T: Scalar>(env: &Environment<T>, n: u64, tie: TieRule) -> Result<f64> {
    if n == 0 {
        return param("n must be positive");
    }
    let grid = env.grid();
    let a = grid.snap(0.0).ok_or_else(|| LppError::Parameter("window does not contain 0".into()))?;
    let b = grid.snap(n as f64).ok_or_else(|| LppError::Parameter("window does not contain n".into()))?;
    let ni = n as i64;
    let g = lpp::geodesic(env, LatticePoint::new(a, 0), LatticePoint::new(b, ni), tie).map_err(to_parameter)?;
    let mid = ni / 2;
    let (pa, pb) = (grid.position(a), grid.position(b));
    let l = pa + (pb - pa) * mid as f64 / n as f64;
    let (lo, hi) = g.interval(mid);
    let rho = scaled::farthest(grid.position(lo), grid.position(hi), l);
    Ok(rho - l)
}

/// `|geodesic position at floor(n/2) - n/2|` for the unscaled geodesic
/// `(0, 0) → (n, n)`, leftmost tie rule.
pub fn transversal_fluctuation_stat<T: Scalar>(env: &Environment<T>, n: u64) -> Result<f64> {
    Ok(midpoint_deviation(env, n, TieRule::Leftmost)?.abs())
}

/// Unscaled last passage value `(0, 0) → (n, n)` minus `2n`.
pub fn centered_energy<T: Scalar>(env: &Environment<T>, n: u64) -> Result<f64> {
    let grid = env.grid();
    let a = grid.snap(0.0).ok_or_else(|| LppError::Parameter("window does not contain 0".into()))?;
    let b = grid.snap(n as f64).ok_or_else(|| LppError::Parameter("window does not contain n".into()))?;
    let m = lpp::last_passage(env, LatticePoint::new(a, 0), LatticePoint::new(b, n as i64)).map_err(to_parameter)?;
    Ok(m.to_f64_lossy() - 2.0 * n as f64)
}

/// Ordinary least squares summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least squares fit of `value` against `scale`, on log-log axes if asked.
pub fn fit_exponent(pairs: &[(f64, f64)], log_log: bool) -> Result<ExponentFit> {
    if pairs.len() < 2 {
        return param("need at least two points");
    }
    let mut pts = Vec::with_capacity(pairs.len());
    for &(s, v) in pairs {
        if log_log {
            if !(s > 0.0 && v > 0.0) {
                return param(format!("log-log fit needs positive pairs, got ({s}, {v})"));
            }
            pts.push((s.ln(), v.ln()));
        } else {
            pts.push((s, v));
        }
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return param("scales must not all coincide");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>().max(0.0);
    let slope_stderr = if pts.len() > 2 { (sse / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(ExponentFit { slope, intercept, slope_stderr, r_squared, points: pts.len() })
}

/// Fit along the natural axis of an experiment: `n` for the fluctuation
/// experiments, `ε` for weight differences and disjointness (first
/// tolerance), `η` for near-polymer rarity. Nonpositive values are skipped.
pub fn default_fit(config: &ExperimentConfig, table: &EstimateTable) -> Option<ExponentFit> {
    let base_tol = config.tolerances.first().copied();
    let pairs: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter_map(|row| {
            let p = &row.point;
            let x = match config.kind {
                ExperimentKind::TransversalFluctuation | ExperimentKind::WeightSd => Some(p.n as f64),
                ExperimentKind::WeightDifference => p.epsilon,
                ExperimentKind::DisjointRarity if p.tol == base_tol => p.epsilon,
                ExperimentKind::NearPolyRarity => p.eta,
                _ => None,
            }?;
            (row.value > 0.0 && x > 0.0).then_some((x, row.value))
        })
        .collect();
    fit_exponent(&pairs, true).ok()
}

struct Plan {
    line_min: i64,
    line_max: i64,
    lo: f64,
    hi: f64,
    points: Vec<SweepPoint>,
    stat: Statistic,
}

fn plan(config: &ExperimentConfig, n: u64) -> Plan {
    let s = &config.sweep;
    let n23 = scaled::n_two_thirds(n);
    let nf = n as f64;
    let base = SweepPoint { n, ..Default::default() };
    let maxof = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    match config.kind {
        ExperimentKind::TransversalFluctuation => {
            Plan { line_min: 0, line_max: n as i64, lo: 0.0, hi: nf, points: vec![base], stat: Statistic::StandardDeviation }
        }
        ExperimentKind::WeightSd => {
            Plan { line_min: 0, line_max: n as i64, lo: 0.0, hi: nf, points: vec![base], stat: Statistic::StandardDeviation }
        }
        ExperimentKind::WeightDifference => {
            let w = maxof(&s.epsilon) * n23;
            Plan {
                line_min: 0,
                line_max: n as i64,
                lo: -w,
                hi: nf + w,
                points: s.epsilon.iter().map(|&e| SweepPoint { epsilon: Some(e), ..base }).collect(),
                stat: Statistic::Mean,
            }
        }
        ExperimentKind::DisjointRarity => {
            let w = 2.0 * maxof(&s.epsilon) * n23;
            let mut points = Vec::new();
            for &e in &s.epsilon {
                for &t in &config.tolerances {
                    points.push(SweepPoint { epsilon: Some(e), tol: Some(t), ..base });
                }
            }
            Plan { line_min: 0, line_max: n as i64, lo: -w, hi: nf + w, points, stat: Statistic::Frequency }
        }
        ExperimentKind::NearPolyRarity => Plan {
            line_min: 0,
            line_max: n as i64,
            lo: 0.0,
            hi: nf,
            points: s.eta.iter().map(|&e| SweepPoint { eta: Some(e), ..base }).collect(),
            stat: Statistic::Frequency,
        },
        ExperimentKind::DevRegTail => {
            let mut points = Vec::new();
            for &a in &s.a {
                for &r in &s.r {
                    points.push(SweepPoint { a: Some(a), r: Some(r), ..base });
                }
            }
            Plan { line_min: 0, line_max: n as i64, lo: 0.0, hi: nf, points, stat: Statistic::Frequency }
        }
        ExperimentKind::RegularityAudit => {
            let mut points = Vec::new();
            for &s in &config.s_grid {
                points.push(SweepPoint { r: Some(s), ..base });
            }
            Plan { line_min: 0, line_max: n as i64, lo: 0.0, hi: nf, points, stat: Statistic::Frequency }
        }
    }
}

/// Per-replicate values for every sweep point at one `n` (errors per point).
fn replicate_values(config: &ExperimentConfig, n: u64, plan: &Plan, env: &Environment<f64>) -> Vec<Result<f64>> {
    let triple = CompatibleTriple::from_lines(n, 0, n as i64);
    let triple = match triple {
        Ok(t) => t,
        Err(e) => return plan.points.iter().map(|_| Err(e.clone())).collect(),
    };
    match config.kind {
        ExperimentKind::TransversalFluctuation => vec![midpoint_deviation(env, n, TieRule::Leftmost)],
        ExperimentKind::WeightSd => vec![centered_energy(env, n)],
        ExperimentKind::WeightDifference => plan
            .points
            .iter()
            .map(|p| {
                let e = p.epsilon.unwrap();
                let span = Span::centered(0.0, e / 2.0);
                events::weight_spread(env, n, span, span, config.endpoint_grid)
            })
            .collect(),
        ExperimentKind::DisjointRarity => {
            let mut out = Vec::with_capacity(plan.points.len());
            for &e in &config.sweep.epsilon {
                let span = Span::centered(0.0, e);
                let search = DisjointSearch::new(env, &triple, span, span, config.endpoint_grid, CertificateSearch::GeodesicPruned);
                for &t in &config.tolerances {
                    out.push(match &search {
                        Ok(s) => s.certificate(config.k, t).map(|c| if c.is_some() { 1.0 } else { 0.0 }),
                        Err(e) => Err(e.clone()),
                    });
                }
            }
            out
        }
        ExperimentKind::NearPolyRarity => {
            let gap = events::near_poly_gap(env, &triple, config.k, 0.0, 0.0);
            plan.points
                .iter()
                .map(|p| gap.clone().map(|g| if g <= p.eta.unwrap() { 1.0 } else { 0.0 }))
                .collect()
        }
        ExperimentKind::DevRegTail => {
            let mut out = Vec::with_capacity(plan.points.len());
            for &a in &config.sweep.a {
                let x = events::max_abs_deviation(env, &triple, Span::point(0.0), Span::point(0.0), a, 1);
                for &r in &config.sweep.r {
                    out.push(x.clone().map(|x| if x > r { 1.0 } else { 0.0 }));
                }
            }
            out
        }
        ExperimentKind::RegularityAudit => unreachable!("audits aggregate ensembles"),
    }
}

fn audit_sample(config: &ExperimentConfig, n: u64, env: &Environment<f64>) -> Result<LineEnsemble<f64>> {
    let triple = CompatibleTriple::from_lines(n, 0, n as i64)?;
    let l = ensembles::forward_ensemble(env, &triple, 0.0, config.k, &[0.0])?;
    ensembles::normalize_ensemble(&l)
}

/// Runs the experiment. Replicate `r` of every `n` uses the environment
/// seeded by `derive_seed(master_seed, r)`; the table does not depend on the
/// number of worker threads.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EstimateTable> {
    config.validate()?;
    let mut table = EstimateTable { kind: config.kind, rows: Vec::new(), rejected: Vec::new(), audits: Vec::new() };
    for &n in &config.sweep.n {
        let plan = plan(config, n);
        let delta = config.grid.delta(n);
        if config.kind == ExperimentKind::DevRegTail {
            for &a in &config.sweep.a {
                let v = a * n as f64;
                if (v - v.round()).abs() > 1e-9 || !(0.0 < a && a < 1.0) {
                    table.rejected.push(RejectedPoint {
                        point: format!("n={n} a={a}"),
                        reason: "a n must be an integer with 0 < a < 1".into(),
                    });
                }
            }
        }
        let make_env = |r: usize| {
            environment_for(derive_seed(config.master_seed, r as u64), plan.line_min, plan.line_max, plan.lo, plan.hi, delta)
        };
        if config.kind == ExperimentKind::RegularityAudit {
            let samples: Vec<Result<LineEnsemble<f64>>> = (0..config.replicate_count)
                .into_par_iter()
                .map(|r| make_env(r).and_then(|env| audit_sample(config, n, &env)))
                .collect();
            let samples = match samples.into_iter().collect::<Result<Vec<_>>>() {
                Ok(s) => s,
                Err(e) => {
                    table.rejected.push(RejectedPoint { point: format!("n={n}"), reason: e.to_string() });
                    continue;
                }
            };
            for p in &plan.points {
                let s = p.r.unwrap();
                let lower: Vec<f64> =
                    samples.iter().map(|l| if l.value(1, 0) + ensembles::parabola(l.domain[0]) <= -s { 1.0 } else { 0.0 }).collect();
                let upper: Vec<f64> =
                    samples.iter().map(|l| if l.value(1, 0) + ensembles::parabola(l.domain[0]) >= s { 1.0 } else { 0.0 }).collect();
                let mut lrow = aggregate(*p, delta, Statistic::Frequency, &lower);
                lrow.point.eta = Some(-1.0);
                let mut urow = aggregate(*p, delta, Statistic::Frequency, &upper);
                urow.point.eta = Some(1.0);
                table.rows.push(lrow);
                table.rows.push(urow);
            }
            let dominating = if samples.len() >= 30 {
                ensembles::dominating_pair(&samples, &ensembles::default_audit_lattice(), 0.0, &config.s_grid)?
            } else {
                None
            };
            table.audits.push(AuditSummary { n, delta, dominating });
            continue;
        }
        let per_rep: Vec<Result<Vec<Result<f64>>>> = (0..config.replicate_count)
            .into_par_iter()
            .map(|r| make_env(r).map(|env| replicate_values(config, n, &plan, &env)))
            .collect();
        for (pi, p) in plan.points.iter().enumerate() {
            if table.rejected.iter().any(|rj| p.a.is_some() && rj.point == format!("n={n} a={}", p.a.unwrap())) {
                continue;
            }
            let mut values = Vec::with_capacity(per_rep.len());
            let mut failure = None;
            for rep in &per_rep {
                match rep {
                    Ok(v) => match &v[pi] {
                        Ok(x) => values.push(*x),
                        Err(e) => {
                            failure = Some(e.to_string());
                            break;
                        }
                    },
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            }
            match failure {
                Some(reason) => table.rejected.push(RejectedPoint { point: p.describe(), reason }),
                None => table.rows.push(aggregate(*p, delta, plan.stat, &values)),
            }
        }
    }
    Ok(table)
}

/// One evaluated event from a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event: String,
    pub seed: u64,
    pub delta: f64,
    pub indicator: Option<bool>,
    pub error: Option<String>,
}

/// Evaluates every spec on an environment for every seed, in parallel.
/// Records come back in `(spec, seed)` order.
pub fn evaluate_batch(specs: &[EventSpec], seeds: &[u64], grid: GridPolicy) -> Vec<EventRecord> {
    let jobs: Vec<(usize, u64)> = (0..specs.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    jobs.par_iter()
        .map(|&(i, seed)| {
            let spec = &specs[i];
            let res = spec.extent().and_then(|ext| {
                let delta = grid.delta(ext.n);
                let (lo, hi) = ext.unscaled_range();
                let env = environment_for(seed, ext.line_min, ext.line_max, lo, hi, delta)?;
                spec.evaluate(&env).map(|b| (b, delta))
            });
            match res {
                Ok((b, delta)) => EventRecord { event: spec.name().into(), seed, delta, indicator: Some(b), error: None },
                Err(e) => EventRecord {
                    event: spec.name().into(),
                    seed,
                    delta: f64::NAN,
                    indicator: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_across_replicates() {
        let s: Vec<u64> = (0..100).map(|r| derive_seed(7, r)).collect();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 100);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn wilson_contains_estimate() {
        for (k, m) in [(0, 10), (10, 10), (3, 1000), (500, 1000)] {
            let (lo, hi) = wilson_interval(k, m);
            let p = k as f64 / m as f64;
            assert!(lo <= p && p <= hi && lo >= 0.0 && hi <= 1.0);
        }
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let ok = r#"{"kind":"weight_sd","master_seed":1,"replicate_count":2,"sweep":{"n":[8]}}"#;
        assert!(ExperimentConfig::from_json(ok).is_ok());
        let bad = r#"{"kind":"weight_sd","master_seed":1,"replicate_count":2,"sweep":{"n":[8]},"seeed":3}"#;
        assert!(matches!(ExperimentConfig::from_json(bad), Err(LppError::Parameter(_))));
    }
}
