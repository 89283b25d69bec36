use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use blpp::ensembles::{backward_ensemble, forward_ensemble, normalize_ensemble, regularity_report};
use blpp::estimators::{default_fit, derive_seed, environment_for, evaluate_batch, run_experiment, ExperimentConfig, GridPolicy};
use blpp::events::EventSpec;
use blpp::io::{ensemble_csv, write_environment, EVENTS_FORMAT};
use blpp::lpp::multi_geodesic;
use blpp::scaled::{multi_polymer_weight, polymer, snap, unscaled_x};
use blpp::{CompatibleTriple, LatticePoint, LppError, TieRule};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const MANIFEST_FORMAT: &str = "blpp-manifest v1";
const GEODESIC_FORMAT: &str = "blpp-geodesic v1";
const FIT_FORMAT: &str = "blpp-fit v1";
const AUDIT_FORMAT: &str = "blpp-audit v1";
const SELFTEST_FORMAT: &str = "blpp-selftest v1";

/// Brownian last passage percolation simulator.
#[derive(Debug, Parser, Serialize)]
#[command(name = "blpp", version)]
struct Cli {
    /// Master seed; overrides `master_seed` in experiment configs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap. Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    threads: Option<usize>,
    /// Directory for output files and `manifest.json`. Without it outputs go
    /// to stdout and the manifest to stderr.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Dump a seeded environment in the binary format.
    Sample(SampleArgs),
    /// Polymer between two scaled points.
    Geodesic(GeodesicArgs),
    /// k disjoint polymers between scaled tuples.
    Multi(MultiArgs),
    /// Forward or backward line ensemble as CSV.
    Ensemble(EnsembleArgs),
    /// Evaluate a batch of events from a JSON file.
    Events(ConfigArg),
    /// Run a Monte Carlo experiment and fit its exponent.
    Exponent(ConfigArg),
    /// Tail audit of normalized forward ensembles.
    Audit(AuditArgs),
    /// Run the oracle checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Tie {
    Left,
    Right,
}

impl From<Tie> for TieRule {
    fn from(t: Tie) -> Self {
        match t {
            Tie::Left => TieRule::Leftmost,
            Tie::Right => TieRule::Rightmost,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct Grid {
    /// Grid step; defaults to `2 n^{2/3} / 400`.
    #[arg(long)]
    delta: Option<f64>,
}

impl Grid {
    fn delta(&self, n: u64) -> f64 {
        self.delta.unwrap_or_else(|| GridPolicy::default().delta(n))
    }
}

#[derive(Debug, Args, Serialize)]
struct SampleArgs {
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    line_min: i64,
    /// Defaults to `n`.
    #[arg(long)]
    line_max: Option<i64>,
    /// Unscaled window; defaults to `[0, n]`.
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    #[command(flatten)]
    grid: Grid,
}

#[derive(Debug, Args, Serialize)]
struct GeodesicArgs {
    #[arg(long)]
    n: u64,
    /// Start `x,t`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    from: (f64, f64),
    /// End `y,t`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    to: (f64, f64),
    #[arg(long, value_enum, default_value = "left")]
    tie: Tie,
    #[command(flatten)]
    grid: Grid,
}

#[derive(Debug, Args, Serialize)]
struct MultiArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    t1: f64,
    #[arg(long)]
    t2: f64,
    /// Start locations, comma separated and nondecreasing.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    xs: Vec<f64>,
    /// End locations.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ys: Vec<f64>,
    #[arg(long, value_enum, default_value = "left")]
    tie: Tie,
    #[command(flatten)]
    grid: Grid,
}

#[derive(Debug, Args, Serialize)]
struct EnsembleArgs {
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 0.0)]
    t1: f64,
    #[arg(long, default_value_t = 1.0)]
    t2: f64,
    /// Root location (at `t1`, or at `t2` with `--backward`).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    root: f64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Sample locations, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,-0.5,0,0.5,1")]
    samples: Vec<f64>,
    #[arg(long)]
    backward: bool,
    /// Emit the normalized ensemble.
    #[arg(long)]
    normalize: bool,
    #[command(flatten)]
    grid: Grid,
}

#[derive(Debug, Args, Serialize)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct AuditArgs {
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    c: f64,
    #[arg(long = "big-c", default_value_t = 50.0)]
    big_c: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.5,-0.25,0,0.25,0.5")]
    samples: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2,2.5,3,3.5,4")]
    s_grid: Vec<f64>,
    #[command(flatten)]
    grid: Grid,
}

/// Event batch file. Unknown keys are rejected.
#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct EventBatch {
    events: Vec<EventSpec>,
    seeds: Vec<u64>,
    #[serde(default)]
    grid: GridPolicy,
}

#[derive(Debug, Serialize)]
struct OutputFile {
    name: String,
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct PointStatus {
    point: String,
    status: String,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    format: &'static str,
    version: &'static str,
    argv: Vec<String>,
    command: serde_json::Value,
    config: Option<String>,
    started_unix: u64,
    finished_unix: u64,
    exit_code: u8,
    points: Vec<PointStatus>,
    outputs: Vec<OutputFile>,
}

/// What a subcommand produced.
#[derive(Default)]
struct Run {
    outputs: Vec<(String, Vec<u8>)>,
    points: Vec<PointStatus>,
    config: Option<String>,
    code: u8,
}

impl Run {
    fn ok(&mut self, point: impl Into<String>) {
        self.points.push(PointStatus { point: point.into(), status: "ok".into() });
    }
}

#[derive(Debug)]
enum Failure {
    Lpp(LppError),
    Selftest,
}

impl From<LppError> for Failure {
    fn from(e: LppError) -> Self {
        Failure::Lpp(e)
    }
}

fn exit_code(e: &LppError) -> u8 {
    match e {
        LppError::Parameter(_) | LppError::Domain(_) | LppError::Validation(_) | LppError::Size(_) | LppError::Format(_) => 2,
        LppError::Infeasible(_) => 3,
        LppError::Statistics(_) => 4,
        LppError::Io(_) => 1,
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected x,t, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn read_config(path: &Path) -> Result<String, LppError> {
    std::fs::read_to_string(path).map_err(|e| LppError::Parameter(format!("{}: {e}", path.display())))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn span_window(n: u64, points: &[(f64, i64)]) -> (f64, f64) {
    let pos: Vec<f64> = points.iter().map(|&(x, l)| unscaled_x(n, x, l)).collect();
    let lo = pos.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo - 1.0, hi + 1.0)
}

fn sample(seed: u64, a: &SampleArgs, run: &mut Run) -> Result<(), Failure> {
    let line_max = a.line_max.unwrap_or(a.n as i64);
    let env = environment_for(seed, a.line_min, line_max, a.lo.unwrap_or(0.0), a.hi.unwrap_or(a.n as f64), a.grid.delta(a.n))?;
    let mut buf = Vec::new();
    write_environment(&env, &mut buf)?;
    run.outputs.push(("environment.bin".into(), buf));
    run.ok(format!("lines {}..={line_max}", a.line_min));
    Ok(())
}

fn geodesic(seed: u64, a: &GeodesicArgs, run: &mut Run) -> Result<(), Failure> {
    let triple = CompatibleTriple::new(a.n, a.from.1, a.to.1)?;
    let (lo, hi) = span_window(a.n, &[(a.from.0, triple.line1()), (a.to.0, triple.line2())]);
    let env = environment_for(seed, triple.line1(), triple.line2(), lo, hi, a.grid.delta(a.n))?;
    let z = polymer(&env, &triple, a.from.0, a.to.0, a.tie.into())?;
    let out = serde_json::json!({
        "format": GEODESIC_FORMAT,
        "n": a.n,
        "delta": env.grid().delta,
        "start": z.start(&env),
        "end": z.end(&env),
        "weight": z.weight,
        "jump_positions": z.staircase.jumps().iter().map(|&g| env.grid().position(g)).collect::<Vec<_>>(),
    });
    run.outputs.push(("geodesic.json".into(), json_bytes(&out)));
    run.ok("polymer");
    Ok(())
}

fn multi(seed: u64, a: &MultiArgs, run: &mut Run) -> Result<(), Failure> {
    let triple = CompatibleTriple::new(a.n, a.t1, a.t2)?;
    let k = a.xs.len();
    if k == 0 || a.ys.len() != k {
        return Err(LppError::Parameter(format!("need equal nonempty tuples, got {} and {}", k, a.ys.len())).into());
    }
    let ends: Vec<(f64, i64)> =
        a.xs.iter().map(|&x| (x, triple.line1())).chain(a.ys.iter().map(|&y| (y, triple.line2()))).collect();
    let (lo, hi) = span_window(a.n, &ends);
    let env = environment_for(seed, triple.line1(), triple.line2(), lo, hi, a.grid.delta(a.n))?;
    let weight = multi_polymer_weight(&env, &triple, k, &a.xs, &a.ys)?;
    let gs = |v: &[f64], line| v.iter().map(|&x| snap(&env, a.n, x, line).map(|s| s.g)).collect::<Result<Vec<_>, _>>();
    let (ga, gb) = (gs(&a.xs, triple.line1())?, gs(&a.ys, triple.line2())?);
    let m = multi_geodesic(&env, &ga, triple.line1(), &gb, triple.line2(), a.tie.into())?;
    let paths: Vec<_> = m
        .paths()
        .iter()
        .map(|s| {
            let p = |q: LatticePoint| env.grid().position(q.g);
            serde_json::json!({
                "start": p(s.start()),
                "end": p(s.end()),
                "jump_positions": s.jumps().iter().map(|&g| env.grid().position(g)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let out = serde_json::json!({
        "format": GEODESIC_FORMAT,
        "n": a.n,
        "delta": env.grid().delta,
        "k": k,
        "weight": weight,
        "paths": paths,
    });
    run.outputs.push(("multi.json".into(), json_bytes(&out)));
    run.ok(format!("k = {k}"));
    Ok(())
}

fn ensemble(seed: u64, a: &EnsembleArgs, run: &mut Run) -> Result<(), Failure> {
    let triple = CompatibleTriple::new(a.n, a.t1, a.t2)?;
    let (root_line, sample_line) = if a.backward { (triple.line2(), triple.line1()) } else { (triple.line1(), triple.line2()) };
    let ends: Vec<(f64, i64)> = std::iter::once((a.root, root_line)).chain(a.samples.iter().map(|&z| (z, sample_line))).collect();
    let (lo, hi) = span_window(a.n, &ends);
    // room for k paths on each side
    let pad = (a.k + 1) as f64 * a.grid.delta(a.n);
    let env = environment_for(seed, triple.line1(), triple.line2(), lo - pad, hi + pad, a.grid.delta(a.n))?;
    let mut l = if a.backward {
        backward_ensemble(&env, &triple, a.root, a.k, &a.samples)?
    } else {
        forward_ensemble(&env, &triple, a.root, a.k, &a.samples)?
    };
    if a.normalize {
        l = normalize_ensemble(&l)?;
    }
    run.outputs.push(("ensemble.csv".into(), ensemble_csv(&l).into_bytes()));
    run.ok(format!("{} curves, {} samples", l.curve_count(), l.domain.len()));
    Ok(())
}

fn events(a: &ConfigArg, run: &mut Run) -> Result<(), Failure> {
    let text = read_config(&a.config)?;
    run.config = Some(text.clone());
    let batch: EventBatch = serde_json::from_str(&text).map_err(|e| LppError::Parameter(format!("event batch: {e}")))?;
    let records = evaluate_batch(&batch.events, &batch.seeds, batch.grid);
    let mut csv = format!("# {EVENTS_FORMAT}\nevent,seed,delta,indicator,error\n");
    for r in &records {
        let ind = r.indicator.map(|b| b.to_string()).unwrap_or_default();
        let err = r.error.as_deref().map(blpp::io::csv_field).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{},{}", r.event, r.seed, r.delta, ind, err);
        run.points.push(PointStatus {
            point: format!("{} seed {}", r.event, r.seed),
            status: r.error.clone().unwrap_or_else(|| "ok".into()),
        });
    }
    run.outputs.push(("events.csv".into(), csv.into_bytes()));
    Ok(())
}

fn exponent(seed: Option<u64>, a: &ConfigArg, run: &mut Run) -> Result<(), Failure> {
    let text = read_config(&a.config)?;
    run.config = Some(text.clone());
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        config.master_seed = s;
    }
    let table = run_experiment(&config)?;
    for row in &table.rows {
        run.ok(row.point.describe());
    }
    for r in &table.rejected {
        run.points.push(PointStatus { point: r.point.clone(), status: format!("rejected: {}", r.reason) });
    }
    run.outputs.push(("table.csv".into(), table.to_csv().into_bytes()));
    let fit = default_fit(&config, &table);
    let out = serde_json::json!({
        "format": FIT_FORMAT,
        "kind": config.kind,
        "fit": fit,
        "audits": table.audits,
    });
    run.outputs.push(("fit.json".into(), json_bytes(&out)));
    if fit.is_none() && table.audits.is_empty() {
        run.code = 4;
    }
    Ok(())
}

fn audit(seed: u64, a: &AuditArgs, run: &mut Run) -> Result<(), Failure> {
    let triple = CompatibleTriple::from_lines(a.n, 0, a.n as i64)?;
    let delta = a.grid.delta(a.n);
    let ends: Vec<(f64, i64)> = std::iter::once((0.0, 0)).chain(a.samples.iter().map(|&z| (z, a.n as i64))).collect();
    let (lo, hi) = span_window(a.n, &ends);
    let pad = (a.k + 1) as f64 * delta;
    let samples = (0..a.replicates)
        .into_par_iter()
        .map(|r| {
            let env = environment_for(derive_seed(seed, r as u64), 0, a.n as i64, lo - pad, hi + pad, delta)?;
            normalize_ensemble(&forward_ensemble(&env, &triple, 0.0, a.k, &a.samples)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let window = (a.samples.iter().cloned().fold(f64::INFINITY, f64::min), a.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let report = regularity_report(&samples, a.c, a.big_c, window, &a.s_grid)?;
    for row in &report.lower_tail {
        run.ok(format!("lower z={} s={}", row.z, row.s));
    }
    let out = serde_json::json!({ "format": AUDIT_FORMAT, "n": a.n, "delta": delta, "report": report });
    run.outputs.push(("audit.json".into(), json_bytes(&out)));
    Ok(())
}

fn selftest(seed: u64, run: &mut Run) -> Result<(), Failure> {
    let report = blpp::selftest::run(seed);
    let mut text = format!("# {SELFTEST_FORMAT}\n");
    for c in &report.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(text, "{verdict} {} ({} instances) {}", c.name, c.instances, c.detail);
        run.points.push(PointStatus { point: c.name.clone(), status: verdict.into() });
    }
    run.outputs.push(("selftest.txt".into(), text.into_bytes()));
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Selftest)
    }
}

fn json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("json values serialize");
    b.push(b'\n');
    b
}

fn execute(cli: &Cli, run: &mut Run) -> Result<(), Failure> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Sample(a) => sample(seed, a, run),
        Command::Geodesic(a) => geodesic(seed, a, run),
        Command::Multi(a) => multi(seed, a, run),
        Command::Ensemble(a) => ensemble(seed, a, run),
        Command::Events(a) => events(a, run),
        Command::Exponent(a) => exponent(cli.seed, a, run),
        Command::Audit(a) => audit(seed, a, run),
        Command::Selftest => selftest(seed, run),
    }
}

fn emit(cli: &Cli, run: &Run, manifest: &mut RunManifest) -> std::io::Result<()> {
    use std::io::Write;
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
    }
    let mut stdout = std::io::stdout().lock();
    for (name, bytes) in &run.outputs {
        let path = match &cli.out {
            Some(dir) => {
                let p = dir.join(name);
                std::fs::write(&p, bytes)?;
                p.display().to_string()
            }
            None => {
                stdout.write_all(bytes)?;
                "-".into()
            }
        };
        manifest.outputs.push(OutputFile { name: name.clone(), path, bytes: bytes.len(), sha256: format!("{:x}", Sha256::digest(bytes)) });
    }
    stdout.flush()?;
    let mut text = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    text.push(b'\n');
    match &cli.out {
        Some(dir) => std::fs::write(dir.join("manifest.json"), text),
        None => std::io::stderr().write_all(&text),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("blpp: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let started = now();
    let mut run = Run::default();
    let code = match execute(&cli, &mut run) {
        Ok(()) => run.code,
        Err(Failure::Lpp(e)) => {
            eprintln!("blpp: {e}");
            exit_code(&e)
        }
        Err(Failure::Selftest) => {
            eprintln!("blpp: selftest failed");
            1
        }
    };
    let mut manifest = RunManifest {
        format: MANIFEST_FORMAT,
        version: env!("CARGO_PKG_VERSION"),
        argv: std::env::args().collect(),
        command: serde_json::to_value(&cli).unwrap_or(serde_json::Value::Null),
        config: run.config.take(),
        started_unix: started,
        finished_unix: now(),
        exit_code: code,
        points: std::mem::take(&mut run.points),
        outputs: Vec::new(),
    };
    if let Err(e) = emit(&cli, &run, &mut manifest) {
        eprintln!("blpp: writing outputs: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
