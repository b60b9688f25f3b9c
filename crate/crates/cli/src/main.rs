use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use approxagg::pipeline::{write_rows, Cache, Scenario};
use approxagg::scenario::ScenarioConfig;
use approxagg::{Cleared, Error as CoreError};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

const CACHE_ENV: &str = "APPROXAGG_CACHE_DIR";

#[derive(Parser)]
#[command(
    name = "approxagg",
    version,
    about = "Event-tree growth economies: solve, clear, simulate, and check aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the shock process and population against the model's conditions.
    Validate(RunArgs),
    /// Solve savings functions under the starting forecasts.
    Solve(RunArgs),
    /// Solve the market-clearing forecasts.
    Clear(RunArgs),
    /// Clear, then simulate panels along sampled paths.
    Simulate(RunArgs),
    /// Clear, simulate, and run the binning diagnostics.
    Aggregate(RunArgs),
    /// Compare root savings functions with the brute-force oracle.
    Verify(RunArgs),
    /// Run every stage and write the full report.
    Report(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario file (JSON, or TOML with a `.toml` extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output` or `./out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for simulation, sampled clearing, and reshuffles.
    #[arg(long)]
    seed: Option<u64>,
    /// Continue even if process validation fails.
    #[arg(long)]
    force: bool,
    /// Continue even if the forecasts do not clear.
    #[arg(long)]
    allow_unconverged: bool,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    clearing_tol: Option<f64>,
    /// Comma-separated binning tolerances.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Cache directory; defaults to `<out>/.cache`.
    #[arg(long, env = CACHE_ENV)]
    cache_dir: Option<PathBuf>,
    /// Skip reading and writing the cache.
    #[arg(long)]
    no_cache: bool,
}

/// A failure reported as JSON on stderr with a specific exit code.
#[derive(Debug)]
struct Failure {
    kind: &'static str,
    code: u8,
    message: String,
    detail: Option<Value>,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for Failure {}

impl Failure {
    fn new(kind: &'static str, code: u8, message: impl Into<String>) -> Self {
        Self { kind, code, message: message.into(), detail: None }
    }

    fn with(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    fn to_json(&self) -> Value {
        let mut e = json!({ "kind": self.kind, "message": self.message });
        if let Some(d) = &self.detail {
            e["detail"] = d.clone();
        }
        json!({ "error": e })
    }
}

fn classify(err: &anyhow::Error) -> Failure {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return Failure { kind: f.kind, code: f.code, message: f.message.clone(), detail: f.detail.clone() };
    }
    let message = format!("{err:#}");
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::Config(_)) => Failure::new("config", 2, message),
        Some(CoreError::Validation(_)) => Failure::new("validation", 3, message),
        Some(CoreError::Domain(_)) => Failure::new("domain", 1, message),
        Some(CoreError::Resource(_)) => Failure::new("resource", 1, message),
        _ => Failure::new("runtime", 1, message),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let f = classify(&err);
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code)
        }
    }
}

fn load(args: &RunArgs) -> Result<(Scenario, PathBuf)> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.simulation.seed = seed;
        cfg.clearing.seed = seed;
    }
    if let Some(d) = args.damping {
        cfg.clearing.damping = d;
    }
    if let Some(m) = args.max_iters {
        cfg.clearing.max_iters = m;
    }
    if let Some(t) = args.clearing_tol {
        cfg.clearing.tol = t;
    }
    if let Some(e) = &args.eps {
        cfg.analysis.epsilons = e.clone();
    }
    let out = args.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let scenario = Scenario::new(cfg)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((scenario, out))
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn gate_validation(s: &Scenario, args: &RunArgs, out: &Path) -> Result<()> {
    let report = s.validate();
    write_json(out, "validation.json", &report)?;
    if !report.pass && !args.force {
        let msg = format!("process validation failed: {}", report.failures.join("; "));
        return Err(Failure::new("validation", 3, msg).with(serde_json::to_value(&report)?).into());
    }
    Ok(())
}

fn clear(s: &Scenario, args: &RunArgs, out: &Path) -> Result<(Cleared, bool)> {
    let cache = (!args.no_cache).then(|| Cache::new(args.cache_dir.clone().unwrap_or_else(|| out.join(".cache"))));
    let (cleared, hit) = s.clear(cache.as_ref())?;
    write_json(out, "forecasts.json", &cleared.forecasts)?;
    write_json(out, "clearing.json", &cleared.report)?;
    fs::write(out.join("policy.json"), cleared.policy.to_json()?)?;
    write_rows(&out.join("bounds.csv"), &s.bounds(&cleared.forecasts, &cleared.policy)?)?;
    if !cleared.report.converged && !args.allow_unconverged {
        let r = &cleared.report;
        let msg = r.message.clone().unwrap_or_else(|| "forecasts did not clear".into());
        let detail = json!({
            "iterations": r.iterations,
            "max_abs_residual": r.max_abs_residual,
            "residual_history": r.history,
        });
        return Err(Failure::new("unconverged", 4, msg).with(detail).into());
    }
    Ok((cleared, hit))
}

fn run(command: Command) -> Result<()> {
    let started = Instant::now();
    match command {
        Command::Validate(args) => {
            let (s, out) = load(&args)?;
            gate_validation(&s, &args, &out)?;
            println!("validation PASS ({})", s.hash);
        }
        Command::Solve(args) => {
            let (s, out) = load(&args)?;
            gate_validation(&s, &args, &out)?;
            let (f, policy, report) = s.solve_initial()?;
            fs::write(out.join("policy.json"), policy.to_json()?)?;
            write_json(&out, "solve.json", &report)?;
            write_rows(&out.join("bounds.csv"), &s.bounds(&f, &policy)?)?;
            println!(
                "solved {} tables, max FOC residual {:.3e} ({})",
                report.tables.len(),
                report.max_residual,
                if report.pass { "PASS" } else { "FAIL" }
            );
        }
        Command::Clear(args) => {
            let (s, out) = load(&args)?;
            gate_validation(&s, &args, &out)?;
            let (c, hit) = clear(&s, &args, &out)?;
            print_clearing(&s, &c, hit);
        }
        Command::Simulate(args) => {
            let (s, out) = load(&args)?;
            gate_validation(&s, &args, &out)?;
            let (c, _) = clear(&s, &args, &out)?;
            let panel = s.simulate(&c)?;
            panel.write_csv(fs::File::create(out.join("panel.csv"))?)?;
            println!("simulated {} paths, {} below-grid evaluations", panel.paths.len(), panel.below_grid());
        }
        Command::Aggregate(args) => {
            let (s, out) = load(&args)?;
            gate_validation(&s, &args, &out)?;
            let (c, _) = clear(&s, &args, &out)?;
            let panel = s.simulate(&c)?;
            panel.write_csv(fs::File::create(out.join("panel.csv"))?)?;
            let rows = s.aggregate(&c, &panel)?;
            write_rows(&out.join("aggregation.csv"), &rows)?;
            let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            println!("{} aggregation rows, worst error/(eps Y) {:.3}", rows.len(), worst);
        }
        Command::Verify(args) => {
            let (s, out) = load(&args)?;
            gate_validation(&s, &args, &out)?;
            if !s.oracle_eligible() {
                return Err(
                    Failure::new("validation", 3, "scenario too large for the oracle (T <= 3, delta = 1)").into()
                );
            }
            let (c, _) = clear(&s, &args, &out)?;
            let cmp = s.verify(&c.forecasts, &c.policy)?;
            write_json(&out, "verify.json", &cmp)?;
            let worst = cmp.iter().map(|c| c.max_deviation).fold(0.0, f64::max);
            if cmp.iter().any(|c| !c.pass) {
                return Err(Failure::new("verify", 5, format!("oracle deviation {worst:.3e} exceeds tolerance")).into());
            }
            println!("oracle PASS, max deviation {worst:.3e}");
        }
        Command::Report(args) => {
            let (s, out) = load(&args)?;
            gate_validation(&s, &args, &out)?;
            let (c, hit) = clear(&s, &args, &out)?;
            let a = s.report(&c, hit, started)?;
            a.panel.write_csv(fs::File::create(out.join("panel.csv"))?)?;
            write_rows(&out.join("aggregation.csv"), &a.report.aggregation)?;
            write_rows(&out.join("bounds.csv"), &a.bounds)?;
            write_json(&out, "report.json", &a.report)?;
            print_clearing(&s, &c, hit);
            println!("report written to {}", out.join("report.json").display());
        }
    }
    Ok(())
}

fn print_clearing(s: &Scenario, c: &Cleared, hit: bool) {
    let r = &c.report;
    println!(
        "clearing {} after {} iterations, max |residual| {:.3e}, root forecast {:.10}{}",
        if r.converged { "converged" } else { "DID NOT converge" },
        r.iterations,
        r.max_abs_residual,
        c.forecasts.get(s.tree.root().id),
        if hit { " (cached)" } else { "" }
    );
}
