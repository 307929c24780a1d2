//! `metapop`: persistence analysis and branching simulation for source-sink
//! metapopulations.
//!
//! Exit status is 0 when every cross-check passes, 2 when any fails and 1
//! on input errors. All files go under `--out`; stdout gets a short human
//! summary.

mod sweep;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use metapop::model::{self, LoadedModel};
use metapop::report::{self, format_value, persistence_name, route_name};
use metapop::simulate::{self, DEFAULT_CAP};
use metapop::{AnalysisOptions, EnvKind, EnvironmentModel, OffspringFamily, OffspringLaw, SimConfig};

use sweep::{Document, ParamPath};

#[derive(Parser, Debug)]
#[command(name = "metapop", version, about = "Source-sink metapopulation persistence toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every applicable persistence route and write report.json and report.csv.
    Analyze(AnalyzeArgs),
    /// Simulate the branching process and write trajectories, lineages and a summary.
    Simulate(SimulateArgs),
    /// Analyze a grid of parameter values and write sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct Inputs {
    /// Model document (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Environment document (JSON); constant environment when absent.
    #[arg(long)]
    env: Option<PathBuf>,
    /// Output directory, created if needed.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Offspring {
    Poisson,
    Geometric,
    BernoulliPair,
}

impl From<Offspring> for OffspringLaw {
    fn from(o: Offspring) -> Self {
        OffspringLaw::new(match o {
            Offspring::Poisson => OffspringFamily::Poisson,
            Offspring::Geometric => OffspringFamily::Geometric,
            Offspring::BernoulliPair => OffspringFamily::BernoulliPair,
        })
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Seed for the Lyapunov estimate and the optional simulation.
    #[arg(long)]
    seed: Option<u64>,
    /// Also simulate and check lineage frequencies and extinction against the analytics.
    #[arg(long)]
    simulate: bool,
    #[arg(long, default_value_t = 100)]
    generations: usize,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    #[arg(long, value_enum, default_value_t = Offspring::Poisson)]
    offspring: Offspring,
    #[arg(long, hide = true)]
    force_inconsistency: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    generations: usize,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    #[arg(long, value_enum, default_value_t = Offspring::Poisson)]
    offspring: Offspring,
    /// Stop a replicate once its total population exceeds this.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: u64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Parameter path; comma-separated paths are set to the same value.
    #[arg(long)]
    param: String,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    /// Number of grid points, endpoints included.
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    seed: Option<u64>,
}

fn read_file(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = read_file(path, "model file")?;
    model::parse_model(&text).with_context(|| format!("in {}", path.display()))
}

fn load_environment(path: Option<&Path>) -> Result<(EnvironmentModel, Value)> {
    match path {
        None => Ok((EnvironmentModel::constant(), json!({"kind": "constant"}))),
        Some(p) => {
            let text = read_file(p, "environment file")?;
            model::parse_environment(&text).with_context(|| format!("in {}", p.display()))
        }
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

/// Analysis options shared by `analyze` and `sweep`.
fn options_for(model: &LoadedModel, seed: Option<u64>) -> AnalysisOptions {
    AnalysisOptions {
        seed: seed.unwrap_or(0),
        pipeline: model.pipeline().copied(),
        ..AnalysisOptions::default()
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<ExitCode> {
    if args.simulate && args.seed.is_none() {
        bail!("--simulate needs --seed");
    }
    let model = load_model(&args.inputs.model)?;
    let (env, env_doc) = load_environment(args.inputs.env.as_deref())?;
    let options = AnalysisOptions {
        simulate: args.simulate,
        generations: args.generations,
        replicates: args.replicates,
        law: args.offspring.into(),
        force_inconsistency: args.force_inconsistency,
        ..options_for(&model, args.seed)
    };
    let mut report = report::analyze(&model.graph, &env, &options)?;
    report.model = model.document.clone();
    report.environment = env_doc;
    create_out(&args.inputs.out)?;
    write_file(&args.inputs.out, "report.json", &report::to_json(&report))?;
    write_file(&args.inputs.out, "report.csv", &report::to_csv(&report))?;
    print!("{}", report::summary_text(&report));
    Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

/// JSON has no infinities; they travel as strings like in reports.
fn ext(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let model = load_model(&args.inputs.model)?;
    let (env, env_doc) = load_environment(args.inputs.env.as_deref())?;
    let config = SimConfig {
        law: args.offspring.into(),
        cap: args.cap,
        ..SimConfig::new(args.generations, args.replicates, args.seed)
    };
    let outcomes = simulate::simulate_branching(&model.graph, &env, &config)?;

    let mut trajectories = String::from("generation,patch,count,replicate\n");
    // occupancy is per patch, so the habitat column holds the 1-based patch
    let mut lineage = String::from("replicate,habitat,frequency\n");
    for o in &outcomes {
        for (n, sizes) in o.sizes_per_patch.iter().enumerate() {
            for (i, c) in sizes.iter().enumerate() {
                let _ = writeln!(trajectories, "{n},{},{c},{}", i + 1, o.replicate);
            }
        }
        if let Some(freq) = o.lineage_frequency() {
            for (i, f) in freq.iter().enumerate() {
                let _ = writeln!(lineage, "{},{},{}", o.replicate, i + 1, format_value(*f));
            }
        }
    }

    let survivors = outcomes.iter().filter(|o| o.survived()).count();
    let extinct = outcomes.iter().filter(|o| o.extinct).count();
    let truncated: Vec<usize> = outcomes.iter().filter(|o| o.truncated).map(|o| o.replicate).collect();
    let estimate = simulate::estimate_lineage_frequency(&outcomes).ok();
    let summary = json!({
        "model": model.document,
        "environment": env_doc,
        "seed": args.seed,
        "generations": args.generations,
        "replicates": args.replicates,
        "offspring": config.law.family,
        "cap": args.cap,
        "survivors": survivors,
        "extinct": extinct,
        "extinction_frequency": extinct as f64 / args.replicates.max(1) as f64,
        "truncated": !truncated.is_empty(),
        "truncated_replicates": truncated,
        "lineage_frequency": estimate.as_ref().map(|e| e.frequency.iter().map(|&v| ext(v)).collect::<Vec<_>>()),
        "lineage_radius": estimate.as_ref().map(|e| e.radius.iter().map(|&v| ext(v)).collect::<Vec<_>>()),
    });

    create_out(&args.inputs.out)?;
    write_file(&args.inputs.out, "trajectories.csv", trajectories.as_bytes())?;
    write_file(&args.inputs.out, "lineage.csv", lineage.as_bytes())?;
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write_file(&args.inputs.out, "summary.json", text.as_bytes())?;

    println!(
        "{} replicates, {} generations: {survivors} surviving, {extinct} extinct, {} truncated at the cap",
        args.replicates,
        args.generations,
        truncated.len()
    );
    if let Some(e) = estimate {
        let freq: Vec<String> = e.frequency.iter().map(|&v| format_value(v)).collect();
        println!("lineage frequency: [{}]", freq.join(", "));
    }
    Ok(ExitCode::SUCCESS)
}

struct SweepRow {
    value: f64,
    report: metapop::AnalysisReport,
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let paths: Vec<ParamPath> = args
        .param
        .split(',')
        .map(|p| ParamPath::parse(p.trim()))
        .collect::<Result<_>>()?;
    let grid = sweep::grid(args.from, args.to, args.steps)?;
    let base_model = load_model(&args.inputs.model)?.document;
    let (_, base_env) = load_environment(args.inputs.env.as_deref())?;
    if args.inputs.env.is_none() && paths.iter().any(|p| p.document() == Document::Environment) {
        bail!("environment parameters need --env");
    }

    let point = |value: f64| -> Result<SweepRow> {
        let mut model_doc = base_model.clone();
        let mut env_doc = base_env.clone();
        for p in &paths {
            match p.document() {
                Document::Model => p.set(&mut model_doc, value)?,
                Document::Environment => p.set(&mut env_doc, value)?,
            }
        }
        let model = model::model_from_value(model_doc)
            .with_context(|| format!("model at {} = {value}", args.param))?;
        let env = model::environment_from_value(&env_doc)
            .with_context(|| format!("environment at {} = {value}", args.param))?;
        let mut report = report::analyze(&model.graph, &env, &options_for(&model, args.seed))
            .with_context(|| format!("analysis at {} = {value}", args.param))?;
        report.model = model.document;
        report.environment = env_doc;
        Ok(SweepRow { value, report })
    };
    // validates every path before the parallel run
    point(grid[0])?;
    let rows: Vec<SweepRow> = grid.par_iter().map(|&v| point(v)).collect::<Result<_>>()?;

    let label = paths.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join(";");
    let mut csv = String::from("parameter,value,route,criterion,verdict,rho,gamma,status\n");
    let opt = |v: Option<f64>| v.map(format_value).unwrap_or_default();
    let mut all_pass = true;
    for row in &rows {
        let r = &row.report;
        let pass = r.all_pass();
        all_pass &= pass;
        let status = if pass { "pass" } else { "fail" };
        let verdict = r.verdicts.first();
        let _ = writeln!(
            csv,
            "{label},{},{},{},{},{},{},{status}",
            format_value(row.value),
            verdict.map(|v| route_name(v.route)).unwrap_or_default(),
            opt(verdict.map(|v| v.criterion_value)),
            verdict.map(|v| persistence_name(v.persists)).unwrap_or_default(),
            opt(r.rho_spectral),
            opt(r.gamma_hat),
        );
    }
    create_out(&args.inputs.out)?;
    write_file(&args.inputs.out, "sweep.csv", csv.as_bytes())?;

    let kind = rows.first().map(|r| r.report.environment_kind).unwrap_or(EnvKind::Constant);
    let mut verdict_changes = 0;
    for w in rows.windows(2) {
        let a = w[0].report.verdicts.first().map(|v| v.persists);
        let b = w[1].report.verdicts.first().map(|v| v.persists);
        if a != b {
            verdict_changes += 1;
            println!(
                "verdict changes between {} = {} and {}",
                label,
                format_value(w[0].value),
                format_value(w[1].value)
            );
        }
    }
    println!(
        "{} points ({kind:?} environment), {verdict_changes} verdict changes, {}",
        rows.len(),
        if all_pass { "all cross-checks pass" } else { "some cross-checks fail" }
    );
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

/// `METAPOP_THREADS` caps the worker pool; unset or 0 lets rayon decide.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("METAPOP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("METAPOP_THREADS must be a non-negative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    configure_threads()?;
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(s) => cmd_simulate(s),
        Command::Sweep(s) => cmd_sweep(s),
    }
}

fn main() -> ExitCode {
    // usage errors are input errors: exit 1, not clap's 2
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
