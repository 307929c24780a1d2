//! Analysis reports: every applicable route for a model and environment,
//! the cross-checks between them, and JSON/CSV serialization.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::disperser;
use crate::environment::{markov_env_lower_bound, two_step_mean_matrix, EnvKind, EnvironmentModel};
use crate::growth::{self, WeightedChain};
use crate::patchgraph::{CyclePipeline, PatchGraph};
use crate::persistence::{self, Persistence, PersistenceVerdict};
use crate::serde_ext::{ext_real, ext_real_opt, ext_real_vec_opt};
use crate::simulate::{self, OffspringLaw, SimConfig};
use crate::{Error, Result, CRITICAL_BAND};

/// Tolerances of the deterministic cross-checks.
pub mod tolerance {
    pub const LOG_RHO: f64 = 1e-6;
    pub const PHI: f64 = 1e-8;
    pub const SAME_QUANTITY: f64 = 1e-10;
    pub const RHO_TWO_STEP: f64 = 1e-8;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    pub seed: u64,
    /// Run the branching simulation and its statistical checks.
    pub simulate: bool,
    pub generations: usize,
    pub replicates: usize,
    pub law: OffspringLaw,
    pub lyapunov_horizon: usize,
    pub lyapunov_replicates: usize,
    /// Pipeline parameters, enabling the closed-form depleting rate.
    pub pipeline: Option<CyclePipeline>,
    /// Test hook: adds a failing cross-check.
    #[serde(default)]
    pub force_inconsistency: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            simulate: false,
            generations: 100,
            replicates: 500,
            law: OffspringLaw::default(),
            lyapunov_horizon: 10_000,
            lyapunov_replicates: 32,
            pipeline: None,
            force_inconsistency: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Indeterminate,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Indeterminate => "indeterminate",
        }
    }
}

/// Agreement between two routes: `delta ≤ tolerance` passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub name: String,
    /// The two routes compared, e.g. `"spectral|variational"`.
    pub routes: String,
    #[serde(with = "ext_real")]
    pub delta: f64,
    #[serde(with = "ext_real")]
    pub tolerance: f64,
    pub status: Status,
}

impl CrossCheck {
    fn new(name: &str, routes: &str, delta: f64, tolerance: f64) -> Self {
        let status = if delta <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            name: name.into(),
            routes: routes.into(),
            delta,
            tolerance,
            status,
        }
    }

    fn indeterminate(name: &str, routes: &str) -> Self {
        Self {
            name: name.into(),
            routes: routes.into(),
            delta: f64::INFINITY,
            tolerance: 0.0,
            status: Status::Indeterminate,
        }
    }

    /// Sign agreement of two persistence calls; critical calls are
    /// indeterminate.
    fn signs(name: &str, routes: &str, a: Persistence, b: Persistence) -> Self {
        if a == Persistence::CriticalIndeterminate || b == Persistence::CriticalIndeterminate {
            return Self::indeterminate(name, routes);
        }
        Self::new(name, routes, if a == b { 0.0 } else { 1.0 }, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub generations: usize,
    pub replicates: usize,
    pub survivors: usize,
    pub truncated: usize,
    #[serde(with = "ext_real")]
    pub extinction_frequency: f64,
    /// `exp` of the mean of `(1/n) log |Z_n|` over survivors.
    #[serde(with = "ext_real_opt")]
    pub rho_simulated: Option<f64>,
    #[serde(with = "ext_real_opt")]
    pub rho_simulated_stderr: Option<f64>,
    pub phi_simulated: Option<Vec<f64>>,
    /// 99% half-widths for `phi_simulated`.
    #[serde(with = "ext_real_vec_opt")]
    pub phi_radius: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub model: Value,
    pub environment: Value,
    pub environment_kind: EnvKind,
    pub num_patches: usize,
    pub verdicts: Vec<PersistenceVerdict>,
    #[serde(with = "ext_real_opt")]
    pub rho_spectral: Option<f64>,
    #[serde(with = "ext_real_opt")]
    pub rho_variational: Option<f64>,
    #[serde(with = "ext_real_opt")]
    pub rho_variational_direct: Option<f64>,
    pub phi_spectral: Option<Vec<f64>>,
    pub phi_variational: Option<Vec<f64>>,
    /// Periodic environments: `φ` over ordered patch pairs, row-major.
    pub phi_pairs: Option<Vec<f64>>,
    #[serde(with = "ext_real_opt")]
    pub idt_residual: Option<f64>,
    #[serde(with = "ext_real_opt")]
    pub depleting_rate_linear: Option<f64>,
    #[serde(with = "ext_real_opt")]
    pub depleting_rate_closed_form: Option<f64>,
    #[serde(with = "ext_real_opt")]
    pub mean_sink_sojourn: Option<f64>,
    /// Markov environments: growth-rate lower bound (nats).
    #[serde(with = "ext_real_opt")]
    pub lower_bound: Option<f64>,
    #[serde(with = "ext_real_opt")]
    pub gamma_hat: Option<f64>,
    #[serde(with = "ext_real_opt")]
    pub gamma_stderr: Option<f64>,
    pub simulation: Option<SimulationSummary>,
    pub cross_checks: Vec<CrossCheck>,
    /// Routes that could not run, with the reason.
    pub errors: Vec<String>,
}

impl AnalysisReport {
    fn empty(graph: &PatchGraph, env: &EnvironmentModel) -> Self {
        Self {
            model: Value::Null,
            environment: Value::Null,
            environment_kind: env.kind(),
            num_patches: graph.num_patches(),
            verdicts: Vec::new(),
            rho_spectral: None,
            rho_variational: None,
            rho_variational_direct: None,
            phi_spectral: None,
            phi_variational: None,
            phi_pairs: None,
            idt_residual: None,
            depleting_rate_linear: None,
            depleting_rate_closed_form: None,
            mean_sink_sojourn: None,
            lower_bound: None,
            gamma_hat: None,
            gamma_stderr: None,
            simulation: None,
            cross_checks: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.cross_checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> Vec<&CrossCheck> {
        self.cross_checks
            .iter()
            .filter(|c| c.status == Status::Fail)
            .collect()
    }

    fn note<T>(&mut self, what: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{what}: {e}"));
                None
            }
        }
    }

    fn check(&mut self, c: CrossCheck) {
        self.cross_checks.push(c);
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn rho_call(rho: f64) -> Persistence {
    Persistence::from_value(rho)
}

/// Runs every route applicable to the environment kind. Sub-errors are
/// collected in `errors`; only invalid inputs abort.
pub fn analyze(
    graph: &PatchGraph,
    env: &EnvironmentModel,
    options: &AnalysisOptions,
) -> Result<AnalysisReport> {
    graph.ensure_valid()?;
    env.check()?;
    let mut report = AnalysisReport::empty(graph, env);
    match env.kind() {
        EnvKind::Constant => {
            let g = env.graph_in_state(graph, 0)?;
            analyze_constant(&g, options, &mut report);
        }
        EnvKind::Periodic => analyze_periodic(graph, env, &mut report),
        EnvKind::Markov => analyze_markov(graph, env, options, &mut report),
    }
    if options.simulate {
        let g = match env.kind() {
            EnvKind::Constant => env.graph_in_state(graph, 0)?,
            _ => graph.clone(),
        };
        simulate_into(&g, env, options, &mut report);
    }
    if options.force_inconsistency {
        report.check(CrossCheck::new("forced_inconsistency", "test|hook", 1.0, 0.0));
    }
    Ok(report)
}

fn analyze_constant(graph: &PatchGraph, options: &AnalysisOptions, report: &mut AnalysisReport) {
    let spectral = report.note("spectral", growth::perron(graph));
    if let Some(s) = &spectral {
        report.rho_spectral = Some(s.rho);
        report.phi_spectral = Some(s.phi.clone());
    }

    let general = report.note("criterion_general", persistence::criterion_general(graph));
    if let Some(v) = &general {
        report.verdicts.push(v.clone());
        match &spectral {
            Some(s) => report.check(CrossCheck::signs(
                "persistence_sign",
                "criterion_general|spectral",
                v.persists,
                rho_call(s.rho),
            )),
            None => report.check(CrossCheck::indeterminate(
                "persistence_sign",
                "criterion_general|spectral",
            )),
        }
    }

    variational_into(graph, spectral.as_ref(), report);
    two_habitat_into(graph, options, general.as_ref(), report);
}

fn variational_into(
    graph: &PatchGraph,
    spectral: Option<&growth::SpectralData>,
    report: &mut AnalysisReport,
) {
    let Some(chain) = report.note("variational", WeightedChain::from_graph(graph)) else {
        return;
    };
    let tilted = report.note("variational_tilted", growth::tilted_route(&chain));
    let direct = report.note("variational_direct", growth::direct_route(&chain));
    let ids = (tilted.as_ref(), direct.as_ref());
    if let Some(t) = ids.0 {
        report.rho_variational = Some(t.value.exp());
        report.phi_variational = Some(t.phi.clone());
        report.idt_residual = Some(t.idt_residual);
        if let Some(s) = spectral {
            report.check(CrossCheck::new(
                "log_rho",
                "spectral|variational_tilted",
                (t.value - s.rho.ln()).abs(),
                tolerance::LOG_RHO,
            ));
            report.check(CrossCheck::new(
                "phi",
                "spectral|variational_tilted",
                max_abs_diff(&t.phi, &s.phi),
                tolerance::PHI,
            ));
        }
    }
    if let Some(d) = ids.1 {
        report.rho_variational_direct = Some(d.value.exp());
        if let Some(t) = ids.0 {
            report.check(CrossCheck::new(
                "log_rho",
                "variational_tilted|variational_direct",
                (t.value - d.value).abs(),
                tolerance::LOG_RHO,
            ));
        }
    }
    if ids.0.is_none() || ids.1.is_none() {
        report.check(CrossCheck::indeterminate("log_rho", "spectral|variational"));
    }
}

/// Source/sink analytics when every patch other than the reference source
/// shares one mean.
fn two_habitat_into(
    graph: &PatchGraph,
    options: &AnalysisOptions,
    general: Option<&PersistenceVerdict>,
    report: &mut AnalysisReport,
) {
    let k = graph.num_patches();
    let reference = graph.reference_source();
    let others: Vec<usize> = (0..k).filter(|&j| j != reference).collect();
    if others.is_empty() {
        return;
    }
    let m = graph.patch_mean(others[0]);
    if others.iter().any(|&j| graph.patch_mean(j) != m) || !(m <= 1.0) {
        return;
    }
    let Some(verdict) = report.note("two_habitat", persistence::criterion_two_habitat_on(graph))
    else {
        return;
    };
    let e = verdict.diagnostics["e"];
    let es = verdict.diagnostics["mean_sojourn"];
    report.depleting_rate_linear = Some(e);
    report.mean_sink_sojourn = Some(es);
    if let Some(g) = general {
        report.check(CrossCheck::new(
            "criterion_value",
            "criterion_general|two_habitat",
            (g.criterion_value - verdict.criterion_value).abs(),
            tolerance::SAME_QUANTITY,
        ));
    }
    // convexity of x ↦ E(x^S)
    let bound = 1.0 - (1.0 - m) * es;
    report.check(CrossCheck::new(
        "depleting_rate_convexity",
        "depleting_rate|mean_sojourn",
        (bound - e).max(0.0),
        1e-12,
    ));
    if let Some(renewal) = verdict.diagnostics.get("renewal_form") {
        let a = Persistence::from_value(verdict.criterion_value);
        let b = Persistence::from_value(*renewal);
        report.check(CrossCheck::signs("renewal_form_sign", "two_habitat|renewal", a, b));
    }
    if verdict.diagnostics.get("sojourn_sufficient") == Some(&1.0) {
        let ok = verdict.persists == Persistence::Yes;
        report.check(CrossCheck::new(
            "sojourn_sufficient_implies_persistence",
            "mean_sojourn|two_habitat",
            if ok { 0.0 } else { 1.0 },
            0.0,
        ));
    }
    report.verdicts.push(verdict);

    if let Some(c) = &options.pipeline {
        let closed = report.note(
            "pipeline_closed_form",
            disperser::pipeline_depleting_rate(c.n, c.left_share, c.right_share, c.s, c.l, c.r, c.sink_mean),
        );
        if let Some(closed) = closed {
            report.depleting_rate_closed_form = Some(closed);
            report.check(CrossCheck::new(
                "depleting_rate",
                "linear_system|pipeline_closed_form",
                (closed - e).abs(),
                tolerance::SAME_QUANTITY,
            ));
        }
    }
}

fn analyze_periodic(graph: &PatchGraph, env: &EnvironmentModel, report: &mut AnalysisReport) {
    let two_step = report
        .note("two_step", two_step_mean_matrix(graph, env))
        .and_then(|a| report.note("two_step_perron", growth::perron_of(a.matrix())));
    let rho_two_step = two_step.as_ref().map(|s| s.rho.sqrt());
    report.rho_spectral = rho_two_step;

    let general = report.note(
        "criterion_periodic_general",
        persistence::criterion_periodic_general(graph, env),
    );
    if let Some(v) = &general {
        report.verdicts.push(v.clone());
        if let Some(r) = rho_two_step {
            report.check(CrossCheck::signs(
                "persistence_sign",
                "criterion_periodic_general|two_step_spectral",
                v.persists,
                rho_call(r),
            ));
        }
    }
    if graph.num_patches() == 2 {
        let means = env.patch_means(graph).unwrap_or_default();
        let d = graph.dispersal();
        if means.len() == 2 {
            let closed = report.note(
                "criterion_periodic_two_patch",
                persistence::criterion_periodic_two_patch(
                    means[0][0],
                    means[1][0],
                    means[0][1],
                    means[1][1],
                    d[(0, 1)],
                    d[(1, 0)],
                ),
            );
            if let Some(v) = closed {
                if let Some(r) = rho_two_step {
                    report.check(CrossCheck::signs(
                        "persistence_sign",
                        "criterion_periodic_two_patch|two_step_spectral",
                        v.persists,
                        rho_call(r),
                    ));
                }
                if let Some(g) = &general {
                    report.check(CrossCheck::signs(
                        "persistence_sign",
                        "criterion_periodic_two_patch|criterion_periodic_general",
                        v.persists,
                        g.persists,
                    ));
                }
                report.verdicts.push(v);
            }
        }
    }

    let Some(ec) = report.note("edge_chain", growth::edge_chain(graph, env)) else {
        return;
    };
    let tilted = report.note("variational_tilted", growth::tilted_route(&ec.chain));
    let direct = report.note("variational_direct", growth::direct_route(&ec.chain));
    let k = graph.num_patches();
    if let Some(t) = &tilted {
        let rho = (0.5 * t.value).exp();
        report.rho_variational = Some(rho);
        report.idt_residual = Some(t.idt_residual);
        let mut pairs = vec![0.0; k * k];
        let mut patch = vec![0.0; k];
        for (e, &(i, j)) in ec.edges.iter().enumerate() {
            pairs[i * k + j] = t.phi[e];
            patch[j] += t.phi[e];
        }
        report.phi_pairs = Some(pairs);
        report.phi_variational = Some(patch);
        if let Some(r) = rho_two_step {
            report.check(CrossCheck::new(
                "rho",
                "two_step_spectral|variational_tilted",
                (rho - r).abs() / r,
                tolerance::RHO_TWO_STEP,
            ));
        }
        if let Some(d) = &direct {
            report.rho_variational_direct = Some((0.5 * d.value).exp());
            report.check(CrossCheck::new(
                "log_rho",
                "variational_tilted|variational_direct",
                (0.5 * (t.value - d.value)).abs(),
                tolerance::LOG_RHO,
            ));
        }
    }
}

fn analyze_markov(
    graph: &PatchGraph,
    env: &EnvironmentModel,
    options: &AnalysisOptions,
    report: &mut AnalysisReport,
) {
    let lyapunov = report.note(
        "lyapunov",
        simulate::estimate_lyapunov(
            graph,
            env,
            options.lyapunov_horizon,
            options.lyapunov_replicates,
            options.seed,
        ),
    );
    if let Some(l) = &lyapunov {
        report.gamma_hat = Some(l.gamma);
        report.gamma_stderr = Some(l.stderr);
    }
    if graph.num_patches() != 2 {
        return;
    }
    let Some(means) = report.note("environment_means", env.patch_means(graph)) else {
        return;
    };
    let d = graph.dispersal();
    let bound = report.note(
        "lower_bound",
        markov_env_lower_bound(means[0][0], means[1][1], d[(0, 1)], d[(1, 0)], env.alpha(), env.beta()),
    );
    if let Some(b) = bound {
        report.lower_bound = Some(b);
        if let Some(l) = &lyapunov {
            report.check(CrossCheck::new(
                "lower_bound",
                "lower_bound|lyapunov",
                (b - l.gamma).max(0.0),
                3.0 * l.stderr + CRITICAL_BAND,
            ));
        }
    }
}

fn simulate_into(
    graph: &PatchGraph,
    env: &EnvironmentModel,
    options: &AnalysisOptions,
    report: &mut AnalysisReport,
) {
    let mut config = SimConfig::new(options.generations, options.replicates, options.seed);
    config.law = options.law;
    let Some(outcomes) = report.note("simulation", simulate::simulate_branching(graph, env, &config))
    else {
        return;
    };
    let survivors: Vec<_> = outcomes.iter().filter(|o| o.survived()).collect();
    let mut summary = SimulationSummary {
        generations: options.generations,
        replicates: options.replicates,
        survivors: survivors.len(),
        truncated: outcomes.iter().filter(|o| o.truncated).count(),
        extinction_frequency: 1.0 - survivors.len() as f64 / outcomes.len().max(1) as f64,
        ..Default::default()
    };
    let rates: Vec<f64> = survivors
        .iter()
        .filter(|o| o.last_generation() > 0)
        .map(|o| (o.total(o.last_generation()) as f64).ln() / o.last_generation() as f64)
        .collect();
    if !rates.is_empty() {
        let n = rates.len() as f64;
        let mean = rates.iter().sum::<f64>() / n;
        summary.rho_simulated = Some(mean.exp());
        if rates.len() > 1 {
            let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
            summary.rho_simulated_stderr = Some(mean.exp() * (var / n).sqrt());
        }
    }
    if let Ok(est) = simulate::estimate_lineage_frequency(&outcomes) {
        if let Some(phi) = report.phi_spectral.clone().or_else(|| report.phi_variational.clone()) {
            if env.kind() == EnvKind::Constant {
                let excess = est
                    .frequency
                    .iter()
                    .zip(&phi)
                    .zip(&est.radius)
                    .map(|((f, p), r)| (f - p).abs() - r)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut c = CrossCheck::new("phi_simulated", "spectral|simulation", excess.max(0.0), 0.0);
                if est.survivors < 30 {
                    c.status = Status::Indeterminate;
                }
                report.check(c);
            }
        }
        summary.phi_simulated = Some(est.frequency);
        summary.phi_radius = Some(est.radius);
    }
    report.simulation = Some(summary);
}

pub fn to_json(report: &AnalysisReport) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
    out.push(b'\n');
    out
}

pub fn from_json(bytes: &[u8]) -> Result<AnalysisReport> {
    serde_json::from_slice(bytes).map_err(Error::from)
}

/// At most 12 significant digits, shortest form; `inf`, `-inf`, `nan` for
/// non-finite values.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
        format!("{rounded}")
    }
}

pub const CSV_HEADER: &str = "quantity,value,route,tolerance,status";

struct CsvRows(String);

impl CsvRows {
    fn row(&mut self, quantity: &str, value: f64, route: &str, tolerance: Option<f64>, status: &str) {
        let tol = tolerance.map(format_value).unwrap_or_default();
        let _ = writeln!(self.0, "{quantity},{},{route},{tol},{status}", format_value(value));
    }

    fn opt(&mut self, quantity: &str, value: Option<f64>, route: &str) {
        if let Some(v) = value {
            self.row(quantity, v, route, None, "");
        }
    }

    fn vector(&mut self, quantity: &str, values: Option<&Vec<f64>>, route: &str) {
        if let Some(vs) = values {
            for (i, &v) in vs.iter().enumerate() {
                self.row(&format!("{quantity}[{}]", i + 1), v, route, None, "");
            }
        }
    }
}

pub fn route_name(r: persistence::Route) -> &'static str {
    match r {
        persistence::Route::General => "criterion_general",
        persistence::Route::TwoHabitat => "two_habitat",
        persistence::Route::PeriodicTwoPatch => "criterion_periodic_two_patch",
        persistence::Route::PeriodicGeneral => "criterion_periodic_general",
    }
}

pub fn persistence_name(p: Persistence) -> &'static str {
    match p {
        Persistence::Yes => "persists",
        Persistence::No => "extinct",
        Persistence::CriticalIndeterminate => "critical",
    }
}

/// Flat CSV: one row per scalar quantity, vector component and cross-check.
pub fn to_csv(report: &AnalysisReport) -> Vec<u8> {
    let mut rows = CsvRows(format!("{CSV_HEADER}\n"));
    for v in &report.verdicts {
        let status = match v.persists {
            Persistence::CriticalIndeterminate => "indeterminate",
            _ => "",
        };
        rows.row("criterion_value", v.criterion_value, route_name(v.route), Some(CRITICAL_BAND), status);
        let _ = writeln!(rows.0, "verdict,{},{},,", persistence_name(v.persists), route_name(v.route));
    }
    rows.opt("rho", report.rho_spectral, "spectral");
    rows.opt("rho", report.rho_variational, "variational_tilted");
    rows.opt("rho", report.rho_variational_direct, "variational_direct");
    rows.vector("phi", report.phi_spectral.as_ref(), "spectral");
    rows.vector("phi", report.phi_variational.as_ref(), "variational_tilted");
    if let Some(pairs) = &report.phi_pairs {
        let k = report.num_patches;
        for (e, &v) in pairs.iter().enumerate() {
            rows.row(&format!("phi_pair[{}:{}]", e / k + 1, e % k + 1), v, "variational_tilted", None, "");
        }
    }
    rows.opt("idt_residual", report.idt_residual, "variational_tilted");
    rows.opt("depleting_rate", report.depleting_rate_linear, "linear_system");
    rows.opt("depleting_rate", report.depleting_rate_closed_form, "pipeline_closed_form");
    rows.opt("mean_sink_sojourn", report.mean_sink_sojourn, "linear_system");
    rows.opt("lower_bound", report.lower_bound, "closed_form");
    rows.opt("gamma", report.gamma_hat, "lyapunov");
    rows.opt("gamma_stderr", report.gamma_stderr, "lyapunov");
    if let Some(s) = &report.simulation {
        rows.row("extinction_frequency", s.extinction_frequency, "simulation", None, "");
        rows.opt("rho", s.rho_simulated, "simulation");
        rows.vector("phi", s.phi_simulated.as_ref(), "simulation");
        rows.vector("phi_radius", s.phi_radius.as_ref(), "simulation");
    }
    for c in &report.cross_checks {
        rows.row(
            &format!("check:{}", c.name),
            c.delta,
            &c.routes,
            Some(c.tolerance),
            c.status.as_str(),
        );
    }
    rows.0.into_bytes()
}

/// Human summary for terminals.
pub fn summary_text(report: &AnalysisReport) -> String {
    let mut s = String::new();
    for v in &report.verdicts {
        let _ = writeln!(
            s,
            "{:<30} {:>16}  {}",
            route_name(v.route),
            format_value(v.criterion_value),
            persistence_name(v.persists)
        );
    }
    if let Some(r) = report.rho_spectral {
        let _ = writeln!(s, "{:<30} {:>16}", "rho (spectral)", format_value(r));
    }
    if let Some(g) = report.gamma_hat {
        let _ = writeln!(s, "{:<30} {:>16}", "gamma (lyapunov)", format_value(g));
    }
    let failed = report.failures().len();
    let _ = writeln!(
        s,
        "cross-checks: {} total, {} failed",
        report.cross_checks.len(),
        failed
    );
    for c in report.failures() {
        let _ = writeln!(s, "  FAIL {} [{}]: delta {} > {}", c.name, c.routes, format_value(c.delta), format_value(c.tolerance));
    }
    s
}

/// Key numbers for sweep tables.
pub fn headline(report: &AnalysisReport) -> BTreeMap<&'static str, f64> {
    let mut h = BTreeMap::new();
    if let Some(v) = report.verdicts.first() {
        h.insert("criterion", v.criterion_value);
        h.insert(
            "persists",
            match v.persists {
                Persistence::Yes => 1.0,
                Persistence::No => 0.0,
                Persistence::CriticalIndeterminate => 0.5,
            },
        );
    }
    if let Some(r) = report.rho_spectral {
        h.insert("rho", r);
    }
    if let Some(g) = report.gamma_hat {
        h.insert("gamma", g);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchgraph::build_two_patch;

    #[test]
    fn format_twelve_digits() {
        assert_eq!(format_value(1.25), "1.25");
        assert_eq!(format_value(4.0 / 3.0), "1.33333333333");
        assert_eq!(format_value(f64::INFINITY), "inf");
        assert_eq!(format_value(-2.5e-20), "-0.000000000000000000025");
    }

    #[test]
    fn constant_two_patch_report() {
        let g = build_two_patch(2.0, 0.5, 0.5, 0.5).unwrap();
        let r = analyze(&g, &EnvironmentModel::constant(), &AnalysisOptions::default()).unwrap();
        assert!(r.all_pass(), "{:?}", r.failures());
        assert!((r.rho_spectral.unwrap() - 1.25).abs() < 1e-12);
        let names: Vec<&str> = r.cross_checks.iter().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"persistence_sign") && names.contains(&"log_rho"));
        let csv = String::from_utf8(to_csv(&r)).unwrap();
        assert!(csv.starts_with("quantity,value,route,tolerance,status\n"));
        assert!(!csv.contains("simulation"));
        let back = from_json(&to_json(&r)).unwrap();
        assert_eq!(back, r);
    }
}
