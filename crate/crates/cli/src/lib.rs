//! Command-line front end: reads a JSON scenario, runs one analysis and writes
//! a CSV table.

pub mod output;
pub mod scenario;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use relaynet_core::bargaining::{
    complete_info_contract, solve_virtual_allocation, truth_telling_audit, VirtualCostView,
};
use relaynet_core::efficiency::{asymptotic_probe, monte_carlo_expected_poa, BoundKind, Mode, ProbeOptions};
use relaynet_core::numeric::linspace;
use relaynet_core::pricing::{solve_asymmetric_bne, ShootingConfig};
use relaynet_core::social::{kkt_residual, solve_social_optimum, total_cost};
use relaynet_core::verify::{assumption_audit, best_response_gain, brute_force_allocation, ode_residual};
use relaynet_core::{sample_types, PricingStrategy, Scenario};
use serde::Deserialize;

use crate::output::{num, strategy_table, Table};
use crate::scenario::ScenarioFile;

pub use crate::output::emit_strategy_table;

pub const SEED_VAR: &str = "RELAYNET_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] relaynet_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "relaynet",
    version,
    about = "Pricing and bargaining analysis for parallel relay networks"
)]
pub struct Cli {
    /// Overrides the seed from the scenario file and the environment.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the CSV here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoaMode {
    Pricing,
    Bargaining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    All,
    Assumptions,
    Social,
    Ode,
    Equilibrium,
    Truth,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cost-minimizing split of the source rate.
    SocialOpt {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
    },
    /// Closed-form symmetric pricing equilibrium on a type grid.
    BneSymmetric {
        scenario: PathBuf,
        #[arg(long, default_value_t = 101)]
        grid: usize,
    },
    /// Pricing equilibrium for relays with different priors.
    BneAsymmetric {
        scenario: PathBuf,
        /// JSON file with shooting controls.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        grid: usize,
    },
    /// Virtual-cost allocation next to the full-information contract.
    Bargain {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
    },
    /// Monte Carlo price of anarchy.
    Poa {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: PoaMode,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Numerical self-checks; exits 1 if any fails.
    Verify {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        /// Monte Carlo draws for the truth-telling audit.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Price of anarchy along a decreasing list of source rates.
    ProbeAsymptotic {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        rs_list: Vec<f64>,
        /// Fixed types for symmetric scenarios.
        #[arg(long, value_delimiter = ',')]
        theta: Option<Vec<f64>>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SocialOpt { .. } => "social-opt",
            Command::BneSymmetric { .. } => "bne-symmetric",
            Command::BneAsymmetric { .. } => "bne-asymmetric",
            Command::Bargain { .. } => "bargain",
            Command::Poa { .. } => "poa",
            Command::Verify { .. } => "verify",
            Command::ProbeAsymptotic { .. } => "probe-asymptotic",
        }
    }

    fn scenario(&self) -> &Path {
        match self {
            Command::SocialOpt { scenario, .. }
            | Command::BneSymmetric { scenario, .. }
            | Command::BneAsymmetric { scenario, .. }
            | Command::Bargain { scenario, .. }
            | Command::Poa { scenario, .. }
            | Command::Verify { scenario, .. }
            | Command::ProbeAsymptotic { scenario, .. } => scenario,
        }
    }
}

/// Shooting controls as read from `--config`; absent keys keep defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShootingFile {
    p_min_bracket: Option<(f64, f64)>,
    step: Option<f64>,
    min_step: Option<f64>,
    max_iterations: Option<usize>,
    boundary_tol: Option<f64>,
    max_steps: Option<usize>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn shooting_config(path: Option<&Path>) -> Result<ShootingConfig, CliError> {
    let mut config = ShootingConfig::default();
    let Some(path) = path else {
        return Ok(config);
    };
    let text = read(path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let file: ShootingFile = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| CliError::Input(format!("{}: {}: {}", path.display(), e.path(), e.inner())))?;
    if let Some(b) = file.p_min_bracket {
        config.p_min_bracket = Some(b);
    }
    config.step = file.step.unwrap_or(config.step);
    config.min_step = file.min_step.unwrap_or(config.min_step);
    config.max_iterations = file.max_iterations.unwrap_or(config.max_iterations);
    config.boundary_tol = file.boundary_tol.unwrap_or(config.boundary_tol);
    config.max_steps = file.max_steps.unwrap_or(config.max_steps);
    Ok(config)
}

/// Flag, then scenario file, then `RELAYNET_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{SEED_VAR}: expected an unsigned integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

struct Context {
    scenario: Scenario,
    seed: u64,
    hash: String,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut hash = None;
    match execute(&cli, &mut hash) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 3 {
                eprintln!("diagnostics:");
                eprintln!("  command: {}", cli.command.name());
                eprintln!("  scenario: {}", cli.command.scenario().display());
                if let Some(h) = hash {
                    eprintln!("  scenario_hash: {h}");
                }
                eprintln!("  detail: {e:?}");
            }
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, hash_out: &mut Option<String>) -> Result<i32, CliError> {
    let path = cli.command.scenario();
    let file = ScenarioFile::parse(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let scenario = file.to_scenario().map_err(|e| match e {
        CliError::Core(c) => CliError::Input(format!("{}: {c}", path.display())),
        other => CliError::Input(format!("{}: {other}", path.display())),
    })?;
    let hash = ScenarioFile::hash(&scenario);
    *hash_out = Some(hash.clone());
    let ctx = Context {
        seed: resolve_seed(cli.seed, file.seed)?,
        scenario,
        hash,
    };
    let (mut table, pass) = match &cli.command {
        Command::SocialOpt { theta, .. } => (social_opt(&ctx, theta)?, true),
        Command::BneSymmetric { grid, .. } => (bne_symmetric(&ctx, *grid)?, true),
        Command::BneAsymmetric { config, grid, .. } => (bne_asymmetric(&ctx, config.as_deref(), *grid)?, true),
        Command::Bargain { theta, .. } => (bargain(&ctx, theta)?, true),
        Command::Poa { mode, samples, .. } => (poa(&ctx, *mode, *samples)?, true),
        Command::Verify { suite, samples, .. } => verify(&ctx, *suite, *samples)?,
        Command::ProbeAsymptotic {
            rs_list,
            theta,
            samples,
            config,
            ..
        } => (probe(&ctx, rs_list, theta.clone(), *samples, config.as_deref())?, true),
    };
    table.meta.insert(
        0,
        format!(
            "scenario_hash={} seed={} version={} command={}",
            ctx.hash,
            ctx.seed,
            env!("CARGO_PKG_VERSION"),
            cli.command.name()
        ),
    );
    match &cli.out {
        Some(out) => table.write(out)?,
        None => print!("{}", table.render()),
    }
    Ok(if pass { 0 } else { 1 })
}

fn social_opt(ctx: &Context, theta: &[f64]) -> Result<Table, CliError> {
    let sc = &ctx.scenario;
    let (allocation, cert) = solve_social_optimum(sc, theta)?;
    let mut table = Table::new(&["link", "theta", "rate", "marginal_cost", "cost"]);
    table.meta(format!(
        "c_star={} kkt_residual={} total_cost={}",
        cert.c_star,
        cert.residual,
        total_cost(sc, theta, &allocation)?
    ));
    if let relaynet_core::SourceModel::Elastic { theta_s, .. } = *sc.source() {
        let s = sc.source();
        let r0 = allocation.withheld;
        table.push([
            "source".into(),
            num(theta_s),
            num(r0),
            num(s.overflow_marginal(r0)),
            num(s.overflow_cost(r0)),
        ]);
    }
    for (i, ((relay, &t), &r)) in sc.relays().iter().zip(theta).zip(&allocation.rates).enumerate() {
        table.push([
            format!("relay{}", i + 1),
            num(t),
            num(r),
            num(relay.cost.marginal(t, r)),
            num(relay.cost.cost(t, r)),
        ]);
    }
    Ok(table)
}

fn symmetric_parts(sc: &Scenario) -> Result<(), CliError> {
    if !sc.is_symmetric() || sc.source().is_elastic() {
        return Err(CliError::Input(
            "this command needs identical relays and an inelastic source".into(),
        ));
    }
    Ok(())
}

fn bne_symmetric(ctx: &Context, grid: usize) -> Result<Table, CliError> {
    let sc = &ctx.scenario;
    symmetric_parts(sc)?;
    let relay = sc.relay(0);
    let strategy = PricingStrategy::closed_form_symmetric(relay.cost, relay.dist, sc.len(), sc.rate(), grid.max(2))?;
    Ok(strategy_table(&vec![strategy; sc.len()], grid))
}

fn bne_asymmetric(ctx: &Context, config: Option<&Path>, grid: usize) -> Result<Table, CliError> {
    let config = shooting_config(config)?;
    let solution = solve_asymmetric_bne(&ctx.scenario, &config)?;
    let d = &solution.diagnostics;
    let mut table = strategy_table(&solution.strategies, grid);
    table.meta(format!(
        "p_min={} iterations={} start_gap={} floor_price={} steps={}",
        solution.p_min, d.iterations, d.start_gap, d.floor_price, d.steps
    ));
    Ok(table)
}

fn bargain(ctx: &Context, theta: &[f64]) -> Result<Table, CliError> {
    let sc = &ctx.scenario;
    let solution = solve_virtual_allocation(sc, theta)?;
    let full = complete_info_contract(sc, theta)?;
    let mut table = Table::new(&[
        "link",
        "theta",
        "rate",
        "virtual_cost",
        "true_cost",
        "full_info_rate",
        "full_info_transfer",
    ]);
    table.meta(format!(
        "convex={} candidates={} residual={}",
        solution.convex,
        solution.candidates.len(),
        solution.residual
    ));
    let a = &solution.allocation;
    if let relaynet_core::SourceModel::Elastic { theta_s, .. } = *sc.source() {
        let c = sc.source().overflow_cost(a.withheld);
        table.push([
            "source".into(),
            num(theta_s),
            num(a.withheld),
            num(c),
            num(c),
            num(full.allocation.withheld),
            String::new(),
        ]);
    }
    for (i, relay) in sc.relays().iter().enumerate() {
        let (t, r) = (theta[i], a.rates[i]);
        let view = VirtualCostView::new(relay.cost, relay.dist);
        table.push([
            format!("relay{}", i + 1),
            num(t),
            num(r),
            num(view.value(t, r)?),
            num(relay.cost.cost(t, r)),
            num(full.allocation.rates[i]),
            num(full.transfers[i]),
        ]);
    }
    Ok(table)
}

fn poa(ctx: &Context, mode: PoaMode, samples: usize) -> Result<Table, CliError> {
    let (mode, label) = match mode {
        PoaMode::Pricing => (Mode::Pricing, "pricing"),
        PoaMode::Bargaining => (Mode::Bargaining, "bargaining"),
    };
    let s = monte_carlo_expected_poa(&ctx.scenario, mode, samples, ctx.seed)?;
    let mut table = Table::new(&[
        "mode",
        "samples",
        "mean",
        "min",
        "median",
        "p90",
        "p99",
        "max",
        "bound",
        "bound_kind",
    ]);
    let (bound, kind) = match s.bound {
        Some(b) => (
            num(b.value),
            match b.kind {
                BoundKind::RelayCount => "relay_count",
                BoundKind::MarginalRatio => "marginal_ratio",
            }
            .to_string(),
        ),
        None => (String::new(), String::new()),
    };
    table.push([
        label.into(),
        s.samples.to_string(),
        num(s.mean),
        num(s.min),
        num(s.median),
        num(s.p90),
        num(s.p99),
        num(s.max),
        bound,
        kind,
    ]);
    Ok(table)
}

fn probe(
    ctx: &Context,
    rates: &[f64],
    types: Option<Vec<f64>>,
    samples: usize,
    config: Option<&Path>,
) -> Result<Table, CliError> {
    let options = ProbeOptions {
        types,
        samples,
        seed: ctx.seed,
        shooting: shooting_config(config)?,
        ..ProbeOptions::default()
    };
    let rows = asymptotic_probe(&ctx.scenario, rates, &options)?;
    let mut table = Table::new(&[
        "r_s",
        "realizations",
        "rho_min",
        "rho_mean",
        "rho_max",
        "counterpart_max",
        "max_gap",
    ]);
    for r in rows {
        table.push([
            num(r.rate),
            r.realizations.to_string(),
            num(r.rho_min),
            num(r.rho_mean),
            num(r.rho_max),
            if r.counterpart_max.is_nan() {
                String::new()
            } else {
                num(r.counterpart_max)
            },
            num(r.max_gap),
        ]);
    }
    Ok(table)
}

struct Checks {
    table: Table,
    pass: bool,
}

impl Checks {
    fn add(&mut self, check: &str, subject: String, value: f64, tolerance: f64, ok: bool) {
        self.pass &= ok;
        self.table.push([
            check.into(),
            subject,
            num(value),
            num(tolerance),
            if ok { "pass" } else { "fail" }.into(),
        ]);
    }
}

fn verify(ctx: &Context, suite: Suite, samples: usize) -> Result<(Table, bool), CliError> {
    let sc = &ctx.scenario;
    let rate = sc.rate();
    let mut checks = Checks {
        table: Table::new(&["check", "subject", "value", "tolerance", "result"]),
        pass: true,
    };
    let wants = |s: Suite| suite == Suite::All || suite == s;

    if wants(Suite::Assumptions) {
        for (i, relay) in sc.relays().iter().enumerate() {
            if sc.relays()[..i].contains(relay) {
                continue;
            }
            let report = assumption_audit(&relay.cost, &relay.dist, rate, (20, 20))?;
            for e in &report.entries {
                checks.add(
                    &format!("assumption:{}", e.assumption),
                    format!("relay{}", i + 1),
                    e.magnitude,
                    e.tolerance,
                    e.magnitude <= e.tolerance,
                );
            }
        }
    }

    if wants(Suite::Social) {
        let draws = sample_types(sc, 20, ctx.seed);
        let links = sc.len() + usize::from(sc.source().is_elastic());
        let mut worst_kkt: f64 = 0.0;
        let mut worst_gap: f64 = 0.0;
        let mut gap_ok = true;
        for theta in &draws {
            let (opt, _) = solve_social_optimum(sc, theta)?;
            worst_kkt = worst_kkt.max(kkt_residual(sc, theta, &opt)?);
            if links <= 3 {
                let grid = brute_force_allocation(sc, theta, rate / 400.0)?;
                let gap = total_cost(sc, theta, &grid)? - total_cost(sc, theta, &opt)?;
                gap_ok &= gap >= -1e-9;
                worst_gap = worst_gap.max(gap.abs());
            }
        }
        checks.add(
            "social:kkt_residual",
            "20 draws".into(),
            worst_kkt,
            1e-8,
            worst_kkt <= 1e-8,
        );
        if links <= 3 {
            checks.add(
                "social:brute_force_gap",
                "20 draws".into(),
                worst_gap,
                1e-3,
                gap_ok && worst_gap <= 1e-3,
            );
        }
    }

    let relay = sc.relay(0);
    let (lo, hi) = relay.dist.support();
    let closed_form =
        sc.is_symmetric() && !sc.source().is_elastic() && sc.len() >= 2 && relay.cost.cost(lo, rate).is_finite();
    if closed_form && (wants(Suite::Ode) || wants(Suite::Equilibrium)) {
        let strategy = PricingStrategy::closed_form_symmetric(relay.cost, relay.dist, sc.len(), rate, 101)?;
        if wants(Suite::Ode) {
            let res = ode_residual(
                &strategy,
                &relay.cost,
                &relay.dist,
                sc.len(),
                rate,
                &linspace(lo, hi, 201),
            )?;
            checks.add("ode:residual", "symmetric".into(), res, 1e-4, res <= 1e-4);
        }
        if wants(Suite::Equilibrium) {
            let strategies = vec![strategy.clone(); sc.len()];
            let p_max = strategy.price(lo);
            let grid = linspace(0.5 * strategy.price(hi), 1.5 * p_max, 1000);
            let tol = 1e-3 * p_max * rate;
            let w = hi - lo;
            let gain = (0..25)
                .map(|k| lo + w * (k as f64 + 0.5) / 25.0)
                .map(|t| best_response_gain(sc, &strategies, 0, t, &grid))
                .fold(0.0, f64::max);
            checks.add(
                "equilibrium:best_response_gain",
                "25 types".into(),
                gain,
                tol,
                gain <= tol,
            );
        }
    }

    if wants(Suite::Truth) {
        let lo = sc
            .relays()
            .iter()
            .map(|r| r.dist.support().0)
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = sc
            .relays()
            .iter()
            .map(|r| r.dist.support().1)
            .fold(f64::INFINITY, f64::min);
        if lo < hi {
            let grid: Vec<f64> = (0..10).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / 10.0).collect();
            let audit = truth_telling_audit(sc, &grid, &grid, samples, ctx.seed)?;
            let tol = 3.0 * audit.std_error;
            checks.add(
                "truth:max_misreport_gain",
                format!("relay{}", audit.worst.0 + 1),
                audit.max_gain,
                tol,
                audit.pass,
            );
        }
    }
    Ok((checks.table, checks.pass))
}
