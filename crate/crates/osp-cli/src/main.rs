//! `ospder` — studies for optimal PV and battery siting/sizing on radial
//! networks under deterministic, stochastic, and (adaptive) robust
//! formulations.
//!
//! Exit codes: 0 success, 2 validation failure, 3 solver failure,
//! 4 nonconvergence within the iteration limit.

mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use osp_core::baselines::EngineError;
use osp_core::casefile::load_case;
use osp_core::milp::SolverParams;
use osp_core::model::CaseData;
use osp_core::oracle;
use osp_core::uncertainty::{BudgetedSet, Realization, ScenarioSet, Trajectory, reduce_scenarios};
use osp_core::{aro, arso, baselines, deterministic};

use report::{ReportRow, Reporter, fmt6};

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_NONCONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(name = "ospder", version, about = "PV and battery siting/sizing studies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Formulation {
    Det,
    Tsso,
    Sro,
    Aro,
    Arso,
}

impl Formulation {
    fn name(self) -> &'static str {
        match self {
            Formulation::Det => "det",
            Formulation::Tsso => "tsso",
            Formulation::Sro => "sro",
            Formulation::Aro => "aro",
            Formulation::Arso => "arso",
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a case file and report any violations.
    Validate { case: PathBuf },
    /// Solve one formulation on a case.
    Solve {
        formulation: Formulation,
        case: PathBuf,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Solve all formulations across a list of uncertainty budgets.
    Sweep {
        case: PathBuf,
        /// Comma-separated budgets, e.g. `0,10,20`.
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<usize>,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Perfect-information benchmark on the concatenated scenario horizon.
    Pi {
        case: PathBuf,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Investment cost versus forced autonomy level.
    Autonomy {
        case: PathBuf,
        /// Levels as `start:end:step` or a comma-separated list.
        #[arg(long, required = true)]
        levels: String,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Cross-check the dual subproblems against brute-force enumeration.
    OracleCheck {
        case: PathBuf,
        /// Cap on enumerated extreme points per check.
        #[arg(long, default_value_t = 200_000)]
        limit: usize,
        #[command(flatten)]
        opts: SolveOpts,
    },
}

#[derive(Args)]
struct SolveOpts {
    /// Per-bus demand deviation budget.
    #[arg(long, default_value_t = 0)]
    beta_pl: usize,
    /// Global PV deviation budget.
    #[arg(long, default_value_t = 0)]
    beta_pv: usize,
    /// Reduce the case to this many scenarios before solving.
    #[arg(long)]
    scenarios: Option<usize>,
    /// Override the line-capacity polygon segment count.
    #[arg(long)]
    segments: Option<usize>,
    /// Relative Benders convergence tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Benders iteration limit.
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    feas_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    mip_gap: f64,
    /// Per-solve wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Directory for machine-readable reports and traces.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SolveOpts {
    fn params(&self) -> SolverParams {
        SolverParams {
            feas_tol: self.feas_tol,
            mip_gap: self.mip_gap,
            time_limit: self.time_limit,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Solver(String),
    Nonconvergence(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Nonconvergence(_) => EXIT_NONCONVERGENCE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Solver(m) | CliError::Nonconvergence(m) => m,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidArgument(_) | EngineError::Uncertainty(_) | EngineError::Build(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn check_backend() -> Result<(), CliError> {
    match std::env::var("OSP_SOLVER") {
        Ok(name) if !name.eq_ignore_ascii_case("highs") => Err(CliError::Validation(format!(
            "unknown solver backend `{name}` (supported: highs)"
        ))),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    check_backend()?;
    match cli.cmd {
        Cmd::Validate { case } => cmd_validate(&case),
        Cmd::Solve {
            formulation,
            case,
            opts,
        } => cmd_solve(formulation, &case, &opts),
        Cmd::Sweep { case, betas, opts } => cmd_sweep(&case, &betas, &opts),
        Cmd::Pi { case, opts } => cmd_pi(&case, &opts),
        Cmd::Autonomy { case, levels, opts } => cmd_autonomy(&case, &levels, &opts),
        Cmd::OracleCheck { case, limit, opts } => cmd_oracle_check(&case, limit, &opts),
    }
}

fn load(path: &PathBuf, opts: &SolveOpts) -> Result<CaseData, CliError> {
    let mut case = load_case(path).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(n) = opts.segments {
        if n < 4 {
            return Err(CliError::Validation(format!(
                "--segments must be at least 4, got {n}"
            )));
        }
        case.segments = n;
    }
    if let Some(k) = opts.scenarios {
        case = reduce_case(&case, k)?;
    }
    Ok(case)
}

/// Backward scenario reduction applied in place of the case's scenarios;
/// reduction restarts from uniform probabilities by construction.
fn reduce_case(case: &CaseData, k: usize) -> Result<CaseData, CliError> {
    let ns = case.probabilities.len();
    let history: Vec<Trajectory> = (0..ns)
        .map(|s| Trajectory {
            pv: case.pv_profile.pv.iter().map(|row| row[s]).collect(),
            pl: case
                .loads
                .pl
                .iter()
                .map(|bus| bus.iter().map(|row| row[s]).collect())
                .collect(),
            ql: case
                .loads
                .ql
                .iter()
                .map(|bus| bus.iter().map(|row| row[s]).collect())
                .collect(),
            price: case.costs.price.iter().map(|row| row[s]).collect(),
        })
        .collect();
    let reduced = reduce_scenarios(&history, k).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut out = case.clone();
    out.probabilities = reduced.probabilities;
    out.pv_profile.pv = reduced.pv;
    out.loads.pl = reduced.pl;
    out.loads.ql = reduced.ql;
    out.costs.price = reduced.prices;
    Ok(out)
}

fn nominal_realization(case: &CaseData) -> Realization {
    let rho = &case.probabilities;
    Realization {
        pv: case
            .pv_profile
            .pv
            .iter()
            .map(|row| row.iter().zip(rho).map(|(x, p)| x * p).sum())
            .collect(),
        pl: case
            .loads
            .pl
            .iter()
            .map(|bus| {
                bus.iter()
                    .map(|row| row.iter().zip(rho).map(|(x, p)| x * p).sum())
                    .collect()
            })
            .collect(),
    }
}

fn cmd_validate(path: &PathBuf) -> Result<(), CliError> {
    match load_case(path) {
        Ok(case) => {
            println!(
                "{}: valid — {} buses, {} lines, {} slots, {} scenarios",
                case.name,
                case.n_buses(),
                case.network.lines.len(),
                case.horizon,
                case.probabilities.len()
            );
            Ok(())
        }
        Err(e) => Err(CliError::Validation(e.to_string())),
    }
}

/// Solves one formulation; returns the report row and an optional
/// iteration trace.
fn solve_one(
    formulation: Formulation,
    case: &CaseData,
    opts: &SolveOpts,
) -> Result<(ReportRow, Vec<aro::IterationRecord>), CliError> {
    let params = opts.params();
    let set = BudgetedSet::from_envelope(&case.envelope, opts.beta_pl, opts.beta_pv);
    let row = |inv: &deterministic::InvestmentValues, objective: f64| {
        ReportRow::new(case, formulation.name(), opts.beta_pl, opts.beta_pv, inv, objective)
    };
    match formulation {
        Formulation::Det => {
            let dm = deterministic::build_deterministic(case, &nominal_realization(case))
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let r = dm
                .model
                .solve(&params)
                .map_err(|e| CliError::Solver(e.to_string()))?;
            if r.status != osp_core::milp::SolveStatus::Optimal {
                return Err(CliError::Solver(format!("status {:?}", r.status)));
            }
            Ok((row(&dm.inv.values(&r), r.objective), Vec::new()))
        }
        Formulation::Tsso => {
            let scen = ScenarioSet::from_case(case);
            let sol = baselines::solve_tsso(case, &scen, &params)?;
            Ok((row(&sol.investments, sol.objective), Vec::new()))
        }
        Formulation::Sro => {
            let sol = baselines::solve_sro(case, &set, &params)?;
            Ok((row(&sol.investments, sol.objective), Vec::new()))
        }
        Formulation::Aro => {
            let sol = aro::solve_aro(case, &set, &params, opts.tol, opts.max_iter)?;
            if !sol.converged {
                return Err(CliError::Nonconvergence(format!(
                    "aro stopped after {} iterations with gap {}",
                    sol.iterations.len(),
                    sol.upper_bound - sol.lower_bound
                )));
            }
            Ok((row(&sol.investments, sol.objective), sol.iterations))
        }
        Formulation::Arso => {
            let scen = ScenarioSet::from_case(case);
            let demand_set = BudgetedSet::from_envelope(&case.envelope, opts.beta_pl, 0);
            let sol = arso::solve_arso(case, &scen, &demand_set, &params, opts.tol, opts.max_iter)?;
            if !sol.converged {
                return Err(CliError::Nonconvergence(format!(
                    "arso stopped after {} iterations with gap {}",
                    sol.iterations.len(),
                    sol.upper_bound - sol.lower_bound
                )));
            }
            Ok((row(&sol.investments, sol.objective), sol.iterations))
        }
    }
}

fn cmd_solve(formulation: Formulation, path: &PathBuf, opts: &SolveOpts) -> Result<(), CliError> {
    let case = load(path, opts)?;
    let (row, trace) = solve_one(formulation, &case, opts)?;
    row.print_summary();
    if let Some(dir) = &opts.out {
        let reporter = Reporter::new(dir)?;
        reporter.write_rows("report", &[row])?;
        if !trace.is_empty() {
            reporter.write_trace(&format!("{}_trace", formulation.name()), &trace)?;
        }
    }
    Ok(())
}

fn cmd_sweep(path: &PathBuf, betas: &[usize], opts: &SolveOpts) -> Result<(), CliError> {
    let case = load(path, opts)?;
    let mut rows = Vec::new();
    let mut traces: Vec<(String, Vec<aro::IterationRecord>)> = Vec::new();
    // budget-independent references first, then one row per formulation
    // and budget
    for f in [Formulation::Det, Formulation::Tsso] {
        let (row, _) = solve_one(f, &case, opts)?;
        rows.push(row);
    }
    for &beta in betas {
        let point = SolveOpts {
            beta_pl: beta,
            beta_pv: beta,
            scenarios: None,
            segments: None,
            tol: opts.tol,
            max_iter: opts.max_iter,
            feas_tol: opts.feas_tol,
            mip_gap: opts.mip_gap,
            time_limit: opts.time_limit,
            out: None,
        };
        for f in [Formulation::Sro, Formulation::Aro, Formulation::Arso] {
            let (row, trace) = solve_one(f, &case, &point)?;
            rows.push(row);
            if !trace.is_empty() {
                traces.push((format!("{}_beta{}_trace", f.name(), beta), trace));
            }
        }
    }
    println!(
        "{:<6} {:>7} {:>7} {:>16} {:>16} {:>16}",
        "form", "beta_pl", "beta_pv", "objective", "investment", "operational"
    );
    for row in &rows {
        println!(
            "{:<6} {:>7} {:>7} {:>16} {:>16} {:>16}",
            row.formulation,
            row.beta_pl,
            row.beta_pv,
            fmt6(row.objective),
            fmt6(row.investment_cost),
            fmt6(row.operational_cost)
        );
    }
    if let Some(dir) = &opts.out {
        let reporter = Reporter::new(dir)?;
        reporter.write_rows("sweep", &rows)?;
        for (name, trace) in &traces {
            reporter.write_trace(name, trace)?;
        }
    }
    Ok(())
}

fn cmd_pi(path: &PathBuf, opts: &SolveOpts) -> Result<(), CliError> {
    let case = load(path, opts)?;
    let scen = ScenarioSet::from_case(&case);
    let pi = oracle::perfect_information_benchmark(&case, &scen, &opts.params())?;
    let row = ReportRow::new(&case, "pi", 0, 0, &pi.investments, pi.objective);
    row.print_summary();
    if let Some(dir) = &opts.out {
        Reporter::new(dir)?.write_rows("pi", &[row])?;
    }
    Ok(())
}

fn parse_levels(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |m: &str| CliError::Validation(format!("invalid --levels `{spec}`: {m}"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:end:step"));
        }
        let start: f64 = parts[0].parse().map_err(|_| bad("bad start"))?;
        let end: f64 = parts[1].parse().map_err(|_| bad("bad end"))?;
        let step: f64 = parts[2].parse().map_err(|_| bad("bad step"))?;
        if step <= 0.0 || end < start {
            return Err(bad("need step > 0 and end >= start"));
        }
        let mut levels = Vec::new();
        let n = ((end - start) / step).round() as usize;
        for k in 0..=n {
            let v = start + step * k as f64;
            if v <= end + 1e-12 {
                levels.push(v.min(end));
            }
        }
        Ok(levels)
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("bad number")))
            .collect()
    }
}

fn cmd_autonomy(path: &PathBuf, levels: &str, opts: &SolveOpts) -> Result<(), CliError> {
    let case = load(path, opts)?;
    let scen = ScenarioSet::from_case(&case);
    let levels = parse_levels(levels)?;
    let curve = oracle::autonomy_curve(&case, &scen, &levels, &opts.params())?;
    println!(
        "{:>8} {:>10} {:>16} {:>16} {:>10}",
        "level", "feasible", "investment", "objective", "achieved"
    );
    let mut csv = String::from("level,feasible,investment_cost,objective,achieved\n");
    for pt in &curve {
        println!(
            "{:>8} {:>10} {:>16} {:>16} {:>10}",
            fmt6(pt.level),
            pt.feasible,
            fmt6(pt.investment_cost),
            fmt6(pt.objective),
            fmt6(pt.achieved)
        );
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt6(pt.level),
            pt.feasible,
            fmt6(pt.investment_cost),
            fmt6(pt.objective),
            fmt6(pt.achieved)
        ));
    }
    if let Some(dir) = &opts.out {
        Reporter::new(dir)?.write_text("autonomy.csv", &csv)?;
    }
    Ok(())
}

fn cmd_oracle_check(path: &PathBuf, limit: usize, opts: &SolveOpts) -> Result<(), CliError> {
    let case = load(path, opts)?;
    let params = opts.params();
    let nb = case.n_buses();
    let idle = deterministic::InvestmentValues {
        nu_pv: vec![0.0; nb],
        nu_bt: vec![0.0; nb],
        gamma_pv: vec![0.0; nb],
        gamma_bt: vec![0.0; nb],
    };
    let idle_w = vec![vec![0.0; case.horizon]; nb];
    let mut failures = 0usize;
    for (beta_pl, beta_pv) in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 2)] {
        let set = BudgetedSet::from_envelope(&case.envelope, beta_pl, beta_pv);
        let brute = match oracle::brute_force_worst_case(&case, &set, &idle, &idle_w, &params, limit)
        {
            Ok((_, value)) => value,
            Err(EngineError::Uncertainty(e)) => {
                println!("beta_pl={beta_pl} beta_pv={beta_pv}: skipped ({e})");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let dsp = aro::build_dsp(&case, &set, &idle, &idle_w)?;
        let r = dsp
            .model
            .solve(&params)
            .map_err(|e| CliError::Solver(e.to_string()))?;
        let ok = (r.objective - brute).abs() <= 1e-6 * (1.0 + brute.abs());
        println!(
            "beta_pl={beta_pl} beta_pv={beta_pv}: dsp={} brute={} {}",
            fmt6(r.objective),
            fmt6(brute),
            if ok { "ok" } else { "MISMATCH" }
        );
        if !ok {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::Solver(format!(
            "{failures} oracle cross-check(s) failed"
        )));
    }
    println!("all oracle cross-checks passed");
    Ok(())
}
