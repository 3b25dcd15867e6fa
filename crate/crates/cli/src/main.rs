use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use netfed_core::dynamics::{
    default_max_rounds, run_dynamics, verify_equilibrium, InitialState, UpdateOrder,
};
use netfed_core::mechanism::{quote_report, Mechanism, MechanismKind};
use netfed_core::oracle::{compare_to_formula, simulate_generalization, Comparison, OracleReport, OracleSetup};
use netfed_core::performance::{network_effect_report, NetworkEffectReport};
use netfed_core::report::{landscape_csv, sweep_csv, to_json, transitions_jsonl, write_text};
use netfed_core::scenario::{load_scenario, partition_types};
use netfed_core::sweep::{run_sweep, SweepSpec};
use netfed_core::welfare::{
    solve_efficient_brute, solve_efficient_structured, welfare_landscape, DEFAULT_ENUMERATION_CAP,
};
use netfed_core::{Profile, Result, SocialState};

#[derive(Parser)]
#[command(name = "netfed", version, about = "Analyze federated-learning model markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Network effects of each client type on a coalition.
    Analyze {
        #[arg(long)]
        scenario: PathBuf,
        /// Participants per type, e.g. "2,1,0".
        #[arg(long)]
        profile: Profile,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Socially efficient states.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Brute)]
        method: Method,
        /// Write the welfare of every social state as CSV.
        #[arg(long)]
        landscape: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Price, rewards and budget residual at a social state.
    Quote {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        profile: Profile,
        #[arg(long)]
        buyers: Profile,
        #[arg(long, value_enum, default_value_t = MechanismArg::Semts)]
        mechanism: MechanismArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best-response dynamics under a mechanism.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = MechanismArg::Semts)]
        mechanism: MechanismArg,
        #[arg(long, value_enum, default_value_t = Initial::AllAbstain)]
        initial: Initial,
        #[arg(long, value_enum, default_value_t = Order::Natural)]
        order: Order,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to N(N+1) for N clients.
        #[arg(long)]
        max_rounds: Option<u64>,
        /// Write every transition as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Welfare of each mechanism over a grid of per-sample costs.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Strictly increasing costs, e.g. "0,0.1,0.2".
        #[arg(long, value_delimiter = ',', required = true)]
        cost_grid: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the generalization error.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        profile: Profile,
        #[arg(long, default_value_t = 500)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.15)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Brute,
    Structured,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MechanismArg {
    Semts,
    ModifiedFl,
}

impl From<MechanismArg> for MechanismKind {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Semts => MechanismKind::Semts,
            MechanismArg::ModifiedFl => MechanismKind::ModifiedFl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Initial {
    AllAbstain,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Natural,
    Shuffled,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AnalyzeOutput {
    low_types: Vec<usize>,
    high_types: Vec<usize>,
    #[serde(flatten)]
    report: NetworkEffectReport,
}

#[derive(Serialize)]
struct SimulateSummary {
    mechanism: MechanismKind,
    converged: bool,
    rounds: u64,
    max_rounds: u64,
    transitions: usize,
    initial: SocialState,
    final_state: SocialState,
    final_welfare: f64,
    final_residual: f64,
    w_star: f64,
    is_nash: bool,
}

#[derive(Serialize)]
struct OracleOutput {
    #[serde(flatten)]
    report: OracleReport,
    comparison: Comparison,
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Analyze { scenario, profile, out } => {
            let s = load_scenario(&scenario)?;
            profile.check(&s)?;
            let partition = partition_types(&s);
            let output = AnalyzeOutput {
                low_types: partition.low.iter().map(|i| i + 1).collect(),
                high_types: partition.high.iter().map(|i| i + 1).collect(),
                report: network_effect_report(&s, &profile)?,
            };
            emit(&to_json(&output)?, out.as_deref())
        }
        Command::Solve { scenario, method, landscape, out } => {
            let s = load_scenario(&scenario)?;
            let report = match method {
                Method::Brute => solve_efficient_brute(&s)?,
                Method::Structured => solve_efficient_structured(&s)?,
            };
            if let Some(path) = landscape {
                let rows = welfare_landscape(&s, DEFAULT_ENUMERATION_CAP)?;
                write_text(&path, &landscape_csv(s.type_count(), &rows)?)?;
            }
            emit(&to_json(&report)?, out.as_deref())
        }
        Command::Quote { scenario, profile, buyers, mechanism, out } => {
            let s = load_scenario(&scenario)?;
            let st = SocialState::new(profile, buyers);
            st.check(&s)?;
            let mech = Mechanism::build(mechanism.into(), &s)?;
            emit(&to_json(&quote_report(&s, &mech, &st)?)?, out.as_deref())
        }
        Command::Simulate { scenario, mechanism, initial, order, seed, max_rounds, trace, out } => {
            let s = load_scenario(&scenario)?;
            let mech = Mechanism::build(mechanism.into(), &s)?;
            let start = match initial {
                Initial::AllAbstain => InitialState::AllAbstain,
                Initial::Random => InitialState::Random(seed),
            };
            let update = match order {
                Order::Natural => UpdateOrder::Natural,
                Order::Shuffled => UpdateOrder::Shuffled(seed),
            };
            let max_rounds = max_rounds.unwrap_or_else(|| default_max_rounds(&s)).max(1);
            let result = run_dynamics(&s, &mech, &start, &update, max_rounds)?;
            if let Some(path) = trace {
                write_text(&path, &transitions_jsonl(&result)?)?;
            }
            let w_star = match mech.kind {
                MechanismKind::Semts => mech.w_star,
                MechanismKind::ModifiedFl => solve_efficient_brute(&s)
                    .or_else(|_| solve_efficient_structured(&s))?
                    .w_star,
            };
            let summary = SimulateSummary {
                mechanism: mech.kind,
                converged: result.converged,
                rounds: result.rounds,
                max_rounds,
                transitions: result.transitions.len(),
                is_nash: verify_equilibrium(&s, &mech, &result.final_state)?.is_nash,
                initial: result.initial,
                final_state: result.final_state,
                final_welfare: result.final_welfare,
                final_residual: result.final_residual,
                w_star,
            };
            emit(&to_json(&summary)?, out.as_deref())
        }
        Command::Sweep { scenario, cost_grid, out } => {
            let s = load_scenario(&scenario)?;
            let spec = SweepSpec::new(s, cost_grid)?;
            let rows = run_sweep(&spec);
            for row in &rows {
                if let Err(e) = &row.outcome {
                    eprintln!("netfed: sweep row c={} failed: {e}", row.c);
                }
            }
            emit(&sweep_csv(&rows)?, out.as_deref())
        }
        Command::Oracle { scenario, profile, trials, seed, tolerance, out } => {
            let s = load_scenario(&scenario)?;
            let setup = OracleSetup::from_profile(&s, &profile)?;
            let report = simulate_generalization(&setup, trials, seed)?;
            let comparison = compare_to_formula(&report, tolerance);
            emit(&to_json(&OracleOutput { report, comparison })?, out.as_deref())
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(value) = std::env::var("NETFED_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("NETFED_THREADS must be a positive integer (got {value:?})"))?;
    if threads == 0 {
        return Err("NETFED_THREADS must be a positive integer (got 0)".to_string());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("netfed: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netfed: {e}");
            ExitCode::from(1)
        }
    }
}
