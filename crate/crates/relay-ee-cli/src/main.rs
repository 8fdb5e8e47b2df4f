//! Command-line front door: scenario generation, single runs, and Monte
//! Carlo sweeps over the allocation engine, with CSV output for plotting
//! pipelines.
//!
//! Exit codes: 0 success, 1 validation/usage, 2 infeasible budget, 3 oracle
//! guard rail.

use clap::{Args, Parser, Subcommand};
use relay_ee::channel::{draw_channels, load_channels, save_channels, SystemConfig};
use relay_ee::pipeline::{
    monte_carlo, run_scheme, RunResult, Scheme, SweepAxis, SweepRow, SweepSpec,
};
use relay_ee::{configure_thread_pool, Error, Result};
use serde::Deserialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "relay-ee", version, about = "Relay-assisted OFDM downlink energy-efficiency harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draws a seeded channel realization and writes it as JSON.
    Generate(GenerateArgs),
    /// Runs one scheme on one realization and prints the solution.
    Run(RunArgs),
    /// Sweeps a scenario axis with Monte Carlo trials, one CSV row per
    /// (grid value, scheme) cell.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario JSON file; any subset of the config fields, rest defaulted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override; beats the RELAY_EE_SEED env var, which beats the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (0 = runtime default).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Prints the resolved config JSON to stdout before running.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output channel file.
    #[arg(long, default_value = "channels.json")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Channel file to solve; drawn fresh from the config when absent.
    #[arg(long)]
    channels: Option<PathBuf>,
    /// Scheme: proposed, oracle, randr-opa, or beam-epa.
    #[arg(long, default_value = "proposed")]
    scheme: String,
    /// CSV file to append the run's summary row to.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Swept axis: cnr_db, p_static, xi, p_max, num_users, num_subcarriers.
    #[arg(long)]
    axis: String,
    /// First grid value.
    #[arg(long)]
    from: f64,
    /// Last grid value.
    #[arg(long)]
    to: f64,
    /// Number of grid points (evenly spaced, endpoints included).
    #[arg(long, default_value_t = 5)]
    steps: usize,
    /// Monte Carlo trials per grid point (seeds base..base+trials).
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Comma-separated schemes to compare.
    #[arg(long, default_value = "proposed")]
    scheme: String,
    /// Output CSV file (overwritten).
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

/// Config file schema: every field optional, defaults below.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CliConfig {
    bandwidth_hz: Option<f64>,
    num_subcarriers: Option<usize>,
    num_users: Option<usize>,
    num_relays: Option<usize>,
    noise_psd: Option<f64>,
    avg_cnr_db: Option<f64>,
    p_max_w: Option<f64>,
    p_static_w: Option<f64>,
    xi: Option<f64>,
    eta: Option<f64>,
    alpha: Option<Vec<f64>>,
    seed: Option<u64>,
}

impl CliConfig {
    /// Fills the gaps with the reference desk scenario.
    fn resolve(self) -> SystemConfig {
        let num_users = self.num_users.unwrap_or(2);
        SystemConfig {
            bandwidth_hz: self.bandwidth_hz.unwrap_or(1e6),
            num_subcarriers: self.num_subcarriers.unwrap_or(4),
            num_users,
            num_relays: self.num_relays.unwrap_or(5),
            noise_psd: self.noise_psd.unwrap_or(1e-9),
            avg_cnr_db: self.avg_cnr_db.unwrap_or(10.0),
            p_max_w: self.p_max_w.unwrap_or(1.0),
            p_static_w: self.p_static_w.unwrap_or(0.2),
            xi: self.xi.unwrap_or(0.0),
            eta: self.eta.unwrap_or(0.38),
            alpha: self.alpha.unwrap_or_else(|| vec![1.0; num_users]),
            seed: self.seed.unwrap_or(0),
        }
    }
}

/// Seed precedence: flag over RELAY_EE_SEED env over file value.
fn apply_seed_overrides(config: &mut SystemConfig, common: &CommonArgs) -> Result<()> {
    if let Some(seed) = common.seed {
        config.seed = seed;
    } else if let Ok(var) = std::env::var("RELAY_EE_SEED") {
        config.seed = var
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("RELAY_EE_SEED {var:?} is not a u64")))?;
    }
    Ok(())
}

fn resolve_config(common: &CommonArgs) -> Result<SystemConfig> {
    let file = match &common.config {
        Some(path) => serde_json::from_str::<CliConfig>(&fs::read_to_string(path)?)?,
        None => CliConfig::default(),
    };
    let mut config = file.resolve();
    apply_seed_overrides(&mut config, common)?;
    config.validate()?;
    Ok(config)
}

fn prepare(common: &CommonArgs) -> Result<SystemConfig> {
    let config = resolve_config(common)?;
    configure_thread_pool(common.jobs);
    if common.print_config {
        println!("{}", serde_json::to_string_pretty(&config)?);
    }
    Ok(config)
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let config = prepare(&args.common)?;
    let ch = draw_channels(&config)?;
    save_channels(&args.out, &config, &ch)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    configure_thread_pool(args.common.jobs);
    let (config, ch) = match &args.channels {
        Some(path) => {
            let (mut stored, ch) = load_channels(path)?;
            apply_seed_overrides(&mut stored, &args.common)?;
            (stored, ch)
        }
        None => {
            let config = resolve_config(&args.common)?;
            let ch = draw_channels(&config)?;
            (config, ch)
        }
    };
    if args.common.print_config {
        println!("{}", serde_json::to_string_pretty(&config)?);
    }
    let scheme = Scheme::from_str(&args.scheme)?;
    let run = run_scheme(scheme, &config, &ch)?;
    print_run(&run);
    if let Some(path) = &args.out {
        append_rows(path, config.num_users, &[single_run_row(&run)])?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let base = prepare(&args.common)?;
    if args.steps == 0 {
        return Err(Error::InvalidConfig("steps must be at least 1".into()));
    }
    let grid: Vec<f64> = (0..args.steps)
        .map(|i| {
            if args.steps == 1 {
                args.from
            } else {
                args.from + (args.to - args.from) * i as f64 / (args.steps - 1) as f64
            }
        })
        .collect();
    let schemes = args
        .scheme
        .split(',')
        .map(|s| Scheme::from_str(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let spec = SweepSpec { base: base.clone(), axis: SweepAxis::from_str(&args.axis)?, grid, trials: args.trials, schemes };
    let rows = monte_carlo(&spec)?;
    fs::write(&args.out, "")?;
    append_rows(&args.out, base.num_users, &rows)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn print_run(run: &RunResult) {
    let sol = &run.solution;
    let se: f64 = sol.rates.iter().sum();
    println!("scheme {} seed {}", run.scheme, run.seed);
    println!("ee {} bit/Hz/J", sol.ee);
    println!("se {} bit/s/Hz", se);
    println!("delta {} bit/s/Hz", sol.delta);
    println!("p_trans {} W", sol.p_trans);
    println!("p_total {} W", sol.p_total);
    println!("kappa {} converged {}", run.iterations, run.converged);
    for (k, rate) in sol.rates.iter().enumerate() {
        println!("rate user {} {} bit/s/Hz", k + 1, rate);
    }
}

/// A run summary in the sweep schema, keyed by its seed.
fn single_run_row(run: &RunResult) -> SweepRow {
    let sol = &run.solution;
    SweepRow {
        axis: SweepAxis::CnrDb,
        value: run.config.avg_cnr_db,
        scheme: run.scheme,
        trials_ok: 1,
        ee_mean: sol.ee,
        ee_stderr: 0.0,
        se_mean: sol.rates.iter().sum(),
        ptrans_mean: sol.p_trans,
        delta_mean: sol.delta,
        r_user_mean: sol.rates.clone(),
    }
}

/// Appends rows, emitting the header only when the file starts empty.
/// Numbers use shortest round-trip decimals.
fn append_rows(path: &Path, k_total: usize, rows: &[SweepRow]) -> Result<()> {
    let mut text = String::new();
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    if fresh {
        text.push_str("axis,value,scheme,trials_ok,ee_mean,ee_stderr,se_mean,ptrans_mean,delta_mean");
        for k in 1..=k_total {
            text.push_str(&format!(",r_user_{k}"));
        }
        text.push('\n');
    }
    for row in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}",
            row.axis,
            row.value,
            row.scheme,
            row.trials_ok,
            row.ee_mean,
            row.ee_stderr,
            row.se_mean,
            row.ptrans_mean,
            row.delta_mean
        ));
        for rate in &row.r_user_mean {
            text.push_str(&format!(",{rate}"));
        }
        text.push('\n');
    }
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    std::io::Write::write_all(&mut file, text.as_bytes())?;
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InfeasibleBudget { .. } => 2,
        Error::GuardRail(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
