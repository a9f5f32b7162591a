use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use relay_alloc::experiments::{applicable_policies, evaluation_power, simplex_grid, Simulation};
use relay_alloc::output::{self, CalibrationRow, Table};
use relay_alloc::{parse_config, selftest, ExperimentConfig, Policy, SweepResult};

const THREADS_ENV: &str = "RELAY_ALLOC_THREADS";

#[derive(Parser)]
#[command(name = "relay-alloc", version, about = "Power and resource allocation for relay-assisted broadcast channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average rate per user over the SNR grid.
    SweepSnr(RunArgs),
    /// Share of blocks carrying a relayed link, a direct link, or nothing.
    ModeStats(RunArgs),
    /// Two-user rate region over a weight grid.
    RateRegion(RunArgs),
    /// Every applicable policy on the same channel draws.
    ComparePolicies(RunArgs),
    /// Power price per SNR point, checked on the evaluation blocks.
    Calibrate(RunArgs),
    /// Runs the built-in invariant suites.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML). `.toml` may be omitted.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation blocks per operating point.
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    policy: Option<String>,
    /// Coherent multi-relay transmission instead of single-relay selection.
    #[arg(long)]
    miso: bool,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = parse_config(&self.config)?;
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(b) = self.blocks {
            config.blocks = b;
        }
        if self.miso {
            config.miso = true;
        }
        config.validate()?;
        Ok(config)
    }

    fn policy(&self) -> Result<Option<Policy>> {
        Ok(self.policy.as_deref().map(Policy::from_name).transpose()?)
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn finish(out: &Path, sub: &str, config: &ExperimentConfig, tables: &[(&str, Table)]) -> Result<()> {
    let manifest = output::write_outputs(out, sub, config, tables)?;
    for f in &manifest.files {
        println!("wrote {} ({} rows, sha256 {})", out.join(&f.name).display(), f.rows, &f.sha256[..16]);
    }
    Ok(())
}

fn print_sweep(result: &SweepResult) {
    println!(
        "{}: {} points in {:.2?} (config {})",
        result.config_name,
        result.points.len(),
        result.runtime,
        &result.config_hash[..16]
    );
    for p in &result.points {
        let rates: Vec<String> = p.rates_bits().iter().map(|r| format!("{r:.4}")).collect();
        println!(
            "  {:>6.1} dB  {:<28} rate [{}] b/s/Hz  power {:.4}  df {:.3} dt {:.3} none {:.3}",
            p.snr_db,
            p.policy.name(),
            rates.join(", "),
            p.averages.avg_power,
            p.averages.frac_df,
            p.averages.frac_dt,
            p.averages.frac_none
        );
    }
}

fn sweep_snr(args: &RunArgs) -> Result<()> {
    let mut config = args.load()?;
    if let Some(p) = args.policy()? {
        config.check_policy(p)?;
        config.policy = p;
    }
    let result = Simulation::new(&config)?.sweep(&[config.policy])?;
    print_sweep(&result);
    finish(&args.out, "sweep-snr", &config, &[("sweep.csv", output::sweep_table(&result, config.users()))])
}

fn mode_stats(args: &RunArgs) -> Result<()> {
    let config = args.load()?;
    let policies = match args.policy()? {
        Some(p) => vec![p],
        None => vec![Policy::GlobalWaterfill, Policy::ConstantPerBlock],
    };
    let result = relay_alloc::experiments::mode_fractions(&config, &policies)?;
    print_sweep(&result);
    finish(&args.out, "mode-stats", &config, &[("modes.csv", output::modes_table(&result))])
}

fn rate_region(args: &RunArgs) -> Result<()> {
    let config = args.load()?;
    if config.users() != 2 {
        bail!("rate-region needs a two-user configuration, got {} users", config.users());
    }
    let policies = match args.policy()? {
        Some(p) => vec![p],
        None => config.region.policies.clone(),
    };
    let sim = Simulation::new(&config)?;
    let grid = simplex_grid(config.region.points);
    let mut points = Vec::new();
    for &p in &policies {
        config.check_policy(p)?;
        let region = sim.rate_region(&grid, p)?;
        println!("  {:<28} {} boundary points at {} dB", p.name(), region.len(), config.region.snr_db);
        points.extend(region);
    }
    finish(&args.out, "rate-region", &config, &[("region.csv", output::region_table(&points, 2))])
}

fn compare_policies(args: &RunArgs) -> Result<()> {
    if args.policy.is_some() {
        bail!("compare-policies runs every applicable policy; --policy is not accepted");
    }
    let config = args.load()?;
    let result = Simulation::new(&config)?.sweep(&applicable_policies(&config))?;
    print_sweep(&result);
    finish(&args.out, "compare-policies", &config, &[("compare.csv", output::compare_table(&result, config.users()))])
}

fn calibrate(args: &RunArgs) -> Result<()> {
    let config = args.load()?;
    let policy = match args.policy()? {
        Some(p) => p,
        None if config.policy.is_global() => config.policy,
        None => Policy::GlobalWaterfill,
    };
    if !policy.is_global() {
        bail!("calibrate applies to global-waterfill or dt-only, not {policy}");
    }
    let sim = Simulation::new(&config)?;
    let mut rows = Vec::new();
    for &snr in &config.snr_db {
        let price = sim.calibrate(policy, &config.mu, snr)?;
        let evaluation_power = evaluation_power(&sim, policy, &config.mu, &price)?;
        println!(
            "  {:>6.1} dB  lambda {:.6e}  target {:.6e}  evaluation {:.6e} ({:+.3}%)",
            snr,
            price.lambda_g,
            price.target_avg_power,
            evaluation_power,
            100.0 * (evaluation_power / price.target_avg_power - 1.0)
        );
        rows.push(CalibrationRow {
            snr_db: snr,
            policy,
            price,
            evaluation_power,
        });
    }
    finish(&args.out, "calibrate", &config, &[("calibration.csv", output::calibration_table(&rows))])
}

fn run_selftest() -> Result<()> {
    let outcomes = selftest::run_all();
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        bail!("{failed} of {} self-test suites failed", outcomes.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::SweepSnr(a) => sweep_snr(a),
        Command::ModeStats(a) => mode_stats(a),
        Command::RateRegion(a) => rate_region(a),
        Command::ComparePolicies(a) => compare_policies(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Selftest => run_selftest(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
