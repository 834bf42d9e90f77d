//! `entrance-lab`: batch runner for the entrance/exit chain experiments.
//!
//! Exit codes: 0 when every non-optional record passes, 1 when any fails,
//! 2 on config or input errors.

mod config;
mod runner;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, ConfigError, ExperimentKind};
use runner::{Context, RunError, Sink};

const OUT_ENV: &str = "ENTRANCE_LAB_OUT";
const DEFAULT_OUT: &str = "lab-out";
const DEFAULT_REPORTS: &str = "reports.jsonl";

const SUITES: [(&str, &str, &str); 3] = [
    ("exact", "finite-chain identities in f64 and exact arithmetic (seconds)", include_str!("../../../suites/exact.toml")),
    ("mc-fast", "stationarity, alternation and overshoot LLN at reduced sizes (about a minute)", include_str!("../../../suites/mc-fast.toml")),
    ("mc-full", "every Monte Carlo check at full size (tens of minutes)", include_str!("../../../suites/mc-full.toml")),
];

#[derive(Parser, Debug)]
#[command(name = "entrance-lab", version, about = "Entrance and exit chain experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides ENTRANCE_LAB_OUT and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// List experiment kinds and built-in suites.
    #[arg(long)]
    list: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a built-in suite: exact, mc-fast or mc-full.
    Suite { name: String },
}

fn list() {
    println!("experiment kinds:");
    for k in ExperimentKind::ALL {
        let (what, fields) = k.describe();
        println!("  {:<20} {what}\n  {:<20}   fields: {fields}", k.name(), "");
    }
    println!("suites:");
    for (name, what, _) in SUITES {
        println!("  {name:<20} {what}");
    }
}

fn load(cli: &Cli) -> Result<Config, ConfigError> {
    match (&cli.command, &cli.config) {
        (Some(Command::Suite { name }), _) => {
            let (_, _, text) = SUITES.iter().find(|s| s.0 == name).ok_or_else(|| ConfigError::UnknownSuite(name.clone()))?;
            Config::parse(text)
        }
        (None, Some(path)) => Config::load(path),
        (None, None) => Err(ConfigError::Parse("nothing to run: pass --config <path>, `suite <name>` or --list".into())),
    }
}

fn out_dir(cli: &Cli, config: &Config) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn run(cli: &Cli) -> Result<bool, RunError> {
    let config = load(cli)?;
    let seed = cli.seed.or(config.seed).ok_or(ConfigError::MissingSeed)?;
    let dir = out_dir(cli, &config);
    std::fs::create_dir_all(&dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
    let ctx = Context { seed, config_hash: config.hash.clone(), out_dir: dir.clone() };
    let mut sink = Sink::create(dir.join(config.output.reports.as_deref().unwrap_or(DEFAULT_REPORTS)))?;

    let results = runner::run_all(&config, &ctx, &mut sink);

    let mut summary = format!("# config_hash={} seed={}\n", ctx.config_hash, ctx.seed);
    let mut all_pass = true;
    let mut first_error = None;
    for r in results {
        match r {
            Ok(out) => {
                for line in &out.lines {
                    summary.push_str(line);
                    if out.optional {
                        summary.push_str(" [optional]");
                    }
                    summary.push('\n');
                }
                all_pass &= out.optional || out.pass();
            }
            Err(err) => {
                summary.push_str(&format!("ERROR {err}\n"));
                first_error.get_or_insert(err);
            }
        }
    }
    print!("{summary}");
    let path = dir.join("summary.txt");
    std::fs::File::create(&path)
        .and_then(|mut f| f.write_all(summary.as_bytes()))
        .map_err(|source| RunError::Io { path, source })?;
    match first_error {
        Some(err) => Err(err),
        None => Ok(all_pass),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list {
        list();
        return ExitCode::SUCCESS;
    }
    if let Some(n) = cli.threads {
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {err}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
