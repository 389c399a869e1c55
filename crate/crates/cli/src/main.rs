use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use datorus_cli::output::write_outputs;
use datorus_cli::run::execute;
use datorus_cli::{verdict, CliError, Command, RunConfig};

/// DA diffeomorphism of the 3-torus: construction, verification and experiments.
#[derive(Parser, Debug)]
#[command(name = "datorus", version)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Build the DA map and check (P1)-(P7), locality and the spectrum.
    BuildVerify,
    /// Transition graphs, SCCs and quasi-attractor candidates per depth.
    Chain,
    /// Semiconjugacy residual, collapse witness and localization.
    Semiconj,
    /// Lyapunov, cs-exponent, SRB, basin and entropy diagnostics.
    Ergodic,
    /// Everything, with the summary verdict table.
    Full,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        cfg.apply_text(&text)?;
    }
    for kv in &cli.set {
        cfg.apply_override(kv)?;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let cfg = resolve(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(true);
    }
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::internal("cli.thread_pool", e))?;
    }
    let cmd = match cli.command {
        Sub::BuildVerify => Command::BuildVerify,
        Sub::Chain => Command::Chain,
        Sub::Semiconj => Command::Semiconj,
        Sub::Ergodic => Command::Ergodic,
        Sub::Full => Command::Full,
    };
    let art = execute(cmd, &cfg)?;
    let written = write_outputs(&cfg.out, &art)?;
    print!("{}", verdict::render(&art.report.verdicts));
    println!("config hash {}", art.report.config_hash);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(!art.report.any_fail())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
