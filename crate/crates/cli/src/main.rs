use clap::{Parser, Subcommand};
use dynlap_cli::config::ExperimentConfig;
use dynlap_cli::{output, presets, runner};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dynlap",
    version,
    about = "Finite-time coherent sets via the weighted dynamic Laplacian"
)]
struct Cli {
    /// Size of the rayon thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Override the eigenvalue scaling convention.
    #[arg(long, global = true, value_parser = ["with_half", "raw"])]
    convention: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a built-in preset.
    Preset {
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List the built-in presets.
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("dynlap: could not configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Presets => {
            for preset in presets::PRESETS {
                println!("{:<22} {}", preset.name, preset.description);
            }
            return ExitCode::SUCCESS;
        }
        Command::Run { config, out } => {
            let text = match std::fs::read_to_string(config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("dynlap: cannot read {}: {e}", config.display());
                    return ExitCode::FAILURE;
                }
            };
            match ExperimentConfig::parse(&text) {
                Ok(cfg) => run(cfg, out, &cli),
                Err(e) => {
                    eprintln!("dynlap: {e}");
                    return ExitCode::FAILURE;
                }
            }
        }
        Command::Preset { name, out } => match presets::find(name) {
            Some(preset) => run((preset.build)(), out, &cli),
            None => {
                eprintln!("dynlap: unknown preset `{name}` (try `dynlap presets` for the list)");
                return ExitCode::FAILURE;
            }
        },
    };
    match result {
        Ok(failed_checks) if failed_checks == 0 => ExitCode::SUCCESS,
        Ok(failed_checks) => {
            eprintln!("dynlap: {failed_checks} check(s) reported failure");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("dynlap: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(
    mut cfg: ExperimentConfig,
    out: &PathBuf,
    cli: &Cli,
) -> Result<usize, Box<dyn std::error::Error>> {
    if let Some(conv) = &cli.convention {
        cfg.convention = match conv.as_str() {
            "raw" => dynlap::laplacian::Convention::Raw,
            _ => dynlap::laplacian::Convention::WithHalf,
        };
    }
    let summary = runner::run_experiment(&cfg, cli.quiet)?;
    output::write_bundle(&summary, out)?;
    let failed = summary
        .checks
        .iter()
        .filter(|(k, v)| k.ends_with(".pass") && v == "false")
        .count();
    if !cli.quiet {
        for (key, value) in &summary.checks {
            println!("{key} = {value}");
        }
        println!("bundle written to {}", out.display());
    }
    Ok(failed)
}
