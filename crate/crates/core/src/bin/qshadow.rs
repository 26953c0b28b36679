use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quasishadow::report::{run, ExperimentConfig, Outcome, ReportError};

#[derive(Parser)]
#[command(name = "qshadow", version, about = "Quasi-shadowing experiments on the cat-circle skew product")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace a noisy pseudo orbit.
    Shadow(Common),
    /// Close a near return into a periodic center leaf.
    Close(Common),
    /// Build the semiconjugacy to a perturbed map on a grid.
    Stability(Common),
    /// Run a child experiment over a parameter grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "QS_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// Overrides orbit.seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

fn execute(kind: &str, args: &Common) -> Result<Outcome, String> {
    let text = fs::read_to_string(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut config = ExperimentConfig::from_json(&text).map_err(|e| e.to_string())?;
    if config.experiment.kind() != kind {
        return Err(format!(
            "config describes a {} experiment, not {kind}",
            config.experiment.kind()
        ));
    }
    if let Some(seed) = args.seed {
        config.orbit.seed = seed;
    }
    run(&config, Some(&text)).map_err(|e: ReportError| e.to_string())
}

fn write(out: &Path, outcome: &Outcome) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let json = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    fs::write(out.join("report.json"), json + "\n")?;
    for a in &outcome.artifacts {
        fs::write(out.join(&a.name), &a.contents)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Shadow(a) => ("shadow", a),
        Command::Close(a) => ("close", a),
        Command::Stability(a) => ("stability", a),
        Command::Sweep(a) => ("sweep", a),
    };
    let outcome = match execute(kind, args) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = write(&args.out, &outcome) {
        eprintln!("error: writing {}: {e}", args.out.display());
        return ExitCode::from(2);
    }
    let report = &outcome.report;
    if !args.quiet {
        for c in &report.checks {
            println!(
                "{} {} = {:e} {} {:e}",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.value,
                c.relation,
                c.bound
            );
        }
        println!(
            "{kind}: {} ({:.3}s) -> {}",
            if report.passed { "pass" } else { "fail" },
            report.runtime_seconds,
            args.out.join("report.json").display()
        );
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
