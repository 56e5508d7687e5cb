use clap::Parser;
use kiw_core::run::{catalog, execute, RunConfig, RunError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Run discrete verification studies of tensor Itô-Wentzell formulas.
#[derive(Parser, Debug)]
#[command(name = "kiw", version)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario to run when no config is given.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    /// Output directory for report.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the built-in scenarios and exit.
    #[arg(long)]
    list: bool,
    /// Emit the catalog and run summaries as JSON.
    #[arg(long)]
    machine_readable: bool,
}

const WORKERS_ENV: &str = "KIW_WORKERS";

fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn list(machine: bool) {
    let entries = catalog();
    if machine {
        println!("{}", serde_json::to_string_pretty(&entries).expect("catalog serializes"));
        return;
    }
    let width = entries.iter().map(|e| e.name.len()).max().unwrap_or(0);
    for e in entries {
        println!("{:width$}  {:22}  {:9}  {}", e.name, e.theorem, e.manifold, e.description);
    }
}

fn run(args: &Args) -> Result<i32, RunError> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::for_scenario(name),
        (None, None) => return Err(RunError::Parse("pass --config FILE or --scenario NAME (see --list)".into())),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.paths {
        cfg.paths = p;
    }
    if let Some(l) = args.levels {
        cfg.levels = l;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    let output = execute(&cfg, workers())?;
    let (csv, manifest) = output.write(&cfg.out)?;
    let r = &output.report;
    if args.machine_readable {
        let summary = serde_json::json!({
            "scenario": r.scenario,
            "theorem": r.theorem.key(),
            "fitted_order": r.fitted_order,
            "stopped_fraction": r.stopped_fraction,
            "csv": csv,
            "manifest": manifest,
        });
        println!("{summary}");
    } else {
        println!("{} ({}), seed {}, {} paths", r.scenario, r.theorem.key(), r.seed, r.paths);
        for l in &r.levels {
            println!("  steps {:5}  rms sup residual {:.3e}", l.steps, l.rms_sup_residual);
        }
        println!("  fitted order {:.3}", r.fitted_order);
        println!("  wrote {} and {}", csv.display(), manifest.display());
    }
    if output.blown_up() {
        eprintln!("kiw: {:.0}% of paths blew up or left the atlas", 100.0 * r.stopped_fraction);
    }
    Ok(output.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list {
        list(args.machine_readable);
        return ExitCode::SUCCESS;
    }
    match run(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("kiw: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
