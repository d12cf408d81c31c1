//! Command-line front end: build graphs, compute heat tables, run condition
//! checks and consolidate reports, all driven by a JSON run config.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fraclab::graph::graph_to_json;
use fraclab::heat::{Spectrum, SPECTRUM_CAP};
use fraclab::runner::{
    self, RunConfig, EXIT_INCONCLUSIVE, EXIT_INVALID_CONFIG, EXIT_NO_REPORTS, EXIT_PASS,
};
use fraclab::Error;

#[derive(Parser)]
#[command(
    name = "fraclab",
    about = "Numerical laboratory for Dirichlet forms, resistance and heat kernels on fractal approximation graphs"
)]
struct Cli {
    /// Path to the JSON run config (required by build, heat, verify)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override the config's cache switch
    #[arg(long, global = true)]
    cache: Option<bool>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured graph and write graph.json
    Build,
    /// Compute the heat kernel table (cached by content hash)
    Heat,
    /// Run every configured condition check and write reports
    Verify,
    /// Consolidate existing reports into a table (never recomputes)
    Report {
        /// Run directory holding report-*.json (defaults to --out)
        run_dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<(RunConfig, PathBuf), Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let text = fs::read_to_string(path)?;
    let mut config = RunConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(cache) = cli.cache {
        config.cache = cache;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("fraclab-out"));
    config.output_dir = Some(out.clone());
    Ok((config, out))
}

fn run_command(cli: &Cli) -> Result<i32, Error> {
    if let Some(jobs) = cli.jobs {
        // ignore failure: the pool can only be initialized once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match &cli.command {
        Command::Build => {
            let (config, out) = load_config(cli)?;
            let graph = config.build_graph()?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("graph.json"), graph_to_json(&graph) + "\n")?;
            eprintln!(
                "built {} vertices, {} edges -> {}",
                graph.vertex_count(),
                graph.edge_count(),
                out.join("graph.json").display()
            );
            Ok(EXIT_PASS)
        }
        Command::Heat => {
            let (config, out) = load_config(cli)?;
            let graph = config.build_graph()?;
            if graph.vertex_count() > SPECTRUM_CAP {
                return Err(Error::SpectrumCap {
                    size: graph.vertex_count(),
                    cap: SPECTRUM_CAP,
                });
            }
            let plan = config.plan()?;
            let spectrum = Spectrum::compute(&graph)?;
            fs::create_dir_all(&out)?;
            let (key, hit) =
                runner::heat_table_artifacts(&graph, &spectrum, &plan, &out, config.cache)?;
            eprintln!(
                "heat table heat-{key}.bin ({})",
                if hit { "cache hit" } else { "computed" }
            );
            Ok(EXIT_PASS)
        }
        Command::Verify => {
            let (config, out) = load_config(cli)?;
            let summary = runner::run(&config, &out)?;
            for (name, verdict) in &summary.verdicts {
                eprintln!("{name}: {verdict:?}");
            }
            Ok(summary.exit_code)
        }
        Command::Report { run_dir } => {
            let dir = match run_dir.clone().or_else(|| cli.out.clone()) {
                Some(d) => d,
                None => load_config(cli)?.1,
            };
            let (text, csv) = runner::report(&dir)?;
            fs::write(dir.join("report.csv"), &csv)?;
            print!("{text}");
            Ok(EXIT_PASS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let code = match &e {
                Error::Config(msg) => {
                    eprintln!("invalid config: {msg}");
                    if matches!(cli.command, Command::Report { .. }) && msg == "no reports" {
                        EXIT_NO_REPORTS
                    } else {
                        EXIT_INVALID_CONFIG
                    }
                }
                Error::VertexBudget { .. } | Error::UnknownFamily(_) => {
                    eprintln!("invalid config: {e}");
                    EXIT_INVALID_CONFIG
                }
                Error::NoConvergence { .. } => {
                    eprintln!("solver did not converge: {e}");
                    EXIT_INCONCLUSIVE
                }
                _ => {
                    eprintln!("error: {e}");
                    1
                }
            };
            ExitCode::from(code as u8)
        }
    }
}
