use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use stratquant::experiment::{
    design_point, emit_outputs, read_results_csv, render_plots, run_sweep, ExperimentConfig,
    Overrides, SenderMode,
};
use stratquant::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stratquant",
    version,
    about = "Strategic quantizer experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML experiment configuration; defaults apply for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated sender modes (S_n, S_f, S_b, S_p).
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<SenderMode>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of messages.
    #[arg(long = "m")]
    m: Option<usize>,
    /// Number of quadrature panels along X.
    #[arg(long)]
    grid_panels: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            output_dir: self.out.clone(),
            modes: self.modes.clone(),
            seed: self.seed,
            num_cells: self.m,
            grid_panels: self.grid_panels,
        });
        cfg.resolve()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Design and evaluate one point and print its report as JSON.
    Design {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        sigma_s2: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mode: SenderMode,
    },
    /// Run the full sweep and write results.csv, artifacts and plots.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Re-render the plots from an existing results.csv.
    Plot {
        /// Directory holding results.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a configuration and print it with all defaults filled in.
    ValidateConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Design {
            cfg,
            sigma_s2,
            rho,
            lambda,
            mode,
        } => {
            let cfg = cfg.resolve()?;
            let artifact = design_point(&cfg, sigma_s2, rho, lambda, mode)?;
            let text =
                serde_json::to_string_pretty(&artifact).map_err(|e| Error::Io(e.to_string()))?;
            println!("{text}");
        }
        Command::Sweep { cfg } => {
            let cfg = cfg.resolve()?;
            let table = run_sweep(&cfg)?;
            let warnings = emit_outputs(&table)?;
            for w in &warnings {
                eprintln!("{}", json!({ "warning": w }));
            }
            println!(
                "{}",
                json!({
                    "rows": table.rows.len(),
                    "failed": table.failed(),
                    "reused": table.reused,
                    "results": cfg.output_dir.join("results.csv"),
                })
            );
        }
        Command::Plot { out } => {
            let rows = read_results_csv(&out.join("results.csv"))?;
            let cfg_path = out.join("config.resolved.toml");
            let cfg = cfg_path
                .exists()
                .then(|| ExperimentConfig::load(&cfg_path))
                .transpose()?;
            let files = render_plots(&rows, cfg.as_ref(), &out.join("plots"))?;
            println!("{}", json!({ "plots": files }));
        }
        Command::ValidateConfig { cfg } => {
            print!("{}", cfg.resolve()?.to_toml_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!(
                "{}",
                json!({ "error": { "kind": "usage", "message": msg.trim() } })
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": { "kind": e.kind(), "message": e.message() } })
            );
            ExitCode::FAILURE
        }
    }
}
