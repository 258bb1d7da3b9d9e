use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nevlab_cli::{init_threads, plot_csv, run, validate, PlotRequest};

/// Numerical value-distribution experiments on radial surfaces.
#[derive(Parser)]
#[command(name = "nevlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Plot columns of a CSV table as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long, default_value = "r")]
        x: String,
        /// Column to plot; repeat for several lines.
        #[arg(long, required = true)]
        y: Vec<String>,
        /// Output file; defaults to the CSV path with an .svg extension.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        log_x: bool,
        #[arg(long)]
        log_y: bool,
        #[arg(long)]
        title: Option<String>,
        /// Dashed horizontal reference line.
        #[arg(long, allow_hyphen_values = true)]
        reference: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Run { config, out } => run(&config, out.as_deref()).map(|summary| {
            for a in &summary.assertions {
                println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            println!("wrote {}", summary.out_dir.display());
            let failed = summary.failed();
            if failed.is_empty() {
                0
            } else {
                for a in failed {
                    eprintln!("assertion failed: {}", a.name);
                }
                2
            }
        }),
        Command::Validate { config } => validate(&config, None).map(|r| {
            println!("{}: valid {} config", config.display(), r.config.experiment.name());
            0
        }),
        Command::Plot { csv, x, y, out, log_x, log_y, title, reference } => {
            let out = out.unwrap_or_else(|| csv.with_extension("svg"));
            let req = PlotRequest { x, y, log_x, log_y, title, reference };
            plot_csv(&csv, &req, &out).map(|()| {
                println!("wrote {}", out.display());
                0
            })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
