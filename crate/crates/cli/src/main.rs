use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use plotsieve::cascade::{CascadeSession, PlotKind};
use plotsieve::raster::WaferMode;
use plotsieve_cli::commands::{self, TrainSpec};
use plotsieve_cli::service::Service;
use plotsieve_cli::{http, report, CliError, Result};

#[derive(Parser)]
#[command(name = "plotsieve", version, about = "Triage yield-analysis plots with GAN recognizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RasterKind {
    Wafer,
    Corr,
    Box,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Fails,
    Passes,
}

#[derive(Clone, Copy, ValueEnum)]
enum SessionKind {
    Wafer,
    Correlation,
    Box,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a product-analog corpus (dies, e-tests, tools, labels).
    Synth {
        #[arg(long)]
        product: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the product's wafer count.
        #[arg(long)]
        wafers: Option<usize>,
    },
    /// Rasterize plots into TERN files.
    Raster {
        #[arg(long, value_enum)]
        kind: RasterKind,
        /// Corpus directory (wafer and corr).
        #[arg(long)]
        data: Option<PathBuf>,
        /// `option,value` CSV (box).
        #[arg(long)]
        values: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "fails")]
        mode: Mode,
        #[arg(long)]
        bin: Option<u16>,
        /// E-tests to plot (corr); all when omitted.
        #[arg(long)]
        etest: Vec<String>,
        #[arg(long, allow_negative_numbers = true)]
        y_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        y_max: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one recognizer from lists of TERN files.
    Train {
        #[arg(long)]
        class: String,
        #[arg(long)]
        train_list: PathBuf,
        #[arg(long)]
        val_list: PathBuf,
        /// JSON training setup; reduced networks when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path; the report goes to `<out>.report.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan a directory of TERN plots with a cascade file.
    Scan {
        #[arg(long)]
        cascade: PathBuf,
        #[arg(long)]
        plots: PathBuf,
        /// Partition JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a partition as a static HTML gallery.
    Report {
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TERN directory for thumbnails.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Create a labeling session from a directory of TERN plots.
    Init {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        plots: PathBuf,
        #[arg(long, value_enum)]
        kind: SessionKind,
    },
    /// Serve a session over HTTP.
    Serve {
        #[arg(long)]
        port: u16,
        #[arg(long)]
        session: PathBuf,
        /// Seconds a validation-pass checkpoint waits for a decision before
        /// the automated proxy decides; 0 never waits.
        #[arg(long, default_value_t = 300)]
        inspection_timeout: u64,
    },
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| CliError::Usage(format!("--{flag} is required for this kind")))
}

fn write_json(value: &impl serde::Serialize, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| CliError::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            product,
            seed,
            out,
            wafers,
        } => commands::synth(&product, seed, wafers, &out),
        Command::Raster {
            kind,
            data,
            values,
            out,
            mode,
            bin,
            etest,
            y_min,
            y_max,
            seed,
        } => {
            let n = match kind {
                RasterKind::Wafer => {
                    let mode = match mode {
                        Mode::Fails => WaferMode::MarkFails,
                        Mode::Passes => WaferMode::MarkPasses,
                    };
                    commands::raster_wafers(&require(data, "data")?, &out, mode, bin)?
                }
                RasterKind::Corr => commands::raster_correlations(&require(data, "data")?, &out, require(bin, "bin")?, &etest)?,
                RasterKind::Box => commands::raster_boxes(
                    &require(values, "values")?,
                    &out,
                    (require(y_min, "y-min")?, require(y_max, "y-max")?),
                    seed,
                )?,
            };
            eprintln!("wrote {n} images to {}", out.display());
            Ok(())
        }
        Command::Train {
            class,
            train_list,
            val_list,
            config,
            out,
        } => {
            let spec = match config {
                Some(p) => TrainSpec::load(&p)?,
                None => TrainSpec::default(),
            };
            let report = commands::train_command(&class, &train_list, &val_list, &spec, &out)?;
            eprintln!(
                "{} iterations, stop reason {:?}, validation complete: {}",
                report.iterations, report.stop_reason, report.validation_complete
            );
            Ok(())
        }
        Command::Scan { cascade, plots, out } => write_json(&commands::scan_command(&cascade, &plots)?, out.as_ref()),
        Command::Report { partition, out, plots } => {
            report::render(&report::load_partition(&partition)?, plots.as_deref(), &out)
        }
        Command::Init { session, plots, kind } => {
            let kind = match kind {
                SessionKind::Wafer => PlotKind::Wafer,
                SessionKind::Correlation => PlotKind::Correlation,
                SessionKind::Box => PlotKind::BoxPlot,
            };
            let n = commands::init_session(&session, &plots, kind)?;
            eprintln!("session {} with {n} plots", session.display());
            Ok(())
        }
        Command::Serve {
            port,
            session,
            inspection_timeout,
        } => {
            let svc = Service::start(CascadeSession::open(&session)?, Duration::from_secs(inspection_timeout));
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::io(&session, e))?;
            eprintln!("serving {} on 127.0.0.1:{port}", session.display());
            rt.block_on(http::serve(svc, port)).map_err(|e| CliError::io(&session, e))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
