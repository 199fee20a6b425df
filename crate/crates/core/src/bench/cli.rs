//! `albench` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::report;
use super::{aggregate_all, presets, with_jobs, Experiment, ExperimentConfig};
use crate::data::{regime_for, RegimeTable};
use crate::domain::{RegimeName, RunRecord};
use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "albench", version, about = "Pool-based active-learning benchmark")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (or file for export-plot).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run only this seed instead of the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for seeds and sweep cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write 0 instead of measured wall-clock seconds.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep, run every query method for every seed and write the report.
    Run {
        /// Use a built-in preset instead of --config.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value = "random")]
        baseline: String,
    },
    /// Only the hyperparameter sweep on the starting budget.
    Sweep {
        #[arg(long)]
        preset: Option<String>,
    },
    /// Aggregate run records and compare against a baseline series.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "random")]
        baseline: String,
    },
    /// Print the label regimes for a class count.
    Regimes {
        #[arg(long)]
        classes: usize,
        /// Size of the available validation split.
        #[arg(long)]
        val_split: Option<usize>,
        /// Ignore the published per-dataset overrides.
        #[arg(long)]
        heuristic: bool,
    },
    /// Learning-curve SVG plus a wide CSV from run records.
    ExportPlot {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
    /// Print a built-in preset config (study, cold-start, loss-weighting).
    Preset { name: String },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_main_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn cli_main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            }
        }
    }
}

fn load_config(cli: &Cli, preset: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = match (preset, &cli.config) {
        (Some(_), Some(_)) => return Err(Error::Config("use either --preset or --config".into())),
        (Some(name), None) => presets::by_name(name, vec![0, 1, 2])
            .ok_or_else(|| Error::Config(format!("unknown preset `{name}`; known: {}", presets::PRESETS.join(", "))))?,
        (None, Some(path)) => ExperimentConfig::load(path)?,
        (None, None) => return Err(Error::Config("--config or --preset is required".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if cli.no_timing {
        cfg.timing = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("runs"))
}

fn series_present(records: &[RunRecord], series: &str) -> bool {
    records.iter().any(|r| r.series() == series)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match &cli.command {
        Command::Run { preset, baseline } => {
            let cfg = load_config(&cli, preset.as_deref())?;
            let dir = out_dir(&cli, &cfg);
            let exp = Experiment::from_config(cfg)?;
            let output = with_jobs(cli.jobs, || exp.execute())??;
            report::write_sweeps(&dir, &output.sweeps)?;
            let paths = report::write_runs(&dir, &output.runs)?;
            for p in &paths {
                writeln!(out, "wrote {}", p.display()).map_err(io)?;
            }
            let records = output.records()?;
            if series_present(&records, baseline) {
                let r = report::write_report(&dir, &records, baseline)?;
                writeln!(out, "wrote {}", r.report.display()).map_err(io)?;
            }
            if records.iter().any(|r| r.variant.as_deref() == Some("balanced"))
                && records.iter().any(|r| r.variant.as_deref() == Some("uniform"))
            {
                let path = dir.join("loss_weighting.csv");
                fs::write(&path, report::variant_comparison_csv(&records, "balanced", "uniform")?)
                    .map_err(|e| Error::io(&path, e))?;
                writeln!(out, "wrote {}", path.display()).map_err(io)?;
            }
            Ok(())
        }
        Command::Sweep { preset } => {
            let cfg = load_config(&cli, preset.as_deref())?;
            let dir = out_dir(&cli, &cfg);
            let exp = Experiment::from_config(cfg)?;
            let sweeps = with_jobs(cli.jobs, || exp.execute_sweeps())??;
            for p in report::write_sweeps(&dir, &sweeps)? {
                writeln!(out, "wrote {}", p.display()).map_err(io)?;
            }
            Ok(())
        }
        Command::Report { runs, baseline } => {
            let records = report::read_records(runs)?;
            let dir = cli.out.clone().unwrap_or_else(|| runs.clone());
            let paths = report::write_report(&dir, &records, baseline)?;
            let text = fs::read_to_string(&paths.report).map_err(|e| Error::io(&paths.report, e))?;
            write!(out, "{text}").map_err(io)
        }
        Command::Regimes {
            classes,
            val_split,
            heuristic,
        } => {
            let table = if *heuristic { RegimeTable::heuristic() } else { RegimeTable::paper() };
            writeln!(out, "regime,starting_budget,query_size,query_steps,final_budget,val_size").map_err(io)?;
            for name in RegimeName::ALL {
                let r = regime_for(*classes, name, &table, *val_split)?;
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    name,
                    r.starting_budget,
                    r.query_size,
                    r.query_steps,
                    r.final_budget(),
                    r.val_size
                )
                .map_err(io)?;
            }
            Ok(())
        }
        Command::ExportPlot { runs, title } => {
            let records = report::read_records(runs)?;
            let curves = aggregate_all(&records)?;
            let svg_path = cli.out.clone().unwrap_or_else(|| runs.join("curves.svg"));
            let title = title.clone().unwrap_or_else(|| default_title(&records));
            write_file(&svg_path, &report::plot_svg(&curves, &title)?)?;
            let csv_path = svg_path.with_extension("csv");
            write_file(&csv_path, &report::curves_csv(&curves)?)?;
            writeln!(out, "wrote {}\nwrote {}", svg_path.display(), csv_path.display()).map_err(io)
        }
        Command::Preset { name } => {
            let cfg = presets::by_name(name, vec![0, 1, 2])
                .ok_or_else(|| Error::Config(format!("unknown preset `{name}`; known: {}", presets::PRESETS.join(", "))))?;
            write!(out, "{}", cfg.to_toml_string()?).map_err(io)
        }
    }
}

fn default_title(records: &[RunRecord]) -> String {
    let r = &records[0];
    format!("{} ({} regime, {} seeds)", r.dataset, r.regime, {
        let mut s: Vec<u64> = records.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s.len()
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
