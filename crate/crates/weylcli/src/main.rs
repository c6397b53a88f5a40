use anyhow::{Context, Result, anyhow};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use weylcli::config::ExperimentConfig;
use weylcli::record::RunRecord;
use weylcli::suites;

/// Batch experiment runner for the Weyl-calculus verification suites.
#[derive(Parser)]
#[command(name = "weylcli", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite from a config file.
    Run {
        /// One of the names printed by list-suites.
        suite: String,
        /// TOML configuration file (strict schema).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: config, then $WEYLCLI_OUT, then ./weylcli-out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a long-format plot table from a stored run record.
    PlotData {
        /// Path to a .record.json produced by `run`.
        record: PathBuf,
        /// Table kind: margins | qed.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the available suites.
    ListSuites,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            // config/usage errors exit 3
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::ListSuites => {
            for name in suites::SUITES {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            suite,
            config,
            seed,
            out,
        } => {
            if !suites::SUITES.contains(&suite.as_str()) {
                return Err(anyhow!("unknown suite '{suite}'"));
            }
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::from_path(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let outdir = resolve_outdir(out, &cfg);
            let record = suites::run_suite(&suite, &cfg)?;
            persist(&record, &outdir)?;
            let (pass, fail, inc) = (
                record.checks.len() - record.n_failed() - record.n_inconclusive(),
                record.n_failed(),
                record.n_inconclusive(),
            );
            println!(
                "{suite}: {pass} pass, {fail} fail, {inc} inconclusive ({} checks, {:.1}s)",
                record.checks.len(),
                record.wall_time_secs
            );
            println!("payload hash: {}", record.payload_hash);
            Ok(ExitCode::from(record.exit_code() as u8))
        }
        Command::PlotData { record, kind, out } => {
            let text = std::fs::read_to_string(&record)
                .with_context(|| format!("reading record {}", record.display()))?;
            let rec: RunRecord = serde_json::from_str(&text).context("parsing record")?;
            let (header, rows) = rec
                .plot_rows(&kind)
                .ok_or_else(|| anyhow!("unknown plot kind '{kind}' (margins | qed)"))?;
            let outdir = out.unwrap_or_else(|| {
                record
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            std::fs::create_dir_all(&outdir)?;
            let stem = record
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("record");
            let path = outdir.join(format!("{stem}.{kind}.csv"));
            write_csv(&path, &header, &rows)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn resolve_outdir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .or_else(|| std::env::var("WEYLCLI_OUT").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("weylcli-out"))
}

fn persist(record: &RunRecord, outdir: &Path) -> Result<()> {
    std::fs::create_dir_all(outdir)
        .with_context(|| format!("creating {}", outdir.display()))?;
    let base = format!("{}-seed{}", record.suite, record.seed);
    let json_path = outdir.join(format!("{base}.record.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(record)?)?;
    let (header, rows) = record
        .plot_rows("margins")
        .expect("margins table always available");
    write_csv(&outdir.join(format!("{base}.csv")), &header, &rows)?;
    println!("wrote {}", json_path.display());
    Ok(())
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
