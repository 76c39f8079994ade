use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use letrack::association::{track_all, AssociationError, TrackerDiagnostics};
use letrack::classification::ClassifyError;
use letrack::io::{self, burst, config, FileKind, FormatError, Strictness};
use letrack::metrics::{default_alphas, evaluate, EvalConfig, Geometry, Mode};

#[derive(Parser)]
#[command(name = "letrack", version, about = "Open-world video instance tracking and HOTA/OWTA evaluation")]
struct Cli {
    /// Warn about unknown JSON fields instead of rejecting the file.
    #[arg(long, global = true)]
    lax: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Closed,
    Open,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometryArg {
    Mask,
    Box,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Detections,
    Tracks,
    Bank,
}

#[derive(Subcommand)]
enum Command {
    /// Associate and classify detections into tracks.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "mask")]
        geometry: GeometryArg,
        /// Comma-separated localization thresholds; defaults to 0.05..0.95 step 0.05.
        #[arg(long)]
        alphas: Option<String>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate a synthetic ground truth, detections and category bank.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_gt: PathBuf,
        #[arg(long)]
        out_dets: PathBuf,
        #[arg(long)]
        out_bank: PathBuf,
    },
    /// Check a file against its schema and data contract.
    Validate {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
    },
    /// Convert BURST annotation JSON (annotated-frames layout) to a tracks file.
    ImportBurst {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Internal(_) => 3,
        }
    }
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn report_warnings(path: &Path, warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
}

fn load<T>(
    path: &Path,
    strictness: Strictness,
    parse: impl Fn(&str, Strictness) -> Result<io::Loaded<T>, FormatError>,
) -> Result<T, CliError> {
    let loaded = parse(&read(path)?, strictness).map_err(|e| invalid(path, e))?;
    report_warnings(path, &loaded.warnings);
    Ok(loaded.value)
}

/// Writes every file or none: contents go to temporaries first and are renamed
/// into place only once all of them exist.
fn write_all(outputs: &[(&Path, &str)]) -> Result<(), CliError> {
    let mut temps: Vec<PathBuf> = Vec::with_capacity(outputs.len());
    let cleanup = |temps: &[PathBuf]| temps.iter().for_each(|t| drop(fs::remove_file(t)));
    for (path, content) in outputs {
        let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(format!(".tmp{}", std::process::id()));
        let tmp = path.with_file_name(name);
        if let Err(source) = fs::write(&tmp, content) {
            cleanup(&temps);
            drop(fs::remove_file(&tmp));
            return Err(CliError::Io { path: path.to_path_buf(), source });
        }
        temps.push(tmp);
    }
    for (i, (path, _)) in outputs.iter().enumerate() {
        if let Err(source) = fs::rename(&temps[i], path) {
            cleanup(&temps[i..]);
            for (p, _) in &outputs[..i] {
                drop(fs::remove_file(p));
            }
            return Err(CliError::Io { path: path.to_path_buf(), source });
        }
    }
    Ok(())
}

fn association_error(e: AssociationError) -> CliError {
    match e {
        AssociationError::DimensionMismatch(..)
        | AssociationError::InvalidConfig(_)
        | AssociationError::Classification(ClassifyError::EmptyBank | ClassifyError::MissingPrototype(_))
        | AssociationError::Classification(ClassifyError::DimensionMismatch { .. }) => CliError::Invalid(e.to_string()),
        other => CliError::Internal(other.to_string()),
    }
}

fn parse_alphas(csv: &str) -> Result<Vec<f64>, CliError> {
    csv.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| CliError::Invalid(format!("--alphas: '{}': {e}", s.trim()))))
        .collect()
}

fn print_diagnostics(name: &str, d: &TrackerDiagnostics) {
    if d.zero_norm_gate_pairs > 0 {
        eprintln!("warning: {name}: {} gate pairs rejected for zero-norm class embeddings", d.zero_norm_gate_pairs);
    }
    if d.zero_norm_classifications > 0 {
        eprintln!("warning: {name}: {} detections had zero-norm class embeddings", d.zero_norm_classifications);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let strictness = if cli.lax { Strictness::Lax } else { Strictness::Strict };
    match cli.command {
        Command::Track { detections, config: cfg_path, bank, out } => {
            let seqs = load(&detections, strictness, io::parse_detections)?;
            let cfg = config::tracker_config_from_str(&read(&cfg_path)?).map_err(|e| invalid(&cfg_path, e))?;
            let bank = match &bank {
                Some(p) => Some(load(p, strictness, io::parse_bank)?),
                None => None,
            };
            let results = track_all(&seqs, &cfg, bank.as_ref()).map_err(association_error)?;
            for (seq, diag) in &results {
                print_diagnostics(&seq.meta.name, diag);
            }
            let tracks: Vec<_> = results.into_iter().map(|(s, _)| s).collect();
            write_all(&[(&out, &io::tracks_to_string(&tracks))])
        }
        Command::Eval { gt, pred, bank, mode, geometry, alphas, report } => {
            let gt_seqs = load(&gt, strictness, io::parse_tracks)?;
            let pred_seqs = load(&pred, strictness, io::parse_tracks)?;
            let bank = load(&bank, strictness, io::parse_bank)?;
            let cfg = EvalConfig {
                alphas: match alphas {
                    Some(csv) => parse_alphas(&csv)?,
                    None => default_alphas(),
                },
                mode: match mode {
                    ModeArg::Closed => Mode::Closed,
                    ModeArg::Open => Mode::Open,
                },
                geometry: match geometry {
                    GeometryArg::Mask => Geometry::Mask,
                    GeometryArg::Box => Geometry::Box,
                },
            };
            let result = evaluate(&gt_seqs, &pred_seqs, &bank, &cfg).map_err(|e| CliError::Invalid(e.to_string()))?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            let name = pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "tracker".into());
            write_all(&[(&report, &io::report_to_string(&result))])?;
            print!("{}", result.to_table(&name));
            Ok(())
        }
        Command::Synth { config: cfg_path, out_gt, out_dets, out_bank } => {
            let cfg = config::synth_config_from_str(&read(&cfg_path)?).map_err(|e| invalid(&cfg_path, e))?;
            let files = io::synth_files(&cfg).map_err(|e| CliError::Invalid(e.to_string()))?;
            write_all(&[(&out_gt, &files.gt), (&out_dets, &files.detections), (&out_bank, &files.bank)])
        }
        Command::Validate { file, kind } => {
            let kind = match kind {
                KindArg::Detections => FileKind::Detections,
                KindArg::Tracks => FileKind::Tracks,
                KindArg::Bank => FileKind::Bank,
            };
            let warnings = io::validate_text(kind, &read(&file)?, strictness).map_err(|e| invalid(&file, e))?;
            report_warnings(&file, &warnings);
            eprintln!("{}: valid {kind} file", file.display());
            Ok(())
        }
        Command::ImportBurst { annotations, out } => {
            let loaded = burst::import_burst(&read(&annotations)?).map_err(|e| invalid(&annotations, e))?;
            report_warnings(&annotations, &loaded.warnings);
            write_all(&[(&out, &io::tracks_to_string(&loaded.value))])
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LETRACK_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().map_err(|_| CliError::Invalid(format!("LETRACK_THREADS: expected a non-negative integer, got '{raw}'")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            drop(e.print());
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(|| configure_threads().and_then(|_| run(cli)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
        Err(_) => ExitCode::from(3),
    }
}
