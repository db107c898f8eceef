use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use osubeat_core::beat_eval::{EvalScores, SummaryRow};
use osubeat_core::pipeline::{self, PipelineConfig, PipelineError};
use osubeat_core::{SubsetKind, TimeUnit};

const EXIT_USAGE: u8 = 1;
const EXIT_NO_WORK: u8 = 2;
const EXIT_ALL_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "osubeat", version, about = "Beat and downbeat annotations from osu! beatmaps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Unpack .osz archives and export beat annotations and audio.
    Extract(ExtractArgs),
    /// Score tracker predictions against the exported annotations.
    Evaluate(EvaluateArgs),
    /// Compare annotations of the same audio from different sets.
    Agreement(Shared),
    /// Count catalog entries per timing subset.
    PartitionStats(Shared),
}

#[derive(Args, Debug, Clone)]
struct Shared {
    /// Dataset directory written by `extract`.
    #[arg(long)]
    output_dir: PathBuf,
    /// Scratch directory for unpacked archives [default: <output-dir>/work]
    #[arg(long)]
    work_dir: Option<PathBuf>,
    /// Minimum gap between tempo changes, in seconds, for the wide subset.
    #[arg(long, default_value_t = 5.0)]
    threshold_s: f64,
    /// Half-width of the F-measure window, in seconds.
    #[arg(long, default_value_t = 0.07)]
    f_window_s: f64,
    #[arg(long, default_value_t = 0.175)]
    phase_tol: f64,
    #[arg(long, default_value_t = 0.175)]
    period_tol: f64,
    /// Score the first seconds of each track as well.
    #[arg(long)]
    no_trim_lead_in: bool,
    /// Restrict to one subset.
    #[arg(long, value_parser = parse_subset)]
    subset_filter: Option<SubsetKind>,
    #[arg(long, env = "OSUBEAT_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Unit of annotation timestamps.
    #[arg(long, value_enum, default_value_t = Unit::Seconds)]
    time_unit: Unit,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Directory holding .osz archives.
    #[arg(long)]
    input_dir: PathBuf,
    #[command(flatten)]
    shared: Shared,
    /// Tab-separated `md5-or-set-id<TAB>seconds` duration overrides.
    #[arg(long)]
    duration_overrides: Option<PathBuf>,
    /// Tab-separated `set_id<TAB>favorites<TAB>ranked` metadata.
    #[arg(long)]
    sidecar_metadata: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    min_favorites: u64,
    /// Keep every game mode, not only standard.
    #[arg(long)]
    any_mode: bool,
    /// Keep sets without an Insane difficulty.
    #[arg(long)]
    any_difficulty: bool,
    /// Keep unranked sets.
    #[arg(long)]
    any_status: bool,
    /// Drop beats more than one beat past the last hit object.
    #[arg(long)]
    trim_to_effective_end: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory of `<md5>.beats.txt` and optional `<md5>.downbeats.txt`.
    #[arg(long)]
    predictions_dir: PathBuf,
    #[command(flatten)]
    shared: Shared,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Unit {
    Seconds,
    Milliseconds,
}

fn parse_subset(s: &str) -> Result<SubsetKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

impl Shared {
    fn config(&self, input_dir: PathBuf) -> PipelineConfig {
        let work_dir = self.work_dir.clone().unwrap_or_else(|| self.output_dir.join("work"));
        let mut cfg = PipelineConfig::new(input_dir, self.output_dir.clone(), work_dir);
        cfg.threshold_s = self.threshold_s;
        cfg.f_window_s = self.f_window_s;
        cfg.phase_tol = self.phase_tol;
        cfg.period_tol = self.period_tol;
        cfg.trim_lead_in = !self.no_trim_lead_in;
        cfg.subset_filter = self.subset_filter;
        cfg.workers = self.workers;
        cfg.time_unit = match self.time_unit {
            Unit::Seconds => TimeUnit::Seconds,
            Unit::Milliseconds => TimeUnit::Milliseconds,
        };
        cfg
    }
}

fn print_summary(title: &str, rows: &[SummaryRow]) {
    println!("{title}");
    let mut header = format!("{:<13}{:>6}", "subset", "n");
    for name in EvalScores::FIELD_NAMES {
        header.push_str(&format!("  {:>4}", short(name)));
    }
    println!("{header}");
    for r in rows {
        println!("{}", r.to_display());
    }
}

/// Column headers trimmed to fit the two-decimal table.
fn short(name: &str) -> String {
    name.replace("downbeat_", "d").replace("beat_", "b").chars().take(4).collect()
}

fn run(cli: Cli) -> Result<u8, PipelineError> {
    match cli.command {
        Command::Extract(a) => {
            let mut cfg = a.shared.config(a.input_dir);
            cfg.duration_overrides = a.duration_overrides;
            cfg.sidecar_metadata = a.sidecar_metadata;
            cfg.criteria.min_favorites = a.min_favorites;
            if a.any_mode {
                cfg.criteria.require_mode = None;
            }
            if a.any_difficulty {
                cfg.criteria.require_difficulty_substring = None;
            }
            if a.any_status {
                cfg.criteria.require_ranked = false;
            }
            cfg.trim_to_effective_end = a.trim_to_effective_end;
            let out = pipeline::cmd_extract(&cfg)?;
            println!(
                "archives: {}  exported: {}  filtered: {}  errors: {}",
                out.archives,
                out.exported(),
                out.filtered.len(),
                out.errors.len()
            );
            Ok(if out.exported() == 0 && !out.errors.is_empty() { EXIT_ALL_FAILED } else { 0 })
        }
        Command::Evaluate(a) => {
            let cfg = a.shared.config(PathBuf::new());
            let out = pipeline::cmd_evaluate(&cfg, &a.predictions_dir)?;
            print_summary("per annotation", &out.summary);
            println!();
            print_summary("per audio", &out.summary_by_audio);
            println!(
                "scored: {}  without predictions: {}  errors: {}",
                out.entries.len(),
                out.unmatched,
                out.errors.len()
            );
            Ok(if out.entries.is_empty() { EXIT_ALL_FAILED } else { 0 })
        }
        Command::Agreement(s) => {
            let out = pipeline::cmd_agreement(&s.config(PathBuf::new()))?;
            if out.reports.is_empty() && out.errors.is_empty() {
                println!("no audio is annotated by more than one set");
            }
            println!("groups: {}  errors: {}", out.reports.len(), out.errors.len());
            Ok(0)
        }
        Command::PartitionStats(s) => {
            for c in pipeline::cmd_partition_stats(&s.config(PathBuf::new()))? {
                println!("{:<13}{:>6}  {:.4}", c.subset.label(), c.count, c.fraction);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                PipelineError::EmptyInput(_) | PipelineError::NoPredictionsMatched => EXIT_NO_WORK,
                _ => EXIT_USAGE,
            })
        }
    }
}
