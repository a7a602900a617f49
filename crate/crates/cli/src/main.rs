use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use klevel_core::gateway::BackendMode;
use klevel_core::harness::{
    build_matrix, depth_anchors, emit_depth_report, read_records, run_experiment,
    significance_table, verify_run, ExperimentSpec, RunManifest, RunOptions,
};
use klevel_core::metrics::{strategic_depth, TTestVariant};
use klevel_core::opponent_model::{simulate, strategy_family, write_trace_csv, HypothesisSpace};
use klevel_core::strategies::StrategyKind;

#[derive(Parser)]
#[command(name = "klevel", version, about = "K-level reasoning game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its records, reports and manifest.
    Run(RunArgs),
    /// Run against live backends, keeping transcripts for later replay.
    Record(RunArgs),
    /// Re-run an experiment from recorded transcripts.
    Replay(RunArgs),
    /// Build matrix, significance and depth tables from finished runs.
    Report(ReportArgs),
    /// Check a run directory against its manifest.
    Verify { dir: PathBuf },
    /// Strategic depth of a first-round mean choice, or the anchor table.
    Depth {
        #[arg(long)]
        choice: Option<f64>,
        #[arg(long, default_value_t = 0.8)]
        alpha: f64,
    },
    /// Posterior trace of the opponent model against one true strategy.
    Posterior {
        #[arg(long, default_value = "MonoTrend (Fix)")]
        truth: String,
        #[arg(long, default_value_t = 20)]
        rounds: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        agents: usize,
        /// Common difference of the MonoTrend (Fix) hypothesis and truth.
        #[arg(long, default_value_t = 6)]
        diff: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    mode: Option<BackendMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
    /// Transcript file to replay from (replay mode).
    #[arg(long)]
    transcripts: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories (or manifest files).
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Player column the significance tests compare against.
    #[arg(long)]
    reference: Option<String>,
    /// Pooled-variance t-test instead of Welch's.
    #[arg(long)]
    student: bool,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run(args) => run(args, None),
        Command::Record(args) => run(args, Some(BackendMode::Live)),
        Command::Replay(args) => run(args, Some(BackendMode::Replay)),
        Command::Report(args) => report(args),
        Command::Verify { dir } => {
            let report = verify_run(&dir)?;
            for p in &report.problems {
                println!("FAIL {p}");
            }
            println!(
                "{} files, {} records checked: {}",
                report.files_checked,
                report.records_checked,
                if report.ok() { "ok" } else { "tampered or inconsistent" }
            );
            Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Depth { choice, alpha } => {
            match choice {
                Some(c) => println!("{:.4}", strategic_depth(c, alpha)?),
                None => {
                    println!("group,source,mean_choice,alpha,strategic_depth,reported_depth");
                    for a in depth_anchors() {
                        let d = strategic_depth(a.mean_choice, a.alpha)?;
                        println!(
                            "{},{},{},{:.4},{:.4},{:.2}",
                            a.group, a.source, a.mean_choice, a.alpha, d, a.reported_depth
                        );
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Posterior { truth, rounds, seed, agents, diff, out } => {
            let kind: StrategyKind = truth.parse().map_err(anyhow::Error::msg)?;
            let family = strategy_family(diff);
            let truth = family.iter().find(|s| s.kind == kind).copied().expect("family covers every kind");
            let space = HypothesisSpace::uniform(family);
            let trace = simulate(&truth, &space, agents, rounds, seed);
            let names = space.names();
            match out {
                Some(path) => {
                    let file = fs::File::create(&path).with_context(|| path.display().to_string())?;
                    write_trace_csv(file, &names, &trace)?;
                }
                None => write_trace_csv(std::io::stdout(), &names, &trace)?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(args: RunArgs, forced: Option<BackendMode>) -> Result<ExitCode> {
    let mut spec = ExperimentSpec::load(&args.spec)
        .with_context(|| format!("loading {}", args.spec.display()))?;
    let mode = args.mode.or(forced);
    if forced == Some(BackendMode::Replay) && args.transcripts.is_none() {
        bail!("replay needs --transcripts");
    }
    if let Some(mode) = mode {
        spec.force_mode(mode, args.transcripts.as_deref());
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let out = args
        .out
        .or_else(|| spec.output_dir.clone())
        .context("no output directory: pass --out or set output_dir")?;
    let manifest = run_experiment(&spec, &out, RunOptions { parallel: args.parallel })?;
    print_summary(&manifest, &out);
    if forced == Some(BackendMode::Live) && manifest.complete {
        println!("transcripts saved to {}", out.join("transcripts.jsonl").display());
    }
    Ok(if manifest.complete { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn print_summary(m: &RunManifest, out: &Path) {
    let cell = match (m.summary.mean, m.summary.std) {
        (Some(mean), Some(std)) => format!("{mean:.4} ± {std:.4}"),
        _ => "n/a".into(),
    };
    println!("{}: {:?} {cell} over {} valid repeats", m.label, m.metric, m.summary.per_repeat.len());
    for e in &m.errors {
        println!("  incomplete: {e}");
    }
    println!("written to {}", out.display());
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let mut manifests = Vec::new();
    let mut records = Vec::new();
    for path in &args.runs {
        let manifest = RunManifest::load(path).with_context(|| path.display().to_string())?;
        let dir = if path.is_dir() { path.clone() } else { path.parent().unwrap_or(Path::new(".")).to_path_buf() };
        if manifest.game == klevel_core::GameKind::G08a {
            records.extend(read_records(&dir.join("records.jsonl"))?.into_iter().filter(|r| r.valid));
        }
        manifests.push(manifest);
    }
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("matrix.csv"), build_matrix(&manifests)?)?;
    let reference = args
        .reference
        .or_else(|| manifests.iter().map(|m| m.player.clone()).find(|p| p.starts_with("K-R")));
    if let Some(reference) = reference {
        let variant = if args.student { TTestVariant::Student } else { TTestVariant::Welch };
        fs::write(args.out.join("significance.csv"), significance_table(&manifests, &reference, variant)?)?;
    }
    if !records.is_empty() {
        let alpha = manifests[0].alpha;
        fs::write(args.out.join("depth.csv"), emit_depth_report(&records, alpha))?;
    }
    println!("{} runs summarised into {}", manifests.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}
