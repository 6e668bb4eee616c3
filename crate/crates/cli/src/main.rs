use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use citegauge::backends::PromptMode;
use citegauge::scoring::{energy_report, EnergyInputs};
use citegauge_cli::dataset::{cmd_extract, cmd_ingest, cmd_match, cmd_sample};
use citegauge_cli::evaluate::{cmd_evaluate, cmd_report, parse_mode, RunReport};
use citegauge_cli::{energy_table, Overrides, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Build citation-parsing benchmarks from JATS corpora and score parsers on them.
#[derive(Parser)]
#[command(name = "citegauge", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration file.
    #[arg(long, global = true, default_value = "citegauge.toml")]
    config: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Minimum similarity for a plaintext/markup match.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Completions per citation for generative backends.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Only run the named backend (repeatable).
    #[arg(long = "backend", global = true)]
    backends: Vec<String>,
    /// Only run this prompting mode: cot or no_cot (repeatable).
    #[arg(long = "mode", global = true, value_parser = parse_mode)]
    modes: Vec<PromptMode>,
    /// Output directory, overriding the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Inventory the corpus directories.
    Ingest,
    /// Extract plaintext reference lists from article markdown.
    Extract(ExtractArgs),
    /// Match plaintext citations to their JATS markup.
    Match,
    /// Sample matched citations from each corpus.
    Sample,
    /// Run the configured backends over the sampled dataset.
    Evaluate,
    /// Rebuild reports from existing judgments.
    Report,
    /// Run ingest, extract, match, sample and evaluate in order.
    Run(ExtractArgs),
    /// Estimate energy use and emissions of a compute budget.
    Energy(EnergyArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Directory of ready-made `<article_id>.txt` reference lists (optionally
    /// under a `<corpus>/` subdirectory); skips the extraction model.
    #[arg(long)]
    plaintext_refs: Option<PathBuf>,
}

#[derive(Args)]
struct EnergyArgs {
    /// Accelerator power draw in kW.
    #[arg(long)]
    tdp_kw: Option<f64>,
    #[arg(long)]
    hours: Option<f64>,
    /// Datacenter power usage effectiveness.
    #[arg(long)]
    pue: Option<f64>,
    /// Grid carbon intensity in kg CO2 per kWh.
    #[arg(long)]
    carbon: Option<f64>,
    /// Passenger-vehicle emissions in kg CO2 per mile.
    #[arg(long)]
    kg_per_mile: Option<f64>,
}

fn load_config(global: &Global) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::load(&global.config)
        .with_context(|| format!("loading {}", global.config.display()))?;
    config.apply(&Overrides {
        seed: global.seed,
        threshold: global.threshold,
        samples: global.samples,
        out_dir: global.out.clone(),
        backends: global.backends.clone(),
        modes: global.modes.clone(),
    })?;
    Ok(config)
}

fn print_reports(reports: &[RunReport]) {
    for r in reports {
        let run = &r.report.run;
        let mut line = format!(
            "{:<16} {:<8} coverage {:.3}",
            run.backend, run.mode, r.report.coverage
        );
        for (field, stat) in &r.report.fields {
            if let Some(acc) = stat.accuracy {
                line.push_str(&format!("  {field} {acc:.3}"));
            }
        }
        if r.failed > 0 {
            line.push_str(&format!("  ({} failed)", r.failed));
        }
        println!("{line}");
    }
}

fn ingest(config: &RunConfig) -> anyhow::Result<()> {
    let rows = cmd_ingest(config)?;
    let usable = rows.iter().filter(|r| r.skipped.is_none()).count();
    let citations: usize = rows
        .iter()
        .filter(|r| r.skipped.is_none())
        .map(|r| r.citations)
        .sum();
    println!(
        "{usable} of {} articles usable, {citations} marked-up citations",
        rows.len()
    );
    Ok(())
}

fn extract(config: &RunConfig, args: &ExtractArgs) -> anyhow::Result<()> {
    let rows = cmd_extract(config, args.plaintext_refs.as_deref())?;
    let kept: usize = rows.iter().map(|r| r.citations.len()).sum();
    let rejected: usize = rows.iter().map(|r| r.rejected.len()).sum();
    println!(
        "{kept} citations extracted from {} articles, {rejected} rejected",
        rows.len()
    );
    Ok(())
}

fn matching(config: &RunConfig) -> anyhow::Result<()> {
    let summary = cmd_match(config)?;
    let mean = summary
        .total
        .mean_similarity
        .map_or("n/a".to_owned(), |m| format!("{m:.4}"));
    println!("{} matches, mean similarity {mean}", summary.total.matches);
    Ok(())
}

fn sample(config: &RunConfig) -> anyhow::Result<()> {
    let dataset = cmd_sample(config)?;
    println!("{} citations sampled (seed {})", dataset.len(), config.seed);
    Ok(())
}

fn evaluate(config: &RunConfig) -> anyhow::Result<()> {
    let reports = cmd_evaluate(config)?;
    print_reports(&reports);
    Ok(())
}

fn energy(args: &EnergyArgs) -> anyhow::Result<()> {
    let defaults = EnergyInputs::default();
    let report = energy_report(EnergyInputs {
        tdp_kw: args.tdp_kw.unwrap_or(defaults.tdp_kw),
        hours: args.hours.unwrap_or(defaults.hours),
        pue: args.pue.unwrap_or(defaults.pue),
        carbon_kg_per_kwh: args.carbon.unwrap_or(defaults.carbon_kg_per_kwh),
        kg_per_mile: args.kg_per_mile.unwrap_or(defaults.kg_per_mile),
    })?;
    print!("{}", energy_table(&report));
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Energy(args) => energy(args),
        Command::Report => {
            let config = load_config(&cli.global)?;
            print_reports(&cmd_report(&config.out_dir)?);
            Ok(())
        }
        Command::Ingest => ingest(&load_config(&cli.global)?),
        Command::Extract(args) => extract(&load_config(&cli.global)?, args),
        Command::Match => matching(&load_config(&cli.global)?),
        Command::Sample => sample(&load_config(&cli.global)?),
        Command::Evaluate => evaluate(&load_config(&cli.global)?),
        Command::Run(args) => {
            let config = load_config(&cli.global)?;
            ingest(&config)?;
            extract(&config, args)?;
            matching(&config)?;
            sample(&config)?;
            evaluate(&config)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
