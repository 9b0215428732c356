use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use watchdog_core::campaign::{check_scores, emit_report, run_campaign, score_rounds, CampaignConfig, CampaignReport};
use watchdog_core::scenario::{Epoch, Scenario};

/// Runs and inspects watchdog testing campaigns.
#[derive(Debug, Parser)]
#[command(name = "watchdog", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a campaign from a TOML config.
    Run {
        config: PathBuf,
        /// Exit with status 2 when a score falls below its `[check]` floor.
        #[arg(long)]
        check: bool,
    },
    /// Recompute the score cards of a saved report.
    Score { report: PathBuf },
    /// Print the cluster maps of one round as JSON.
    Replay {
        report: PathBuf,
        #[arg(long)]
        round: u64,
    },
}

/// Exit status 1: the input could not be used.
#[derive(Debug)]
struct InputError(anyhow::Error);

/// Exit status 2: the campaign ran but missed a threshold.
#[derive(Debug)]
struct ThresholdFailure;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, check } => run(&config, check),
        Command::Score { report } => score(&report),
        Command::Replay { report, round } => replay(&report, round),
    };
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(ThresholdFailure)) => ExitCode::from(2),
        Err(InputError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Writes to stdout; a reader that hung up early is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: writing output: {e}");
        }
    }
}

fn input<T>(r: Result<T>) -> Result<T, InputError> {
    r.map_err(InputError)
}

fn run(path: &Path, check: bool) -> Result<Result<(), ThresholdFailure>, InputError> {
    let config = input(CampaignConfig::load(path).with_context(|| format!("loading {}", path.display())))?;
    let run = input(run_campaign(&config).context("starting campaign"))?;
    input(
        emit_report(
            &run.report,
            &run.trace,
            config.output.report.as_deref(),
            config.output.trace.as_deref(),
        )
        .map_err(anyhow::Error::from),
    )?;
    if config.output.report.is_none() {
        emit(&run.report.canonical_json());
    }
    let t = &run.report.totals;
    eprintln!(
        "rounds={} probes={} inversions={} acts={} released={} blocked={} runtime_ms={:.0}",
        run.report.rounds.len(),
        t.probes.total(),
        t.inversions,
        t.acts,
        t.gate.released,
        t.gate.blocked,
        run.report.timing.runtime_ms,
    );
    if let Some(card) = &run.report.scores.pre {
        eprintln!(
            "pre: recall_h_prime={:.4} precision_h_prime={:.4} recall_hs_prime={:.4}",
            card.recall_h_prime, card.precision_h_prime, card.recall_hs_prime
        );
    }
    if let Some(card) = &run.report.scores.post {
        eprintln!(
            "post: recall_h_prime={:.4} new_violation_latency={:?} lost_capacity_detected={}",
            card.recall_h_prime, card.new_violation_latency, card.lost_capacity_detected
        );
    }
    if !check {
        return Ok(Ok(()));
    }
    let mut ok = true;
    for o in check_scores(&run.report.scores, &config.check) {
        let value = o.value.map_or("missing".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "check {}: {} {} >= {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.metric,
            value,
            o.floor
        );
        ok &= o.passed;
    }
    Ok(if ok { Ok(()) } else { Err(ThresholdFailure) })
}

fn load_report(path: &Path) -> Result<CampaignReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    CampaignReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn two_row_of(report: &CampaignReport) -> Option<Scenario> {
    report
        .header
        .regions
        .as_ref()
        .map(|_| Scenario::two_row(report.header.config.campaign.seed))
}

fn score(path: &Path) -> Result<Result<(), ThresholdFailure>, InputError> {
    let report = input(load_report(path))?;
    let Some(scenario) = two_row_of(&report) else {
        return Err(InputError(anyhow::anyhow!(
            "{} has no ground truth to score against",
            path.display()
        )));
    };
    let learning = report
        .header
        .learning_triggers
        .as_ref()
        .and(report.header.config.campaign.learning_round);
    let scores = score_rounds(&scenario, &report.rounds, learning);
    emit(&(serde_json::to_string_pretty(&scores).expect("scores serialize") + "\n"));
    Ok(Ok(()))
}

fn replay(path: &Path, t: u64) -> Result<Result<(), ThresholdFailure>, InputError> {
    let report = input(load_report(path))?;
    let round = input(match report.round(t) {
        Some(r) => Ok(r),
        None => bail_input(t, report.rounds.len()),
    })?;
    let scenario = two_row_of(&report);
    let epoch = if round.post_learning { Epoch::Post } else { Epoch::Pre };
    let epoch_round = report.header.config.campaign.learning_round.unwrap_or(0);
    let agents: Vec<_> = round
        .agents
        .iter()
        .map(|a| {
            let footprints = scenario.as_ref().map(|s| {
                let clusters: Vec<_> = a.input_map.iter().chain(&a.action_map).cloned().collect();
                s.footprints(&clusters, epoch, epoch_round)
            });
            json!({
                "agent": a.agent,
                "region": a.region,
                "input_map": a.input_map,
                "action_map": a.action_map,
                "footprints": footprints,
            })
        })
        .collect();
    let out = json!({
        "t": round.t,
        "post_learning": round.post_learning,
        "regions": report.header.regions,
        "agents": agents,
    });
    emit(&(serde_json::to_string_pretty(&out).expect("replay serializes") + "\n"));
    Ok(Ok(()))
}

fn bail_input<T>(t: u64, available: usize) -> Result<T> {
    bail!("round {t} not in report (rounds 1..={available})")
}
