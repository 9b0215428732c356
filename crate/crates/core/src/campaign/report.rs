use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::CampaignConfig;
use crate::bssn::{BssnParams, Cluster};
use crate::constraint::Category;
use crate::geometry::IntervalBox;
use crate::scenario::{Region, ScoreCard};
use crate::shepherd::{PerformanceIndicators, RegionAssignment, Rule};
use crate::sut::Verdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub config: CampaignConfig,
    /// Scenario cells, when the built-in scenario ran.
    pub regions: Option<Vec<Region>>,
    pub input_bounds: IntervalBox,
    pub action_bounds: IntervalBox,
    /// Per-agent interaction count after which the SUT switched to its
    /// learned behavior. `None` when no learning was scheduled.
    pub learning_triggers: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeCounts {
    pub round: u64,
    pub confidence: u64,
    pub inversion: u64,
}

impl ProbeCounts {
    pub fn total(&self) -> u64 {
        self.round + self.confidence + self.inversion
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTally {
    #[serde(rename = "HS")]
    pub hs: u64,
    #[serde(rename = "HS_PRIME")]
    pub hs_prime: u64,
    #[serde(rename = "H_PRIME")]
    pub h_prime: u64,
}

impl LabelTally {
    pub fn add(&mut self, c: Category) {
        match c {
            Category::Hs => self.hs += 1,
            Category::HsPrime => self.hs_prime += 1,
            Category::HPrime => self.h_prime += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub released: u64,
    pub blocked: u64,
    /// Released actions whose classification was H'. Must stay zero.
    pub released_h_prime: u64,
}

/// One agent's share of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRound {
    pub agent: usize,
    pub region: IntervalBox,
    pub params: BssnParams,
    pub probes: ProbeCounts,
    pub samples: LabelTally,
    pub fault: Option<String>,
    pub inversion_attempts: u64,
    pub inversion_successes: u64,
    pub gate: GateCounts,
    pub input_map: Vec<Cluster>,
    pub action_map: Vec<Cluster>,
    pub indicators: PerformanceIndicators,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShepherdDecision {
    pub agent: usize,
    pub fired: Vec<Rule>,
    pub params: BssnParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    /// Whether the round ran after the learning switch.
    pub post_learning: bool,
    pub agents: Vec<AgentRound>,
    pub decisions: Vec<ShepherdDecision>,
    /// Assignment for the next round.
    pub next_regions: RegionAssignment,
    pub gates_closed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub pre: Option<ScoreCard>,
    pub post: Option<ScoreCard>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub probes: ProbeCounts,
    pub inversions: u64,
    pub inversion_successes: u64,
    pub acts: u64,
    pub gate: GateCounts,
}

/// Wall-clock measurements. Left out of the canonical form.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub runtime_ms: f64,
    pub gate_latency_mean_ns: f64,
    pub gate_latency_max_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub header: ReportHeader,
    pub rounds: Vec<RoundRecord>,
    pub scores: Scores,
    pub totals: Totals,
    #[serde(default)]
    pub timing: Timing,
}

impl CampaignReport {
    /// Sorted-key JSON with shortest round-trip floats and no timing section.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("timing");
        }
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn round(&self, t: u64) -> Option<&RoundRecord> {
        self.rounds.iter().find(|r| r.t == t)
    }

    /// Every agent's clusters as of the end of round `t`.
    pub fn clusters_at(&self, t: u64) -> Vec<Cluster> {
        self.round(t)
            .map(|r| {
                r.agents
                    .iter()
                    .flat_map(|a| a.input_map.iter().chain(&a.action_map).cloned())
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// One row of the probe and gate trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub agent: usize,
    /// `round`, `confidence`, `inversion` or `act`.
    pub kind: &'static str,
    pub input: Vec<f64>,
    pub action: Option<Vec<f64>>,
    pub category: Option<Category>,
    pub psi: Option<f64>,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Writes the canonical report and, when given, the trace CSV.
pub fn emit_report(
    report: &CampaignReport,
    trace: &[TraceRow],
    report_path: Option<&Path>,
    trace_path: Option<&Path>,
) -> Result<(), EmitError> {
    if let Some(path) = report_path {
        std::fs::write(path, report.canonical_json()).map_err(|source| EmitError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    if let Some(path) = trace_path {
        let n_in = report.header.input_bounds.dim();
        let n_act = report.header.action_bounds.dim();
        write_trace(path, trace, n_in, n_act).map_err(|source| EmitError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

fn write_trace(path: &Path, rows: &[TraceRow], n_in: usize, n_act: usize) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "agent".into(), "kind".into()];
    header.extend((0..n_in).map(|i| format!("x{i}")));
    header.extend((0..n_act).map(|i| format!("v{i}")));
    header.extend(["category".into(), "psi".into(), "verdict".into()]);
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for row in rows {
        record.clear();
        record.push(row.t.to_string());
        record.push(row.agent.to_string());
        record.push(row.kind.to_string());
        record.extend(row.input.iter().map(f64::to_string));
        match &row.action {
            Some(v) => record.extend(v.iter().map(f64::to_string)),
            None => record.extend(std::iter::repeat_n(String::new(), n_act)),
        }
        record.push(row.category.map(|c| c.as_str().to_string()).unwrap_or_default());
        record.push(row.psi.map(|p| p.to_string()).unwrap_or_default());
        record.push(
            row.verdict
                .map(|v| match v {
                    Verdict::Released => "released".to_string(),
                    Verdict::Blocked => "blocked".to_string(),
                })
                .unwrap_or_default(),
        );
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
