//! Campaign orchestration: a bulk-synchronous round loop over a swarm of
//! agents, one SUT handle each, with the shepherd acting at every barrier.

pub mod config;
pub mod report;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bssn::{
    adapt, compress_actions, compress_inputs, gatekeep, make_disjoint, partition, run_round, BssnParams, Cluster,
    ConfidenceEstimator, InversionEstimator, SamplingEstimator,
};
use crate::constraint::{Category, ConstraintSystem};
use crate::geometry::IntervalBox;
use crate::scenario::{Epoch, Scenario, NEW_VIOLATIONS};
use crate::shepherd::{assign_regions, measure, PerformanceIndicators, RegionAssignment, RoundActivity, Shepherd};
use crate::sut::{make_reference_sut, shutdown, GatePolicy, GateState, SutHandle, Verdict};

pub use config::{CampaignConfig, ConfigError, ScenarioKind, ScenarioSource};
pub use report::{
    emit_report, AgentRound, CampaignReport, EmitError, GateCounts, LabelTally, ProbeCounts, ReportHeader, RoundRecord,
    Scores, ShepherdDecision, Timing, Totals, TraceRow,
};

/// Half-width of inversion targets, as a fraction of the action span.
pub const TARGET_FRACTION: f64 = 0.01;

const OP_ROUND: u64 = 1;
const OP_PARTITION: u64 = 2;
const OP_ADAPT: u64 = 3;
const OP_INVERSION: u64 = 4;
const OP_LIVE: u64 = 5;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream for one operator of one agent in one round.
pub fn substream(seed: u64, agent: usize, t: u64, op: u64) -> ChaCha8Rng {
    let key = [agent as u64, t, op]
        .into_iter()
        .fold(splitmix(seed), |h, part| splitmix(h ^ part));
    ChaCha8Rng::seed_from_u64(key)
}

/// Everything an agent owns between barriers.
#[derive(Debug, Clone)]
pub struct AgentSlot {
    pub sut: SutHandle,
    pub gate: GateState,
    pub params: BssnParams,
    pub input_map: Vec<Cluster>,
    pub action_map: Vec<Cluster>,
    pub indicators: Option<PerformanceIndicators>,
}

/// A finished campaign: the report, the trace rows and the agents' final state.
#[derive(Debug)]
pub struct CampaignRun {
    pub report: CampaignReport,
    pub trace: Vec<TraceRow>,
    pub agents: Vec<AgentSlot>,
}

struct Context<'a> {
    checker: &'a ConstraintSystem,
    input_bounds: IntervalBox,
    action_bounds: IntervalBox,
    seed: u64,
    live_inputs: usize,
    record: bool,
}

struct Pass {
    rounds: Vec<RoundRecord>,
    slots: Vec<AgentSlot>,
    trace: Vec<TraceRow>,
}

/// Runs the whole campaign described by `config`.
///
/// Configuration problems surface before any SUT interaction. SUT faults
/// during the campaign are recorded in the round digests.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignRun, ConfigError> {
    let started = Instant::now();
    config.validate()?;
    let source = config.resolve_scenario()?;
    let c = &config.campaign;
    let record = config.output.trace.is_some();

    let learning = match (&source, c.learning_round) {
        (ScenarioSource::TwoRow(_), Some(l)) if l < c.rounds => Some(l),
        _ => None,
    };
    let triggers = match learning {
        Some(l) => {
            // Calibration: the switch point is the interaction count each
            // agent's SUT has seen by the end of round `l`.
            let probe = execute(config, &source, &vec![u64::MAX; c.agents], l, false)?;
            Some(probe.slots.iter().map(|s| s.sut.interactions()).collect::<Vec<_>>())
        }
        None => None,
    };
    let pass_triggers = triggers.clone().unwrap_or_else(|| vec![u64::MAX; c.agents]);
    let pass = execute(config, &source, &pass_triggers, c.rounds, record)?;

    let spec = source.sut_spec(u64::MAX);
    // Output locations are not echoed.
    let mut echoed = config.clone();
    echoed.output = config::OutputSection::default();
    let header = ReportHeader {
        config: echoed,
        regions: source.two_row().map(|s| s.regions.clone()),
        input_bounds: spec.input_space.bounds(),
        action_bounds: spec.action_space.bounds(),
        learning_triggers: triggers,
    };
    let scores = match source.two_row() {
        Some(s) => score_rounds(s, &pass.rounds, c.learning_round.filter(|_| learning.is_some())),
        None => Scores::default(),
    };
    let totals = totals(&pass.rounds);
    let mut latency_total = 0u128;
    let mut latency_count = 0u64;
    let mut latency_max = 0u128;
    for s in &pass.slots {
        let l = s.gate.latency();
        latency_total += l.total_ns;
        latency_count += l.count;
        latency_max = latency_max.max(l.max_ns);
    }
    let timing = Timing {
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
        gate_latency_mean_ns: if latency_count == 0 {
            0.0
        } else {
            latency_total as f64 / latency_count as f64
        },
        gate_latency_max_ns: latency_max as f64,
    };
    Ok(CampaignRun {
        report: CampaignReport {
            header,
            rounds: pass.rounds,
            scores,
            totals,
            timing,
        },
        trace: pass.trace,
        agents: pass.slots,
    })
}

/// Scores the cluster maps recorded in `rounds`.
///
/// With a learning round `l`, the pre-learning card scores the maps at the
/// end of round `l` and the post-learning card the final maps. Without one,
/// only the final maps are scored, against the pre-learning truth.
pub fn score_rounds(scenario: &Scenario, rounds: &[RoundRecord], learning_round: Option<u64>) -> Scores {
    let clusters_at = |t: u64| -> Vec<Cluster> {
        rounds
            .iter()
            .find(|r| r.t == t)
            .map(|r| {
                r.agents
                    .iter()
                    .flat_map(|a| a.input_map.iter().chain(&a.action_map).cloned())
                    .collect()
            })
            .unwrap_or_default()
    };
    let Some(last) = rounds.last().map(|r| r.t) else {
        return Scores::default();
    };
    match learning_round {
        Some(l) if l < last => {
            let pre = scenario.score(&clusters_at(l), Epoch::Pre, l);
            let mut post = scenario.score(&clusters_at(last), Epoch::Post, l);
            post.new_violation_latency = rounds.iter().filter(|r| r.t > l).find_map(|r| {
                scenario
                    .footprint_overlaps(&clusters_at(r.t), Category::HPrime, NEW_VIOLATIONS, Epoch::Post, l)
                    .then_some(r.t - l)
            });
            post.lost_capacity_latency = rounds
                .iter()
                .filter(|r| r.t > l)
                .find_map(|r| scenario.lost_capacity(&clusters_at(r.t), l).then_some(r.t - l));
            Scores {
                pre: Some(pre),
                post: Some(post),
            }
        }
        _ => Scores {
            pre: Some(scenario.score(&clusters_at(last), Epoch::Pre, last)),
            post: None,
        },
    }
}

/// One `--check` floor and how the campaign fared against it.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CheckOutcome {
    pub metric: &'static str,
    pub value: Option<f64>,
    pub floor: f64,
    pub passed: bool,
}

/// Compares the pre-learning scores with the configured floors. A missing
/// score card fails every floor.
pub fn check_scores(scores: &Scores, floors: &config::CheckSection) -> Vec<CheckOutcome> {
    let card = scores.pre.as_ref();
    [
        ("recall_h_prime", card.map(|c| c.recall_h_prime), floors.recall_h_prime),
        (
            "precision_h_prime",
            card.map(|c| c.precision_h_prime),
            floors.precision_h_prime,
        ),
        (
            "recall_hs_prime",
            card.map(|c| c.recall_hs_prime),
            floors.recall_hs_prime,
        ),
    ]
    .into_iter()
    .map(|(metric, value, floor)| CheckOutcome {
        metric,
        value,
        floor,
        passed: value.is_some_and(|v| v >= floor),
    })
    .collect()
}

fn totals(rounds: &[RoundRecord]) -> Totals {
    let mut t = Totals::default();
    for a in rounds.iter().flat_map(|r| &r.agents) {
        t.probes.round += a.probes.round;
        t.probes.confidence += a.probes.confidence;
        t.probes.inversion += a.probes.inversion;
        t.inversions += a.inversion_attempts;
        t.inversion_successes += a.inversion_successes;
        t.gate.released += a.gate.released;
        t.gate.blocked += a.gate.blocked;
        t.gate.released_h_prime += a.gate.released_h_prime;
    }
    t.acts = t.gate.released + t.gate.blocked;
    t
}

fn execute(
    config: &CampaignConfig,
    source: &ScenarioSource,
    triggers: &[u64],
    rounds: u64,
    record: bool,
) -> Result<Pass, ConfigError> {
    let c = &config.campaign;
    let policy = GatePolicy {
        block_soft_violations: c.block_soft_violations,
    };
    let mut slots = Vec::with_capacity(c.agents);
    for &trigger in triggers {
        let mut sut = make_reference_sut(&source.sut_spec(trigger)).map_err(|e| ConfigError::Sut {
            path: config.scenario.sut.clone().unwrap_or_default(),
            message: e.to_string(),
        })?;
        sut.record_probes(record);
        slots.push(AgentSlot {
            sut,
            gate: GateState::new(policy),
            params: config.agent_defaults.clone(),
            input_map: Vec::new(),
            action_map: Vec::new(),
            indicators: None,
        });
    }
    let ctx = Context {
        checker: source.checker(),
        input_bounds: slots[0].sut.input_space().bounds(),
        action_bounds: slots[0].sut.action_space().bounds(),
        seed: c.seed,
        live_inputs: c.live_inputs_per_round,
        record,
    };
    let shepherd = Shepherd::new(config.shepherd.clone(), vec![config.agent_defaults.clone(); c.agents]);
    let tolerance = config.shepherd.rebalance_tolerance;
    let mut assignment = assign_regions(c.agents, &ctx.input_bounds, None, tolerance);
    let mut records = Vec::with_capacity(rounds as usize);
    let mut trace = Vec::new();

    for t in 1..=rounds {
        let outcomes: Vec<(AgentRound, Vec<TraceRow>)> = slots
            .par_iter_mut()
            .zip(assignment.boxes.par_iter())
            .enumerate()
            .map(|(i, (slot, region))| agent_round(slot, i, region, t, &ctx))
            .collect();
        let mut agents = Vec::with_capacity(outcomes.len());
        for (digest, rows) in outcomes {
            agents.push(digest);
            trace.extend(rows);
        }

        let params: Vec<BssnParams> = slots.iter().map(|s| s.params.clone()).collect();
        let indicators: Vec<PerformanceIndicators> = agents.iter().map(|a| a.indicators).collect();
        let influences = shepherd.influence(&params, &indicators);
        let mut decisions = Vec::with_capacity(influences.len());
        for (i, (slot, inf)) in slots.iter_mut().zip(influences).enumerate() {
            slot.params = inf.params.clone();
            decisions.push(ShepherdDecision {
                agent: i,
                fired: inf.fired,
                params: inf.params,
            });
        }
        let next = assign_regions(c.agents, &ctx.input_bounds, Some((&assignment, &indicators)), tolerance);
        if next != assignment {
            rehome(&mut slots, &next);
        }
        let gates_closed = c.shutdown_after_round.is_some_and(|s| t >= s);
        if gates_closed {
            for slot in &mut slots {
                shutdown(&slot.sut, &mut slot.gate);
            }
        }
        let post_learning = slots.iter().zip(triggers).any(|(s, &k)| s.sut.interactions() > k);
        records.push(RoundRecord {
            t,
            post_learning,
            agents,
            decisions,
            next_regions: next.clone(),
            gates_closed,
        });
        assignment = next;
    }
    Ok(Pass {
        rounds: records,
        slots,
        trace,
    })
}

/// Moves every input cluster to the agent whose new region holds its centre.
fn rehome(slots: &mut [AgentSlot], next: &RegionAssignment) {
    let mut moved: Vec<Vec<Cluster>> = vec![Vec::new(); slots.len()];
    for (i, slot) in slots.iter_mut().enumerate() {
        for c in slot.input_map.drain(..) {
            let owner = next.owner_of(&c.bounds.center()).unwrap_or(i);
            moved[owner].push(c);
        }
    }
    for (slot, clusters) in slots.iter_mut().zip(moved) {
        slot.input_map = clusters;
    }
}

fn agent_round(
    slot: &mut AgentSlot,
    agent: usize,
    region: &IntervalBox,
    t: u64,
    ctx: &Context<'_>,
) -> (AgentRound, Vec<TraceRow>) {
    let p = slot.params.clone();
    let checker = ctx.checker;
    slot.gate.set_clock(t);
    let mut probes = ProbeCounts::default();

    let focus: Vec<Cluster> = slot
        .input_map
        .iter()
        .filter(|c| c.unsettled && c.bounds.intersects(region))
        .cloned()
        .collect();
    let mut before = slot.sut.probe_count();
    let round = run_round(
        &p,
        &mut slot.sut,
        checker,
        region,
        &focus,
        t,
        &mut substream(ctx.seed, agent, t, OP_ROUND),
    );
    probes.round = slot.sut.probe_count() - before;
    let mut samples = LabelTally::default();
    for c in &round.classifications {
        samples.add(c.category);
    }

    before = slot.sut.probe_count();
    let mut rng = substream(ctx.seed, agent, t, OP_PARTITION);
    let mut leaves = Vec::new();
    for cluster in compress_inputs(&round, &p) {
        leaves.extend(partition(&cluster, &mut slot.sut, checker, &p, t, &mut rng));
    }
    let leaves = make_disjoint(leaves, &ctx.input_bounds, p.min_box_fraction);
    let mut rng = substream(ctx.seed, agent, t, OP_ADAPT);
    let mut sampler = SamplingEstimator {
        sut: &mut slot.sut,
        checker,
        samples: p.confidence_samples,
        risk_ratio: p.risk_ratio,
        rng: &mut rng,
    };
    slot.input_map = adapt(&slot.input_map, leaves, &mut sampler, &p, &ctx.input_bounds, t);
    probes.confidence = slot.sut.probe_count() - before;

    before = slot.sut.probe_count();
    let mut rng = substream(ctx.seed, agent, t, OP_INVERSION);
    let mut inverter = InversionEstimator {
        sut: &mut slot.sut,
        checker,
        search: ctx.input_bounds.clone(),
        samples: p.confidence_samples,
        budget: p.inversion_budget,
        risk_ratio: p.risk_ratio,
        stop_below: p.epsilon,
        target_fraction: TARGET_FRACTION,
        rng: &mut rng,
        stats: Default::default(),
    };
    let mut current = compress_actions(&round, &p);
    for c in &mut current {
        let est = inverter.estimate(&c.bounds, c.label);
        c.confidence = est.confidence;
        c.support = est.support;
        c.unsettled = est.majority != Some(c.label) || est.confidence < p.epsilon;
    }
    slot.action_map = adapt(&slot.action_map, current, &mut inverter, &p, &ctx.action_bounds, t);
    let stats = inverter.stats;
    probes.inversion = slot.sut.probe_count() - before;

    let mut rng = substream(ctx.seed, agent, t, OP_LIVE);
    let first_event = slot.gate.events().len();
    let space = slot.sut.input_space().clone();
    for _ in 0..ctx.live_inputs {
        let x = space.to_assignment(&space.sample_in(&ctx.input_bounds, &mut rng));
        gatekeep(&mut slot.sut, &mut slot.gate, checker, &x).expect("sampled inputs lie in the input space");
    }
    let mut gate = GateCounts::default();
    for e in &slot.gate.events()[first_event..] {
        match e.verdict {
            Verdict::Released => {
                gate.released += 1;
                if e.classification
                    .as_ref()
                    .is_some_and(|c| c.category == Category::HPrime)
                {
                    gate.released_h_prime += 1;
                }
            }
            Verdict::Blocked => gate.blocked += 1,
        }
    }

    let activity = RoundActivity {
        inversion_attempts: stats.attempts,
        inversion_successes: stats.successes,
        compute_spend: probes.total(),
        gate_blocks: gate.blocked,
    };
    let indicators = measure(region, &slot.input_map, p.epsilon, activity, slot.indicators.as_ref());
    slot.indicators = Some(indicators);

    let mut rows = Vec::new();
    if ctx.record {
        let action_space = slot.sut.action_space().clone();
        for r in slot.sut.take_records() {
            let classification = r
                .action
                .as_ref()
                .map(|v| checker.classify_values(action_space.to_assignment(v).values()));
            rows.push(TraceRow {
                t,
                agent,
                kind: r.tag.as_str(),
                input: r.input,
                action: r.action,
                category: classification.as_ref().map(|c| c.category),
                psi: classification.as_ref().map(|c| c.psi),
                verdict: None,
            });
        }
        for e in &slot.gate.events()[first_event..] {
            rows.push(TraceRow {
                t,
                agent,
                kind: "act",
                input: e.input.coords(),
                action: e.proposed.as_ref().map(|a| a.coords()),
                category: e.classification.as_ref().map(|c| c.category),
                psi: e.classification.as_ref().map(|c| c.psi),
                verdict: Some(e.verdict),
            });
        }
    }

    let digest = AgentRound {
        agent,
        region: region.clone(),
        params: p,
        probes,
        samples,
        fault: round.fault.clone(),
        inversion_attempts: stats.attempts,
        inversion_successes: stats.successes,
        gate,
        input_map: slot.input_map.clone(),
        action_map: slot.action_map.clone(),
        indicators,
    };
    (digest, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(seed: u64, rounds: u64) -> CampaignConfig {
        let mut c = CampaignConfig::two_row(seed);
        c.campaign.rounds = rounds;
        c.agent_defaults.round_budget = 150;
        c.agent_defaults.confidence_samples = 20;
        c
    }

    #[test]
    fn substreams_are_distinct_and_stable() {
        let a: u64 = substream(1, 0, 1, OP_ROUND).random();
        let b: u64 = substream(1, 1, 1, OP_ROUND).random();
        let c: u64 = substream(1, 0, 2, OP_ROUND).random();
        let d: u64 = substream(1, 0, 1, OP_LIVE).random();
        assert_eq!(a, substream(1, 0, 1, OP_ROUND).random::<u64>());
        assert!(a != b && a != c && a != d && b != c);
    }

    #[test]
    fn zero_rounds_give_an_empty_report() {
        let run = run_campaign(&small(3, 0)).unwrap();
        assert!(run.report.rounds.is_empty());
        assert_eq!(run.report.totals, Totals::default());
        assert!(run.report.scores.pre.is_none());
        let json: serde_json::Value = serde_json::from_str(&run.report.canonical_json()).unwrap();
        assert_eq!(json["rounds"], serde_json::json!([]));
        assert!(json.get("timing").is_none());
    }

    #[test]
    fn probe_accounting_matches_the_handles() {
        let run = run_campaign(&small(5, 2)).unwrap();
        let handles: u64 = run.agents.iter().map(|a| a.sut.probe_count()).sum();
        assert_eq!(run.report.totals.probes.total(), handles);
        let acts: u64 = run.agents.iter().map(|a| a.sut.act_count()).sum();
        assert_eq!(run.report.totals.acts, acts);
        let round_probes: u64 = run
            .report
            .rounds
            .iter()
            .flat_map(|r| &r.agents)
            .map(|a| a.params.round_budget as u64)
            .sum();
        assert_eq!(run.report.totals.probes.round, round_probes);
    }

    #[test]
    fn learning_switch_lands_after_the_learning_round() {
        let mut c = small(11, 4);
        c.campaign.learning_round = Some(2);
        let run = run_campaign(&c).unwrap();
        let flags: Vec<bool> = run.report.rounds.iter().map(|r| r.post_learning).collect();
        assert_eq!(flags, vec![false, false, true, true]);
        assert!(run.report.header.learning_triggers.is_some());
        assert!(run.report.scores.post.is_some());
    }

    #[test]
    fn shutdown_blocks_every_later_act() {
        let mut c = small(2, 3);
        c.campaign.shutdown_after_round = Some(1);
        let run = run_campaign(&c).unwrap();
        for r in &run.report.rounds[1..] {
            assert!(r.agents.iter().all(|a| a.gate.released == 0));
        }
        assert!(run.report.rounds[0].agents.iter().any(|a| a.gate.released > 0));
    }

    #[test]
    fn canonical_report_round_trips() {
        let run = run_campaign(&small(9, 2)).unwrap();
        let text = run.report.canonical_json();
        let back = CampaignReport::from_json(&text).unwrap();
        assert_eq!(back.canonical_json(), text);
        let mut expected = run.report.clone();
        expected.timing = Timing::default();
        assert_eq!(back, expected);
    }
}
