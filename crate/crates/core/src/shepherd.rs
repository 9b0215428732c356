//! The shepherd: reads per-agent performance indicators at round barriers,
//! nudges each agent's parameters and hands out disjoint exploration regions.
//!
//! Influence rules, applied independently per agent:
//!
//! - R1: `compute_spend > cost_threshold` -> `epsilon *= 0.95`
//! - R2: `inversion_success_rate < 0.2` -> `inversion_budget *= 2`
//! - R3: `stagnation > stagnation_limit` -> `explore_temperature += 0.1`
//! - R4: `purity_mean > 0.99`, no stagnation, R1 silent -> `epsilon *= 1.02`
//!
//! Every result is clamped into its range. The shepherd never sees the
//! constraint system.

use serde::{Deserialize, Serialize};

use crate::bssn::{BssnParams, Cluster};
use crate::constraint::Category;
use crate::geometry::IntervalBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceIndicators {
    /// Fraction of the assigned region covered by settled clusters.
    pub settled_volume: f64,
    /// Fraction of the assigned region covered by settled H' clusters.
    pub h_prime_volume: f64,
    /// Mean confidence of settled clusters.
    pub purity_mean: f64,
    pub inversion_success_rate: f64,
    /// SUT evaluations this round.
    pub compute_spend: u64,
    pub gate_blocks: u64,
    /// Rounds since `h_prime_volume` last grew.
    pub stagnation: u64,
}

impl PerformanceIndicators {
    /// Indicators that trigger no rule under any sane configuration.
    pub fn nominal() -> Self {
        PerformanceIndicators {
            settled_volume: 0.0,
            h_prime_volume: 0.0,
            purity_mean: 0.0,
            inversion_success_rate: 1.0,
            compute_spend: 0,
            gate_blocks: 0,
            stagnation: 0,
        }
    }
}

/// Inputs for [`measure`] that come from the agent's round bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RoundActivity {
    pub inversion_attempts: u64,
    pub inversion_successes: u64,
    pub compute_spend: u64,
    pub gate_blocks: u64,
}

const VOLUME_SAMPLES: usize = 2048;

/// Computes an agent's indicators from its input-space cluster map.
///
/// Covered fractions are estimated on a fixed Halton point set over the region.
pub fn measure(
    region: &IntervalBox,
    input_map: &[Cluster],
    epsilon: f64,
    activity: RoundActivity,
    previous: Option<&PerformanceIndicators>,
) -> PerformanceIndicators {
    let settled: Vec<&Cluster> = input_map
        .iter()
        .filter(|c| c.is_settled() && c.confidence >= epsilon)
        .collect();
    let all: Vec<&IntervalBox> = settled.iter().map(|c| &c.bounds).collect();
    let bad: Vec<&IntervalBox> = settled
        .iter()
        .filter(|c| c.label == Category::HPrime)
        .map(|c| &c.bounds)
        .collect();
    let settled_volume = covered_fraction(region, &all);
    let h_prime_volume = covered_fraction(region, &bad);
    let purity_mean = if settled.is_empty() {
        0.0
    } else {
        settled.iter().map(|c| c.confidence).sum::<f64>() / settled.len() as f64
    };
    let inversion_success_rate = if activity.inversion_attempts == 0 {
        1.0
    } else {
        activity.inversion_successes as f64 / activity.inversion_attempts as f64
    };
    let stagnation = match previous {
        Some(p) if h_prime_volume <= p.h_prime_volume => p.stagnation + 1,
        _ => 0,
    };
    PerformanceIndicators {
        settled_volume,
        h_prime_volume,
        purity_mean,
        inversion_success_rate,
        compute_spend: activity.compute_spend,
        gate_blocks: activity.gate_blocks,
        stagnation,
    }
}

fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Fraction of `region` covered by the union of `boxes`.
pub fn covered_fraction(region: &IntervalBox, boxes: &[&IntervalBox]) -> f64 {
    let near: Vec<&IntervalBox> = boxes.iter().copied().filter(|b| b.intersects(region)).collect();
    if near.is_empty() {
        return 0.0;
    }
    let dim = region.dim();
    let mut point = vec![0.0; dim];
    let mut hits = 0;
    for i in 1..=VOLUME_SAMPLES {
        for (d, x) in point.iter_mut().enumerate() {
            let u = halton(i, PRIMES[d % PRIMES.len()]);
            *x = region.lo()[d] + u * region.side(d);
        }
        if near.iter().any(|b| b.contains(&point)) {
            hits += 1;
        }
    }
    hits as f64 / VOLUME_SAMPLES as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "R1")]
    CostRelief,
    #[serde(rename = "R2")]
    InversionBudget,
    #[serde(rename = "R3")]
    Stagnation,
    #[serde(rename = "R4")]
    Tighten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShepherdConfig {
    /// SUT evaluations per round above which R1 fires.
    pub cost_threshold: u64,
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    /// Cap on inversion_budget as a multiple of the agent's initial value.
    pub budget_cap_factor: u64,
    pub temperature_cap: f64,
    pub stagnation_limit: u64,
    pub low_inversion_rate: f64,
    pub high_purity: f64,
    /// Allowed deviation of each agent's unsettled load from the mean.
    pub rebalance_tolerance: f64,
}

impl Default for ShepherdConfig {
    fn default() -> Self {
        ShepherdConfig {
            cost_threshold: 100_000,
            epsilon_min: 0.55,
            epsilon_max: 0.99,
            budget_cap_factor: 10,
            temperature_cap: 1.0,
            stagnation_limit: 5,
            low_inversion_rate: 0.2,
            high_purity: 0.99,
            rebalance_tolerance: 0.25,
        }
    }
}

/// One agent's parameter update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub params: BssnParams,
    pub fired: Vec<Rule>,
}

#[derive(Debug, Clone)]
pub struct Shepherd {
    config: ShepherdConfig,
    initial: Vec<BssnParams>,
}

impl Shepherd {
    /// `initial` holds each agent's starting parameters, used for caps.
    pub fn new(config: ShepherdConfig, initial: Vec<BssnParams>) -> Self {
        Shepherd { config, initial }
    }

    pub fn config(&self) -> &ShepherdConfig {
        &self.config
    }

    /// Applies R1-R4 to every agent. Agents that fire no rule keep their
    /// parameters untouched.
    pub fn influence(&self, params: &[BssnParams], indicators: &[PerformanceIndicators]) -> Vec<Influence> {
        assert_eq!(params.len(), indicators.len(), "one indicator set per agent");
        params
            .iter()
            .zip(indicators)
            .enumerate()
            .map(|(i, (p, ind))| self.influence_one(i, p, ind))
            .collect()
    }

    fn influence_one(&self, agent: usize, p: &BssnParams, ind: &PerformanceIndicators) -> Influence {
        let cfg = &self.config;
        let initial_budget = self
            .initial
            .get(agent)
            .map_or(p.inversion_budget, |q| q.inversion_budget);
        let mut next = p.clone();
        let mut fired = Vec::new();
        let r1 = ind.compute_spend > cfg.cost_threshold;
        if r1 {
            next.epsilon = (next.epsilon * 0.95).clamp(cfg.epsilon_min, cfg.epsilon_max);
            fired.push(Rule::CostRelief);
        }
        if ind.inversion_success_rate < cfg.low_inversion_rate {
            let cap = initial_budget.saturating_mul(cfg.budget_cap_factor);
            next.inversion_budget = next.inversion_budget.saturating_mul(2).min(cap).max(1);
            fired.push(Rule::InversionBudget);
        }
        if ind.stagnation > cfg.stagnation_limit {
            next.explore_temperature = (next.explore_temperature + 0.1).clamp(0.0, cfg.temperature_cap);
            fired.push(Rule::Stagnation);
        }
        if ind.purity_mean > cfg.high_purity && ind.stagnation == 0 && !r1 {
            next.epsilon = (next.epsilon * 1.02).clamp(cfg.epsilon_min, cfg.epsilon_max);
            fired.push(Rule::Tighten);
        }
        if fired.is_empty() {
            next = p.clone();
        }
        Influence { params: next, fired }
    }
}

/// Exploration region per agent. The boxes tile the global input box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionAssignment {
    pub boxes: Vec<IntervalBox>,
}

impl RegionAssignment {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Index of the first region containing `point`.
    pub fn owner_of(&self, point: &[f64]) -> Option<usize> {
        self.boxes.iter().position(|b| b.contains(point))
    }
}

/// Unsettled-work density: constant `1 - settled_volume` over each
/// previously assigned region.
struct LoadModel<'a> {
    pieces: Vec<(&'a IntervalBox, f64)>,
}

impl LoadModel<'_> {
    fn load(&self, bx: &IntervalBox) -> f64 {
        self.pieces
            .iter()
            .map(|(r, density)| density * r.overlap_volume(bx))
            .sum()
    }
}

/// Splits `global` into `agents` boxes by recursive bisection.
///
/// Without history the split is by equal volume. With the previous assignment
/// and its indicators, cuts balance unsettled volume instead, and the previous
/// assignment is kept whenever every agent's unsettled load is already within
/// `tolerance` of the mean.
pub fn assign_regions(
    agents: usize,
    global: &IntervalBox,
    history: Option<(&RegionAssignment, &[PerformanceIndicators])>,
    tolerance: f64,
) -> RegionAssignment {
    assert!(agents >= 1, "at least one agent");
    let model = history.and_then(|(prev, ind)| {
        if prev.len() != ind.len() {
            return None;
        }
        let pieces: Vec<(&IntervalBox, f64)> = prev
            .boxes
            .iter()
            .zip(ind)
            .map(|(b, i)| (b, (1.0 - i.settled_volume).clamp(0.0, 1.0)))
            .collect();
        let model = LoadModel { pieces };
        (model.load(global) > 0.0).then_some(model)
    });
    if let (Some(model), Some((prev, _))) = (&model, history) {
        if prev.len() == agents && is_balanced(&prev.boxes, model, tolerance) {
            return prev.clone();
        }
    }
    let mut boxes = Vec::with_capacity(agents);
    split(global, agents, global, model.as_ref(), &mut boxes);
    RegionAssignment { boxes }
}

/// Whether every box's unsettled load lies within `tolerance` of the mean.
fn is_balanced(boxes: &[IntervalBox], model: &LoadModel<'_>, tolerance: f64) -> bool {
    let loads: Vec<f64> = boxes.iter().map(|b| model.load(b)).collect();
    let mean = loads.iter().sum::<f64>() / loads.len() as f64;
    loads.iter().all(|l| (l - mean).abs() <= tolerance * mean + 1e-12)
}

/// Unsettled load of each region under the indicator model of `history`.
pub fn unsettled_loads(
    assignment: &RegionAssignment,
    history: (&RegionAssignment, &[PerformanceIndicators]),
) -> Vec<f64> {
    let model = LoadModel {
        pieces: history
            .0
            .boxes
            .iter()
            .zip(history.1)
            .map(|(b, i)| (b, (1.0 - i.settled_volume).clamp(0.0, 1.0)))
            .collect(),
    };
    assignment.boxes.iter().map(|b| model.load(b)).collect()
}

fn split(bx: &IntervalBox, k: usize, global: &IntervalBox, model: Option<&LoadModel<'_>>, out: &mut Vec<IntervalBox>) {
    if k == 1 {
        out.push(bx.clone());
        return;
    }
    let d = (0..bx.dim())
        .filter(|&d| global.side(d) > 0.0)
        .max_by(|&a, &b| {
            let na = bx.side(a) / global.side(a);
            let nb = bx.side(b) / global.side(b);
            na.total_cmp(&nb).then(b.cmp(&a))
        })
        .unwrap_or(0);
    let k_left = k / 2;
    let share = k_left as f64 / k as f64;
    let weigh = |b: &IntervalBox| match model {
        Some(m) => m.load(b),
        None => b.volume(),
    };
    let cut_at = |c: f64| {
        let mut left_hi = bx.hi().to_vec();
        left_hi[d] = c;
        let mut right_lo = bx.lo().to_vec();
        right_lo[d] = c;
        (
            IntervalBox::new(bx.lo().to_vec(), left_hi).expect("cut inside box"),
            IntervalBox::new(right_lo, bx.hi().to_vec()).expect("cut inside box"),
        )
    };
    let total = weigh(bx);
    let (lo, hi) = (bx.lo()[d], bx.hi()[d]);
    let cut = if total > 0.0 && bx.volume() > 0.0 {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if weigh(&cut_at(mid).0) < share * total {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    } else {
        lo + share * (hi - lo)
    };
    let (left, right) = cut_at(cut);
    split(&left, k_left, global, model, out);
    split(&right, k - k_left, global, model, out);
}
