//! The BSSN watchdog agent: test rounds, the compression, partition,
//! inversion and adaptation operators, and gatekeeping.

pub mod adapt;
pub mod confidence;
pub mod invert;
pub mod partition;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{ActionClassification, Category, ConstraintSystem};
use crate::geometry::IntervalBox;
use crate::space::Assignment;
use crate::sut::{act, GateOutcome, GateState, ProbeTag, SutError, SutHandle};

pub use adapt::{adapt, make_disjoint};
pub use confidence::{
    estimate_confidence, wilson_lower, ConfidenceEstimator, Estimate, InversionEstimator, InversionStats, LabelCounts,
    SamplingEstimator, WILSON_Z,
};
pub use invert::{invert, Inversion, InvertError};
pub use partition::partition;

/// Operator parameters of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BssnParams {
    /// Required purity confidence, in (0.5, 1).
    pub epsilon: f64,
    /// Probes per test round.
    pub round_budget: usize,
    /// SUT evaluations per inversion attempt.
    pub inversion_budget: u64,
    pub max_partition_depth: usize,
    /// Smallest box side, as a fraction of the domain span.
    pub min_box_fraction: f64,
    /// 0 = focus on unsettled boxes as much as allowed, 1 = uniform only.
    pub explore_temperature: f64,
    /// Weight of an H' sample inside a permissible box.
    pub risk_ratio: f64,
    /// Rounds without confirmation before a cluster goes stale.
    pub staleness_window: u64,
    /// Samples per confidence estimate.
    pub confidence_samples: usize,
}

impl Default for BssnParams {
    fn default() -> Self {
        BssnParams {
            epsilon: 0.9,
            round_budget: 500,
            inversion_budget: 400,
            max_partition_depth: 16,
            min_box_fraction: 1.0 / 128.0,
            explore_temperature: 0.5,
            risk_ratio: 10.0,
            staleness_window: 5,
            confidence_samples: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parameter `{name}` = {value} is outside {range}")]
pub struct ParamError {
    pub name: &'static str,
    pub value: f64,
    pub range: &'static str,
}

impl BssnParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let check = |ok: bool, name: &'static str, value: f64, range: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(ParamError { name, value, range })
            }
        };
        check(
            self.epsilon > 0.5 && self.epsilon < 1.0,
            "epsilon",
            self.epsilon,
            "(0.5, 1)",
        )?;
        check(
            self.round_budget > 0,
            "round_budget",
            self.round_budget as f64,
            "[1, inf)",
        )?;
        check(
            self.inversion_budget > 0,
            "inversion_budget",
            self.inversion_budget as f64,
            "[1, inf)",
        )?;
        check(
            self.min_box_fraction > 0.0 && self.min_box_fraction < 1.0,
            "min_box_fraction",
            self.min_box_fraction,
            "(0, 1)",
        )?;
        check(
            self.explore_temperature >= 0.0 && self.explore_temperature.is_finite(),
            "explore_temperature",
            self.explore_temperature,
            "[0, inf)",
        )?;
        check(
            self.risk_ratio >= 1.0 && self.risk_ratio.is_finite(),
            "risk_ratio",
            self.risk_ratio,
            "[1, inf)",
        )?;
        check(
            self.staleness_window > 0,
            "staleness_window",
            self.staleness_window as f64,
            "[1, inf)",
        )?;
        check(
            self.confidence_samples > 0,
            "confidence_samples",
            self.confidence_samples as f64,
            "[1, inf)",
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceTag {
    Input,
    Action,
}

/// A labeled box over the input or action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub space: SpaceTag,
    #[serde(rename = "box")]
    pub bounds: IntervalBox,
    pub label: Category,
    /// Lower confidence bound on label purity.
    pub confidence: f64,
    pub support: u64,
    pub born_t: u64,
    pub last_confirmed_t: u64,
    pub stale: bool,
    /// Never reached the required confidence.
    pub unsettled: bool,
}

impl Cluster {
    /// Confirmed, current, and confident enough to count as knowledge.
    pub fn is_settled(&self) -> bool {
        !self.unsettled && !self.stale
    }
}

/// One round of what-if testing: paired inputs, actions and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRound {
    pub t: u64,
    pub inputs: Vec<Assignment>,
    pub actions: Vec<Assignment>,
    pub classifications: Vec<ActionClassification>,
    /// Set when a SUT fault cut the round short.
    pub fault: Option<String>,
}

impl TestRound {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn count(&self, label: Category) -> usize {
        self.classifications.iter().filter(|c| c.category == label).count()
    }
}

/// Splits a focus budget across the labels present, 3:2:1 for H', HS', HS,
/// by largest remainder. Ties in the remainder go to the more severe label,
/// so a more severe label never receives fewer probes than a milder one.
///
/// Input and output are indexed in [`Category::ALL`] order.
pub fn allocate_focus(budget: usize, present: [bool; 3]) -> [usize; 3] {
    let weights: Vec<f64> = Category::ALL
        .iter()
        .zip(present)
        .map(|(c, p)| if p { c.priority() as f64 } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut out = [0usize; 3];
    if total == 0.0 || budget == 0 {
        return out;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| budget as f64 * w / total).collect();
    for i in 0..3 {
        out[i] = quotas[i].floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).filter(|&i| present[i]).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(b.cmp(&a))
    });
    let mut left = budget - out.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// Share of the round spent around unsettled boxes.
pub fn focus_share(params: &BssnParams) -> f64 {
    0.5 * (1.0 - params.explore_temperature.clamp(0.0, 1.0))
}

fn expanded_within(bx: &IntervalBox, factor: f64, region: &IntervalBox) -> Option<IntervalBox> {
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..bx.dim())
        .map(|d| {
            let pad = 0.5 * (factor - 1.0) * bx.side(d);
            (bx.lo()[d] - pad, bx.hi()[d] + pad)
        })
        .unzip();
    IntervalBox::new(lo, hi).ok()?.intersection(region)
}

/// Generates `round_budget` inputs inside `region`, probes them in what-if
/// mode and classifies the proposed actions. No gate traffic is produced.
///
/// A share of the budget (see [`focus_share`]) samples around the `focus`
/// boxes, split across their labels by [`allocate_focus`]; the rest is
/// uniform over the region.
pub fn run_round<R: Rng + ?Sized>(
    params: &BssnParams,
    sut: &mut SutHandle,
    checker: &ConstraintSystem,
    region: &IntervalBox,
    focus: &[Cluster],
    t: u64,
    rng: &mut R,
) -> TestRound {
    let m = params.round_budget;
    let mut plan: Vec<IntervalBox> = Vec::with_capacity(m);
    let focus: Vec<(Category, IntervalBox)> = focus
        .iter()
        .filter_map(|c| expanded_within(&c.bounds, 1.5, region).map(|b| (c.label, b)))
        .collect();
    if !focus.is_empty() {
        let n_focus = (m as f64 * focus_share(params)).round() as usize;
        let present = Category::ALL.map(|c| focus.iter().any(|(l, _)| *l == c));
        let split = allocate_focus(n_focus, present);
        for (label, &n) in Category::ALL.iter().zip(&split) {
            let boxes: Vec<&IntervalBox> = focus.iter().filter(|(l, _)| l == label).map(|(_, b)| b).collect();
            for _ in 0..n {
                plan.push(boxes[rng.random_range(0..boxes.len())].clone());
            }
        }
    }
    while plan.len() < m {
        plan.push(region.clone());
    }

    sut.set_probe_tag(ProbeTag::Round);
    let space = sut.input_space().clone();
    let mut round = TestRound {
        t,
        inputs: Vec::with_capacity(m),
        actions: Vec::with_capacity(m),
        classifications: Vec::with_capacity(m),
        fault: None,
    };
    for bx in &plan {
        let x = space.sample_in(bx, rng);
        match sut.probe_coords(&x) {
            Ok((_, action)) => {
                round.classifications.push(checker.classify_values(action.values()));
                round.inputs.push(space.to_assignment(&x));
                round.actions.push(action);
            }
            Err(e) => {
                round.fault = Some(e.to_string());
                break;
            }
        }
    }
    round
}

fn compress(round: &TestRound, tag: SpaceTag, epsilon: f64, risk_ratio: f64) -> Vec<Cluster> {
    let points: Vec<Vec<f64>> = match tag {
        SpaceTag::Input => round.inputs.iter().map(Assignment::coords).collect(),
        SpaceTag::Action => round.actions.iter().map(Assignment::coords).collect(),
    };
    let mut out = Vec::new();
    for label in Category::ALL {
        let members = points
            .iter()
            .zip(&round.classifications)
            .filter(|(_, c)| c.category == label)
            .map(|(p, _)| p.as_slice());
        let Some(bounds) = IntervalBox::hull_of_points(members) else {
            continue;
        };
        let mut inside = LabelCounts::default();
        for (p, c) in points.iter().zip(&round.classifications) {
            if bounds.contains(p) {
                inside.add(c.category);
            }
        }
        let confidence = inside.bound_for(label, risk_ratio);
        out.push(Cluster {
            space: tag,
            bounds,
            label,
            confidence,
            support: round.count(label) as u64,
            born_t: round.t,
            last_confirmed_t: round.t,
            stale: false,
            unsettled: confidence < epsilon,
        });
    }
    out
}

/// One bounding box per label present among the round's inputs.
///
/// Confidence comes from all round samples that fall inside the box.
pub fn compress_inputs(round: &TestRound, params: &BssnParams) -> Vec<Cluster> {
    compress(round, SpaceTag::Input, params.epsilon, params.risk_ratio)
}

/// One bounding box per label present among the round's actions.
pub fn compress_actions(round: &TestRound, params: &BssnParams) -> Vec<Cluster> {
    compress(round, SpaceTag::Action, params.epsilon, params.risk_ratio)
}

/// Routes a live input through the agent's gate.
pub fn gatekeep(
    sut: &mut SutHandle,
    gate: &mut GateState,
    checker: &ConstraintSystem,
    x: &Assignment,
) -> Result<GateOutcome, SutError> {
    act(sut, x, gate, checker)
}
