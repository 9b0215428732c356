//! Opaque systems under test and the reference SUT library.
//!
//! A [`SutHandle`] exposes only its declared spaces, the what-if [`probe`]
//! channel and interaction counters. Hidden state lives in a private engine.
//! The gated actuation channel is in [`gate`].
//!
//! [`probe`]: SutHandle::probe

pub mod gate;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::IntervalBox;
use crate::space::{Assignment, SpaceError, VariableSpace};

pub use gate::{act, shutdown, BlockReason, GateEvent, GateOutcome, GatePolicy, GateState, Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SutError {
    #[error("what-if probing is disabled on this handle")]
    WhatIfDisabled,
    #[error("invalid input: {0}")]
    InvalidInput(#[from] SpaceError),
    #[error("SUT fault: {0}")]
    Fault(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("{0}")]
    Dimension(String),
    #[error("{0}")]
    Invalid(String),
}

/// `v = matrix * x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl LinearMap {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, b)| row.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>() + b)
            .collect()
    }

    fn check(&self, n_in: usize, n_out: usize) -> Result<(), SpecError> {
        if self.matrix.len() != n_out || self.offset.len() != n_out || self.matrix.iter().any(|r| r.len() != n_in) {
            return Err(SpecError::Dimension(format!(
                "linear map must be {n_out}x{n_in} with {n_out} offsets"
            )));
        }
        Ok(())
    }
}

/// One piece of a piecewise map: inputs in `domain` map affinely onto `image`.
///
/// Output coordinate `j` is driven by input coordinate `j % n_in`, scaled so
/// that the domain's extent along that coordinate covers the image's extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub domain: IntervalBox,
    pub image: IntervalBox,
}

impl Cell {
    pub fn map(&self, x: &[f64]) -> Vec<f64> {
        let n_in = self.domain.dim();
        (0..self.image.dim())
            .map(|j| {
                let d = j % n_in;
                let side = self.domain.side(d);
                let u = if side > 0.0 {
                    ((x[d] - self.domain.lo()[d]) / side).clamp(0.0, 1.0)
                } else {
                    0.5
                };
                self.image.lo()[j] + u * self.image.side(j)
            })
            .collect()
    }
}

fn piecewise(cells: &[Cell], x: &[f64]) -> Vec<f64> {
    if let Some(cell) = cells.iter().find(|c| c.domain.contains(x)) {
        return cell.map(x);
    }
    let nearest = cells
        .iter()
        .min_by(|a, b| a.domain.distance_to(x).total_cmp(&b.domain.distance_to(x)))
        .expect("piecewise maps have at least one cell");
    let mut clamped = x.to_vec();
    nearest.domain.clamp_point(&mut clamped);
    nearest.map(&clamped)
}

fn check_cells(cells: &[Cell], n_in: usize, n_out: usize) -> Result<(), SpecError> {
    if cells.is_empty() {
        return Err(SpecError::Invalid("piecewise map needs at least one cell".into()));
    }
    for c in cells {
        if c.domain.dim() != n_in || c.image.dim() != n_out {
            return Err(SpecError::Dimension(format!(
                "cell must map {n_in}-d inputs to {n_out}-d actions"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SutKind {
    Linear(LinearMap),
    /// First cell whose closed domain contains the input wins.
    PiecewiseRugged {
        cells: Vec<Cell>,
    },
    /// Linear map perturbed by a hidden seeded mix of the last
    /// `memory_depth` inputs.
    Stateful {
        map: LinearMap,
        memory_depth: usize,
        coupling: f64,
    },
    /// `pre` for the first `trigger` interactions, `post` afterwards.
    Learning {
        pre: Vec<Cell>,
        post: Vec<Cell>,
        trigger: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SutSpec {
    pub input_space: VariableSpace,
    pub action_space: VariableSpace,
    #[serde(flatten)]
    pub kind: SutKind,
    #[serde(default)]
    pub seed: u64,
    /// Price of one what-if probe, accumulated in [`SutHandle::cost`].
    #[serde(default = "unit_cost")]
    pub probe_cost: f64,
    /// Inputs inside this box make the SUT fault.
    #[serde(default)]
    pub fault_region: Option<IntervalBox>,
}

fn unit_cost() -> f64 {
    1.0
}

impl SutSpec {
    pub fn new(input_space: VariableSpace, action_space: VariableSpace, kind: SutKind) -> Self {
        SutSpec {
            input_space,
            action_space,
            kind,
            seed: 0,
            probe_cost: 1.0,
            fault_region: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let (n_in, n_out) = (self.input_space.len(), self.action_space.len());
        if n_in == 0 || n_out == 0 {
            return Err(SpecError::Dimension("input and action spaces must be non-empty".into()));
        }
        if !(self.probe_cost.is_finite() && self.probe_cost >= 0.0) {
            return Err(SpecError::Invalid("probe_cost must be a nonnegative number".into()));
        }
        if let Some(f) = &self.fault_region {
            if f.dim() != n_in {
                return Err(SpecError::Dimension("fault region must match the input space".into()));
            }
        }
        match &self.kind {
            SutKind::Linear(map) => map.check(n_in, n_out),
            SutKind::PiecewiseRugged { cells } => check_cells(cells, n_in, n_out),
            SutKind::Stateful {
                map,
                memory_depth,
                coupling,
            } => {
                map.check(n_in, n_out)?;
                if *memory_depth == 0 || !coupling.is_finite() {
                    return Err(SpecError::Invalid(
                        "stateful SUT needs memory_depth >= 1 and a finite coupling".into(),
                    ));
                }
                Ok(())
            }
            SutKind::Learning { pre, post, .. } => {
                check_cells(pre, n_in, n_out)?;
                check_cells(post, n_in, n_out)
            }
        }
    }
}

/// Hidden state. Nothing outside this module can see it.
#[derive(Debug, Clone)]
enum Engine {
    Linear(LinearMap),
    Piecewise(Vec<Cell>),
    Stateful {
        map: LinearMap,
        hidden: Vec<Vec<f64>>,
        memory: Vec<Vec<f64>>,
        depth: usize,
        coupling: f64,
    },
    Learning {
        pre: Vec<Cell>,
        post: Vec<Cell>,
        trigger: u64,
    },
}

impl Engine {
    fn build(spec: &SutSpec) -> Engine {
        match &spec.kind {
            SutKind::Linear(map) => Engine::Linear(map.clone()),
            SutKind::PiecewiseRugged { cells } => Engine::Piecewise(cells.clone()),
            SutKind::Stateful {
                map,
                memory_depth,
                coupling,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                let n_in = spec.input_space.len();
                let hidden = (0..spec.action_space.len())
                    .map(|_| (0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                Engine::Stateful {
                    map: map.clone(),
                    hidden,
                    memory: Vec::new(),
                    depth: *memory_depth,
                    coupling: *coupling,
                }
            }
            SutKind::Learning { pre, post, trigger } => Engine::Learning {
                pre: pre.clone(),
                post: post.clone(),
                trigger: *trigger,
            },
        }
    }

    /// Computes the raw action for interaction number `n` (1-based).
    fn step(&mut self, x: &[f64], n: u64) -> Vec<f64> {
        match self {
            Engine::Linear(map) => map.apply(x),
            Engine::Piecewise(cells) => piecewise(cells, x),
            Engine::Stateful {
                map,
                hidden,
                memory,
                depth,
                coupling,
            } => {
                let mut v = map.apply(x);
                if !memory.is_empty() {
                    let k = memory.len() as f64;
                    for (vj, row) in v.iter_mut().zip(hidden.iter()) {
                        let echo: f64 = memory
                            .iter()
                            .map(|m| row.iter().zip(m).map(|(h, xi)| h * xi).sum::<f64>())
                            .sum();
                        *vj += *coupling * echo / k;
                    }
                }
                memory.push(x.to_vec());
                if memory.len() > *depth {
                    memory.remove(0);
                }
                v
            }
            Engine::Learning { pre, post, trigger } => {
                if n <= *trigger {
                    piecewise(pre, x)
                } else {
                    piecewise(post, x)
                }
            }
        }
    }
}

/// Which activity a probe served; used to label trace rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTag {
    Round,
    Confidence,
    Inversion,
}

impl ProbeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeTag::Round => "round",
            ProbeTag::Confidence => "confidence",
            ProbeTag::Inversion => "inversion",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub tag: ProbeTag,
    pub input: Vec<f64>,
    /// `None` when the probe faulted.
    pub action: Option<Vec<f64>>,
}

/// Black-box handle: declared spaces, the what-if channel and counters.
#[derive(Debug, Clone)]
pub struct SutHandle {
    input_space: VariableSpace,
    action_space: VariableSpace,
    action_bounds: IntervalBox,
    engine: Engine,
    fault_region: Option<IntervalBox>,
    probe_cost: f64,
    what_if_enabled: bool,
    interactions: u64,
    probes: u64,
    acts: u64,
    cost: f64,
    tag: ProbeTag,
    recorder: Option<Vec<ProbeRecord>>,
}

/// Builds a deterministic handle from a spec.
pub fn make_reference_sut(spec: &SutSpec) -> Result<SutHandle, SpecError> {
    spec.validate()?;
    Ok(SutHandle {
        input_space: spec.input_space.clone(),
        action_space: spec.action_space.clone(),
        action_bounds: spec.action_space.bounds(),
        engine: Engine::build(spec),
        fault_region: spec.fault_region.clone(),
        probe_cost: spec.probe_cost,
        what_if_enabled: true,
        interactions: 0,
        probes: 0,
        acts: 0,
        cost: 0.0,
        tag: ProbeTag::Round,
        recorder: None,
    })
}

impl SutHandle {
    pub fn input_space(&self) -> &VariableSpace {
        &self.input_space
    }

    pub fn action_space(&self) -> &VariableSpace {
        &self.action_space
    }

    pub fn what_if_enabled(&self) -> bool {
        self.what_if_enabled
    }

    pub fn set_what_if(&mut self, enabled: bool) {
        self.what_if_enabled = enabled;
    }

    /// Probes plus acts so far.
    pub fn interactions(&self) -> u64 {
        self.interactions
    }

    pub fn probe_count(&self) -> u64 {
        self.probes
    }

    pub fn act_count(&self) -> u64 {
        self.acts
    }

    /// Accumulated probe cost.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn set_probe_tag(&mut self, tag: ProbeTag) {
        self.tag = tag;
    }

    pub fn record_probes(&mut self, enabled: bool) {
        self.recorder = if enabled { Some(Vec::new()) } else { None };
    }

    /// Drains recorded probes (empty when recording is off).
    pub fn take_records(&mut self) -> Vec<ProbeRecord> {
        self.recorder.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// What-if query: the proposed action for `x`, never actuated.
    ///
    /// Probes count as interactions and may advance hidden state.
    pub fn probe(&mut self, x: &Assignment) -> Result<Assignment, SutError> {
        if !self.what_if_enabled {
            return Err(SutError::WhatIfDisabled);
        }
        self.input_space.validate(x)?;
        Ok(self.probe_coords(&x.coords())?.1)
    }

    /// Probe on raw coordinates, snapped onto the input space first.
    /// Returns the action as coordinates and as an assignment.
    pub fn probe_coords(&mut self, x: &[f64]) -> Result<(Vec<f64>, Assignment), SutError> {
        if !self.what_if_enabled {
            return Err(SutError::WhatIfDisabled);
        }
        let mut x = x.to_vec();
        self.input_space.snap(&mut x);
        self.probes += 1;
        self.cost += self.probe_cost;
        let out = self.interact(&x);
        if let Some(rec) = self.recorder.as_mut() {
            rec.push(ProbeRecord {
                tag: self.tag,
                input: x,
                action: out.as_ref().ok().map(|(v, _)| v.clone()),
            });
        }
        out
    }

    fn interact(&mut self, x: &[f64]) -> Result<(Vec<f64>, Assignment), SutError> {
        self.interactions += 1;
        if self.fault_region.as_ref().is_some_and(|f| f.contains(x)) {
            return Err(SutError::Fault(format!("input {x:?} lies in the fault region")));
        }
        let mut v = self.engine.step(x, self.interactions);
        if v.iter().any(|c| !c.is_finite()) {
            return Err(SutError::Fault("non-finite action".into()));
        }
        self.action_bounds.clamp_point(&mut v);
        self.action_space.snap(&mut v);
        let a = self.action_space.to_assignment(&v);
        Ok((v, a))
    }

    /// Actuation-path query used by the gate.
    fn propose(&mut self, x: &Assignment) -> Result<Assignment, SutError> {
        self.input_space.validate(x)?;
        self.acts += 1;
        Ok(self.interact(&x.coords())?.1)
    }
}
