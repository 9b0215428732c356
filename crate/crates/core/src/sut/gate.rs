//! Output gate: every actuation request is classified before release.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{SutError, SutHandle};
use crate::constraint::{ActionClassification, Category, ConstraintSystem};
use crate::space::Assignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Released,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockReason {
    Unpermissible,
    SoftViolation,
    GateClosed,
    Fault,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatePolicy {
    /// Also block permissible-but-inefficient actions.
    pub block_soft_violations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateEvent {
    pub t: u64,
    pub seq: u64,
    pub input: Assignment,
    pub proposed: Option<Assignment>,
    pub classification: Option<ActionClassification>,
    pub verdict: Verdict,
    pub reason: Option<BlockReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateOutcome {
    Released(Assignment),
    Blocked(BlockReason),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LatencyStats {
    pub count: u64,
    pub total_ns: u128,
    pub max_ns: u128,
}

impl LatencyStats {
    pub fn mean_ns(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total_ns as f64 / self.count as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct GateState {
    open: bool,
    policy: GatePolicy,
    clock: u64,
    events: Vec<GateEvent>,
    latency: LatencyStats,
}

impl Default for GateState {
    fn default() -> Self {
        GateState::new(GatePolicy::default())
    }
}

impl GateState {
    pub fn new(policy: GatePolicy) -> Self {
        GateState {
            open: true,
            policy,
            clock: 0,
            events: Vec::new(),
            latency: LatencyStats::default(),
        }
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn policy(&self) -> GatePolicy {
        self.policy
    }

    /// Timestamp stamped on subsequent events.
    pub fn set_clock(&mut self, t: u64) {
        self.clock = t;
    }

    pub fn events(&self) -> &[GateEvent] {
        &self.events
    }

    pub fn released(&self) -> usize {
        self.events.iter().filter(|e| e.verdict == Verdict::Released).count()
    }

    pub fn blocked(&self) -> usize {
        self.events.len() - self.released()
    }

    /// Classification latency on the gate path (not part of any canonical output).
    pub fn latency(&self) -> LatencyStats {
        self.latency
    }

    /// Closes the gate for good.
    pub fn shutdown(&mut self) {
        self.open = false;
    }

    fn log(
        &mut self,
        input: &Assignment,
        proposed: Option<Assignment>,
        classification: Option<ActionClassification>,
        reason: Option<BlockReason>,
    ) {
        let verdict = if reason.is_none() {
            Verdict::Released
        } else {
            Verdict::Blocked
        };
        self.events.push(GateEvent {
            t: self.clock,
            seq: self.events.len() as u64,
            input: input.clone(),
            proposed,
            classification,
            verdict,
            reason,
        });
    }
}

/// Closes `gate` permanently. Idempotent.
pub fn shutdown(_sut: &SutHandle, gate: &mut GateState) {
    gate.shutdown();
}

/// Asks the SUT for its action on `x`, classifies it and releases or blocks it.
///
/// Only an invalid input is an error; SUT faults and classification faults
/// are logged as blocked events.
pub fn act(
    sut: &mut SutHandle,
    x: &Assignment,
    gate: &mut GateState,
    checker: &ConstraintSystem,
) -> Result<GateOutcome, SutError> {
    let proposed = match sut.propose(x) {
        Ok(a) => a,
        Err(SutError::Fault(_)) => {
            gate.log(x, None, None, Some(BlockReason::Fault));
            return Ok(GateOutcome::Blocked(BlockReason::Fault));
        }
        Err(e) => return Err(e),
    };
    let start = Instant::now();
    let classification = checker.classify(&proposed);
    let ns = start.elapsed().as_nanos();
    gate.latency.count += 1;
    gate.latency.total_ns += ns;
    gate.latency.max_ns = gate.latency.max_ns.max(ns);

    let classification = match classification {
        Ok(c) => c,
        Err(_) => {
            gate.log(x, Some(proposed), None, Some(BlockReason::Fault));
            return Ok(GateOutcome::Blocked(BlockReason::Fault));
        }
    };
    let reason = if !gate.open {
        Some(BlockReason::GateClosed)
    } else if classification.fault.is_some() {
        Some(BlockReason::Fault)
    } else {
        match classification.category {
            Category::HPrime => Some(BlockReason::Unpermissible),
            Category::HsPrime if gate.policy.block_soft_violations => Some(BlockReason::SoftViolation),
            _ => None,
        }
    };
    gate.log(x, Some(proposed.clone()), Some(classification), reason);
    Ok(match reason {
        None => GateOutcome::Released(proposed),
        Some(r) => GateOutcome::Blocked(r),
    })
}
