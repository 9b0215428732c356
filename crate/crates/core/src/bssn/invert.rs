//! Inversion: find an input whose action lands in a target box.
//!
//! (mu + lambda) evolution strategy with per-dimension Gaussian steps on
//! reals, bit flips on booleans and +-1 jitter on integers. Step sizes follow
//! the 1/5 success rule. The search restarts from fresh random parents when
//! it stalls, up to [`MAX_RESTARTS`] times.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::geometry::IntervalBox;
use crate::space::{Assignment, VarKind, VariableSpace};
use crate::sut::{SutError, SutHandle};

pub const MU: usize = 5;
pub const LAMBDA: usize = 20;
pub const MAX_RESTARTS: usize = 5;

/// Box-membership slack used when confirming a landing.
pub const LANDING_TOLERANCE: f64 = 1e-6;

const INITIAL_STEP: f64 = 0.15;
const STEP_GROWTH: f64 = 1.5;
const STALL_GENERATIONS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub input: Assignment,
    pub action: Assignment,
    pub evaluations: u64,
    /// The input re-probed into the target a second time.
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InvertError {
    /// No input found within budget. Not a proof of unreachability.
    #[error("inversion budget exhausted after {evaluations} evaluations")]
    BudgetExhausted { evaluations: u64 },
    #[error(transparent)]
    Sut(SutError),
}

struct Individual {
    x: Vec<f64>,
    fitness: f64,
}

struct Search<'a> {
    sut: &'a mut SutHandle,
    space: VariableSpace,
    region: &'a IntervalBox,
    target: &'a IntervalBox,
    budget: u64,
    used: u64,
}

enum Step {
    Hit(Vec<f64>),
    Miss(f64),
}

impl Search<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Step, InvertError> {
        self.used += 1;
        match self.sut.probe_coords(x) {
            Ok((v, _)) => {
                let d = self.target.distance_to(&v);
                Ok(if d == 0.0 { Step::Hit(x.to_vec()) } else { Step::Miss(d) })
            }
            Err(SutError::Fault(_)) => Ok(Step::Miss(f64::INFINITY)),
            Err(e) => Err(InvertError::Sut(e)),
        }
    }

    fn exhausted(&self) -> bool {
        self.used >= self.budget
    }

    fn mutate<R: Rng + ?Sized>(&self, parent: &[f64], scale: f64, rng: &mut R) -> Vec<f64> {
        let n = parent.len();
        let mut child = parent.to_vec();
        for (d, var) in self.space.variables().iter().enumerate() {
            let (lo, hi) = (self.region.lo()[d], self.region.hi()[d]);
            match &var.kind {
                VarKind::Real { .. } => {
                    let z: f64 = StandardNormal.sample(rng);
                    child[d] = (child[d] + scale * (hi - lo) * z).clamp(lo, hi);
                }
                VarKind::Bool => {
                    if hi > lo && rng.random_bool(1.0 / n as f64) {
                        child[d] = 1.0 - child[d];
                    }
                }
                VarKind::Int { domain } => {
                    if hi > lo && rng.random_bool(1.0 / n as f64) {
                        let members = domain.members_within(lo, hi);
                        if let Some(pos) = members.iter().position(|&m| m as f64 == child[d]) {
                            let next = if rng.random_bool(0.5) {
                                pos.saturating_sub(1)
                            } else {
                                (pos + 1).min(members.len() - 1)
                            };
                            child[d] = members[next] as f64;
                        }
                    }
                }
            }
        }
        child
    }
}

/// Searches `region` of the input space for an input whose action lies in
/// `target`, using at most `budget` SUT evaluations (plus one confirming
/// re-probe on success).
pub fn invert<R: Rng + ?Sized>(
    sut: &mut SutHandle,
    region: &IntervalBox,
    target: &IntervalBox,
    budget: u64,
    rng: &mut R,
) -> Result<Inversion, InvertError> {
    let space = sut.input_space().clone();
    let mut search = Search {
        sut,
        space,
        region,
        target,
        budget,
        used: 0,
    };
    let mut restarts = 0;
    while !search.exhausted() && restarts <= MAX_RESTARTS {
        if let Some(x) = run_once(&mut search, rng)? {
            return finish(search, x);
        }
        restarts += 1;
    }
    Err(InvertError::BudgetExhausted {
        evaluations: search.used,
    })
}

fn run_once<R: Rng + ?Sized>(search: &mut Search<'_>, rng: &mut R) -> Result<Option<Vec<f64>>, InvertError> {
    let mut pop = Vec::with_capacity(MU + LAMBDA);
    for _ in 0..LAMBDA {
        if search.exhausted() {
            break;
        }
        let x = search.space.sample_in(search.region, rng);
        match search.evaluate(&x)? {
            Step::Hit(x) => return Ok(Some(x)),
            Step::Miss(fitness) => pop.push(Individual { x, fitness }),
        }
    }
    pop.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    pop.truncate(MU);
    let mut scale = INITIAL_STEP;
    let mut best = pop.first().map_or(f64::INFINITY, |p| p.fitness);
    let mut stall = 0;
    while !search.exhausted() && !pop.is_empty() {
        let mut improved = 0;
        let mut offspring = Vec::with_capacity(LAMBDA);
        for _ in 0..LAMBDA {
            if search.exhausted() {
                break;
            }
            let parent = &pop[rng.random_range(0..pop.len())];
            let parent_fitness = parent.fitness;
            let x = search.mutate(&parent.x, scale, rng);
            match search.evaluate(&x)? {
                Step::Hit(x) => return Ok(Some(x)),
                Step::Miss(fitness) => {
                    if fitness < parent_fitness {
                        improved += 1;
                    }
                    offspring.push(Individual { x, fitness });
                }
            }
        }
        let trials = offspring.len().max(1);
        pop.extend(offspring);
        pop.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
        pop.truncate(MU);
        if improved * 5 > trials {
            scale = (scale * STEP_GROWTH).min(1.0);
        } else {
            scale /= STEP_GROWTH;
        }
        if pop[0].fitness < best {
            best = pop[0].fitness;
            stall = 0;
        } else {
            stall += 1;
        }
        if stall >= STALL_GENERATIONS || scale < 1e-9 {
            break;
        }
    }
    Ok(None)
}

fn finish(search: Search<'_>, x: Vec<f64>) -> Result<Inversion, InvertError> {
    let Search { sut, target, used, .. } = search;
    let input = sut.input_space().to_assignment(&x);
    let (v, action) = sut.probe_coords(&x).map_err(InvertError::Sut)?;
    Ok(Inversion {
        input,
        action,
        evaluations: used + 1,
        confirmed: target.contains_with_tolerance(&v, LANDING_TOLERANCE),
    })
}
