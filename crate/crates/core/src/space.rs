//! Variable spaces and positional assignments.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::IntervalBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("variable `{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("variable `{name}`: invalid interval [{lo}, {hi}]")]
    InvalidInterval { name: String, lo: f64, hi: f64 },
    #[error("assignment has {got} values, space has {expected} variables")]
    Arity { expected: usize, got: usize },
    #[error("value {value} for `{name}` lies outside its domain")]
    OutOfDomain { name: String, value: String },
    #[error("value for `{name}` has kind {got}, expected {expected}")]
    KindMismatch {
        name: String,
        expected: &'static str,
        got: &'static str,
    },
}

/// Finite integer domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntDomain {
    Range {
        lo: i64,
        hi: i64,
    },
    /// Sorted, deduplicated members.
    Set(Vec<i64>),
}

impl IntDomain {
    pub fn set(mut values: Vec<i64>) -> Self {
        values.sort_unstable();
        values.dedup();
        IntDomain::Set(values)
    }

    pub fn contains(&self, v: i64) -> bool {
        match self {
            IntDomain::Range { lo, hi } => *lo <= v && v <= *hi,
            IntDomain::Set(vals) => vals.binary_search(&v).is_ok(),
        }
    }

    pub fn min(&self) -> i64 {
        match self {
            IntDomain::Range { lo, .. } => *lo,
            IntDomain::Set(vals) => vals[0],
        }
    }

    pub fn max(&self) -> i64 {
        match self {
            IntDomain::Range { hi, .. } => *hi,
            IntDomain::Set(vals) => vals[vals.len() - 1],
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            IntDomain::Range { lo, hi } => lo > hi,
            IntDomain::Set(vals) => vals.is_empty(),
        }
    }

    pub fn size(&self) -> u64 {
        match self {
            IntDomain::Range { lo, hi } => (hi - lo + 1) as u64,
            IntDomain::Set(vals) => vals.len() as u64,
        }
    }

    /// All members in ascending order.
    pub fn members(&self) -> Vec<i64> {
        match self {
            IntDomain::Range { lo, hi } => (*lo..=*hi).collect(),
            IntDomain::Set(vals) => vals.clone(),
        }
    }

    /// Members inside `[lo, hi]`.
    pub fn members_within(&self, lo: f64, hi: f64) -> Vec<i64> {
        match self {
            IntDomain::Range { lo: a, hi: b } => {
                let from = (lo.ceil() as i64).max(*a);
                let to = (hi.floor() as i64).min(*b);
                if from > to {
                    Vec::new()
                } else {
                    (from..=to).collect()
                }
            }
            IntDomain::Set(vals) => vals
                .iter()
                .copied()
                .filter(|&v| (v as f64) >= lo && (v as f64) <= hi)
                .collect(),
        }
    }

    /// Domain member closest to `x` (ties go to the smaller member).
    pub fn nearest(&self, x: f64) -> i64 {
        match self {
            IntDomain::Range { lo, hi } => (x.round() as i64).clamp(*lo, *hi),
            IntDomain::Set(vals) => *vals
                .iter()
                .min_by(|a, b| {
                    let da = (**a as f64 - x).abs();
                    let db = (**b as f64 - x).abs();
                    da.total_cmp(&db)
                })
                .expect("domain is non-empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VarKind {
    Bool,
    Int { domain: IntDomain },
    Real { lo: f64, hi: f64 },
}

impl VarKind {
    pub fn name(&self) -> &'static str {
        match self {
            VarKind::Bool => "bool",
            VarKind::Int { .. } => "int",
            VarKind::Real { .. } => "real",
        }
    }

    pub fn is_integral(&self) -> bool {
        !matches!(self, VarKind::Real { .. })
    }

    /// Coordinate bounds of the domain.
    pub fn coordinate_bounds(&self) -> (f64, f64) {
        match self {
            VarKind::Bool => (0.0, 1.0),
            VarKind::Int { domain } => (domain.min() as f64, domain.max() as f64),
            VarKind::Real { lo, hi } => (*lo, *hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

impl Variable {
    pub fn boolean(name: impl Into<String>) -> Self {
        Variable {
            name: name.into(),
            kind: VarKind::Bool,
        }
    }

    pub fn int_range(name: impl Into<String>, lo: i64, hi: i64) -> Self {
        Variable {
            name: name.into(),
            kind: VarKind::Int {
                domain: IntDomain::Range { lo, hi },
            },
        }
    }

    pub fn real(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Variable {
            name: name.into(),
            kind: VarKind::Real { lo, hi },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
}

impl Value {
    /// Coordinate view: booleans map to 0/1.
    pub fn as_f64(&self) -> f64 {
        match *self {
            Value::Bool(b) => {
                if b {
                    1.0
                } else {
                    0.0
                }
            }
            Value::Int(i) => i as f64,
            Value::Real(x) => x,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Real(_) => "real",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(x) => write!(f, "{x}"),
        }
    }
}

/// Ordered instantiation of a variable space, one value per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(Vec<Value>);

impl Assignment {
    pub fn new(values: Vec<Value>) -> Self {
        Assignment(values)
    }

    pub fn reals(values: &[f64]) -> Self {
        Assignment(values.iter().map(|&x| Value::Real(x)).collect())
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coords(&self) -> Vec<f64> {
        self.0.iter().map(Value::as_f64).collect()
    }
}

/// Ordered, name-unique list of typed variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Variable>", into = "Vec<Variable>")]
pub struct VariableSpace {
    vars: Vec<Variable>,
}

impl TryFrom<Vec<Variable>> for VariableSpace {
    type Error = SpaceError;
    fn try_from(vars: Vec<Variable>) -> Result<Self, Self::Error> {
        VariableSpace::new(vars)
    }
}

impl From<VariableSpace> for Vec<Variable> {
    fn from(space: VariableSpace) -> Self {
        space.vars
    }
}

impl VariableSpace {
    pub fn new(vars: Vec<Variable>) -> Result<Self, SpaceError> {
        let mut seen = HashSet::new();
        for v in &vars {
            if !seen.insert(v.name.as_str()) {
                return Err(SpaceError::DuplicateName(v.name.clone()));
            }
            match &v.kind {
                VarKind::Bool => {}
                VarKind::Int { domain } => {
                    if domain.is_empty() {
                        return Err(SpaceError::EmptyDomain(v.name.clone()));
                    }
                }
                VarKind::Real { lo, hi } => {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(SpaceError::InvalidInterval {
                            name: v.name.clone(),
                            lo: *lo,
                            hi: *hi,
                        });
                    }
                }
            }
        }
        Ok(VariableSpace { vars })
    }

    /// A space of real variables named `{prefix}0, {prefix}1, ...`.
    pub fn reals(prefix: &str, bounds: &[(f64, f64)]) -> Result<Self, SpaceError> {
        Self::new(
            bounds
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| Variable::real(format!("{prefix}{i}"), lo, hi))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, index: usize) -> &Variable {
        &self.vars[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn validate(&self, a: &Assignment) -> Result<(), SpaceError> {
        if a.len() != self.len() {
            return Err(SpaceError::Arity {
                expected: self.len(),
                got: a.len(),
            });
        }
        for (var, value) in self.vars.iter().zip(a.values()) {
            let ok = match (&var.kind, value) {
                (VarKind::Bool, Value::Bool(_)) => true,
                (VarKind::Int { domain }, Value::Int(i)) => domain.contains(*i),
                (VarKind::Real { lo, hi }, Value::Real(x)) => x.is_finite() && lo <= x && x <= hi,
                (kind, v) => {
                    return Err(SpaceError::KindMismatch {
                        name: var.name.clone(),
                        expected: kind.name(),
                        got: v.kind_name(),
                    })
                }
            };
            if !ok {
                return Err(SpaceError::OutOfDomain {
                    name: var.name.clone(),
                    value: value.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Coordinate box spanning every domain.
    pub fn bounds(&self) -> IntervalBox {
        let (lo, hi) = self.vars.iter().map(|v| v.kind.coordinate_bounds()).unzip();
        IntervalBox::new(lo, hi).expect("validated domains form a box")
    }

    pub fn integral_mask(&self) -> Vec<bool> {
        self.vars.iter().map(|v| v.kind.is_integral()).collect()
    }

    /// Snaps coordinates onto the nearest valid assignment.
    pub fn to_assignment(&self, coords: &[f64]) -> Assignment {
        debug_assert_eq!(coords.len(), self.len());
        Assignment(
            self.vars
                .iter()
                .zip(coords)
                .map(|(var, &x)| match &var.kind {
                    VarKind::Bool => Value::Bool(x >= 0.5),
                    VarKind::Int { domain } => Value::Int(domain.nearest(x)),
                    VarKind::Real { lo, hi } => Value::Real(x.clamp(*lo, *hi)),
                })
                .collect(),
        )
    }

    /// Snaps coordinates in place (discrete dimensions rounded onto the domain).
    pub fn snap(&self, coords: &mut [f64]) {
        for (var, x) in self.vars.iter().zip(coords.iter_mut()) {
            *x = match &var.kind {
                VarKind::Bool => {
                    if *x >= 0.5 {
                        1.0
                    } else {
                        0.0
                    }
                }
                VarKind::Int { domain } => domain.nearest(*x) as f64,
                VarKind::Real { lo, hi } => x.clamp(*lo, *hi),
            };
        }
    }

    /// Uniform sample inside `region`, respecting each variable's kind.
    ///
    /// Discrete dimensions draw uniformly among domain members inside the
    /// region; if none lies inside, the member nearest the region centre is used.
    pub fn sample_in<R: Rng + ?Sized>(&self, region: &IntervalBox, rng: &mut R) -> Vec<f64> {
        self.vars
            .iter()
            .enumerate()
            .map(|(d, var)| {
                let (lo, hi) = (region.lo()[d], region.hi()[d]);
                match &var.kind {
                    VarKind::Real { .. } => {
                        if hi > lo {
                            rng.random_range(lo..=hi)
                        } else {
                            lo
                        }
                    }
                    VarKind::Bool => {
                        let members = IntDomain::Range { lo: 0, hi: 1 }.members_within(lo, hi);
                        pick_member(&members, 0.5 * (lo + hi), rng, |x| (x >= 0.5) as i64)
                    }
                    VarKind::Int { domain } => {
                        let members = domain.members_within(lo, hi);
                        pick_member(&members, 0.5 * (lo + hi), rng, |x| domain.nearest(x))
                    }
                }
            })
            .collect()
    }
}

fn pick_member<R: Rng + ?Sized>(members: &[i64], centre: f64, rng: &mut R, fallback: impl Fn(f64) -> i64) -> f64 {
    if members.is_empty() {
        fallback(centre) as f64
    } else {
        members[rng.random_range(0..members.len())] as f64
    }
}
