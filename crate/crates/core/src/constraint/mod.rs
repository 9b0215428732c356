//! Hard/soft constraint systems over a variable space and the checker that
//! sorts actions into the HS / HS' / H' trichotomy.
//!
//! Four constraint classes are evaluated by dedicated handlers:
//!
//! | class | payload                         | unit violation magnitude              |
//! |-------|---------------------------------|---------------------------------------|
//! | SAT   | CNF clauses over booleans       | number of violated clauses            |
//! | FD    | integer-linear `<=` or `in {}`  | excess / lhs span, or 1 if outside    |
//! | LR    | real-linear `a.v <= b`          | hinge `max(0, a.v - b)`               |
//! | NL    | expression `e(v) <= 0`          | hinge `max(0, e(v))`                  |
//!
//! Soft costs are the unit magnitude times the constraint weight. LR and NL
//! hard constraints tolerate [`HARD_TOLERANCE`]; SAT and FD are exact.

mod expr;
mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Assignment, SpaceError, Value, VariableSpace};

pub use expr::{BinOp, EvalFault, Expr, Func};
pub use parse::{parse_constraint, ParseError, ParseErrorKind};

/// Slack allowed on real-valued hard constraints before they count as violated.
pub const HARD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintClass {
    #[serde(rename = "SAT")]
    Sat,
    #[serde(rename = "FD")]
    Fd,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "NL")]
    Nl,
}

impl ConstraintClass {
    pub const ALL: [ConstraintClass; 4] = [
        ConstraintClass::Sat,
        ConstraintClass::Fd,
        ConstraintClass::Lr,
        ConstraintClass::Nl,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "severity", rename_all = "snake_case")]
pub enum Severity {
    Hard,
    Soft { weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literal {
    pub var: usize,
    pub negated: bool,
}

/// `sum(coeff * var) <= bound` over integer variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntLinear {
    pub terms: Vec<(i64, usize)>,
    pub bound: i64,
    /// Range of the left-hand side over the variable domains (at least 1),
    /// used to normalise violation amounts.
    pub span: f64,
}

/// `sum(coeff * var) <= bound` over real variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealLinear {
    pub terms: Vec<(f64, usize)>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// Conjunction of clauses; each clause is a disjunction of literals.
    Sat(Vec<Vec<Literal>>),
    FdLinear(IntLinear),
    FdMember {
        var: usize,
        set: Vec<i64>,
    },
    Lr(RealLinear),
    /// `expr <= 0`.
    Nl(Expr),
}

impl Payload {
    pub fn class(&self) -> ConstraintClass {
        match self {
            Payload::Sat(_) => ConstraintClass::Sat,
            Payload::FdLinear(_) | Payload::FdMember { .. } => ConstraintClass::Fd,
            Payload::Lr(_) => ConstraintClass::Lr,
            Payload::Nl(_) => ConstraintClass::Nl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub severity: Severity,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("soft constraint weight must be a positive finite number, got {0}")]
    InvalidWeight(f64),
    #[error("constraint references variable #{0}, which is not in the space")]
    UnknownVariable(usize),
    #[error("variable `{name}` is {found} but {class:?} constraints need {expected}")]
    KindMismatch {
        name: String,
        class: ConstraintClass,
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid assignment: {0}")]
    InvalidAssignment(#[from] SpaceError),
    #[error("evaluation fault: {0}")]
    Evaluation(EvalFault),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
}

impl Constraint {
    pub fn hard(payload: Payload) -> Self {
        Constraint {
            severity: Severity::Hard,
            payload,
        }
    }

    pub fn soft(payload: Payload, weight: f64) -> Self {
        Constraint {
            severity: Severity::Soft { weight },
            payload,
        }
    }

    pub fn class(&self) -> ConstraintClass {
        self.payload.class()
    }

    pub fn is_hard(&self) -> bool {
        matches!(self.severity, Severity::Hard)
    }

    /// Weight used for Ψ; hard constraints count with unit weight.
    pub fn weight(&self) -> f64 {
        match self.severity {
            Severity::Hard => 1.0,
            Severity::Soft { weight } => weight,
        }
    }

    /// Same constraint with its weight replaced (soft only).
    pub fn with_weight(&self, weight: f64) -> Self {
        let mut c = self.clone();
        if let Severity::Soft { .. } = c.severity {
            c.severity = Severity::Soft { weight };
        }
        c
    }

    /// Unit-weight violation magnitude; zero iff the constraint holds exactly.
    pub fn magnitude(&self, values: &[Value]) -> Result<f64, EvalFault> {
        Ok(match &self.payload {
            Payload::Sat(clauses) => clauses
                .iter()
                .filter(|clause| {
                    !clause.iter().any(|lit| {
                        let truth = matches!(values[lit.var], Value::Bool(true));
                        truth != lit.negated
                    })
                })
                .count() as f64,
            Payload::FdLinear(lin) => {
                let lhs: i64 = lin.terms.iter().map(|&(a, i)| a * int_value(&values[i])).sum();
                (lhs - lin.bound).max(0) as f64 / lin.span
            }
            Payload::FdMember { var, set } => {
                if set.binary_search(&int_value(&values[*var])).is_ok() {
                    0.0
                } else {
                    1.0
                }
            }
            Payload::Lr(lin) => {
                let lhs: f64 = lin.terms.iter().map(|&(a, i)| a * values[i].as_f64()).sum();
                (lhs - lin.bound).max(0.0)
            }
            Payload::Nl(expr) => expr.eval(values)?.max(0.0),
        })
    }

    /// Whether a magnitude counts as a hard violation.
    pub fn violates_hard(&self, magnitude: f64) -> bool {
        match self.class() {
            ConstraintClass::Sat | ConstraintClass::Fd => magnitude > 0.0,
            ConstraintClass::Lr | ConstraintClass::Nl => magnitude > HARD_TOLERANCE,
        }
    }

    fn check_against(&self, space: &VariableSpace) -> Result<(), ConstraintError> {
        if let Severity::Soft { weight } = self.severity {
            if !(weight.is_finite() && weight > 0.0) {
                return Err(ConstraintError::InvalidWeight(weight));
            }
        }
        let class = self.class();
        let mut bad = None;
        let mut visit = |i: usize| {
            if bad.is_some() {
                return;
            }
            if i >= space.len() {
                bad = Some(ConstraintError::UnknownVariable(i));
                return;
            }
            let kind = &space.var(i).kind;
            if let Some(expected) = parse::expected_kind(class, kind) {
                bad = Some(ConstraintError::KindMismatch {
                    name: space.var(i).name.clone(),
                    class,
                    expected,
                    found: kind.name(),
                });
            }
        };
        match &self.payload {
            Payload::Sat(clauses) => clauses.iter().flatten().for_each(|l| visit(l.var)),
            Payload::FdLinear(lin) => lin.terms.iter().for_each(|&(_, i)| visit(i)),
            Payload::FdMember { var, .. } => visit(*var),
            Payload::Lr(lin) => lin.terms.iter().for_each(|&(_, i)| visit(i)),
            Payload::Nl(expr) => expr.for_each_var(&mut visit),
        }
        bad.map_or(Ok(()), Err)
    }
}

fn int_value(v: &Value) -> i64 {
    match *v {
        Value::Int(i) => i,
        Value::Bool(b) => b as i64,
        Value::Real(x) => x as i64,
    }
}

/// Summed violation of one class of constraints under the class cost rules:
/// each constraint contributes `weight * magnitude` (hard constraints weigh 1).
pub fn eval_class_violation<'a, I>(constraints: I, assignment: &Assignment) -> Result<f64, EvalFault>
where
    I: IntoIterator<Item = &'a Constraint>,
{
    let values = assignment.values();
    let mut total = 0.0;
    for c in constraints {
        total += c.weight() * c.magnitude(values)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    /// Permissible and efficient.
    #[serde(rename = "HS")]
    Hs,
    /// Permissible but inefficient (some soft constraint violated).
    #[serde(rename = "HS_PRIME")]
    HsPrime,
    /// Unpermissible.
    #[serde(rename = "H_PRIME")]
    HPrime,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Hs, Category::HsPrime, Category::HPrime];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Hs => "HS",
            Category::HsPrime => "HS_PRIME",
            Category::HPrime => "H_PRIME",
        }
    }

    pub fn is_permissible(self) -> bool {
        self != Category::HPrime
    }

    /// Discovery priority: unpermissible regions first, then inefficient, then efficient.
    pub fn priority(self) -> u32 {
        match self {
            Category::HPrime => 3,
            Category::HsPrime => 2,
            Category::Hs => 1,
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Weighted soft cost per constraint class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCosts {
    #[serde(rename = "SAT")]
    pub sat: f64,
    #[serde(rename = "FD")]
    pub fd: f64,
    #[serde(rename = "LR")]
    pub lr: f64,
    #[serde(rename = "NL")]
    pub nl: f64,
}

impl ClassCosts {
    pub fn get(&self, class: ConstraintClass) -> f64 {
        match class {
            ConstraintClass::Sat => self.sat,
            ConstraintClass::Fd => self.fd,
            ConstraintClass::Lr => self.lr,
            ConstraintClass::Nl => self.nl,
        }
    }

    fn slot(&mut self, class: ConstraintClass) -> &mut f64 {
        match class {
            ConstraintClass::Sat => &mut self.sat,
            ConstraintClass::Fd => &mut self.fd,
            ConstraintClass::Lr => &mut self.lr,
            ConstraintClass::Nl => &mut self.nl,
        }
    }

    pub fn total(&self) -> f64 {
        self.sat + self.fd + self.lr + self.nl
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionClassification {
    pub category: Category,
    /// Weighted soft-violation cost Ψ.
    pub psi: f64,
    /// Total hard violation (unit weights); evaluation faults add 1 each.
    pub v_hard: f64,
    /// Total soft violation (unit weights).
    pub v_soft: f64,
    pub per_class_costs: ClassCosts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<EvalFault>,
}

/// Result of the permissibility check; a fault forces `permissible = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Permissibility {
    pub permissible: bool,
    pub fault: Option<EvalFault>,
}

/// An immutable set of hard and soft constraints over one variable space,
/// indexed by (class, severity).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    space: VariableSpace,
    constraints: Vec<Constraint>,
    /// `index[class][0]` = hard, `index[class][1]` = soft.
    index: [[Vec<usize>; 2]; 4],
}

impl ConstraintSystem {
    pub fn new(space: VariableSpace, constraints: Vec<Constraint>) -> Result<Self, ConstraintError> {
        for c in &constraints {
            c.check_against(&space)?;
        }
        let mut index: [[Vec<usize>; 2]; 4] = Default::default();
        for (i, c) in constraints.iter().enumerate() {
            index[c.class().index()][usize::from(!c.is_hard())].push(i);
        }
        Ok(ConstraintSystem {
            space,
            constraints,
            index,
        })
    }

    /// Parses a constraint file: `var` declarations followed by one
    /// constraint per line. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConstraintError> {
        parse::parse_system(text, None)
    }

    /// Parses constraint lines against an already-declared space. The text
    /// may not declare further variables.
    pub fn parse_with_space(text: &str, space: VariableSpace) -> Result<Self, ConstraintError> {
        parse::parse_system(text, Some(space))
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn of_class(&self, class: ConstraintClass, hard: bool) -> impl Iterator<Item = &Constraint> {
        self.index[class.index()][usize::from(!hard)]
            .iter()
            .map(move |&i| &self.constraints[i])
    }

    fn hard(&self) -> impl Iterator<Item = &Constraint> {
        ConstraintClass::ALL
            .into_iter()
            .flat_map(move |class| self.of_class(class, true))
    }

    /// True iff every hard constraint of every class is satisfied.
    pub fn check_permissible(&self, action: &Assignment) -> Result<Permissibility, ConstraintError> {
        self.space.validate(action)?;
        let values = action.values();
        for c in self.hard() {
            match c.magnitude(values) {
                Ok(m) if c.violates_hard(m) => {
                    return Ok(Permissibility {
                        permissible: false,
                        fault: None,
                    })
                }
                Ok(_) => {}
                Err(fault) => {
                    return Ok(Permissibility {
                        permissible: false,
                        fault: Some(fault),
                    })
                }
            }
        }
        Ok(Permissibility {
            permissible: true,
            fault: None,
        })
    }

    /// Ψ: weighted soft cost summed over the four classes.
    pub fn inefficiency(&self, action: &Assignment) -> Result<f64, ConstraintError> {
        self.space.validate(action)?;
        let mut psi = 0.0;
        for class in ConstraintClass::ALL {
            psi += eval_class_violation(self.of_class(class, false), action).map_err(ConstraintError::Evaluation)?;
        }
        Ok(psi)
    }

    /// Sorts an action into exactly one of HS, HS', H'.
    ///
    /// Evaluation faults fail safe: the action becomes H' with the fault attached.
    pub fn classify(&self, action: &Assignment) -> Result<ActionClassification, ConstraintError> {
        self.space.validate(action)?;
        Ok(self.classify_values(action.values()))
    }

    /// Classification without domain validation; callers guarantee validity.
    pub(crate) fn classify_values(&self, values: &[Value]) -> ActionClassification {
        let mut v_hard = 0.0;
        let mut v_soft = 0.0;
        let mut permissible = true;
        let mut fault = None;
        let mut per_class = ClassCosts::default();
        for class in ConstraintClass::ALL {
            for c in self.of_class(class, true) {
                match c.magnitude(values) {
                    Ok(m) => {
                        if c.violates_hard(m) {
                            permissible = false;
                            v_hard += m;
                        }
                    }
                    Err(f) => {
                        permissible = false;
                        v_hard += 1.0;
                        fault.get_or_insert(f);
                    }
                }
            }
            for c in self.of_class(class, false) {
                match c.magnitude(values) {
                    Ok(m) => {
                        v_soft += m;
                        *per_class.slot(class) += c.weight() * m;
                    }
                    Err(f) => {
                        permissible = false;
                        v_hard += 1.0;
                        fault.get_or_insert(f);
                    }
                }
            }
        }
        let psi = per_class.total();
        let category = if !permissible {
            Category::HPrime
        } else if psi > 0.0 {
            Category::HsPrime
        } else {
            Category::Hs
        };
        ActionClassification {
            category,
            psi,
            v_hard,
            v_soft,
            per_class_costs: per_class,
            fault,
        }
    }

    /// Element-wise classification; one bad action does not affect the others.
    pub fn classify_sequence(&self, actions: &[Assignment]) -> Vec<Result<ActionClassification, ConstraintError>> {
        actions.iter().map(|a| self.classify(a)).collect()
    }

    /// Copy of the system with constraint `index` removed.
    pub fn without(&self, index: usize) -> Self {
        let mut constraints = self.constraints.clone();
        constraints.remove(index);
        ConstraintSystem::new(self.space.clone(), constraints).expect("subset of a valid system")
    }

    /// Copy of the system with one more constraint.
    pub fn with(&self, constraint: Constraint) -> Result<Self, ConstraintError> {
        let mut constraints = self.constraints.clone();
        constraints.push(constraint);
        ConstraintSystem::new(self.space.clone(), constraints)
    }
}
