//! Random constraint systems rendered to text, with a self-contained
//! evaluator that shares no code with the checker.

#![allow(dead_code)]

use rand::Rng;

use watchdog_core::{Assignment, Category, ConstraintSystem, Value};

pub const HARD_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum Nl {
    Var(usize),
    Const(f64),
    Add(Box<Nl>, Box<Nl>),
    Sub(Box<Nl>, Box<Nl>),
    Mul(Box<Nl>, Box<Nl>),
    Div(Box<Nl>, Box<Nl>),
    Pow(Box<Nl>, f64),
    Abs(Box<Nl>),
    Sin(Box<Nl>),
    Cos(Box<Nl>),
    Min(Box<Nl>, Box<Nl>),
    Max(Box<Nl>, Box<Nl>),
}

#[derive(Debug, Clone)]
pub enum Body {
    /// Clauses of (variable, negated).
    Sat(Vec<Vec<(usize, bool)>>),
    FdLinear {
        terms: Vec<(i64, usize)>,
        rhs: i64,
    },
    FdIn {
        var: usize,
        set: Vec<i64>,
    },
    Lr {
        terms: Vec<(f64, usize)>,
        rhs: f64,
    },
    Nl {
        expr: Nl,
        rhs: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub body: Body,
    /// `None` for hard constraints.
    pub weight: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub bools: usize,
    pub ints: Vec<(i64, i64)>,
    pub reals: Vec<(f64, f64)>,
    pub rules: Vec<Rule>,
}

/// Raw values in declaration order: booleans, then integers, then reals.
#[derive(Debug, Clone)]
pub struct Point {
    pub bools: Vec<bool>,
    pub ints: Vec<i64>,
    pub reals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub category: Category,
    pub psi: f64,
    pub faulted: bool,
}

impl Model {
    pub fn n_vars(&self) -> usize {
        self.bools + self.ints.len() + self.reals.len()
    }

    fn int_index(&self, k: usize) -> usize {
        self.bools + k
    }

    fn real_index(&self, k: usize) -> usize {
        self.bools + self.ints.len() + k
    }

    fn name(&self, i: usize) -> String {
        if i < self.bools {
            format!("b{i}")
        } else if i < self.bools + self.ints.len() {
            format!("n{}", i - self.bools)
        } else {
            format!("r{}", i - self.bools - self.ints.len())
        }
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.bools {
            out.push_str(&format!("var b{i} : bool\n"));
        }
        for (k, (lo, hi)) in self.ints.iter().enumerate() {
            out.push_str(&format!("var n{k} : int {lo}..{hi}\n"));
        }
        for (k, (lo, hi)) in self.reals.iter().enumerate() {
            out.push_str(&format!("var r{k} : real {lo:?}..{hi:?}\n"));
        }
        for rule in &self.rules {
            out.push_str(&self.render(rule));
            out.push('\n');
        }
        out
    }

    fn render(&self, rule: &Rule) -> String {
        let (class, body) = match &rule.body {
            Body::Sat(clauses) => {
                let cs: Vec<String> = clauses
                    .iter()
                    .map(|c| {
                        let lits: Vec<String> = c
                            .iter()
                            .map(|&(v, neg)| format!("{}{}", if neg { "!" } else { "" }, self.name(v)))
                            .collect();
                        format!("({})", lits.join(" | "))
                    })
                    .collect();
                ("sat", cs.join(" & "))
            }
            Body::FdLinear { terms, rhs } => (
                "fd",
                format!("{} <= {rhs}", self.linear(terms.iter().map(|&(a, v)| (a as f64, v)))),
            ),
            Body::FdIn { var, set } => {
                let items: Vec<String> = set.iter().map(i64::to_string).collect();
                ("fd", format!("{} in {{{}}}", self.name(*var), items.join(", ")))
            }
            Body::Lr { terms, rhs } => ("lr", format!("{} <= {rhs:?}", self.linear(terms.iter().copied()))),
            Body::Nl { expr, rhs } => ("nl", format!("{} <= {rhs:?}", self.nl_text(expr))),
        };
        match rule.weight {
            None => format!("{class} hard {body}"),
            Some(w) => format!("{class} soft weight={w:?} {body}"),
        }
    }

    fn linear(&self, terms: impl Iterator<Item = (f64, usize)>) -> String {
        let mut s = String::new();
        for (k, (a, v)) in terms.enumerate() {
            if k == 0 {
                s.push_str(&format!("{a:?}*{}", self.name(v)));
            } else if a < 0.0 {
                s.push_str(&format!(" - {:?}*{}", -a, self.name(v)));
            } else {
                s.push_str(&format!(" + {a:?}*{}", self.name(v)));
            }
        }
        s
    }

    fn nl_text(&self, e: &Nl) -> String {
        match e {
            Nl::Var(i) => self.name(*i),
            Nl::Const(c) if *c < 0.0 => format!("({c:?})"),
            Nl::Const(c) => format!("{c:?}"),
            Nl::Add(a, b) => format!("({} + {})", self.nl_text(a), self.nl_text(b)),
            Nl::Sub(a, b) => format!("({} - {})", self.nl_text(a), self.nl_text(b)),
            Nl::Mul(a, b) => format!("({} * {})", self.nl_text(a), self.nl_text(b)),
            Nl::Div(a, b) => format!("({} / {})", self.nl_text(a), self.nl_text(b)),
            Nl::Pow(a, p) => format!("({}^{p:?})", self.nl_text(a)),
            Nl::Abs(a) => format!("abs({})", self.nl_text(a)),
            Nl::Sin(a) => format!("sin({})", self.nl_text(a)),
            Nl::Cos(a) => format!("cos({})", self.nl_text(a)),
            Nl::Min(a, b) => format!("min({}, {})", self.nl_text(a), self.nl_text(b)),
            Nl::Max(a, b) => format!("max({}, {})", self.nl_text(a), self.nl_text(b)),
        }
    }

    pub fn parse(&self) -> ConstraintSystem {
        let text = self.text();
        ConstraintSystem::parse(&text).unwrap_or_else(|e| panic!("generated text rejected: {e}\n{text}"))
    }

    fn raw(&self, p: &Point, i: usize) -> f64 {
        if i < self.bools {
            p.bools[i] as i64 as f64
        } else if i < self.bools + self.ints.len() {
            p.ints[i - self.bools] as f64
        } else {
            p.reals[i - self.bools - self.ints.len()]
        }
    }

    fn nl_eval(&self, e: &Nl, p: &Point) -> Option<f64> {
        let v = match e {
            Nl::Var(i) => self.raw(p, *i),
            Nl::Const(c) => *c,
            Nl::Add(a, b) => self.nl_eval(a, p)? + self.nl_eval(b, p)?,
            Nl::Sub(a, b) => self.nl_eval(a, p)? - self.nl_eval(b, p)?,
            Nl::Mul(a, b) => self.nl_eval(a, p)? * self.nl_eval(b, p)?,
            Nl::Div(a, b) => {
                let (x, y) = (self.nl_eval(a, p)?, self.nl_eval(b, p)?);
                if y == 0.0 {
                    return None;
                }
                x / y
            }
            Nl::Pow(a, q) => {
                let x = self.nl_eval(a, p)?;
                if x == 0.0 && *q < 0.0 {
                    return None;
                }
                x.powf(*q)
            }
            Nl::Abs(a) => self.nl_eval(a, p)?.abs(),
            Nl::Sin(a) => self.nl_eval(a, p)?.sin(),
            Nl::Cos(a) => self.nl_eval(a, p)?.cos(),
            Nl::Min(a, b) => self.nl_eval(a, p)?.min(self.nl_eval(b, p)?),
            Nl::Max(a, b) => self.nl_eval(a, p)?.max(self.nl_eval(b, p)?),
        };
        v.is_finite().then_some(v)
    }

    /// Unit-weight violation; `None` on an evaluation fault.
    fn violation(&self, body: &Body, p: &Point) -> Option<f64> {
        Some(match body {
            Body::Sat(clauses) => clauses
                .iter()
                .filter(|c| c.iter().all(|&(v, neg)| p.bools[v] == neg))
                .count() as f64,
            Body::FdLinear { terms, rhs } => {
                let lhs: i64 = terms.iter().map(|&(a, v)| a * p.ints[v - self.bools]).sum();
                let span: i64 = terms
                    .iter()
                    .map(|&(a, v)| {
                        let (lo, hi) = self.ints[v - self.bools];
                        a.abs() * (hi - lo)
                    })
                    .sum();
                (lhs - rhs).max(0) as f64 / (span.max(1) as f64)
            }
            Body::FdIn { var, set } => {
                if set.contains(&p.ints[var - self.bools]) {
                    0.0
                } else {
                    1.0
                }
            }
            Body::Lr { terms, rhs } => {
                let lhs: f64 = terms.iter().map(|&(a, v)| a * self.raw(p, v)).sum();
                (lhs - rhs).max(0.0)
            }
            Body::Nl { expr, rhs } => {
                let lhs = self.nl_eval(expr, p)?;
                let d = if *rhs == 0.0 { lhs } else { lhs - rhs };
                d.max(0.0)
            }
        })
    }

    fn is_real_valued(body: &Body) -> bool {
        matches!(body, Body::Lr { .. } | Body::Nl { .. })
    }

    fn class_slot(body: &Body) -> usize {
        match body {
            Body::Sat(_) => 0,
            Body::FdLinear { .. } | Body::FdIn { .. } => 1,
            Body::Lr { .. } => 2,
            Body::Nl { .. } => 3,
        }
    }

    pub fn judge(&self, p: &Point) -> Verdict {
        let mut permissible = true;
        let mut faulted = false;
        let mut per_class = [0.0f64; 4];
        for (slot, cost) in per_class.iter_mut().enumerate() {
            for rule in self.rules.iter().filter(|r| Self::class_slot(&r.body) == slot) {
                match (self.violation(&rule.body, p), rule.weight) {
                    (None, _) => {
                        permissible = false;
                        faulted = true;
                    }
                    (Some(m), None) => {
                        let tol = if Self::is_real_valued(&rule.body) {
                            HARD_TOL
                        } else {
                            0.0
                        };
                        if m > tol {
                            permissible = false;
                        }
                    }
                    (Some(m), Some(w)) => *cost += w * m,
                }
            }
        }
        let psi = per_class[0] + per_class[1] + per_class[2] + per_class[3];
        let category = if !permissible {
            Category::HPrime
        } else if psi > 0.0 {
            Category::HsPrime
        } else {
            Category::Hs
        };
        Verdict { category, psi, faulted }
    }

    pub fn assignment(&self, p: &Point) -> Assignment {
        let mut values = Vec::with_capacity(self.n_vars());
        values.extend(p.bools.iter().map(|&b| Value::Bool(b)));
        values.extend(p.ints.iter().map(|&i| Value::Int(i)));
        values.extend(p.reals.iter().map(|&r| Value::Real(r)));
        Assignment::new(values)
    }

    /// Calls `f` on every assignment: all booleans, all integers and a
    /// `grid`-point grid per real variable (endpoints included).
    pub fn enumerate(&self, grid: usize, mut f: impl FnMut(&Point)) {
        let real_axis: Vec<Vec<f64>> = self
            .reals
            .iter()
            .map(|&(lo, hi)| {
                (0..grid)
                    .map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64)
                    .collect()
            })
            .collect();
        let int_axis: Vec<Vec<i64>> = self.ints.iter().map(|&(lo, hi)| (lo..=hi).collect()).collect();
        let mut radix: Vec<usize> = vec![2; self.bools];
        radix.extend(int_axis.iter().map(Vec::len));
        radix.extend(real_axis.iter().map(Vec::len));
        let mut digits = vec![0usize; radix.len()];
        let mut p = Point {
            bools: vec![false; self.bools],
            ints: int_axis.iter().map(|a| a[0]).collect(),
            reals: real_axis.iter().map(|a| a[0]).collect(),
        };
        loop {
            f(&p);
            let mut k = 0;
            loop {
                if k == radix.len() {
                    return;
                }
                digits[k] += 1;
                if digits[k] < radix[k] {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
            for (j, &d) in digits.iter().enumerate().take(k + 1) {
                if j < self.bools {
                    p.bools[j] = d == 1;
                } else if j < self.bools + self.ints.len() {
                    p.ints[j - self.bools] = int_axis[j - self.bools][d];
                } else {
                    let r = j - self.bools - self.ints.len();
                    p.reals[r] = real_axis[r][d];
                }
            }
        }
    }

    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Point {
        Point {
            bools: (0..self.bools).map(|_| rng.random()).collect(),
            ints: self.ints.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect(),
            reals: self.reals.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect(),
        }
    }
}

fn quarter<R: Rng>(rng: &mut R, lo: i32, hi: i32) -> f64 {
    rng.random_range(lo..=hi) as f64 / 4.0
}

fn nonzero_quarter<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let q = quarter(rng, -8, 8);
        if q != 0.0 {
            return q;
        }
    }
}

fn random_nl<R: Rng>(m: &Model, rng: &mut R, depth: u32) -> Nl {
    let numeric: Vec<usize> = (m.bools..m.n_vars()).collect();
    if depth == 0 || rng.random_bool(0.3) {
        return if rng.random_bool(0.7) {
            Nl::Var(numeric[rng.random_range(0..numeric.len())])
        } else {
            Nl::Const(quarter(rng, -8, 8))
        };
    }
    let mut sub = || Box::new(random_nl(m, rng, depth - 1));
    let a = sub();
    let b = sub();
    match rng.random_range(0..11) {
        0 => Nl::Add(a, b),
        1 => Nl::Sub(a, b),
        2 | 3 => Nl::Mul(a, b),
        4 => Nl::Div(a, b),
        5 => Nl::Pow(a, if rng.random_bool(0.5) { 2.0 } else { -1.0 }),
        6 => Nl::Abs(a),
        7 => Nl::Sin(a),
        8 => Nl::Cos(a),
        9 => Nl::Min(a, b),
        _ => Nl::Max(a, b),
    }
}

fn random_body<R: Rng>(m: &Model, rng: &mut R) -> Option<Body> {
    let class = rng.random_range(0..4);
    match class {
        0 if m.bools > 0 => {
            let clauses = (0..rng.random_range(1..=3))
                .map(|_| {
                    let mut vars: Vec<usize> = (0..m.bools).collect();
                    let len = rng.random_range(1..=m.bools.min(3));
                    (0..len)
                        .map(|_| {
                            let v = vars.swap_remove(rng.random_range(0..vars.len()));
                            (v, rng.random_bool(0.5))
                        })
                        .collect()
                })
                .collect();
            Some(Body::Sat(clauses))
        }
        1 if !m.ints.is_empty() => {
            if rng.random_bool(0.3) {
                let k = rng.random_range(0..m.ints.len());
                let (lo, hi) = m.ints[k];
                let set: Vec<i64> = (lo..=hi).filter(|_| rng.random_bool(0.5)).collect();
                if set.is_empty() {
                    return None;
                }
                Some(Body::FdIn {
                    var: m.int_index(k),
                    set,
                })
            } else {
                let mut terms: Vec<(i64, usize)> = Vec::new();
                for k in 0..m.ints.len() {
                    if rng.random_bool(0.7) {
                        let a = [-3, -2, -1, 1, 2, 3][rng.random_range(0..6)];
                        terms.push((a, m.int_index(k)));
                    }
                }
                if terms.is_empty() {
                    return None;
                }
                Some(Body::FdLinear {
                    terms,
                    rhs: rng.random_range(-4..=6),
                })
            }
        }
        2 if !m.reals.is_empty() => {
            let mut terms: Vec<(f64, usize)> = Vec::new();
            for k in 0..m.reals.len() {
                if rng.random_bool(0.7) {
                    terms.push((nonzero_quarter(rng), m.real_index(k)));
                }
            }
            if terms.is_empty() {
                return None;
            }
            Some(Body::Lr {
                terms,
                rhs: quarter(rng, -6, 6),
            })
        }
        3 if m.ints.len() + m.reals.len() > 0 => Some(Body::Nl {
            expr: random_nl(m, rng, 3),
            rhs: quarter(rng, -6, 6),
        }),
        _ => None,
    }
}

/// Random space and system within the given size limits.
pub fn random_model<R: Rng>(
    rng: &mut R,
    max_bools: usize,
    max_ints: usize,
    max_reals: usize,
    max_rules: usize,
) -> Model {
    let bools = rng.random_range(1..=max_bools.max(1));
    let ints = (0..rng.random_range(0..=max_ints))
        .map(|_| {
            let lo = rng.random_range(-2..=1);
            (lo, lo + rng.random_range(1..=4))
        })
        .collect();
    let reals = (0..rng.random_range(0..=max_reals))
        .map(|_| {
            let lo = quarter(rng, -8, 0);
            (lo, lo + quarter(rng, 2, 12))
        })
        .collect();
    let mut m = Model {
        bools,
        ints,
        reals,
        rules: Vec::new(),
    };
    let n_rules = rng.random_range(1..=max_rules);
    while m.rules.len() < n_rules {
        if let Some(body) = random_body(&m, rng) {
            let weight = rng.random_bool(0.5).then(|| quarter(rng, 1, 12));
            m.rules.push(Rule { body, weight });
        }
    }
    m
}

/// The largest space the equivalence check is asked to cover.
pub fn max_model<R: Rng>(rng: &mut R, max_rules: usize) -> Model {
    let mut m = Model {
        bools: 8,
        ints: vec![(0, 4), (-2, 2)],
        reals: vec![(-1.0, 1.0), (-2.0, 3.0)],
        rules: Vec::new(),
    };
    while m.rules.len() < max_rules {
        if let Some(body) = random_body(&m, rng) {
            let weight = rng.random_bool(0.5).then(|| quarter(rng, 1, 12));
            m.rules.push(Rule { body, weight });
        }
    }
    m
}

/// Checks the classification laws for one system at one assignment:
/// trichotomy, additivity of the soft cost, hard monotonicity, soft
/// neutrality and weight linearity. `k` scales soft weights.
pub fn check_laws(system: &ConstraintSystem, a: &Assignment, k: f64) -> Result<(), String> {
    let c = system.classify(a).map_err(|e| e.to_string())?;
    let perm = system.check_permissible(a).map_err(|e| e.to_string())?;

    let faulted = c.fault.is_some();
    let expected = if !perm.permissible || faulted {
        Category::HPrime
    } else if c.psi > 0.0 {
        Category::HsPrime
    } else {
        Category::Hs
    };
    if c.category != expected {
        return Err(format!("trichotomy: got {:?}, expected {expected:?}", c.category));
    }
    if faulted {
        return Ok(());
    }

    let total = c.per_class_costs.total();
    if (c.psi - total).abs() > 1e-12 * (1.0 + c.psi.abs()) {
        return Err(format!("additivity: psi {} vs class sum {total}", c.psi));
    }
    let psi = system.inefficiency(a).map_err(|e| e.to_string())?;
    if (c.psi - psi).abs() > 1e-12 * (1.0 + psi.abs()) {
        return Err(format!("additivity: psi {} vs inefficiency {psi}", c.psi));
    }

    for (i, con) in system.constraints().iter().enumerate() {
        let reduced = system.without(i);
        let r = reduced.classify(a).map_err(|e| e.to_string())?;
        if con.is_hard() {
            if c.category.is_permissible() && !r.category.is_permissible() {
                return Err(format!(
                    "hard monotonicity: dropping hard #{i} made the action unpermissible"
                ));
            }
            let restored = reduced.with(con.clone()).map_err(|e| e.to_string())?;
            if restored.classify(a).map_err(|e| e.to_string())?.category != c.category {
                return Err(format!("hard monotonicity: re-adding hard #{i} changed the category"));
            }
        } else {
            if r.category.is_permissible() != c.category.is_permissible() {
                return Err(format!("soft neutrality: dropping soft #{i} changed permissibility"));
            }
            let m = con.magnitude(a.values()).map_err(|e| e.to_string())?;
            let scaled = reduced
                .with(con.with_weight(con.weight() * k))
                .map_err(|e| e.to_string())?
                .classify(a)
                .map_err(|e| e.to_string())?;
            let want = c.psi + (k - 1.0) * con.weight() * m;
            if (scaled.psi - want).abs() > 1e-9 * (1.0 + want.abs()) {
                return Err(format!(
                    "weight linearity: soft #{i} scaled by {k} gave {} not {want}",
                    scaled.psi
                ));
            }
            if scaled.category.is_permissible() != c.category.is_permissible() {
                return Err(format!("soft neutrality: reweighting soft #{i} changed permissibility"));
            }
        }
    }
    Ok(())
}

/// Compares the checker against the model at one point.
pub fn agree(model: &Model, system: &ConstraintSystem, p: &Point) -> Result<(), String> {
    let got = system.classify(&model.assignment(p)).map_err(|e| e.to_string())?;
    let want = model.judge(p);
    if got.category != want.category {
        return Err(format!(
            "category {:?} vs oracle {:?} at {p:?}",
            got.category, want.category
        ));
    }
    if want.faulted != got.fault.is_some() {
        return Err(format!("fault {:?} vs oracle {} at {p:?}", got.fault, want.faulted));
    }
    if want.category != Category::HPrime && (got.psi - want.psi).abs() > 1e-12 * (1.0 + want.psi.abs()) {
        return Err(format!("psi {} vs oracle {} at {p:?}", got.psi, want.psi));
    }
    Ok(())
}
