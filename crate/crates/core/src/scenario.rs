//! Ground-truth scenario with thirteen labeled unit cells A..M in a 10x10
//! action plane, an oracle labeler and grid scoring of discovered maps.
//!
//! ```text
//!  y
//!  7 +  A  B  C  D  E  F  G      row 0, x from 1.5 to 8.5
//!  6 +
//!  4 +  H  I  J  K  L  M         row 1, x from 1.5 to 7.5
//!  3 +
//! ```
//!
//! The SUT maps the input unit square onto the cells by equal-width strips
//! along the first input coordinate, in alphabetical cell order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bssn::{Cluster, SpaceTag};
use crate::constraint::{Category, ConstraintSystem};
use crate::geometry::IntervalBox;
use crate::space::VariableSpace;
use crate::sut::{Cell, SutKind, SutSpec};

pub const GRID: usize = 200;
pub const ACTION_EXTENT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    #[serde(rename = "box")]
    pub bounds: IntervalBox,
    pub in_sg: bool,
    pub in_sh: bool,
    pub in_sb: bool,
    pub in_sa: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Epoch {
    Pre,
    Post,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleLabel {
    /// First named region containing the point.
    pub region: Option<String>,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub epoch: Epoch,
    pub recall_h_prime: f64,
    pub precision_h_prime: f64,
    pub recall_hs_prime: f64,
    pub precision_hs_prime: f64,
    pub lost_capacity_detected: bool,
    /// Rounds from the learning epoch to the first eligible H' footprint over
    /// L or M. Filled in by the campaign.
    pub new_violation_latency: Option<u64>,
    /// Rounds from the learning epoch until every pre-learning action
    /// cluster over a vacated region is stale. Filled in by the campaign.
    #[serde(default)]
    pub lost_capacity_latency: Option<u64>,
    /// Per region, the fraction covered by eligible footprints of each label.
    pub region_coverage: BTreeMap<String, BTreeMap<Category, f64>>,
}

const ROW0: [&str; 7] = ["A", "B", "C", "D", "E", "F", "G"];
const ROW1: [&str; 6] = ["H", "I", "J", "K", "L", "M"];
const S_G: &str = "ABCDEFG";
const S_H: &str = "ABGFKMH";
const S_B: &str = "BDFEIJK";
const S_A: &str = "EFGJKLM";

/// Hard violations reachable before learning.
pub const HARD_VIOLATIONS_PRE: &str = "IJK";
/// Hard violations reachable after learning.
pub const HARD_VIOLATIONS_POST: &str = "JKLM";
/// Hard or soft violations reachable before learning.
pub const UNACCEPTABLE_PRE: &str = "IJKED";
/// Hard or soft violations reachable after learning.
pub const UNACCEPTABLE_POST: &str = "JKLME";
/// Behaviors the SUT loses when it learns.
pub const VACATED: &str = "BDI";
/// Hard violations that only appear after learning.
pub const NEW_VIOLATIONS: &str = "LM";

#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub regions: Vec<Region>,
    pub constraint_text: String,
    pub checker: ConstraintSystem,
    pub input_space: VariableSpace,
    pub action_space: VariableSpace,
    pub pre_cells: Vec<Cell>,
    pub post_cells: Vec<Cell>,
}

fn box_literal(b: &IntervalBox) -> String {
    format!("[{},{}]x[{},{}]", b.lo()[0], b.hi()[0], b.lo()[1], b.hi()[1])
}

impl Scenario {
    pub fn two_row(seed: u64) -> Scenario {
        let mut regions = Vec::with_capacity(13);
        let rows: [(&[&str], f64); 2] = [(&ROW0, 6.0), (&ROW1, 3.0)];
        for (names, y) in rows {
            for (i, name) in names.iter().enumerate() {
                let x = 1.5 + i as f64;
                let c = name.chars().next().unwrap();
                regions.push(Region {
                    name: name.to_string(),
                    bounds: IntervalBox::from_bounds(&[(x, x + 1.0), (y, y + 1.0)]).unwrap(),
                    in_sg: S_G.contains(c),
                    in_sh: S_H.contains(c),
                    in_sb: S_B.contains(c),
                    in_sa: S_A.contains(c),
                });
            }
        }
        regions.sort_by(|a, b| a.name.cmp(&b.name));

        let union_literal = |pick: &dyn Fn(&Region) -> bool| {
            regions
                .iter()
                .filter(|r| pick(r))
                .map(|r| box_literal(&r.bounds))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let constraint_text = format!(
            "var v0 : real 0..{e}\nvar v1 : real 0..{e}\n\
             nl hard dist_union(v0, v1; {g}) <= 0\n\
             nl soft dist_union(v0, v1; {h}) <= 0\n",
            e = ACTION_EXTENT,
            g = union_literal(&|r| r.in_sg),
            h = union_literal(&|r| r.in_sh),
        );
        let checker = ConstraintSystem::parse(&constraint_text).expect("scenario constraints parse");
        let action_space = checker.space().clone();
        let input_space = VariableSpace::reals("x", &[(0.0, 1.0), (0.0, 1.0)]).unwrap();

        let strips = |pick: &dyn Fn(&Region) -> bool| -> Vec<Cell> {
            let targets: Vec<&Region> = regions.iter().filter(|r| pick(r)).collect();
            let n = targets.len() as f64;
            targets
                .iter()
                .enumerate()
                .map(|(i, r)| Cell {
                    domain: IntervalBox::from_bounds(&[(i as f64 / n, (i + 1) as f64 / n), (0.0, 1.0)]).unwrap(),
                    image: r.bounds.clone(),
                })
                .collect()
        };
        let pre_cells = strips(&|r| r.in_sb);
        let post_cells = strips(&|r| r.in_sa);
        Scenario {
            seed,
            regions,
            constraint_text,
            checker,
            input_space,
            action_space,
            pre_cells,
            post_cells,
        }
    }

    pub fn region(&self, name: &str) -> &Region {
        self.regions
            .iter()
            .find(|r| r.name == name)
            .unwrap_or_else(|| panic!("no region {name}"))
    }

    /// Boxes of the regions named by the letters of `names`.
    pub fn boxes(&self, names: &str) -> Vec<IntervalBox> {
        names
            .chars()
            .map(|c| self.region(&c.to_string()).bounds.clone())
            .collect()
    }

    pub fn cells(&self, epoch: Epoch) -> &[Cell] {
        match epoch {
            Epoch::Pre => &self.pre_cells,
            Epoch::Post => &self.post_cells,
        }
    }

    /// Learning SUT that switches from the pre map to the post map after
    /// `trigger` interactions.
    pub fn learning_sut(&self, trigger: u64) -> SutSpec {
        SutSpec::new(
            self.input_space.clone(),
            self.action_space.clone(),
            SutKind::Learning {
                pre: self.pre_cells.clone(),
                post: self.post_cells.clone(),
                trigger,
            },
        )
        .with_seed(self.seed)
    }

    /// Stateless SUT for one epoch's map.
    pub fn epoch_sut(&self, epoch: Epoch) -> SutSpec {
        SutSpec::new(
            self.input_space.clone(),
            self.action_space.clone(),
            SutKind::PiecewiseRugged {
                cells: self.cells(epoch).to_vec(),
            },
        )
        .with_seed(self.seed)
    }

    pub fn oracle_label(&self, v: &[f64]) -> OracleLabel {
        let region = self
            .regions
            .iter()
            .find(|r| r.bounds.contains(v))
            .map(|r| r.name.clone());
        let in_sg = self.regions.iter().any(|r| r.in_sg && r.bounds.contains(v));
        let in_sh = self.regions.iter().any(|r| r.in_sh && r.bounds.contains(v));
        let category = if !in_sg {
            Category::HPrime
        } else if !in_sh {
            Category::HsPrime
        } else {
            Category::Hs
        };
        OracleLabel { region, category }
    }

    /// Centres of the scoring grid, row by row.
    pub fn grid_points() -> impl Iterator<Item = [f64; 2]> {
        let h = ACTION_EXTENT / GRID as f64;
        (0..GRID).flat_map(move |j| (0..GRID).map(move |i| [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]))
    }

    /// Action-space image of an input-space box under one epoch's map.
    pub fn push_forward(&self, bx: &IntervalBox, epoch: Epoch) -> Vec<IntervalBox> {
        self.cells(epoch)
            .iter()
            .filter_map(|cell| {
                let part = cell.domain.intersection(bx)?;
                if part.volume() <= 0.0 {
                    return None;
                }
                let a = cell.map(part.lo());
                let b = cell.map(part.hi());
                let bounds: Vec<(f64, f64)> = a.iter().zip(&b).map(|(p, q)| (p.min(*q), p.max(*q))).collect();
                IntervalBox::from_bounds(&bounds).ok()
            })
            .collect()
    }

    /// Action-space footprints of eligible clusters, per label.
    ///
    /// Eligible: settled, not stale and, after learning, confirmed after the
    /// learning round.
    pub fn footprints(
        &self,
        clusters: &[Cluster],
        epoch: Epoch,
        epoch_round: u64,
    ) -> BTreeMap<Category, Vec<IntervalBox>> {
        let mut out: BTreeMap<Category, Vec<IntervalBox>> = BTreeMap::new();
        for c in clusters {
            if !c.is_settled() || (epoch == Epoch::Post && c.last_confirmed_t <= epoch_round) {
                continue;
            }
            let boxes = match c.space {
                SpaceTag::Action => vec![c.bounds.clone()],
                SpaceTag::Input => self.push_forward(&c.bounds, epoch),
            };
            out.entry(c.label).or_default().extend(boxes);
        }
        out
    }

    /// Whether any eligible footprint of `label` overlaps the named regions.
    pub fn footprint_overlaps(
        &self,
        clusters: &[Cluster],
        label: Category,
        names: &str,
        epoch: Epoch,
        epoch_round: u64,
    ) -> bool {
        let targets = self.boxes(names);
        self.footprints(clusters, epoch, epoch_round)
            .get(&label)
            .is_some_and(|fp| fp.iter().any(|b| targets.iter().any(|t| b.overlap_volume(t) > 0.0)))
    }

    /// Grid-scores a discovered cluster map against the truth of `epoch`.
    ///
    /// `epoch_round` is the last round before learning; it gates eligibility
    /// after learning and separates pre-learning action clusters for the
    /// lost-capacity check.
    pub fn score(&self, clusters: &[Cluster], epoch: Epoch, epoch_round: u64) -> ScoreCard {
        let fp = self.footprints(clusters, epoch, epoch_round);
        let empty = Vec::new();
        let fp_of = |c: Category| fp.get(&c).unwrap_or(&empty);
        let (truth_h, truth_s) = match epoch {
            Epoch::Pre => (self.boxes(HARD_VIOLATIONS_PRE), self.boxes("DE")),
            Epoch::Post => (self.boxes(HARD_VIOLATIONS_POST), self.boxes("E")),
        };
        let mut tally = Tally::default();
        let mut coverage: BTreeMap<String, [u64; 4]> = BTreeMap::new();
        for p in Self::grid_points() {
            let truth = self.oracle_label(&p);
            let hit = |boxes: &[IntervalBox]| boxes.iter().any(|b| b.contains(&p));
            let in_h = hit(fp_of(Category::HPrime));
            let in_s = hit(fp_of(Category::HsPrime));
            bump(&mut tally.h, hit(&truth_h), in_h, truth.category == Category::HPrime);
            bump(&mut tally.s, hit(&truth_s), in_s, truth.category == Category::HsPrime);
            if let Some(name) = truth.region {
                let slot = coverage.entry(name).or_default();
                slot[0] += 1;
                for (k, c) in Category::ALL.iter().enumerate() {
                    if hit(fp_of(*c)) {
                        slot[k + 1] += 1;
                    }
                }
            }
        }
        let region_coverage = coverage
            .into_iter()
            .map(|(name, s)| {
                let per = Category::ALL
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (*c, s[k + 1] as f64 / s[0] as f64))
                    .collect();
                (name, per)
            })
            .collect();
        ScoreCard {
            epoch,
            recall_h_prime: ratio(tally.h.covered, tally.h.truth),
            precision_h_prime: ratio(tally.h.correct, tally.h.footprint),
            recall_hs_prime: ratio(tally.s.covered, tally.s.truth),
            precision_hs_prime: ratio(tally.s.correct, tally.s.footprint),
            lost_capacity_detected: epoch == Epoch::Post && self.lost_capacity(clusters, epoch_round),
            new_violation_latency: None,
            lost_capacity_latency: None,
            region_coverage,
        }
    }

    /// Pre-learning action clusters over vacated regions exist and all are stale.
    pub fn lost_capacity(&self, clusters: &[Cluster], epoch_round: u64) -> bool {
        let vacated = self.boxes(VACATED);
        let over: Vec<&Cluster> = clusters
            .iter()
            .filter(|c| c.space == SpaceTag::Action && c.born_t <= epoch_round)
            .filter(|c| vacated.iter().any(|v| v.overlap_volume(&c.bounds) > 0.0))
            .collect();
        !over.is_empty() && over.iter().all(|c| c.stale)
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    truth: u64,
    covered: u64,
    footprint: u64,
    correct: u64,
}

#[derive(Debug, Default)]
struct Tally {
    h: Counts,
    s: Counts,
}

fn bump(c: &mut Counts, in_truth: bool, in_fp: bool, oracle_agrees: bool) {
    if in_truth {
        c.truth += 1;
        if in_fp {
            c.covered += 1;
        }
    }
    if in_fp {
        c.footprint += 1;
        if oracle_agrees {
            c.correct += 1;
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}
