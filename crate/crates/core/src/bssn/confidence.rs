//! Label-purity confidence: one-sided Wilson lower bounds over sampled labels.

use rand::Rng;

use super::invert::{invert, InvertError};
use crate::constraint::{Category, ConstraintSystem};
use crate::geometry::IntervalBox;
use crate::sut::{ProbeTag, SutHandle};

/// Normal quantile for a one-sided 95% bound.
pub const WILSON_Z: f64 = 1.644_853_626_951_472_2;

/// One-sided Wilson score lower bound for `successes` out of `n` trials.
/// Both may be fractional (weighted counts). Returns 0 for `n <= 0`.
pub fn wilson_lower(successes: f64, n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let z2 = WILSON_Z * WILSON_Z;
    let p = (successes / n).clamp(0.0, 1.0);
    let centre = p + z2 / (2.0 * n);
    let spread = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - spread) / (1.0 + z2 / n)).clamp(0.0, 1.0)
}

/// Per-category sample counts, indexed in [`Category::ALL`] order, plus
/// trials that produced no label at all.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub by_label: [u64; 3],
    pub unlabeled: u64,
}

fn slot(c: Category) -> usize {
    match c {
        Category::Hs => 0,
        Category::HsPrime => 1,
        Category::HPrime => 2,
    }
}

impl LabelCounts {
    pub fn add(&mut self, c: Category) {
        self.by_label[slot(c)] += 1;
    }

    pub fn get(&self, c: Category) -> u64 {
        self.by_label[slot(c)]
    }

    pub fn total(&self) -> u64 {
        self.by_label.iter().sum::<u64>() + self.unlabeled
    }

    /// Most frequent label; ties go to the more severe label.
    pub fn majority(&self) -> Option<Category> {
        Category::ALL
            .into_iter()
            .filter(|&c| self.get(c) > 0)
            .max_by_key(|&c| (self.get(c), c.priority()))
    }

    /// Wilson lower bound on the proportion of `label`.
    ///
    /// For permissible labels every H' sample weighs `risk_ratio` samples.
    pub fn bound_for(&self, label: Category, risk_ratio: f64) -> f64 {
        let hits = self.get(label) as f64;
        let mut n = self.total() as f64;
        if label.is_permissible() {
            n += (risk_ratio - 1.0) * self.get(Category::HPrime) as f64;
        }
        wilson_lower(hits, n)
    }
}

/// Result of one confidence query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub majority: Option<Category>,
    /// Lower bound on the proportion of the queried label.
    pub confidence: f64,
    pub support: u64,
    pub evaluations: u64,
}

/// Anything that can vouch for a labeled box.
pub trait ConfidenceEstimator {
    fn estimate(&mut self, region: &IntervalBox, label: Category) -> Estimate;
}

/// Draws `n` uniform inputs in `region`, probes and classifies them.
/// Returns `None` if the SUT faulted.
pub fn sample_labels<R: Rng + ?Sized>(
    sut: &mut SutHandle,
    checker: &ConstraintSystem,
    region: &IntervalBox,
    n: usize,
    rng: &mut R,
) -> Option<LabelCounts> {
    let mut counts = LabelCounts::default();
    let space = sut.input_space().clone();
    for _ in 0..n {
        let x = space.sample_in(region, rng);
        let (_, action) = sut.probe_coords(&x).ok()?;
        counts.add(checker.classify_values(action.values()).category);
    }
    Some(counts)
}

/// Purity lower bound of the majority label inside an input-space box.
/// A SUT fault yields 0.
pub fn estimate_confidence<R: Rng + ?Sized>(
    region: &IntervalBox,
    sut: &mut SutHandle,
    checker: &ConstraintSystem,
    n: usize,
    risk_ratio: f64,
    rng: &mut R,
) -> f64 {
    match sample_labels(sut, checker, region, n.max(1), rng) {
        Some(counts) => counts.majority().map_or(0.0, |m| counts.bound_for(m, risk_ratio)),
        None => 0.0,
    }
}

/// Input-space estimator backed by direct sampling.
pub struct SamplingEstimator<'a, R: Rng + ?Sized> {
    pub sut: &'a mut SutHandle,
    pub checker: &'a ConstraintSystem,
    pub samples: usize,
    pub risk_ratio: f64,
    pub rng: &'a mut R,
}

impl<R: Rng + ?Sized> ConfidenceEstimator for SamplingEstimator<'_, R> {
    fn estimate(&mut self, region: &IntervalBox, label: Category) -> Estimate {
        self.sut.set_probe_tag(ProbeTag::Confidence);
        let before = self.sut.probe_count();
        let counts = sample_labels(self.sut, self.checker, region, self.samples.max(1), self.rng);
        let evaluations = self.sut.probe_count() - before;
        match counts {
            Some(c) => Estimate {
                majority: c.majority(),
                confidence: c.bound_for(label, self.risk_ratio),
                support: c.get(label),
                evaluations,
            },
            None => Estimate {
                majority: None,
                confidence: 0.0,
                support: 0,
                evaluations,
            },
        }
    }
}

/// Inversion bookkeeping across estimator calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InversionStats {
    pub attempts: u64,
    pub successes: u64,
    pub evaluations: u64,
}

impl InversionStats {
    pub fn success_rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.successes as f64 / self.attempts as f64)
    }
}

/// Action-space estimator: there is no sampler of the action space, so each
/// sample is a target point that must be reached through inversion.
///
/// Each target is the point padded by `target_fraction` of the action span,
/// kept inside the queried box. A sample counts for the label only when the
/// inverted input re-probes into the target with that label; exhausted
/// searches count against it. Sampling stops as soon as the bound can no
/// longer reach `stop_below`.
pub struct InversionEstimator<'a, R: Rng + ?Sized> {
    pub sut: &'a mut SutHandle,
    pub checker: &'a ConstraintSystem,
    pub search: IntervalBox,
    pub samples: usize,
    pub budget: u64,
    pub risk_ratio: f64,
    pub stop_below: f64,
    pub target_fraction: f64,
    pub rng: &'a mut R,
    pub stats: InversionStats,
}

impl<R: Rng + ?Sized> InversionEstimator<'_, R> {
    fn target_around(&self, point: &[f64], region: &IntervalBox) -> IntervalBox {
        let bounds = self.sut.action_space().bounds();
        let (lo, hi): (Vec<f64>, Vec<f64>) = (0..point.len())
            .map(|d| {
                let pad = self.target_fraction * bounds.side(d);
                let (mut lo, mut hi) = (
                    (point[d] - pad).max(region.lo()[d]),
                    (point[d] + pad).min(region.hi()[d]),
                );
                if hi - lo <= 0.0 {
                    lo = (point[d] - pad).max(bounds.lo()[d]);
                    hi = (point[d] + pad).min(bounds.hi()[d]);
                }
                (lo, hi)
            })
            .unzip();
        IntervalBox::new(lo, hi).expect("padded point forms a box")
    }
}

impl<R: Rng + ?Sized> ConfidenceEstimator for InversionEstimator<'_, R> {
    fn estimate(&mut self, region: &IntervalBox, label: Category) -> Estimate {
        self.sut.set_probe_tag(ProbeTag::Inversion);
        let before = self.sut.probe_count();
        let action_space = self.sut.action_space().clone();
        let n = self.samples.max(1);
        let mut counts = LabelCounts::default();
        for i in 0..n {
            let point = action_space.sample_in(region, self.rng);
            let target = self.target_around(&point, region);
            self.stats.attempts += 1;
            match invert(self.sut, &self.search, &target, self.budget, self.rng) {
                Ok(inv) if inv.confirmed => {
                    self.stats.successes += 1;
                    counts.add(self.checker.classify_values(inv.action.values()).category);
                }
                Ok(_) | Err(InvertError::BudgetExhausted { .. }) => counts.unlabeled += 1,
                Err(InvertError::Sut(_)) => {
                    counts.unlabeled += (n - i) as u64;
                    break;
                }
            }
            let remaining = (n - i - 1) as f64;
            let mut best = counts;
            best.by_label[slot(label)] += remaining as u64;
            if best.bound_for(label, self.risk_ratio) < self.stop_below {
                break;
            }
        }
        let evaluations = self.sut.probe_count() - before;
        self.stats.evaluations += evaluations;
        let majority = if counts.get(label) > 0 && counts.majority() == Some(label) {
            Some(label)
        } else {
            counts.majority()
        };
        Estimate {
            majority,
            confidence: counts.bound_for(label, self.risk_ratio),
            support: counts.get(label),
            evaluations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_points() {
        // p = 1: bound = n / (n + z^2).
        let z2 = WILSON_Z * WILSON_Z;
        assert!((wilson_lower(100.0, 100.0) - 100.0 / (100.0 + z2)).abs() < 1e-12);
        assert!((wilson_lower(100.0, 100.0) - 0.973_657_279).abs() < 1e-9);
        assert!(wilson_lower(50.0, 100.0) < 0.5);
        assert!(wilson_lower(1e7, 1e7) > 0.9999);
        assert_eq!(wilson_lower(0.0, 0.0), 0.0);
        assert_eq!(wilson_lower(0.0, 10.0), 0.0);
    }

    #[test]
    fn majority_breaks_ties_toward_severity() {
        let mut c = LabelCounts::default();
        for _ in 0..3 {
            c.add(Category::Hs);
            c.add(Category::HPrime);
        }
        assert_eq!(c.majority(), Some(Category::HPrime));
        assert_eq!(LabelCounts::default().majority(), None);
    }

    #[test]
    fn risk_ratio_penalises_unpermissible_samples() {
        let mut c = LabelCounts::default();
        for _ in 0..95 {
            c.add(Category::Hs);
        }
        for _ in 0..5 {
            c.add(Category::HPrime);
        }
        let plain = c.bound_for(Category::Hs, 1.0);
        let weighted = c.bound_for(Category::Hs, 10.0);
        assert!((plain - wilson_lower(95.0, 100.0)).abs() < 1e-15);
        assert!((weighted - wilson_lower(95.0, 145.0)).abs() < 1e-15);
        // H' majority is unaffected by the ratio.
        assert_eq!(c.bound_for(Category::HPrime, 10.0), wilson_lower(5.0, 100.0));
    }
}
