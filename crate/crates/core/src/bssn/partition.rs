use rand::Rng;

use super::confidence::sample_labels;
use super::{BssnParams, Cluster, SpaceTag};
use crate::constraint::{Category, ConstraintSystem};
use crate::geometry::IntervalBox;
use crate::sut::{ProbeTag, SutHandle};

/// Recursively bisects an input-space cluster until every leaf reaches the
/// purity bound `epsilon`, or a depth/size guard stops it. Leaves stopped by a
/// guard are flagged `unsettled`.
///
/// Each visited box is sampled afresh with `confidence_samples` probes. The
/// leaves tile the parent box exactly.
pub fn partition<R: Rng + ?Sized>(
    cluster: &Cluster,
    sut: &mut SutHandle,
    checker: &ConstraintSystem,
    params: &BssnParams,
    t: u64,
    rng: &mut R,
) -> Vec<Cluster> {
    debug_assert_eq!(cluster.space, SpaceTag::Input);
    sut.set_probe_tag(ProbeTag::Confidence);
    let domain = sut.input_space().bounds();
    let integral = sut.input_space().integral_mask();
    let mut leaves = Vec::new();
    let mut stack = vec![(cluster.bounds.clone(), 0usize)];
    while let Some((bx, depth)) = stack.pop() {
        let counts = sample_labels(sut, checker, &bx, params.confidence_samples, rng);
        let (label, confidence, support) = match counts {
            Some(c) => {
                let label = c.majority().unwrap_or(cluster.label);
                (label, c.bound_for(label, params.risk_ratio), c.get(label))
            }
            None => (Category::HPrime, 0.0, 0),
        };
        let faulted = counts.is_none();
        let settled = !faulted && confidence >= params.epsilon;
        let split_dim = (!settled && depth < params.max_partition_depth)
            .then(|| split_dimension(&bx, &domain, params.min_box_fraction))
            .flatten();
        match split_dim {
            Some(d) => {
                let (a, b) = bx.bisect(d, integral[d]);
                stack.push((b, depth + 1));
                stack.push((a, depth + 1));
            }
            None => leaves.push(Cluster {
                space: SpaceTag::Input,
                bounds: bx,
                label,
                confidence,
                support,
                born_t: t,
                last_confirmed_t: t,
                stale: false,
                unsettled: !settled,
            }),
        }
    }
    leaves
}

/// Longest side relative to the domain span, provided every non-degenerate
/// side is still above the minimum box size.
fn split_dimension(bx: &IntervalBox, domain: &IntervalBox, min_fraction: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for d in 0..bx.dim() {
        let side = bx.side(d);
        if side <= 0.0 {
            continue;
        }
        let span = domain.side(d);
        if side <= min_fraction * span {
            return None;
        }
        let normalized = side / span;
        if best.is_none_or(|(_, b)| normalized > b) {
            best = Some((d, normalized));
        }
    }
    best.map(|(d, _)| d)
}
