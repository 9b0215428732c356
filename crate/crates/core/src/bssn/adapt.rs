use super::confidence::ConfidenceEstimator;
use super::{BssnParams, Cluster};
use crate::geometry::IntervalBox;

/// Merge attempts per previous cluster, tried in order of overlap.
pub const MAX_MERGE_CANDIDATES: usize = 3;

/// Folds the previous cluster map into the current one.
///
/// A previous cluster merges into a same-label current cluster it touches
/// when the hull of the two still has the label as majority with confidence
/// at least `epsilon`. Otherwise it is carried forward, and flagged stale once
/// it has gone `staleness_window` rounds without confirmation. Previous
/// clusters that were never settled are dropped rather than carried. The
/// result is disjoint per label, with current clusters taking precedence.
pub fn adapt<E: ConfidenceEstimator>(
    previous: &[Cluster],
    current: Vec<Cluster>,
    estimator: &mut E,
    params: &BssnParams,
    domain: &IntervalBox,
    t: u64,
) -> Vec<Cluster> {
    let mut fresh = current;
    let mut carried = Vec::new();
    for prev in previous {
        if prev.unsettled {
            continue;
        }
        let mut merged = false;
        if !prev.stale {
            let mut candidates: Vec<(usize, f64)> = fresh
                .iter()
                .enumerate()
                .filter(|(_, c)| c.label == prev.label && !c.unsettled && c.bounds.intersects(&prev.bounds))
                .map(|(i, c)| (i, c.bounds.overlap_volume(&prev.bounds)))
                .collect();
            candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(i, _) in candidates.iter().take(MAX_MERGE_CANDIDATES) {
                let hull = prev.bounds.hull(&fresh[i].bounds);
                let est = estimator.estimate(&hull, prev.label);
                if est.majority == Some(prev.label) && est.confidence >= params.epsilon {
                    let peer = &mut fresh[i];
                    peer.born_t = peer.born_t.min(prev.born_t);
                    peer.bounds = hull;
                    peer.confidence = est.confidence;
                    peer.support = est.support;
                    peer.last_confirmed_t = t;
                    peer.stale = false;
                    merged = true;
                    break;
                }
            }
        }
        if !merged {
            let mut kept = prev.clone();
            if t.saturating_sub(kept.last_confirmed_t) >= params.staleness_window {
                kept.stale = true;
            }
            carried.push(kept);
        }
    }
    fresh.extend(carried);
    make_disjoint(fresh, domain, params.min_box_fraction)
}

/// Removes same-label overlaps: each cluster loses whatever earlier clusters
/// of its label already cover. Slivers thinner than a quarter of the minimum
/// box size along a dimension the cluster actually spans are discarded.
pub fn make_disjoint(clusters: Vec<Cluster>, domain: &IntervalBox, min_box_fraction: f64) -> Vec<Cluster> {
    let mut placed: Vec<Cluster> = Vec::with_capacity(clusters.len());
    for c in clusters {
        let mut pieces = vec![c.bounds.clone()];
        for p in placed.iter().filter(|p| p.label == c.label) {
            if !p.bounds.intersects(&c.bounds) {
                continue;
            }
            pieces = pieces.iter().flat_map(|b| b.subtract(&p.bounds)).collect();
            if pieces.is_empty() {
                break;
            }
        }
        let whole = pieces.len() == 1 && pieces[0] == c.bounds;
        for piece in pieces {
            if !whole && is_sliver(&piece, &c.bounds, domain, min_box_fraction) {
                continue;
            }
            placed.push(Cluster {
                bounds: piece,
                ..c.clone()
            });
        }
    }
    placed
}

fn is_sliver(piece: &IntervalBox, original: &IntervalBox, domain: &IntervalBox, min_box_fraction: f64) -> bool {
    (0..piece.dim()).any(|d| {
        let floor = 0.25 * min_box_fraction * domain.side(d);
        original.side(d) >= floor && piece.side(d) < floor
    })
}
