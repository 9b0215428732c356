//! Axis-aligned interval boxes over coordinate vectors.
//!
//! Every space in the crate (input space, action space, constraint geometry)
//! is handled through coordinates: booleans become `0/1`, integers their
//! value, reals themselves. Boxes are closed on every side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoxError {
    #[error("lower and upper corners have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("dimension {dim}: lower bound {lo} exceeds upper bound {hi}")]
    Inverted { dim: usize, lo: f64, hi: f64 },
    #[error("dimension {0}: bound is not finite")]
    NonFinite(usize),
    #[error("a box needs at least one dimension")]
    Empty,
}

/// A closed axis-aligned box `[lo_0, hi_0] x ... x [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct IntervalBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<RawBox> for IntervalBox {
    type Error = BoxError;
    fn try_from(raw: RawBox) -> Result<Self, Self::Error> {
        IntervalBox::new(raw.lo, raw.hi)
    }
}

impl From<IntervalBox> for RawBox {
    fn from(b: IntervalBox) -> Self {
        RawBox { lo: b.lo, hi: b.hi }
    }
}

impl IntervalBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, BoxError> {
        if lo.len() != hi.len() {
            return Err(BoxError::DimensionMismatch(lo.len(), hi.len()));
        }
        if lo.is_empty() {
            return Err(BoxError::Empty);
        }
        for (dim, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(BoxError::NonFinite(dim));
            }
            if l > h {
                return Err(BoxError::Inverted { dim, lo: l, hi: h });
            }
        }
        Ok(IntervalBox { lo, hi })
    }

    /// Builds a box from `(lo, hi)` pairs, one per dimension.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self, BoxError> {
        let (lo, hi) = bounds.iter().copied().unzip();
        Self::new(lo, hi)
    }

    /// The unit cube `[0,1]^dim`.
    pub fn unit(dim: usize) -> Self {
        IntervalBox {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    /// Smallest box containing every point; `None` for an empty iterator.
    pub fn hull_of_points<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for p in iter {
            for (d, &x) in p.iter().enumerate() {
                if x < lo[d] {
                    lo[d] = x;
                }
                if x > hi[d] {
                    hi[d] = x;
                }
            }
        }
        Some(IntervalBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn side(&self, dim: usize) -> f64 {
        self.hi[dim] - self.lo[dim]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.side(d)).product()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&l, &h))| x >= l && x <= h)
    }

    /// Membership with every face pushed outwards by `tol`.
    pub fn contains_with_tolerance(&self, point: &[f64], tol: f64) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&l, &h))| x >= l - tol && x <= h + tol)
    }

    pub fn contains_box(&self, other: &IntervalBox) -> bool {
        self.dim() == other.dim() && (0..self.dim()).all(|d| other.lo[d] >= self.lo[d] && other.hi[d] <= self.hi[d])
    }

    /// Closed intersection; touching boxes yield a degenerate box.
    pub fn intersection(&self, other: &IntervalBox) -> Option<IntervalBox> {
        debug_assert_eq!(self.dim(), other.dim());
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let l = self.lo[d].max(other.lo[d]);
            let h = self.hi[d].min(other.hi[d]);
            if l > h {
                return None;
            }
            lo.push(l);
            hi.push(h);
        }
        Some(IntervalBox { lo, hi })
    }

    pub fn intersects(&self, other: &IntervalBox) -> bool {
        (0..self.dim()).all(|d| self.lo[d] <= other.hi[d] && other.lo[d] <= self.hi[d])
    }

    pub fn overlap_volume(&self, other: &IntervalBox) -> f64 {
        (0..self.dim())
            .map(|d| (self.hi[d].min(other.hi[d]) - self.lo[d].max(other.lo[d])).max(0.0))
            .product()
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &IntervalBox) -> IntervalBox {
        IntervalBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// Euclidean distance from `point` to the box; zero inside.
    pub fn distance_to(&self, point: &[f64]) -> f64 {
        let mut sq = 0.0;
        for (d, &x) in point.iter().enumerate() {
            let gap = if x < self.lo[d] {
                self.lo[d] - x
            } else if x > self.hi[d] {
                x - self.hi[d]
            } else {
                0.0
            };
            sq += gap * gap;
        }
        sq.sqrt()
    }

    /// Splits the box at the midpoint of `dim`.
    ///
    /// For integral dimensions the halves do not share the cut value:
    /// `[0, 4]` becomes `[0, 2]` and `[3, 4]`.
    pub fn bisect(&self, dim: usize, integral: bool) -> (IntervalBox, IntervalBox) {
        let mut left = self.clone();
        let mut right = self.clone();
        if integral {
            let cut = ((self.lo[dim] + self.hi[dim]) / 2.0).floor();
            left.hi[dim] = cut;
            right.lo[dim] = cut + 1.0;
        } else {
            let mid = 0.5 * (self.lo[dim] + self.hi[dim]);
            left.hi[dim] = mid;
            right.lo[dim] = mid;
        }
        (left, right)
    }

    /// Removes `other` from `self`, returning up to `2 * dim` pieces whose
    /// interiors are pairwise disjoint and disjoint from `other`.
    pub fn subtract(&self, other: &IntervalBox) -> Vec<IntervalBox> {
        if self.overlap_volume(other) <= 0.0 {
            return vec![self.clone()];
        }
        let mut pieces = Vec::new();
        let mut rest = self.clone();
        for d in 0..self.dim() {
            if rest.lo[d] < other.lo[d] {
                let mut piece = rest.clone();
                piece.hi[d] = other.lo[d];
                pieces.push(piece);
                rest.lo[d] = other.lo[d];
            }
            if rest.hi[d] > other.hi[d] {
                let mut piece = rest.clone();
                piece.lo[d] = other.hi[d];
                pieces.push(piece);
                rest.hi[d] = other.hi[d];
            }
        }
        pieces
    }

    /// Clamps a point into the box in place.
    pub fn clamp_point(&self, point: &mut [f64]) {
        for (d, x) in point.iter_mut().enumerate() {
            *x = x.clamp(self.lo[d], self.hi[d]);
        }
    }
}

/// Euclidean distance from `point` to the union of `boxes`; zero inside any.
pub fn distance_to_union(point: &[f64], boxes: &[IntervalBox]) -> f64 {
    boxes.iter().map(|b| b.distance_to(point)).fold(f64::INFINITY, f64::min)
}
