//! Target sets `A` for entrance and exit sampling.

use std::fmt;
use std::sync::Arc;

type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

#[derive(Clone)]
pub enum Region {
    /// `[0, inf)^d`.
    NonNegOrthant,
    /// `(-inf, 0)^d`.
    NegOrthant,
    /// `{x : x_axis >= level}`.
    HalfSpaceGe { axis: usize, level: f64 },
    /// Union of closed boxes `[lo, hi]`.
    Boxes(Vec<(Vec<f64>, Vec<f64>)>),
    /// Finite set of points, matched within `1e-9`.
    Points(Vec<Vec<f64>>),
    Complement(Box<Region>),
    Custom(Predicate),
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::NonNegOrthant => x.iter().all(|&v| v >= 0.0),
            Region::NegOrthant => x.iter().all(|&v| v < 0.0),
            Region::HalfSpaceGe { axis, level } => x[*axis] >= *level,
            Region::Boxes(boxes) => boxes.iter().any(|(lo, hi)| {
                x.iter().zip(lo).zip(hi).all(|((v, l), h)| l <= v && v <= h)
            }),
            Region::Points(pts) => {
                pts.iter().any(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= 1e-9))
            }
            Region::Complement(inner) => !inner.contains(x),
            Region::Custom(f) => f(x),
        }
    }
}

/// A Borel set `A` given by a total, deterministic membership predicate.
#[derive(Clone)]
pub struct TargetSet {
    pub label: String,
    pub region: Region,
    /// User assertion that `A` has nonempty interior in the state space.
    pub interior_nonempty: bool,
}

impl TargetSet {
    pub fn new(label: impl Into<String>, region: Region, interior_nonempty: bool) -> Self {
        TargetSet { label: label.into(), region, interior_nonempty }
    }

    /// The closed orthant `[0, inf)^d` (the half-line when `d = 1`).
    pub fn nonneg_orthant() -> Self {
        TargetSet::new("[0,inf)^d", Region::NonNegOrthant, true)
    }

    pub fn neg_orthant() -> Self {
        TargetSet::new("(-inf,0)^d", Region::NegOrthant, true)
    }

    pub fn points(points: Vec<Vec<f64>>) -> Self {
        let label = format!("{points:?}");
        TargetSet::new(label, Region::Points(points), false)
    }

    pub fn custom<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        TargetSet::new(label, Region::Custom(Arc::new(f)), false)
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.region.contains(x)
    }

    pub fn complement(&self) -> Self {
        let region = match &self.region {
            Region::Complement(inner) => (**inner).clone(),
            r => Region::Complement(Box::new(r.clone())),
        };
        TargetSet::new(format!("complement of {}", self.label), region, true)
    }
}

impl fmt::Debug for TargetSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TargetSet({})", self.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthant_conventions() {
        let a = TargetSet::nonneg_orthant();
        assert!(a.contains(&[0.0]));
        assert!(!a.contains(&[-1e-300]));
        assert!(a.contains(&[0.0, 3.0]));
        assert!(!a.contains(&[1.0, -1.0]));
        let c = a.complement();
        assert!(c.contains(&[1.0, -1.0]));
        assert!(!c.complement().contains(&[1.0, -1.0]));
    }

    #[test]
    fn boxes_points_and_custom() {
        let b = TargetSet::new("box", Region::Boxes(vec![(vec![-1.0], vec![1.0])]), true);
        assert!(b.contains(&[1.0]) && !b.contains(&[1.5]));
        let p = TargetSet::points(vec![vec![0.0, 0.0]]);
        assert!(p.contains(&[0.0, 0.0]) && !p.contains(&[0.0, 1.0]));
        let even = TargetSet::custom("2Z", |x| x[0].rem_euclid(2.0) == 0.0);
        assert!(even.contains(&[-4.0]) && !even.contains(&[3.0]));
    }
}
