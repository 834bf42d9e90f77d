//! Closed-form invariant measures of random walks.
//!
//! Lattice measures carry `lambda`-weights, i.e. density times `h^d` per
//! point, so that the unit cell has mass one. Measures with infinite total
//! mass (orthants in `d >= 2`, general entrance measures) only answer windowed
//! and ratio queries.

use std::io::Write;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde_json::json;
use thiserror::Error;

use crate::alias::AliasTable;
use crate::laws::{ContinuousLaw, LatticeLaw};
use crate::scalar::Scalar;
use crate::target::TargetSet;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("measure has infinite total mass; only windowed and ratio queries are available")]
    InfiniteMass,
    #[error("total mass is not known in closed form")]
    UnknownMass,
    #[error("window carries {window} of total mass {total}; widen it before sampling")]
    WindowMissesMass { window: f64, total: f64 },
    #[error("measure is zero")]
    ZeroMass,
    #[error("window has dimension {got}, the law has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation needs a one-dimensional law")]
    NotOneDimensional,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Total mass of a measure.
#[derive(Clone, Debug, PartialEq)]
pub enum Mass<S> {
    Finite(S),
    Infinite,
    /// Not available in closed form (general target sets).
    Unknown,
}

/// Box of lattice points, inclusive bounds in span units per axis.
pub type Window = Vec<(i64, i64)>;

/// Weights of a measure on the points of a lattice window.
#[derive(Clone, Debug)]
pub struct LatticeMeasure<S> {
    pub label: String,
    pub window: Window,
    pub span: Vec<BigRational>,
    /// Points in span units (only those in the window and in the measure's support set).
    pub points: Vec<Vec<i64>>,
    pub weights: Vec<S>,
    pub total_mass: Mass<S>,
}

fn units_to_rational(units: &[i64], span: &[BigRational]) -> Vec<BigRational> {
    units.iter().zip(span).map(|(&k, h)| BigRational::from_integer(BigInt::from(k)) * h).collect()
}

fn window_points(window: &Window) -> Vec<Vec<i64>> {
    let mut pts = vec![Vec::new()];
    for &(lo, hi) in window {
        let mut next = Vec::new();
        for p in &pts {
            for k in lo..=hi {
                let mut q = p.clone();
                q.push(k);
                next.push(q);
            }
        }
        pts = next;
    }
    pts
}

fn check_window(law: &LatticeLaw, window: &Window) -> Result<(), MeasureError> {
    if window.len() != law.dim() {
        return Err(MeasureError::DimensionMismatch { expected: law.dim(), got: window.len() });
    }
    Ok(())
}

/// Window covering the support of `X_1` on every axis, which contains every
/// nonzero weight of the one-dimensional orthant measures.
pub fn support_window(law: &LatticeLaw) -> Window {
    (0..law.dim())
        .map(|axis| {
            let lo = law.atoms().iter().map(|a| a.units[axis]).min().expect("nonempty");
            let hi = law.atoms().iter().map(|a| a.units[axis]).max().expect("nonempty");
            (lo.min(0), hi.max(0))
        })
        .collect()
}

fn build<S: Scalar>(
    label: String,
    law: &LatticeLaw,
    window: &Window,
    mass: Mass<BigRational>,
    keep: impl Fn(&[i64]) -> bool,
    weight: impl Fn(&[i64]) -> BigRational,
) -> LatticeMeasure<S> {
    let cell = law.cell_volume();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for p in window_points(window) {
        if keep(&p) {
            weights.push(S::from_rational(&(weight(&p) * &cell)));
            points.push(p);
        }
    }
    let total_mass = match mass {
        Mass::Finite(m) => Mass::Finite(S::from_rational(&m)),
        Mass::Infinite => Mass::Infinite,
        Mass::Unknown => Mass::Unknown,
    };
    LatticeMeasure { label, window: window.clone(), span: law.span().to_vec(), points, weights, total_mass }
}

/// `pi(x) = h * [1(x >= 0) P(X_1 > x) + 1(x < 0) P(X_1 <= x)]` on a window of `hZ`.
pub fn pi_measure<S: Scalar>(law: &LatticeLaw, window: &Window) -> Result<LatticeMeasure<S>, MeasureError> {
    if law.dim() != 1 {
        return Err(MeasureError::NotOneDimensional);
    }
    check_window(law, window)?;
    let total = law.abs_first_moment().cloned().expect("one-dimensional");
    Ok(build(
        "pi".into(),
        law,
        window,
        Mass::Finite(total),
        |_| true,
        |x| if x[0] >= 0 { law.tail_gt_units(x) } else { law.cdf_le_units(x) },
    ))
}

fn positive_part_mean(law: &LatticeLaw) -> BigRational {
    let h = &law.span()[0];
    law.atoms()
        .iter()
        .filter(|a| a.units[0] > 0)
        .map(|a| BigRational::from_integer(BigInt::from(a.units[0])) * h * &a.prob)
        .sum()
}

/// `pi_+(x) = h^d (1 - P(X_1 <= x))` on `[0, inf)^d`.
pub fn pi_plus<S: Scalar>(law: &LatticeLaw, window: &Window) -> Result<LatticeMeasure<S>, MeasureError> {
    check_window(law, window)?;
    let mass = if law.dim() == 1 { Mass::Finite(positive_part_mean(law)) } else { Mass::Infinite };
    Ok(build(
        "pi_plus".into(),
        law,
        window,
        mass,
        |x| x.iter().all(|&k| k >= 0),
        |x| BigRational::one() - law.cdf_le_units(x),
    ))
}

/// `pi_-(x) = h^d (1 - P(X_1 > x))` on `(-inf, 0)^d`.
pub fn pi_minus<S: Scalar>(law: &LatticeLaw, window: &Window) -> Result<LatticeMeasure<S>, MeasureError> {
    check_window(law, window)?;
    let mass = if law.dim() == 1 {
        let abs = law.abs_first_moment().cloned().expect("one-dimensional");
        Mass::Finite(abs - positive_part_mean(law))
    } else {
        Mass::Infinite
    };
    Ok(build(
        "pi_minus".into(),
        law,
        window,
        mass,
        |x| x.iter().all(|&k| k < 0),
        |x| BigRational::one() - law.tail_gt_units(x),
    ))
}

/// `h^d P(x - X_1 in A^c)` for `x` in `A`.
pub fn lambda_entrance<S: Scalar>(law: &LatticeLaw, a: &TargetSet, window: &Window) -> Result<LatticeMeasure<S>, MeasureError> {
    check_window(law, window)?;
    Ok(build(
        format!("lambda_entrance({})", a.label),
        law,
        window,
        Mass::Unknown,
        |x| a.contains(&law.to_real(x)),
        |x| {
            law.atoms()
                .iter()
                .filter(|at| {
                    let y: Vec<i64> = x.iter().zip(&at.units).map(|(u, v)| u - v).collect();
                    !a.contains(&law.to_real(&y))
                })
                .map(|at| at.prob.clone())
                .sum()
        },
    ))
}

/// `h^d P(x + X_1 in A)` for `x` in `A^c`.
pub fn lambda_exit<S: Scalar>(law: &LatticeLaw, a: &TargetSet, window: &Window) -> Result<LatticeMeasure<S>, MeasureError> {
    check_window(law, window)?;
    Ok(build(
        format!("lambda_exit({})", a.label),
        law,
        window,
        Mass::Unknown,
        |x| !a.contains(&law.to_real(x)),
        |x| {
            law.atoms()
                .iter()
                .filter(|at| {
                    let y: Vec<i64> = x.iter().zip(&at.units).map(|(u, v)| u + v).collect();
                    a.contains(&law.to_real(&y))
                })
                .map(|at| at.prob.clone())
                .sum()
        },
    ))
}

impl<S: Scalar> LatticeMeasure<S> {
    pub fn weight_at(&self, units: &[i64]) -> Option<&S> {
        self.points.iter().position(|p| p == units).map(|i| &self.weights[i])
    }

    pub fn window_mass(&self) -> S {
        self.weights.iter().cloned().sum()
    }

    /// Total mass outside the window (finite measures only).
    pub fn mass_outside_window(&self) -> Result<S, MeasureError> {
        match &self.total_mass {
            Mass::Finite(m) => Ok(m.clone() - self.window_mass()),
            Mass::Infinite => Err(MeasureError::InfiniteMass),
            Mass::Unknown => Err(MeasureError::UnknownMass),
        }
    }

    /// Real coordinates of the `i`-th point.
    pub fn point(&self, i: usize) -> Vec<S> {
        units_to_rational(&self.points[i], &self.span).iter().map(S::from_rational).collect()
    }

    /// `sum |x|^k w(x)` over the window, `|.|` the sup norm.
    pub fn abs_moment(&self, k: u32) -> S {
        (0..self.points.len())
            .map(|i| {
                let r = self.point(i).into_iter().map(|c| c.abs()).fold(S::zero(), |m, c| if c > m { c } else { m });
                let mut pow = S::one();
                for _ in 0..k {
                    pow = pow * r.clone();
                }
                pow * self.weights[i].clone()
            })
            .sum()
    }

    /// Ratio of window sums over two sets of points.
    pub fn ratio(&self, num: &[Vec<i64>], den: &[Vec<i64>]) -> Option<f64> {
        let sum = |set: &[Vec<i64>]| -> f64 { set.iter().filter_map(|p| self.weight_at(p)).map(|w| w.to_f64()).sum() };
        let d = sum(den);
        (d > 0.0).then(|| sum(num) / d)
    }

    /// Alias sampler of the normalized measure. The window must carry the
    /// whole (finite) mass.
    pub fn normalized_sampler(&self) -> Result<MeasureSampler, MeasureError> {
        let total = match &self.total_mass {
            Mass::Finite(m) => m.to_f64(),
            Mass::Infinite => return Err(MeasureError::InfiniteMass),
            Mass::Unknown => return Err(MeasureError::UnknownMass),
        };
        let window = self.window_mass().to_f64();
        if (window - total).abs() > 1e-12 * total.max(1.0) {
            return Err(MeasureError::WindowMissesMass { window, total });
        }
        let w: Vec<f64> = self.weights.iter().map(|w| w.to_f64()).collect();
        let table = AliasTable::new(&w).ok_or(MeasureError::ZeroMass)?;
        Ok(MeasureSampler { points: self.points.clone(), probs: w.iter().map(|x| x / window).collect(), table })
    }

    /// CSV rows `x_1, ..., x_d, weight` in real coordinates.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MeasureError> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.window.len();
        let mut head: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        head.push("weight".into());
        w.write_record(&head)?;
        for (i, weight) in self.weights.iter().enumerate() {
            let mut rec: Vec<String> = self.point(i).iter().map(|c| c.to_f64().to_string()).collect();
            rec.push(weight.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON header with the law label, window and total mass (`"inf"` if infinite).
    pub fn header_json(&self, law: &str) -> serde_json::Value {
        let total = match &self.total_mass {
            Mass::Finite(m) => json!(m.to_f64()),
            Mass::Infinite => json!("inf"),
            Mass::Unknown => json!("unknown"),
        };
        json!({ "measure": self.label, "law": law, "window_units": self.window, "total_mass": total })
    }
}

/// Draws points (in span units) from a normalized lattice measure.
#[derive(Clone, Debug)]
pub struct MeasureSampler {
    pub points: Vec<Vec<i64>>,
    pub probs: Vec<f64>,
    table: AliasTable,
}

impl MeasureSampler {
    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.sample(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[i64] {
        &self.points[self.table.sample(rng)]
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    // a fixed initial split so that narrow features are not skipped
    const PIECES: usize = 64;
    let step = (b - a) / PIECES as f64;
    (0..PIECES)
        .map(|i| {
            let lo = a + i as f64 * step;
            let hi = if i + 1 == PIECES { b } else { lo + step };
            let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            rec(f, lo, hi, fa, fm, fb, whole, tol / PIECES as f64, 40)
        })
        .sum()
}

/// Which closed-form measure a [`DensityMeasure`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orthant {
    /// `pi` on the whole line.
    Both,
    /// `pi_+` on `[0, inf)`.
    Plus,
    /// `pi_-` on `(-inf, 0)`.
    Minus,
}

/// Lebesgue density of `pi`, `pi_+` or `pi_-` for a continuous law, or of a
/// general entrance/exit measure evaluated by quadrature.
#[derive(Clone)]
pub struct DensityMeasure {
    pub label: String,
    density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Mass of `(-inf, y]`, when known in closed form.
    mass_below: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    pub total_mass: Mass<f64>,
    /// Interval outside which the density vanishes.
    pub support: (f64, f64),
}

impl DensityMeasure {
    pub fn orthant(law: &ContinuousLaw, which: Orthant) -> Self {
        let l = law.clone();
        let density: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match which {
            Orthant::Both => Arc::new(move |x| if x >= 0.0 { l.tail(x) } else { l.cdf(x) }),
            Orthant::Plus => Arc::new(move |x| if x >= 0.0 { l.tail(x) } else { 0.0 }),
            Orthant::Minus => Arc::new(move |x| if x < 0.0 { l.cdf(x) } else { 0.0 }),
        };
        let (neg, pos) = (law.negative_part_mean(), law.positive_part_mean());
        let l = law.clone();
        // mass of (-inf, y]
        let mass_below: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match which {
            Orthant::Both => Arc::new(move |y| {
                if y < 0.0 {
                    neg - l.integrated_lower_tail(-y)
                } else {
                    neg + l.integrated_upper_tail(y)
                }
            }),
            Orthant::Plus => Arc::new(move |y| if y < 0.0 { 0.0 } else { l.integrated_upper_tail(y) }),
            Orthant::Minus => Arc::new(move |y| if y < 0.0 { neg - l.integrated_lower_tail(-y) } else { neg }),
        };
        let (total, support, label) = match which {
            Orthant::Both => (neg + pos, (f64::NEG_INFINITY, f64::INFINITY), "pi"),
            Orthant::Plus => (pos, (0.0, f64::INFINITY), "pi_plus"),
            Orthant::Minus => (neg, (f64::NEG_INFINITY, 0.0), "pi_minus"),
        };
        DensityMeasure {
            label: label.into(),
            density,
            mass_below: Some(mass_below),
            total_mass: Mass::Finite(total),
            support,
        }
    }

    /// `P(x - X_1 in A^c)` on `A`, by quadrature over the law of `X_1`.
    pub fn lambda_entrance(law: &ContinuousLaw, a: &TargetSet, tol: f64) -> Self {
        let l = law.clone();
        let a2 = a.clone();
        let (lo, hi) = quantile_range(law);
        let density = Arc::new(move |x: f64| {
            if !a2.contains(&[x]) {
                return 0.0;
            }
            adaptive_simpson(&|u: f64| if a2.contains(&[x - u]) { 0.0 } else { l.density(u) }, lo, hi, tol)
        });
        DensityMeasure {
            label: format!("lambda_entrance({})", a.label),
            density,
            mass_below: None,
            total_mass: Mass::Unknown,
            support: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    /// Mass of `[a, b]`: closed form when available, else adaptive Simpson.
    pub fn mass_between(&self, a: f64, b: f64, tol: f64) -> f64 {
        match &self.mass_below {
            Some(m) => m(b) - m(a),
            None => {
                let f = |x: f64| self.density(x);
                adaptive_simpson(&f, a, b, tol)
            }
        }
    }

    /// CDF of the normalized measure.
    pub fn normalized_cdf(&self, y: f64) -> Result<f64, MeasureError> {
        let total = match self.total_mass {
            Mass::Finite(t) => t,
            Mass::Infinite => return Err(MeasureError::InfiniteMass),
            Mass::Unknown => return Err(MeasureError::UnknownMass),
        };
        let below = self.mass_below.as_ref().ok_or(MeasureError::UnknownMass)?;
        Ok((below(y) / total).clamp(0.0, 1.0))
    }

    /// `int |x|^k density(x) dx` over `[lo, hi]` by quadrature.
    pub fn abs_moment(&self, k: i32, lo: f64, hi: f64, tol: f64) -> f64 {
        let f = |x: f64| x.abs().powi(k) * self.density(x);
        if lo < 0.0 && hi > 0.0 {
            adaptive_simpson(&f, lo, 0.0, tol / 2.0) + adaptive_simpson(&f, 0.0, hi, tol / 2.0)
        } else {
            adaptive_simpson(&f, lo, hi, tol)
        }
    }

    /// Inverse-CDF sampler by bisection on the closed-form normalized CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, MeasureError> {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    pub fn quantile(&self, u: f64) -> Result<f64, MeasureError> {
        self.normalized_cdf(0.0)?;
        let (mut lo, mut hi) = (self.support.0.max(-1.0), self.support.1.min(1.0));
        while lo > self.support.0 && self.normalized_cdf(lo)? > u {
            lo *= 2.0;
        }
        while hi < self.support.1 && self.normalized_cdf(hi)? < u {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.normalized_cdf(mid)? < u {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Interval holding all but about `1e-15` of the law's mass.
fn quantile_range(law: &ContinuousLaw) -> (f64, f64) {
    match *law {
        ContinuousLaw::Gaussian { sigma } => (-9.0 * sigma, 9.0 * sigma),
        ContinuousLaw::Laplace { b } => (-35.0 * b, 35.0 * b),
        ContinuousLaw::Uniform { a, b } => (a, b),
    }
}

/// `sigma^2 / (2 E|X_1|)`: first absolute moment of `pi / E|X_1|` for a
/// centred law; also the almost-sure mean of `|overshoot|`.
pub fn normalized_first_moment(second_moment: f64, abs_first_moment: f64) -> f64 {
    second_moment / (2.0 * abs_first_moment)
}

/// Exact `sum |x| pi(x)` over the support window.
pub fn pi_abs_first_moment(law: &LatticeLaw) -> Result<BigRational, MeasureError> {
    let pi: LatticeMeasure<BigRational> = pi_measure(law, &support_window(law))?;
    Ok(pi.abs_moment(1))
}

impl Mass<BigRational> {
    pub fn is_zero(&self) -> bool {
        matches!(self, Mass::Finite(m) if m.is_zero())
    }
}
