//! Increment laws of random walks and their state spaces.
//!
//! A lattice law lives on `h_1 Z x ... x h_d Z` and is stored exactly: support
//! points as integer multiples of the per-axis span and probabilities as
//! rationals. Continuous laws are one-dimensional with analytic
//! distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::alias::AliasTable;
use crate::scalar::{gcd_rational, parse_rational, rational_from_f64};

/// Tolerance on the total probability of a lattice table.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum LawError {
    #[error("empty support table")]
    Empty,
    #[error("degenerate law: a single support point")]
    Degenerate,
    #[error("negative probability {0} at entry {1}")]
    NegativeProbability(String, usize),
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(String),
    #[error("entry {0} has dimension {1}, expected {2}")]
    DimensionMismatch(usize, usize, usize),
    #[error("axis {0} carries no mass away from zero; the state space would not be full-dimensional")]
    DegenerateAxis(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unparsable number `{0}`")]
    Parse(String),
}

#[derive(Clone, Debug)]
pub struct LatticeAtom {
    /// Coordinates in units of the span.
    pub units: Vec<i64>,
    pub prob: BigRational,
    pub prob_f64: f64,
}

/// Law of `X_1` on a product lattice.
#[derive(Clone, Debug)]
pub struct LatticeLaw {
    dim: usize,
    span: Vec<BigRational>,
    span_f64: Vec<f64>,
    atoms: Vec<LatticeAtom>,
    mean: Vec<BigRational>,
    second_moment: Vec<BigRational>,
    abs_first_moment: Option<BigRational>,
    table: AliasTable,
}

impl LatticeLaw {
    /// Builds a lattice law from `(point, probability)` entries.
    ///
    /// The span on each axis is the gcd of the support coordinates, i.e. the
    /// generator of the smallest subgroup of `R` containing them, so the
    /// support sits in `hZ` without translation. Zero-probability entries are
    /// dropped and repeated points merged. A total within
    /// [`PROBABILITY_SUM_TOLERANCE`] of one is renormalized exactly.
    pub fn new(entries: Vec<(Vec<BigRational>, BigRational)>) -> Result<Self, LawError> {
        if entries.is_empty() {
            return Err(LawError::Empty);
        }
        let dim = entries[0].0.len();
        if dim == 0 {
            return Err(LawError::DimensionMismatch(0, 0, 1));
        }
        let mut total = BigRational::zero();
        for (i, (pt, p)) in entries.iter().enumerate() {
            if pt.len() != dim {
                return Err(LawError::DimensionMismatch(i, pt.len(), dim));
            }
            if p.is_negative() {
                return Err(LawError::NegativeProbability(p.to_string(), i));
            }
            total += p;
        }
        let gap = (total.clone() - BigRational::one()).abs().to_f64().unwrap_or(f64::INFINITY);
        if gap > PROBABILITY_SUM_TOLERANCE {
            return Err(LawError::NotNormalized(total.to_string()));
        }

        let mut merged: Vec<(Vec<BigRational>, BigRational)> = Vec::new();
        for (pt, p) in entries {
            if p.is_zero() {
                continue;
            }
            match merged.iter_mut().find(|(q, _)| *q == pt) {
                Some((_, acc)) => *acc += p / &total,
                None => merged.push((pt, p / &total)),
            }
        }
        if merged.len() < 2 {
            return Err(LawError::Degenerate);
        }

        let mut span = Vec::with_capacity(dim);
        for axis in 0..dim {
            let h = merged.iter().fold(BigRational::zero(), |g, (pt, _)| gcd_rational(&g, &pt[axis]));
            if h.is_zero() {
                return Err(LawError::DegenerateAxis(axis));
            }
            span.push(h);
        }

        let mut atoms: Vec<LatticeAtom> = merged
            .into_iter()
            .map(|(pt, prob)| {
                let units = pt
                    .iter()
                    .zip(&span)
                    .map(|(x, h)| {
                        let k = x / h;
                        debug_assert!(k.is_integer());
                        k.to_integer().to_i64().expect("support point too large for i64 units")
                    })
                    .collect();
                let prob_f64 = prob.to_f64().unwrap_or(0.0);
                LatticeAtom { units, prob, prob_f64 }
            })
            .collect();
        atoms.sort_by(|a, b| a.units.cmp(&b.units));

        let mut mean = vec![BigRational::zero(); dim];
        let mut second_moment = vec![BigRational::zero(); dim];
        let mut abs_first = BigRational::zero();
        for a in &atoms {
            for axis in 0..dim {
                let x = BigRational::from_integer(BigInt::from(a.units[axis])) * &span[axis];
                mean[axis] += x.clone() * &a.prob;
                second_moment[axis] += x.clone() * x.clone() * &a.prob;
                if dim == 1 {
                    abs_first += x.abs() * &a.prob;
                }
            }
        }
        let table = AliasTable::new(&atoms.iter().map(|a| a.prob_f64).collect::<Vec<_>>())
            .expect("probabilities are positive");
        Ok(LatticeLaw {
            dim,
            span_f64: span.iter().map(|h| h.to_f64().unwrap_or(f64::NAN)).collect(),
            span,
            atoms,
            mean,
            second_moment,
            abs_first_moment: (dim == 1).then_some(abs_first),
            table,
        })
    }

    /// One-dimensional law from integer points and probability strings.
    pub fn from_integers(entries: &[(i64, &str)]) -> Result<Self, LawError> {
        let mut v = Vec::with_capacity(entries.len());
        for (x, p) in entries {
            let p = parse_rational(p).ok_or_else(|| LawError::Parse(p.to_string()))?;
            v.push((vec![BigRational::from_integer(BigInt::from(*x))], p));
        }
        Self::new(v)
    }

    /// `+1` or `-1` with probability 1/2 each.
    pub fn rademacher() -> Self {
        Self::from_integers(&[(-1, "1/2"), (1, "1/2")]).expect("valid law")
    }

    /// Simple symmetric walk on `Z^d`.
    pub fn simple(dim: usize) -> Self {
        let p = BigRational::new(BigInt::one(), BigInt::from(2 * dim as i64));
        let mut entries = Vec::with_capacity(2 * dim);
        for axis in 0..dim {
            for sign in [-1i64, 1] {
                let mut pt = vec![BigRational::zero(); dim];
                pt[axis] = BigRational::from_integer(BigInt::from(sign));
                entries.push((pt, p.clone()));
            }
        }
        Self::new(entries).expect("valid law")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn span(&self) -> &[BigRational] {
        &self.span
    }

    pub fn span_f64(&self) -> &[f64] {
        &self.span_f64
    }

    pub fn atoms(&self) -> &[LatticeAtom] {
        &self.atoms
    }

    pub fn mean(&self) -> &[BigRational] {
        &self.mean
    }

    /// `E[X_i^2]` per axis.
    pub fn second_moment(&self) -> &[BigRational] {
        &self.second_moment
    }

    /// `E|X_1|` (one-dimensional laws only).
    pub fn abs_first_moment(&self) -> Option<&BigRational> {
        self.abs_first_moment.as_ref()
    }

    /// `h^d`, the Haar mass of one lattice point.
    pub fn cell_volume(&self) -> BigRational {
        self.span.iter().fold(BigRational::one(), |acc, h| acc * h)
    }

    /// Real coordinates of a lattice point given in units.
    pub fn to_real(&self, units: &[i64]) -> Vec<f64> {
        units.iter().zip(&self.span_f64).map(|(&k, h)| k as f64 * h).collect()
    }

    /// Units of a real point if it lies on the lattice (within `1e-9` relative).
    pub fn to_units(&self, x: &[f64]) -> Option<Vec<i64>> {
        if x.len() != self.dim {
            return None;
        }
        x.iter()
            .zip(&self.span_f64)
            .map(|(&xi, &h)| {
                let k = (xi / h).round();
                ((xi / h - k).abs() <= 1e-9 && k.abs() < 9.0e15).then_some(k as i64)
            })
            .collect()
    }

    /// `P(X_1 > x)` with strict coordinate-wise order, exact, at a lattice point.
    pub fn tail_gt_units(&self, x: &[i64]) -> BigRational {
        self.atoms
            .iter()
            .filter(|a| a.units.iter().zip(x).all(|(u, v)| u > v))
            .fold(BigRational::zero(), |acc, a| acc + &a.prob)
    }

    /// `P(X_1 <= x)` with coordinate-wise order, exact, at a lattice point.
    pub fn cdf_le_units(&self, x: &[i64]) -> BigRational {
        self.atoms
            .iter()
            .filter(|a| a.units.iter().zip(x).all(|(u, v)| u <= v))
            .fold(BigRational::zero(), |acc, a| acc + &a.prob)
    }

    /// Index into [`LatticeLaw::atoms`] of one draw.
    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.sample(rng)
    }

    pub fn alias_table(&self) -> &AliasTable {
        &self.table
    }

    #[inline]
    pub fn sample_units<R: Rng + ?Sized>(&self, rng: &mut R) -> &[i64] {
        &self.atoms[self.table.sample(rng)].units
    }

    fn label(&self) -> String {
        let parts: Vec<String> = self
            .atoms
            .iter()
            .map(|a| {
                let pt: Vec<String> = a
                    .units
                    .iter()
                    .zip(&self.span)
                    .map(|(&k, h)| (BigRational::from_integer(BigInt::from(k)) * h).to_string())
                    .collect();
                let pt = if pt.len() == 1 { pt[0].clone() } else { format!("({})", pt.join(",")) };
                format!("{pt}:{}", a.prob)
            })
            .collect();
        format!("lattice{{{}}}", parts.join(", "))
    }
}

/// One-dimensional absolutely continuous increment laws.
#[derive(Clone, Debug, PartialEq)]
pub enum ContinuousLaw {
    Gaussian { sigma: f64 },
    Laplace { b: f64 },
    Uniform { a: f64, b: f64 },
}

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

fn std_normal_tail(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

impl ContinuousLaw {
    pub fn gaussian(sigma: f64) -> Result<Self, LawError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(LawError::InvalidParameter(format!("gaussian sigma must be positive, got {sigma}")));
        }
        Ok(ContinuousLaw::Gaussian { sigma })
    }

    pub fn laplace(b: f64) -> Result<Self, LawError> {
        if !(b.is_finite() && b > 0.0) {
            return Err(LawError::InvalidParameter(format!("laplace scale must be positive, got {b}")));
        }
        Ok(ContinuousLaw::Laplace { b })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self, LawError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(LawError::InvalidParameter(format!("uniform needs a < b, got ({a}, {b})")));
        }
        Ok(ContinuousLaw::Uniform { a, b })
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            ContinuousLaw::Gaussian { sigma } => std_normal_pdf(x / sigma) / sigma,
            ContinuousLaw::Laplace { b } => (-x.abs() / b).exp() / (2.0 * b),
            ContinuousLaw::Uniform { a, b } => {
                if (a..=b).contains(&x) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(X_1 <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ContinuousLaw::Gaussian { sigma } => std_normal_cdf(x / sigma),
            ContinuousLaw::Laplace { b } => {
                if x < 0.0 {
                    0.5 * (x / b).exp()
                } else {
                    1.0 - 0.5 * (-x / b).exp()
                }
            }
            ContinuousLaw::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
        }
    }

    /// `P(X_1 > x)`, evaluated without cancellation in the upper tail.
    pub fn tail(&self, x: f64) -> f64 {
        match *self {
            ContinuousLaw::Gaussian { sigma } => std_normal_tail(x / sigma),
            ContinuousLaw::Laplace { b } => {
                if x < 0.0 {
                    1.0 - 0.5 * (x / b).exp()
                } else {
                    0.5 * (-x / b).exp()
                }
            }
            ContinuousLaw::Uniform { a, b } => ((b - x) / (b - a)).clamp(0.0, 1.0),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ContinuousLaw::Gaussian { .. } | ContinuousLaw::Laplace { .. } => 0.0,
            ContinuousLaw::Uniform { a, b } => 0.5 * (a + b),
        }
    }

    /// `E[X_1^2]`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            ContinuousLaw::Gaussian { sigma } => sigma * sigma,
            ContinuousLaw::Laplace { b } => 2.0 * b * b,
            ContinuousLaw::Uniform { a, b } => (a * a + a * b + b * b) / 3.0,
        }
    }

    /// `E[max(X_1, 0)]`.
    pub fn positive_part_mean(&self) -> f64 {
        match *self {
            ContinuousLaw::Gaussian { sigma } => sigma / SQRT_2PI,
            ContinuousLaw::Laplace { b } => 0.5 * b,
            ContinuousLaw::Uniform { a, b } => {
                if a >= 0.0 {
                    0.5 * (a + b)
                } else if b <= 0.0 {
                    0.0
                } else {
                    b * b / (2.0 * (b - a))
                }
            }
        }
    }

    /// `E[max(-X_1, 0)]`.
    pub fn negative_part_mean(&self) -> f64 {
        self.mirrored().positive_part_mean()
    }

    pub fn abs_first_moment(&self) -> f64 {
        self.positive_part_mean() + self.negative_part_mean()
    }

    /// Law of `-X_1`.
    pub fn mirrored(&self) -> Self {
        match *self {
            ContinuousLaw::Uniform { a, b } => ContinuousLaw::Uniform { a: -b, b: -a },
            ref other => other.clone(),
        }
    }

    /// `int_0^y P(X_1 > t) dt` for `y >= 0`, in closed form.
    pub fn integrated_upper_tail(&self, y: f64) -> f64 {
        debug_assert!(y >= 0.0);
        match *self {
            ContinuousLaw::Gaussian { sigma } => {
                let z = y / sigma;
                sigma * (z * std_normal_tail(z) + std_normal_pdf(0.0) - std_normal_pdf(z))
            }
            ContinuousLaw::Laplace { b } => 0.5 * b * (1.0 - (-y / b).exp()),
            ContinuousLaw::Uniform { a, b } => {
                // P(X > t) = 1 on [0, a), (b - t)/(b - a) on [a, b], 0 beyond b
                let flat = a.clamp(0.0, y);
                let lo = a.max(0.0).min(y);
                let hi = b.max(0.0).min(y);
                let ramp = ((b - lo).powi(2) - (b - hi).powi(2)) / (2.0 * (b - a));
                flat + ramp
            }
        }
    }

    /// `int_0^y P(X_1 < -t) dt` for `y >= 0`.
    pub fn integrated_lower_tail(&self, y: f64) -> f64 {
        self.mirrored().integrated_upper_tail(y)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ContinuousLaw::Gaussian { sigma } => {
                Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
            }
            ContinuousLaw::Laplace { b } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            ContinuousLaw::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
        }
    }

    fn label(&self) -> String {
        match *self {
            ContinuousLaw::Gaussian { sigma } => format!("gaussian({sigma})"),
            ContinuousLaw::Laplace { b } => format!("laplace({b})"),
            ContinuousLaw::Uniform { a, b } => format!("uniform({a},{b})"),
        }
    }
}

/// Law of the increments `X_1` of a random walk.
#[derive(Clone, Debug)]
pub enum IncrementLaw {
    Lattice(LatticeLaw),
    Continuous(ContinuousLaw),
}

impl From<LatticeLaw> for IncrementLaw {
    fn from(l: LatticeLaw) -> Self {
        IncrementLaw::Lattice(l)
    }
}

impl From<ContinuousLaw> for IncrementLaw {
    fn from(l: ContinuousLaw) -> Self {
        IncrementLaw::Continuous(l)
    }
}

impl IncrementLaw {
    pub fn dim(&self) -> usize {
        match self {
            IncrementLaw::Lattice(l) => l.dim(),
            IncrementLaw::Continuous(_) => 1,
        }
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self, IncrementLaw::Lattice(_))
    }

    pub fn state_space(&self) -> StateSpace {
        match self {
            IncrementLaw::Lattice(l) => StateSpace { span: l.span_f64().to_vec() },
            IncrementLaw::Continuous(_) => StateSpace { span: vec![0.0] },
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            IncrementLaw::Lattice(l) => l.mean().iter().map(|m| m.to_f64().unwrap_or(f64::NAN)).collect(),
            IncrementLaw::Continuous(c) => vec![c.mean()],
        }
    }

    /// `E[X_i^2]` per axis.
    pub fn second_moment(&self) -> Vec<f64> {
        match self {
            IncrementLaw::Lattice(l) => {
                l.second_moment().iter().map(|m| m.to_f64().unwrap_or(f64::NAN)).collect()
            }
            IncrementLaw::Continuous(c) => vec![c.second_moment()],
        }
    }

    pub fn abs_first_moment(&self) -> Option<f64> {
        match self {
            IncrementLaw::Lattice(l) => l.abs_first_moment().and_then(|m| m.to_f64()),
            IncrementLaw::Continuous(c) => Some(c.abs_first_moment()),
        }
    }

    /// Exact test of `E X_1 = 0`.
    pub fn has_zero_mean(&self) -> bool {
        match self {
            IncrementLaw::Lattice(l) => l.mean().iter().all(Zero::is_zero),
            IncrementLaw::Continuous(c) => c.mean() == 0.0,
        }
    }

    /// `P(X_1 > x)`, all coordinates strictly greater.
    pub fn tail_gt(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "point dimension");
        match self {
            IncrementLaw::Lattice(l) => l
                .atoms()
                .iter()
                .filter(|a| a.units.iter().zip(l.span_f64()).zip(x).all(|((&k, h), xi)| k as f64 * h > *xi))
                .map(|a| a.prob_f64)
                .sum(),
            IncrementLaw::Continuous(c) => c.tail(x[0]),
        }
    }

    /// `P(X_1 <= x)`, coordinate-wise.
    pub fn cdf_le(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "point dimension");
        match self {
            IncrementLaw::Lattice(l) => l
                .atoms()
                .iter()
                .filter(|a| a.units.iter().zip(l.span_f64()).zip(x).all(|((&k, h), xi)| k as f64 * h <= *xi))
                .map(|a| a.prob_f64)
                .sum(),
            IncrementLaw::Continuous(c) => c.cdf(x[0]),
        }
    }

    /// One increment in real coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            IncrementLaw::Lattice(l) => l.to_real(l.sample_units(rng)),
            IncrementLaw::Continuous(c) => vec![c.sample(rng)],
        }
    }

    pub fn label(&self) -> String {
        match self {
            IncrementLaw::Lattice(l) => l.label(),
            IncrementLaw::Continuous(c) => c.label(),
        }
    }

    pub fn as_lattice(&self) -> Option<&LatticeLaw> {
        match self {
            IncrementLaw::Lattice(l) => Some(l),
            IncrementLaw::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&ContinuousLaw> {
        match self {
            IncrementLaw::Lattice(_) => None,
            IncrementLaw::Continuous(c) => Some(c),
        }
    }
}

impl fmt::Display for IncrementLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// The closed subgroup `Z` generated by the support, with its Haar measure.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    /// Per-axis span; `0` means the axis is the whole real line.
    pub span: Vec<f64>,
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.span.len()
    }

    /// Haar mass of a single point: `prod h_i` for a lattice, `0` otherwise.
    ///
    /// With this normalization the unit cell `[0,1)^d` has mass one.
    pub fn point_mass(&self) -> f64 {
        self.span.iter().product()
    }

    pub fn haar_unit(&self) -> f64 {
        1.0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.span).all(|(&xi, &h)| {
                if h == 0.0 {
                    xi.is_finite()
                } else {
                    let k = xi / h;
                    (k - k.round()).abs() <= 1e-9
                }
            })
    }
}

/// A number in a config file: integer, float, or decimal/rational string.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum NumberSpec {
    Int(i64),
    Float(f64),
    Text(String),
}

impl NumberSpec {
    pub fn to_rational(&self) -> Result<BigRational, LawError> {
        match self {
            NumberSpec::Int(i) => Ok(BigRational::from_integer(BigInt::from(*i))),
            NumberSpec::Float(x) => rational_from_f64(*x).ok_or_else(|| LawError::Parse(x.to_string())),
            NumberSpec::Text(t) => parse_rational(t).ok_or_else(|| LawError::Parse(t.clone())),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum PointSpec {
    Scalar(NumberSpec),
    Vector(Vec<NumberSpec>),
}

impl PointSpec {
    pub fn to_rationals(&self) -> Result<Vec<BigRational>, LawError> {
        match self {
            PointSpec::Scalar(x) => Ok(vec![x.to_rational()?]),
            PointSpec::Vector(v) => v.iter().map(NumberSpec::to_rational).collect(),
        }
    }
}

/// Law block of an experiment config, e.g.
/// `{ kind = "lattice", entries = [[-1, "2/3"], [2, "1/3"]] }` or
/// `{ kind = "gaussian", sigma = 1.0 }`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LawSpec {
    Lattice { entries: Vec<(PointSpec, NumberSpec)> },
    Rademacher,
    Simple { dim: usize },
    Gaussian { sigma: f64 },
    Laplace { b: f64 },
    Uniform { a: f64, b: f64 },
}

impl LawSpec {
    pub fn build(&self) -> Result<IncrementLaw, LawError> {
        Ok(match self {
            LawSpec::Lattice { entries } => {
                let mut v = Vec::with_capacity(entries.len());
                for (pt, p) in entries {
                    v.push((pt.to_rationals()?, p.to_rational()?));
                }
                LatticeLaw::new(v)?.into()
            }
            LawSpec::Rademacher => LatticeLaw::rademacher().into(),
            LawSpec::Simple { dim } => {
                if *dim == 0 {
                    return Err(LawError::InvalidParameter("simple walk needs dim >= 1".into()));
                }
                LatticeLaw::simple(*dim).into()
            }
            LawSpec::Gaussian { sigma } => ContinuousLaw::gaussian(*sigma)?.into(),
            LawSpec::Laplace { b } => ContinuousLaw::laplace(*b)?.into(),
            LawSpec::Uniform { a, b } => ContinuousLaw::uniform(*a, *b)?.into(),
        })
    }
}

/// `sqrt(2/pi)`, the mean of a standard half-normal variable.
pub fn half_normal_mean() -> f64 {
    (2.0 / PI).sqrt()
}

/// `Phi(z)` for a standard normal.
pub fn normal_cdf(z: f64) -> f64 {
    std_normal_cdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn rademacher_moments() {
        let l = LatticeLaw::rademacher();
        assert_eq!(l.span(), &[q(1, 1)]);
        assert_eq!(l.mean(), &[q(0, 1)]);
        assert_eq!(l.second_moment(), &[q(1, 1)]);
        assert_eq!(l.abs_first_moment(), Some(&q(1, 1)));
    }

    #[test]
    fn skewed_two_point_moments() {
        let l = LatticeLaw::from_integers(&[(-1, "2/3"), (2, "1/3")]).unwrap();
        assert_eq!(l.span(), &[q(1, 1)]);
        assert_eq!(l.mean(), &[q(0, 1)]);
        assert_eq!(l.second_moment(), &[q(2, 1)]);
        assert_eq!(l.abs_first_moment(), Some(&q(4, 3)));
    }

    #[test]
    fn degenerate_and_invalid_tables() {
        assert_eq!(LatticeLaw::from_integers(&[(0, "1")]).unwrap_err(), LawError::Degenerate);
        assert_eq!(LatticeLaw::from_integers(&[(3, "1")]).unwrap_err(), LawError::Degenerate);
        assert!(matches!(
            LatticeLaw::from_integers(&[(-1, "-1/2"), (1, "3/2")]).unwrap_err(),
            LawError::NegativeProbability(..)
        ));
        assert!(matches!(
            LatticeLaw::from_integers(&[(-1, "1/2"), (1, "1/3")]).unwrap_err(),
            LawError::NotNormalized(..)
        ));
        assert_eq!(LatticeLaw::new(vec![]).unwrap_err(), LawError::Empty);
    }

    #[test]
    fn span_is_gcd_of_support_points() {
        let l = LatticeLaw::new(vec![(vec![q(1, 2)], q(1, 2)), (vec![q(-3, 2)], q(1, 2))]).unwrap();
        assert_eq!(l.span(), &[q(1, 2)]);
        assert_eq!(l.atoms()[0].units, vec![-3]);
        assert_eq!(l.atoms()[1].units, vec![1]);
        let l = LatticeLaw::from_integers(&[(-2, "1/2"), (4, "1/2")]).unwrap();
        assert_eq!(l.span(), &[q(2, 1)]);
    }

    #[test]
    fn near_normalized_tables_are_renormalized_exactly() {
        let l = LatticeLaw::from_integers(&[(-1, "0.5"), (1, "0.5000000000001")]).unwrap();
        let total: BigRational = l.atoms().iter().map(|a| a.prob.clone()).sum();
        assert_eq!(total, q(1, 1));
    }

    #[test]
    fn simple_walk_in_the_plane() {
        let l = LatticeLaw::simple(2);
        assert_eq!(l.atoms().len(), 4);
        assert_eq!(l.cdf_le_units(&[0, 0]), q(1, 2));
        assert_eq!(l.cdf_le_units(&[1, 0]), q(3, 4));
        assert_eq!(l.tail_gt_units(&[-1, -1]), q(1, 2));
        assert_eq!(l.cell_volume(), q(1, 1));
    }

    #[test]
    fn continuous_moments_closed_forms() {
        let g = ContinuousLaw::gaussian(1.0).unwrap();
        assert!((g.abs_first_moment() - 0.797_884_560_8).abs() < 1e-10);
        assert_eq!(g.second_moment(), 1.0);
        let u = ContinuousLaw::uniform(-1.0, 1.0).unwrap();
        assert!((u.second_moment() - 1.0 / 3.0).abs() < 1e-15);
        assert!((u.abs_first_moment() - 0.5).abs() < 1e-15);
        let l = ContinuousLaw::laplace(1.0).unwrap();
        assert_eq!(l.second_moment(), 2.0);
        assert!((l.abs_first_moment() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn continuous_parameter_errors() {
        assert!(ContinuousLaw::gaussian(0.0).is_err());
        assert!(ContinuousLaw::laplace(-1.0).is_err());
        assert!(ContinuousLaw::uniform(1.0, 1.0).is_err());
        assert!(ContinuousLaw::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn tail_examples() {
        let r: IncrementLaw = LatticeLaw::rademacher().into();
        assert_eq!(r.tail_gt(&[0.0]), 0.5);
        let s: IncrementLaw = LatticeLaw::from_integers(&[(-1, "2/3"), (2, "1/3")]).unwrap().into();
        assert!((s.tail_gt(&[1.0]) - 1.0 / 3.0).abs() < 1e-15);
        let g: IncrementLaw = ContinuousLaw::gaussian(1.0).unwrap().into();
        assert!((g.tail_gt(&[0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn integrated_tails_match_quadrature() {
        let laws = [
            ContinuousLaw::gaussian(1.3).unwrap(),
            ContinuousLaw::laplace(0.7).unwrap(),
            ContinuousLaw::uniform(-1.0, 2.0).unwrap(),
            ContinuousLaw::uniform(0.5, 2.0).unwrap(),
        ];
        for law in &laws {
            for y in [0.0, 0.3, 1.0, 2.5, 6.0] {
                // composite midpoint rule as an independent oracle
                let n = 200_000;
                let h = y / n as f64;
                let up: f64 = (0..n).map(|i| law.tail((i as f64 + 0.5) * h)).sum::<f64>() * h;
                let down: f64 = (0..n).map(|i| law.cdf(-(i as f64 + 0.5) * h)).sum::<f64>() * h;
                assert!((law.integrated_upper_tail(y) - up).abs() < 1e-8, "{law:?} {y}");
                assert!((law.integrated_lower_tail(y) - down).abs() < 1e-8, "{law:?} {y}");
            }
            assert!((law.integrated_upper_tail(60.0) - law.positive_part_mean()).abs() < 1e-12);
        }
    }

    #[test]
    fn law_spec_parses_rational_strings_and_decimals() {
        let spec: LawSpec =
            serde_json::from_str(r#"{"kind":"lattice","entries":[[-1,"2/3"],[2,0.3333333333333333]]}"#).unwrap();
        // 0.3333333333333333 is within 1e-12 of 1/3 and is renormalized
        let law = spec.build().unwrap();
        assert!((law.abs_first_moment().unwrap() - 4.0 / 3.0).abs() < 1e-12);
        let spec: LawSpec = serde_json::from_str(r#"{"kind":"gaussian","sigma":2.0}"#).unwrap();
        assert_eq!(spec.build().unwrap().second_moment(), vec![4.0]);
    }

    #[test]
    fn state_space_haar_normalization() {
        let s = LatticeLaw::from_integers(&[(-2, "1/2"), (4, "1/2")]).map(IncrementLaw::from).unwrap().state_space();
        assert_eq!(s.point_mass(), 2.0);
        assert!(s.contains(&[6.0]));
        assert!(!s.contains(&[1.0]));
        let c = IncrementLaw::from(ContinuousLaw::gaussian(1.0).unwrap()).state_space();
        assert!(c.contains(&[0.123]));
    }

    #[test]
    fn sampler_means_within_five_standard_errors() {
        let laws: Vec<IncrementLaw> = vec![
            LatticeLaw::from_integers(&[(-1, "2/3"), (2, "1/3")]).unwrap().into(),
            ContinuousLaw::gaussian(1.0).unwrap().into(),
            ContinuousLaw::laplace(1.0).unwrap().into(),
            ContinuousLaw::uniform(-1.0, 3.0).unwrap().into(),
        ];
        let n = 1_000_000;
        for (i, law) in laws.iter().enumerate() {
            let mut rng = stream(11, "law-mean", i as u64);
            let mean: f64 = (0..n).map(|_| law.sample(&mut rng)[0]).sum::<f64>() / n as f64;
            let m = law.mean()[0];
            let sd = (law.second_moment()[0] - m * m).sqrt();
            assert!((mean - m).abs() < 5.0 * sd / (n as f64).sqrt(), "{law}: {mean}");
        }
    }
}
