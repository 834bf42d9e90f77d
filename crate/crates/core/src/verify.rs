//! Seeded Monte Carlo checks of the random-walk results.
//!
//! Every check takes a master seed and derives its streams through
//! [`crate::rng`]; parallel work is cut into fixed blocks, so a report depends
//! only on its inputs and never on the number of worker threads (apart from
//! the `runtime_secs` field).

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::dispatch_increments;
use crate::finite::{entrance_kernel, exit_kernel, random_bipartition, random_irreducible_chain, FiniteError, SubKernel};
use crate::laws::{IncrementLaw, LatticeLaw};
use crate::measures::{
    normalized_first_moment, pi_minus, pi_plus, support_window, DensityMeasure, LatticeMeasure, Mass, MeasureError,
    MeasureSampler, Orthant,
};
use crate::rng;
use crate::scalar::Scalar;
use crate::stats::{chi_square, half_normal_cdf, ks_critical_001, ks_statistic, median_of_means, tv_distance};
use crate::subchain::{FiniteSampler, IndexSet, Mode, Outcome, SampledSubchain, SubchainError};
use crate::target::{Region, TargetSet};
use crate::walk::{run_to_crossing, AnyIncrements, Coord, Direction, Entrance, Increments, LevelCounter, WalkError};

/// Largest censor rate compatible with a pass.
pub const CENSOR_GATE: f64 = 1e-3;
/// Default per-excursion step budget.
pub const DEFAULT_HORIZON: u64 = 10_000_000;
/// Blocks used by the median-of-means estimator.
pub const MOM_BLOCKS: u64 = 100;
/// Significance level of the distributional tests.
pub const ALPHA: f64 = 0.01;

const SAMPLE_BLOCK: u64 = 1_000;
const REPLICA_BLOCK: u64 = 100;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Finite(#[from] FiniteError),
    #[error(transparent)]
    Subchain(#[from] SubchainError),
    #[error("check needs a one-dimensional law, got dimension {0}")]
    NotOneDimensional(usize),
    #[error("check needs a two-dimensional lattice law, got dimension {0}")]
    NotTwoDimensional(usize),
    #[error("check needs a centred law; mean is {0:?}")]
    NonZeroMean(Vec<f64>),
    #[error("check needs a lattice law")]
    NotLattice,
    #[error("unsupported target set `{0}`; use [0, inf) or (-inf, 0)")]
    UnsupportedTarget(String),
    #[error("point {0} is not on the lattice of the walk")]
    OffLattice(f64),
    #[error("target mass of the reference window is zero")]
    ZeroTargetMass,
    #[error("censor rate {rate} is far above the gate; raise the horizon")]
    CensorInflation { rate: f64 },
    #[error("size `{0}` must be positive")]
    InvalidSize(&'static str),
}

/// How a report's statistic is judged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|statistic - target| <= tolerance`.
    AbsoluteError,
    /// `|statistic - target| <= tolerance * |target|`.
    RelativeError,
    /// `statistic <= tolerance` (distances).
    AtMost,
    /// `statistic >= tolerance` (p-values).
    AtLeast,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub law: String,
    pub seed: u64,
    pub sizes: BTreeMap<String, u64>,
    pub statistic: f64,
    pub target: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub censor_rate: f64,
    /// Extra conditions that must hold for a pass (exactness checks etc.).
    pub conditions: BTreeMap<String, bool>,
    pub pass: bool,
    pub runtime_secs: f64,
    pub details: Value,
}

impl ExperimentReport {
    pub fn within_tolerance(&self) -> bool {
        let (s, t, tol) = (self.statistic, self.target, self.tolerance);
        match self.comparison {
            Comparison::AbsoluteError => (s - t).abs() <= tol,
            Comparison::RelativeError => (s - t).abs() <= tol * t.abs(),
            Comparison::AtMost => s <= tol,
            Comparison::AtLeast => s >= tol,
        }
    }

    fn verdict(&self) -> bool {
        self.within_tolerance() && self.censor_rate <= CENSOR_GATE && self.conditions.values().all(|&c| c)
    }

    /// Re-judges the report under a different tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.verdict();
        self
    }

    /// `|statistic - target| / |target|` when the target is nonzero.
    pub fn effect_size(&self) -> f64 {
        if self.target != 0.0 {
            (self.statistic - self.target).abs() / self.target.abs()
        } else {
            self.statistic.abs()
        }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{:<4} {:<34} {:<28} stat={:<12.6} target={:<10.6} tol={:<8.4} censor={:.2e} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.experiment,
            self.law,
            self.statistic,
            self.target,
            self.tolerance,
            self.censor_rate,
            self.runtime_secs
        )
    }
}

/// Human-readable table of reports.
pub fn summary_table(reports: &[ExperimentReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.summary_line());
        out.push('\n');
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    out.push_str(&format!("{passed}/{} passed\n", reports.len()));
    out
}

struct Pending {
    experiment: String,
    law: String,
    seed: u64,
    sizes: BTreeMap<String, u64>,
    started: Instant,
}

impl Pending {
    fn new(experiment: impl Into<String>, law: impl Into<String>, seed: u64, sizes: &[(&str, u64)]) -> Self {
        Pending {
            experiment: experiment.into(),
            law: law.into(),
            seed,
            sizes: sizes.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            started: Instant::now(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        self,
        statistic: f64,
        target: f64,
        tolerance: f64,
        comparison: Comparison,
        censor_rate: f64,
        conditions: &[(&str, bool)],
        details: Value,
    ) -> ExperimentReport {
        let mut r = ExperimentReport {
            experiment: self.experiment,
            law: self.law,
            seed: self.seed,
            sizes: self.sizes,
            statistic,
            target,
            tolerance,
            comparison,
            censor_rate,
            conditions: conditions.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            pass: false,
            runtime_secs: self.started.elapsed().as_secs_f64(),
            details,
        };
        r.pass = r.verdict();
        r
    }
}

fn require_centred_1d(law: &IncrementLaw) -> Result<(), VerifyError> {
    if law.dim() != 1 {
        return Err(VerifyError::NotOneDimensional(law.dim()));
    }
    if !law.has_zero_mean() {
        return Err(VerifyError::NonZeroMean(law.mean()));
    }
    Ok(())
}

fn positive(name: &'static str, v: u64) -> Result<(), VerifyError> {
    if v == 0 {
        Err(VerifyError::InvalidSize(name))
    } else {
        Ok(())
    }
}

fn orthant_measure(law: &LatticeLaw, which: Orthant) -> Result<LatticeMeasure<f64>, VerifyError> {
    let w = support_window(law);
    Ok(match which {
        Orthant::Plus => pi_plus(law, &w)?,
        Orthant::Minus => pi_minus(law, &w)?,
        Orthant::Both => crate::measures::pi_measure(law, &w)?,
    })
}

fn finite_total(m: &Mass<f64>) -> Result<f64, VerifyError> {
    match m {
        Mass::Finite(t) => Ok(*t),
        Mass::Infinite => Err(MeasureError::InfiniteMass.into()),
        Mass::Unknown => Err(MeasureError::UnknownMass.into()),
    }
}

/// Sampler of a normalized orthant measure, in real coordinates.
enum StartLaw {
    Lattice { sampler: MeasureSampler, h: f64 },
    Continuous(DensityMeasure),
}

impl StartLaw {
    fn orthant(law: &IncrementLaw, which: Orthant) -> Result<Self, VerifyError> {
        Ok(match law {
            IncrementLaw::Lattice(l) => {
                StartLaw::Lattice { sampler: orthant_measure(l, which)?.normalized_sampler()?, h: l.span_f64()[0] }
            }
            IncrementLaw::Continuous(c) => StartLaw::Continuous(DensityMeasure::orthant(c, which)),
        })
    }

    fn sample(&self, rng: &mut rng::Stream) -> f64 {
        match self {
            StartLaw::Lattice { sampler, h } => sampler.sample(rng)[0] as f64 * h,
            StartLaw::Continuous(m) => m.sample(rng).expect("closed-form orthant measure"),
        }
    }
}

fn direction_into(which: Orthant) -> Direction {
    match which {
        Orthant::Minus => Direction::Down,
        _ => Direction::Up,
    }
}

/// Starts `n` walks from the normalized `start` measure and records where
/// each one next enters the half-line selected by `dir`.
fn sample_entries(
    law: &IncrementLaw,
    start: Orthant,
    dir: Direction,
    n: u64,
    horizon: u64,
    seed: u64,
    tag: &str,
) -> Result<(Vec<f64>, u64), VerifyError> {
    let starts = StartLaw::orthant(law, start)?;
    let inc = AnyIncrements::new(law)?;
    let parts: Vec<(Vec<f64>, u64)> = rng::blocks(n, SAMPLE_BLOCK)
        .into_par_iter()
        .map(|(idx, len)| {
            let mut rng = rng::stream(seed, tag, idx);
            let mut inc = inc.clone();
            dispatch_increments!(&mut inc, inc => {
                let mut out = Vec::with_capacity(len as usize);
                let mut censored = 0;
                for _ in 0..len {
                    let x0 = inc.from_real(starts.sample(&mut rng)).expect("start measure lives on the lattice");
                    match run_to_crossing(inc, x0, dir, horizon, &mut rng, |_, _| {}) {
                        Entrance::Entered { entry, .. } => out.push(inc.to_real(entry)),
                        Entrance::Censored { .. } => censored += 1,
                    }
                }
                (out, censored)
            })
        })
        .collect();
    let censored = parts.iter().map(|p| p.1).sum();
    Ok((parts.into_iter().flat_map(|p| p.0).collect(), censored))
}

/// Distance of `entries` from the normalized orthant measure: KS for
/// continuous laws, pooled chi-square for lattice laws.
/// Returns `(statistic, threshold, comparison, details)`.
fn fit_to_orthant(law: &IncrementLaw, which: Orthant, entries: &[f64]) -> Result<(f64, f64, Comparison, Value), VerifyError> {
    match law {
        IncrementLaw::Continuous(c) => {
            let m = DensityMeasure::orthant(c, which);
            m.normalized_cdf(0.0)?;
            let d = ks_statistic(entries, |y| m.normalized_cdf(y).expect("finite mass"));
            let crit = ks_critical_001(entries.len());
            Ok((d, crit, Comparison::AtMost, json!({ "test": "ks", "ks": d, "critical": crit })))
        }
        IncrementLaw::Lattice(l) => {
            let m = orthant_measure(l, which)?;
            let total = finite_total(&m.total_mass)?;
            let h = l.span_f64()[0];
            let probs: Vec<f64> = m.weights.iter().map(|w| w / total).collect();
            let mut counts = vec![0u64; probs.len()];
            let mut outside = 0u64;
            for &x in entries {
                let k = (x / h).round() as i64;
                match m.points.iter().position(|p| p[0] == k) {
                    Some(i) => counts[i] += 1,
                    None => outside += 1,
                }
            }
            let n = entries.len() as f64;
            let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n).chain([outside as f64 / n]).collect();
            let tv = tv_distance(&freq, &probs);
            let chi = chi_square(&counts, &probs);
            // mass off the support is impossible under the null
            let p = if outside > 0 { 0.0 } else { chi.p_value };
            let cells: Vec<Value> = m
                .points
                .iter()
                .zip(&probs)
                .zip(&counts)
                .map(|((pt, pr), c)| json!({ "x": pt[0] as f64 * h, "expected": pr, "observed": *c as f64 / n }))
                .collect();
            Ok((
                p,
                ALPHA,
                Comparison::AtLeast,
                json!({ "test": "chi_square", "chi2": chi.statistic, "dof": chi.dof, "p_value": p, "tv": tv, "outside_support": outside, "cells": cells }),
            ))
        }
    }
}

/// One-step stationarity of the entrance chain into a half-line `A` started
/// from its normalized entrance measure (`pi_+` for `[0, inf)`, `pi_-` for
/// `(-inf, 0)`).
pub fn stationarity_test(
    law: &IncrementLaw,
    a: &TargetSet,
    n_samples: u64,
    horizon: u64,
    seed: u64,
) -> Result<ExperimentReport, VerifyError> {
    require_centred_1d(law)?;
    positive("n_samples", n_samples)?;
    let which = match a.region {
        Region::NonNegOrthant => Orthant::Plus,
        Region::NegOrthant => Orthant::Minus,
        _ => return Err(VerifyError::UnsupportedTarget(a.label.clone())),
    };
    let pending = Pending::new(format!("stationarity[{}]", a.label), law.label(), seed, &[("n_samples", n_samples), ("horizon", horizon)]);
    let tag = format!("stationarity/{}/{}", law.label(), a.label);
    let (entries, censored) = sample_entries(law, which, direction_into(which), n_samples, horizon, seed, &tag)?;
    let (stat, thr, cmp, details) = fit_to_orthant(law, which, &entries)?;
    Ok(pending.finish(stat, if cmp == Comparison::AtMost { 0.0 } else { 1.0 }, thr, cmp, censored as f64 / n_samples as f64, &[], details))
}

/// Alternation: from `pi_-'` the next entrance into `[0, inf)` has law
/// `pi_+'`, and from `pi_+'` the next entrance into `(-inf, 0)` has law `pi_-'`.
pub fn alternation_test(law: &IncrementLaw, n_samples: u64, horizon: u64, seed: u64) -> Result<Vec<ExperimentReport>, VerifyError> {
    require_centred_1d(law)?;
    positive("n_samples", n_samples)?;
    let mut out = Vec::new();
    for (from, into, name) in [(Orthant::Minus, Orthant::Plus, "alternation[pi- -> pi+]"), (Orthant::Plus, Orthant::Minus, "alternation[pi+ -> pi-]")] {
        let pending = Pending::new(name, law.label(), seed, &[("n_samples", n_samples), ("horizon", horizon)]);
        let tag = format!("{name}/{}", law.label());
        let (entries, censored) = sample_entries(law, from, direction_into(into), n_samples, horizon, seed, &tag)?;
        let (stat, thr, cmp, details) = fit_to_orthant(law, into, &entries)?;
        out.push(pending.finish(
            stat,
            if cmp == Comparison::AtMost { 0.0 } else { 1.0 },
            thr,
            cmp,
            censored as f64 / n_samples as f64,
            &[],
            details,
        ));
    }
    Ok(out)
}

/// `sigma^2 / (2 E|X_1|)` for a centred one-dimensional law.
pub fn overshoot_target(law: &IncrementLaw) -> Result<f64, VerifyError> {
    require_centred_1d(law)?;
    let abs = law.abs_first_moment().ok_or(VerifyError::NotOneDimensional(law.dim()))?;
    Ok(normalized_first_moment(law.second_moment()[0], abs))
}

/// Law of large numbers for overshoots: the average of `|O_k|` over the first
/// `n_crossings` zero crossings of one path from `start`.
pub fn lln_overshoots(
    law: &IncrementLaw,
    n_crossings: u64,
    start: f64,
    max_steps: u64,
    seed: u64,
) -> Result<ExperimentReport, VerifyError> {
    let target = overshoot_target(law)?;
    positive("n_crossings", n_crossings)?;
    let pending = Pending::new(format!("lln_overshoots[x0={start}]"), law.label(), seed, &[("n_crossings", n_crossings), ("max_steps", max_steps)]);
    let mut rng = rng::stream(seed, &format!("lln/{}/{start}", law.label()), 0);
    let mut inc = AnyIncrements::new(law)?;
    let (sum, count, steps) = dispatch_increments!(&mut inc, inc => {
        let mut prev = inc.from_real(start).ok_or(VerifyError::OffLattice(start))?;
        let zero = Coord::to_f64(prev) * 0.0;
        let (mut sum, mut count, mut steps) = (zero, 0u64, 0u64);
        let neg = |x: f64| x < 0.0;
        while count < n_crossings && steps < max_steps {
            let next = prev + inc.draw(&mut rng);
            steps += 1;
            if neg(Coord::to_f64(prev)) != neg(Coord::to_f64(next)) {
                sum += inc.to_real(next).abs();
                count += 1;
            }
            prev = next;
        }
        (sum, count, steps)
    });
    let mean = if count > 0 { sum / count as f64 } else { f64::NAN };
    let censor = if count < n_crossings { 1.0 } else { 0.0 };
    Ok(pending.finish(
        mean,
        target,
        0.02,
        Comparison::RelativeError,
        censor,
        &[],
        json!({ "crossings": count, "steps": steps, "relative_error": (mean - target).abs() / target }),
    ))
}

/// Result of [`clt_level_crossings`] with its plot-ready grid.
#[derive(Clone, Debug)]
pub struct CltOutcome {
    pub report: ExperimentReport,
    /// `(y, empirical CDF, 2 Phi(y) - 1)`.
    pub grid: Vec<(f64, f64, f64)>,
}

/// Grid on which the CLT comparison is made.
pub fn clt_grid() -> Vec<f64> {
    (0..=400).map(|i| i as f64 * 0.01).collect()
}

/// CLT for the number of zero crossings: `sigma L_n / (E|X_1| sqrt(n))` over
/// `n_replicas` independent paths against the half-normal law.
pub fn clt_level_crossings(
    law: &IncrementLaw,
    n_steps: u64,
    n_replicas: u64,
    start: f64,
    seed: u64,
) -> Result<CltOutcome, VerifyError> {
    require_centred_1d(law)?;
    positive("n_steps", n_steps)?;
    positive("n_replicas", n_replicas)?;
    let pending = Pending::new(format!("clt_level_crossings[x0={start}]"), law.label(), seed, &[("n_steps", n_steps), ("n_replicas", n_replicas)]);
    let inc = AnyIncrements::new(law)?;
    let tag = format!("clt/{}/{start}", law.label());
    let counts: Vec<Vec<u64>> = rng::blocks(n_replicas, REPLICA_BLOCK)
        .into_par_iter()
        .map(|(idx, len)| -> Result<Vec<u64>, VerifyError> {
            let mut rng = rng::stream(seed, &tag, idx);
            let mut inc = inc.clone();
            dispatch_increments!(&mut inc, inc => {
                let x0 = inc.from_real(start).ok_or(VerifyError::OffLattice(start))?;
                let zero = <_ as Coord>::ZERO;
                Ok((0..len)
                    .map(|_| {
                        let mut prev = x0;
                        let mut l = 0u64;
                        for _ in 0..n_steps {
                            let next = prev + inc.draw(&mut rng);
                            l += u64::from((prev < zero) != (next < zero));
                            prev = next;
                        }
                        l
                    })
                    .collect())
            })
        })
        .collect::<Result<_, _>>()?;
    let sigma = law.second_moment()[0].sqrt();
    let abs = law.abs_first_moment().expect("one-dimensional");
    let scale = sigma / (abs * (n_steps as f64).sqrt());
    let mut values: Vec<f64> = counts.into_iter().flatten().map(|l| l as f64 * scale).collect();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let grid: Vec<(f64, f64, f64)> = clt_grid()
        .into_iter()
        .map(|y| (y, values.partition_point(|&v| v <= y) as f64 / n, half_normal_cdf(y)))
        .collect();
    let sup_grid = grid.iter().map(|(_, e, t)| (e - t).abs()).fold(0.0, f64::max);
    let sup_exact = ks_statistic(&values, half_normal_cdf);
    let mean = values.iter().sum::<f64>() / n;
    let mean_target = (2.0 / std::f64::consts::PI).sqrt();
    let mean_ok = (mean - mean_target).abs() <= 0.02;
    let report = pending.finish(
        sup_grid,
        0.0,
        0.05,
        Comparison::AtMost,
        0.0,
        &[("mean_within_0.02", mean_ok)],
        json!({ "sup_distance_grid": sup_grid, "sup_distance_exact": sup_exact, "mean": mean, "mean_target": mean_target }),
    );
    Ok(CltOutcome { report, grid })
}

/// CSV `y,empirical_cdf,target_cdf`.
pub fn write_grid_csv<W: Write>(out: W, grid: &[(f64, f64, f64)]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["y", "empirical_cdf", "target_cdf"])?;
    for (y, e, t) in grid {
        w.write_record([y.to_string(), e.to_string(), t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Expected numbers of up- and down-crossings of each level during one
/// excursion. `side = Plus` starts from `pi_+'` and stops at the first
/// up-crossing of zero; `side = Minus` starts from `pi_-'` and stops at the
/// first down-crossing. Every expectation is one; the estimator is the median
/// of [`MOM_BLOCKS`] block means. At level zero both counts are one on every
/// excursion, which is checked exactly.
pub fn expected_crossings(
    law: &IncrementLaw,
    side: Orthant,
    levels: &[f64],
    n_excursions: u64,
    horizon: u64,
    seed: u64,
) -> Result<ExperimentReport, VerifyError> {
    require_centred_1d(law)?;
    positive("n_excursions", n_excursions)?;
    let (dir, name) = match side {
        Orthant::Minus => (Direction::Down, "expected_crossings[pi-, T_down]"),
        _ => (Direction::Up, "expected_crossings[pi+, T_up]"),
    };
    let pending = Pending::new(name, law.label(), seed, &[("n_excursions", n_excursions), ("horizon", horizon), ("blocks", MOM_BLOCKS)]);
    let starts = StartLaw::orthant(law, side)?;
    let inc = AnyIncrements::new(law)?;
    let tag = format!("{name}/{}", law.label());
    let block = n_excursions.div_ceil(MOM_BLOCKS);
    let nl = levels.len();
    // per block: (up sums, down sums, completed, censored, level-zero exact)
    type Block = (Vec<u64>, Vec<u64>, u64, u64, bool);
    let parts: Vec<Block> = rng::blocks(n_excursions, block)
        .into_par_iter()
        .map(|(idx, len)| -> Result<Block, VerifyError> {
            let mut rng = rng::stream(seed, &tag, idx);
            let mut inc = inc.clone();
            dispatch_increments!(&mut inc, inc => {
                let lv = levels.iter().map(|&a| inc.from_real(a).ok_or(VerifyError::OffLattice(a))).collect::<Result<Vec<_>, _>>()?;
                let zero_idx = lv.iter().position(|&a| Coord::to_f64(a) == 0.0);
                let mut counter = LevelCounter::new(lv);
                let (mut up, mut down) = (vec![0u64; nl], vec![0u64; nl]);
                let (mut done, mut censored, mut exact) = (0u64, 0u64, true);
                for _ in 0..len {
                    let x0 = inc.from_real(starts.sample(&mut rng)).expect("start measure lives on the lattice");
                    counter.reset();
                    let outcome = run_to_crossing(inc, x0, dir, horizon, &mut rng, |p, q| counter.observe(p, q));
                    if outcome.is_censored() {
                        censored += 1;
                        continue;
                    }
                    done += 1;
                    if let Some(z) = zero_idx {
                        exact &= counter.up[z] == 1 && counter.down[z] == 1;
                    }
                    for i in 0..nl {
                        up[i] += counter.up[i];
                        down[i] += counter.down[i];
                    }
                }
                Ok((up, down, done, censored, exact))
            })
        })
        .collect::<Result<_, _>>()?;
    let censored: u64 = parts.iter().map(|p| p.3).sum();
    let exact = parts.iter().all(|p| p.4);
    let mut estimates = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, &a) in levels.iter().enumerate() {
        let est = |pick: fn(&Block) -> &Vec<u64>| {
            let means: Vec<f64> = parts.iter().filter(|p| p.2 > 0).map(|p| pick(p)[i] as f64 / p.2 as f64).collect();
            median_of_means(&means, means.len())
        };
        let (u, d) = (est(|p| &p.0), est(|p| &p.1));
        worst = worst.max((u - 1.0).abs()).max((d - 1.0).abs());
        estimates.push(json!({ "level": a, "up": u, "down": d }));
    }
    Ok(pending.finish(
        worst,
        0.0,
        0.05,
        Comparison::AbsoluteError,
        censored as f64 / n_excursions as f64,
        &[("level_zero_exact", exact)],
        json!({ "max_abs_deviation_from_one": worst, "estimates": estimates, "censored": censored }),
    ))
}

/// Kac reconstruction of `lambda` on a lattice window: the mean occupation of
/// each point before the first up-crossing of zero, from `pi_+'` starts,
/// times the mass of `pi_+`, should be the span `h`.
pub fn kac_mc_test(
    law: &IncrementLaw,
    window: (i64, i64),
    n_excursions: u64,
    horizon: u64,
    seed: u64,
) -> Result<ExperimentReport, VerifyError> {
    require_centred_1d(law)?;
    positive("n_excursions", n_excursions)?;
    let lattice = law.as_lattice().ok_or(VerifyError::NotLattice)?;
    let h = lattice.span_f64()[0];
    let total = finite_total(&orthant_measure(lattice, Orthant::Plus)?.total_mass)?;
    let pending = Pending::new(
        format!("kac_mc[{}..{}]", window.0, window.1),
        law.label(),
        seed,
        &[("n_excursions", n_excursions), ("horizon", horizon)],
    );
    let starts = StartLaw::orthant(law, Orthant::Plus)?;
    let inc = AnyIncrements::new(law)?;
    let tag = format!("kac/{}", law.label());
    let width = (window.1 - window.0 + 1).max(0) as usize;
    fn run<I: Increments<C = i64>>(
        inc: &mut I,
        starts: &StartLaw,
        window: (i64, i64),
        width: usize,
        len: u64,
        horizon: u64,
        rng: &mut rng::Stream,
    ) -> (Vec<u64>, u64, u64) {
        let mut occ = vec![0u64; width];
        let (mut done, mut censored) = (0, 0);
        let mut scratch = vec![0u64; width];
        for _ in 0..len {
            let x0 = inc.from_real(starts.sample(rng)).expect("start measure lives on the lattice");
            scratch.iter_mut().for_each(|c| *c = 0);
            let outcome = run_to_crossing(inc, x0, Direction::Up, horizon, rng, |p, _| {
                if p >= window.0 && p <= window.1 {
                    scratch[(p - window.0) as usize] += 1;
                }
            });
            if outcome.is_censored() {
                censored += 1;
            } else {
                done += 1;
                occ.iter_mut().zip(&scratch).for_each(|(o, s)| *o += s);
            }
        }
        (occ, done, censored)
    }
    let parts: Vec<(Vec<u64>, u64, u64)> = rng::blocks(n_excursions, SAMPLE_BLOCK)
        .into_par_iter()
        .map(|(idx, len)| -> Result<_, VerifyError> {
            let mut rng = rng::stream(seed, &tag, idx);
            match inc.clone() {
                AnyIncrements::Coin(mut c) => Ok(run(&mut c, &starts, window, width, len, horizon, &mut rng)),
                AnyIncrements::Lattice(mut l) => Ok(run(&mut l, &starts, window, width, len, horizon, &mut rng)),
                AnyIncrements::Continuous(_) => Err(VerifyError::NotLattice),
            }
        })
        .collect::<Result<_, _>>()?;
    let done: u64 = parts.iter().map(|p| p.1).sum();
    let censored: u64 = parts.iter().map(|p| p.2).sum();
    let rate = censored as f64 / n_excursions as f64;
    if rate > 10.0 * CENSOR_GATE {
        return Err(VerifyError::CensorInflation { rate });
    }
    let mut occ = vec![0u64; width];
    for p in &parts {
        occ.iter_mut().zip(&p.0).for_each(|(o, s)| *o += s);
    }
    let weights: Vec<f64> = occ.iter().map(|&c| c as f64 / done as f64 * total).collect();
    let worst = weights.iter().map(|w| (w / h - 1.0).abs()).fold(0.0, f64::max);
    let points: Vec<Value> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| json!({ "x": (window.0 + i as i64) as f64 * h, "weight": w, "target": h }))
        .collect();
    Ok(pending.finish(
        worst,
        0.0,
        0.05,
        Comparison::AbsoluteError,
        rate,
        &[],
        json!({ "max_relative_error": worst, "points": points, "censored": censored }),
    ))
}

/// Hopf ratio check for the entrance chain of a two-dimensional lattice walk
/// into the closed positive quadrant: entrance counts in `b1` and `b2` should
/// have the ratio `pi_+(b1) / pi_+(b2)`. Points are in span units. The run
/// stops after `n_entrances` entrances or `max_steps` steps; falling short
/// counts as censoring.
pub fn hopf_ratio_test(
    law: &LatticeLaw,
    start: &[i64],
    b1: &[Vec<i64>],
    b2: &[Vec<i64>],
    n_entrances: u64,
    max_steps: u64,
    seed: u64,
) -> Result<ExperimentReport, VerifyError> {
    if law.dim() != 2 {
        return Err(VerifyError::NotTwoDimensional(law.dim()));
    }
    positive("n_entrances", n_entrances)?;
    let window: Vec<(i64, i64)> = (0..2)
        .map(|ax| {
            let it = || b1.iter().chain(b2).map(|p| p[ax]);
            (it().min().unwrap_or(0).min(0), it().max().unwrap_or(0).max(0))
        })
        .collect();
    let m: LatticeMeasure<f64> = pi_plus(law, &window)?;
    let mass = |b: &[Vec<i64>]| b.iter().filter_map(|p| m.weight_at(p)).sum::<f64>();
    let (t1, t2) = (mass(b1), mass(b2));
    if t2 == 0.0 {
        return Err(VerifyError::ZeroTargetMass);
    }
    let target = t1 / t2;
    let pending = Pending::new("hopf_ratio", "planar lattice walk", seed, &[("n_entrances", n_entrances), ("max_steps", max_steps)]);
    let mut rng = rng::stream(seed, "hopf", 0);
    let inside = |p: &[i64]| p.iter().all(|&v| v >= 0);
    let mut pos = start.to_vec();
    let mut was_in = inside(&pos);
    let (mut c1, mut c2, mut entrances, mut steps) = (0u64, 0u64, 0u64, 0u64);
    while entrances < n_entrances && steps < max_steps {
        let d = law.sample_units(&mut rng);
        pos[0] += d[0];
        pos[1] += d[1];
        steps += 1;
        let now_in = inside(&pos);
        if now_in && !was_in {
            entrances += 1;
            c1 += u64::from(b1.contains(&pos));
            c2 += u64::from(b2.contains(&pos));
        }
        was_in = now_in;
    }
    let ratio = if c2 > 0 { c1 as f64 / c2 as f64 } else { f64::NAN };
    Ok(pending.finish(
        ratio,
        target,
        0.10,
        Comparison::RelativeError,
        1.0 - entrances as f64 / n_entrances as f64,
        &[],
        json!({ "count_b1": c1, "count_b2": c2, "entrances": entrances, "steps": steps }),
    ))
}

fn kernel_row(k: &SubKernel<f64>, row: usize) -> Vec<f64> {
    (0..k.k.cols()).map(|c| k.k[(row, c)]).chain([k.dagger[row]]).collect()
}

/// Empirical entrance and exit kernels of random irreducible chains, sampled
/// through the generic subchain sampler, against the exact kernels.
pub fn cross_oracle_test(
    n_chains: u64,
    n_states: usize,
    samples_per_row: u64,
    horizon: u64,
    seed: u64,
) -> Result<ExperimentReport, VerifyError> {
    positive("n_chains", n_chains)?;
    positive("samples_per_row", samples_per_row)?;
    let pending = Pending::new(
        "cross_oracle",
        format!("random {n_states}-state chains"),
        seed,
        &[("n_chains", n_chains), ("n_states", n_states as u64), ("samples_per_row", samples_per_row)],
    );
    struct Case {
        sampler: FiniteSampler,
        a: IndexSet,
        entr: SubKernel<f64>,
        exit: SubKernel<f64>,
        to_a: Vec<bool>,
    }
    let cases: Vec<Case> = (0..n_chains)
        .map(|c| -> Result<Case, VerifyError> {
            let mut rng = rng::stream(seed, "cross-oracle/chain", c);
            let p = random_irreducible_chain(n_states, &mut rng);
            let part = random_bipartition(n_states, &mut rng);
            let to_f = |k: SubKernel<_>| SubKernel { states: k.states, k: k.k.map(|q: &num_rational::BigRational| q.to_f64()), dagger: k.dagger.iter().map(Scalar::to_f64).collect() };
            let entr = to_f(entrance_kernel(&p, &part)?);
            let exit = to_f(exit_kernel(&p, &part)?);
            let to_a = part.ac.iter().map(|&x| part.a.iter().any(|&z| !p[(x, z)].is_zero())).collect();
            let rows: Vec<Vec<f64>> = p.map(|q| q.to_f64()).to_rows();
            Ok(Case { sampler: FiniteSampler::new(&rows).expect("stochastic rows"), a: IndexSet::new(n_states, &part.a), entr, exit, to_a })
        })
        .collect::<Result<_, _>>()?;
    let mut tasks = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        for r in 0..case.entr.states.len() {
            tasks.push((ci, Mode::Entrance, r));
        }
        for r in 0..case.exit.states.len() {
            if case.to_a[r] {
                tasks.push((ci, Mode::Exit, r));
            }
        }
    }
    let rows: Vec<(f64, u64)> = tasks
        .par_iter()
        .enumerate()
        .map(|(ti, &(ci, mode, r))| -> Result<(f64, u64), VerifyError> {
            let case = &cases[ci];
            let k = if mode == Mode::Entrance { &case.entr } else { &case.exit };
            let sub = SampledSubchain::new(&case.sampler, &case.a, mode, horizon);
            let mut rng = rng::stream(seed, "cross-oracle/rows", ti as u64);
            let m = k.states.len();
            let mut counts = vec![0u64; m + 1];
            for _ in 0..samples_per_row {
                match sub.step(&k.states[r], &mut rng)? {
                    Outcome::State(s) => counts[k.states.iter().position(|&v| v == s).expect("lands in the kernel's domain")] += 1,
                    Outcome::Dagger => counts[m] += 1,
                }
            }
            let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / samples_per_row as f64).collect();
            Ok((tv_distance(&emp, &kernel_row(k, r)), counts[m]))
        })
        .collect::<Result<_, _>>()?;
    let worst = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let censored: u64 = rows.iter().map(|r| r.1).sum();
    let total = samples_per_row * rows.len() as u64;
    Ok(pending.finish(
        worst,
        0.0,
        0.01,
        Comparison::AtMost,
        censored as f64 / total as f64,
        &[],
        json!({ "max_row_tv": worst, "rows": rows.len(), "mean_row_tv": rows.iter().map(|r| r.0).sum::<f64>() / rows.len() as f64 }),
    ))
}
