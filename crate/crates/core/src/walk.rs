//! Random-walk trajectories and their crossing structure.
//!
//! Lattice walks are simulated in integer units of the span, so positions are
//! exact and the sign of `0` is never blurred by rounding. Zero always belongs
//! to the nonnegative class: a crossing at step `k` means `S_{k-1} < 0 <= S_k`
//! or `S_{k-1} >= 0 > S_k`.

use std::fmt::Debug;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::{Add, Sub};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::alias::AliasTable;
use crate::laws::{ContinuousLaw, IncrementLaw, LatticeLaw};
use crate::target::TargetSet;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("start point {0:?} is not on the lattice of the walk")]
    OffLattice(Vec<f64>),
    #[error("point has dimension {got}, the walk has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation needs a one-dimensional walk, got dimension {0}")]
    NotOneDimensional(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Position type of a one-dimensional walk: lattice units or reals.
pub trait Coord:
    Copy + PartialOrd + Debug + Send + Sync + 'static + Add<Output = Self> + Sub<Output = Self>
{
    const ZERO: Self;
    fn to_f64(self) -> f64;
}

impl Coord for i64 {
    const ZERO: Self = 0;
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Coord for f64 {
    const ZERO: Self = 0.0;
    fn to_f64(self) -> f64 {
        self
    }
}

/// Increment source for the one-dimensional hot loops.
pub trait Increments: Clone + Send + Sync {
    type C: Coord;

    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Self::C;

    /// Real length of one coordinate unit (`h` for lattices, `1` otherwise).
    fn unit(&self) -> f64;

    /// Coordinate of a real point, `None` when it is off the lattice.
    fn from_real(&self, x: f64) -> Option<Self::C>;

    fn to_real(&self, c: Self::C) -> f64 {
        c.to_f64() * self.unit()
    }
}

/// General finite lattice law, one alias draw per step.
#[derive(Clone, Debug)]
pub struct LatticeIncrements {
    steps: Vec<i64>,
    table: AliasTable,
    h: f64,
    // second half of the last generator word, if unused
    spare: Option<u32>,
}

impl LatticeIncrements {
    pub fn new(law: &LatticeLaw) -> Result<Self, WalkError> {
        if law.dim() != 1 {
            return Err(WalkError::NotOneDimensional(law.dim()));
        }
        Ok(LatticeIncrements {
            steps: law.atoms().iter().map(|a| a.units[0]).collect(),
            table: law.alias_table().clone(),
            h: law.span_f64()[0],
            spare: None,
        })
    }
}

fn lattice_coord(x: f64, h: f64) -> Option<i64> {
    let k = (x / h).round();
    ((x / h - k).abs() <= 1e-9 && k.abs() < 9.0e15).then_some(k as i64)
}

impl Increments for LatticeIncrements {
    type C = i64;

    #[inline]
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> i64 {
        let u = match self.spare.take() {
            Some(u) => u,
            None => {
                let w = rng.next_u64();
                self.spare = Some(w as u32);
                (w >> 32) as u32
            }
        };
        self.steps[self.table.sample_u32(u)]
    }

    fn unit(&self) -> f64 {
        self.h
    }

    fn from_real(&self, x: f64) -> Option<i64> {
        lattice_coord(x, self.h)
    }
}

/// Two atoms of probability 1/2 each: one generator call per 64 steps.
#[derive(Clone, Debug)]
pub struct CoinIncrements {
    lo: i64,
    hi: i64,
    bits: u64,
    left: u32,
    h: f64,
}

impl CoinIncrements {
    /// `Some` iff the law is a fair coin between two lattice points.
    pub fn new(law: &LatticeLaw) -> Option<Self> {
        let atoms = law.atoms();
        let half = num_rational::BigRational::new(1.into(), 2.into());
        if law.dim() != 1 || atoms.len() != 2 || atoms[0].prob != half {
            return None;
        }
        Some(CoinIncrements { lo: atoms[0].units[0], hi: atoms[1].units[0], bits: 0, left: 0, h: law.span_f64()[0] })
    }
}

impl Increments for CoinIncrements {
    type C = i64;

    #[inline]
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> i64 {
        if self.left == 0 {
            self.bits = rng.next_u64();
            self.left = 64;
        }
        let bit = self.bits & 1;
        self.bits >>= 1;
        self.left -= 1;
        if bit == 0 {
            self.lo
        } else {
            self.hi
        }
    }

    fn unit(&self) -> f64 {
        self.h
    }

    fn from_real(&self, x: f64) -> Option<i64> {
        lattice_coord(x, self.h)
    }
}

#[derive(Clone, Debug)]
pub struct ContinuousIncrements {
    law: ContinuousLaw,
    normal: Option<Normal<f64>>,
}

impl ContinuousIncrements {
    pub fn new(law: &ContinuousLaw) -> Self {
        let normal = match *law {
            ContinuousLaw::Gaussian { sigma } => Normal::new(0.0, sigma).ok(),
            _ => None,
        };
        ContinuousIncrements { law: law.clone(), normal }
    }
}

impl Increments for ContinuousIncrements {
    type C = f64;

    #[inline]
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        match &self.normal {
            Some(n) => n.sample(rng),
            None => self.law.sample(rng),
        }
    }

    fn unit(&self) -> f64 {
        1.0
    }

    fn from_real(&self, x: f64) -> Option<f64> {
        x.is_finite().then_some(x)
    }
}

/// The fastest available increment source for a one-dimensional law.
///
/// Use [`crate::dispatch_increments!`] to run generic code on it.
#[derive(Clone, Debug)]
pub enum AnyIncrements {
    Coin(CoinIncrements),
    Lattice(LatticeIncrements),
    Continuous(ContinuousIncrements),
}

impl AnyIncrements {
    pub fn new(law: &IncrementLaw) -> Result<Self, WalkError> {
        if law.dim() != 1 {
            return Err(WalkError::NotOneDimensional(law.dim()));
        }
        Ok(match law {
            IncrementLaw::Lattice(l) => match CoinIncrements::new(l) {
                Some(c) => AnyIncrements::Coin(c),
                None => AnyIncrements::Lattice(LatticeIncrements::new(l)?),
            },
            IncrementLaw::Continuous(c) => AnyIncrements::Continuous(ContinuousIncrements::new(c)),
        })
    }
}

/// Expands `$body` once per concrete increment type, binding it to `$inc`.
#[macro_export]
macro_rules! dispatch_increments {
    ($any:expr, $inc:ident => $body:expr) => {
        match $any {
            $crate::walk::AnyIncrements::Coin($inc) => $body,
            $crate::walk::AnyIncrements::Lattice($inc) => $body,
            $crate::walk::AnyIncrements::Continuous($inc) => $body,
        }
    };
}

enum Position {
    Lattice(Vec<i64>),
    Real(Vec<f64>),
}

/// Lazy trajectory `S_0, S_1, ..., S_n` in real coordinates.
pub struct WalkPath<'a, R> {
    law: &'a IncrementLaw,
    pos: Position,
    remaining: u64,
    started: bool,
    rng: R,
}

/// Streams `S_0 = start, S_1, ..., S_{n_steps}` of the walk with increments `law`.
pub fn simulate_walk<'a, R: Rng>(
    law: &'a IncrementLaw,
    start: &[f64],
    n_steps: u64,
    rng: R,
) -> Result<WalkPath<'a, R>, WalkError> {
    if start.len() != law.dim() {
        return Err(WalkError::DimensionMismatch { expected: law.dim(), got: start.len() });
    }
    let pos = match law {
        IncrementLaw::Lattice(l) => {
            Position::Lattice(l.to_units(start).ok_or_else(|| WalkError::OffLattice(start.to_vec()))?)
        }
        IncrementLaw::Continuous(_) => Position::Real(start.to_vec()),
    };
    Ok(WalkPath { law, pos, remaining: n_steps, started: false, rng })
}

impl<R: Rng> WalkPath<'_, R> {
    fn current(&self) -> Vec<f64> {
        match (&self.pos, self.law) {
            (Position::Lattice(u), IncrementLaw::Lattice(l)) => l.to_real(u),
            (Position::Real(x), _) => x.clone(),
            _ => unreachable!("position kind follows the law"),
        }
    }
}

impl<R: Rng> Iterator for WalkPath<'_, R> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if !self.started {
            self.started = true;
            return Some(self.current());
        }
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        match (&mut self.pos, self.law) {
            (Position::Lattice(u), IncrementLaw::Lattice(l)) => {
                let step = l.sample_units(&mut self.rng);
                for (x, s) in u.iter_mut().zip(step) {
                    *x += s;
                }
            }
            (Position::Real(x), IncrementLaw::Continuous(c)) => x[0] += c.sample(&mut self.rng),
            _ => unreachable!("position kind follows the law"),
        }
        Some(self.current())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining as usize + usize::from(!self.started);
        (n, Some(n))
    }
}

/// Zero-level crossings of a one-dimensional path.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossingTrace<T> {
    /// Crossing times, increasing.
    pub times: Vec<u64>,
    /// `S` at each crossing time.
    pub overshoots: Vec<T>,
    /// `S` one step before each crossing time.
    pub undershoots: Vec<T>,
    pub n_steps: u64,
    /// Whether `S_0 < 0`.
    pub start_negative: bool,
}

impl<T: Coord> CrossingTrace<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `L(n)`: number of crossings up to and including step `n`.
    pub fn count_by(&self, n: u64) -> usize {
        self.times.partition_point(|&t| t <= n)
    }

    /// Overshoots and undershoots of the up-crossings, in order.
    pub fn upcrossing_subchain(&self) -> (Vec<T>, Vec<T>) {
        let first = if self.start_negative { 0 } else { 1 };
        let o = self.overshoots.iter().skip(first).step_by(2).copied().collect();
        let u = self.undershoots.iter().skip(first).step_by(2).copied().collect();
        (o, u)
    }

    /// Overshoots of the down-crossings, in order.
    pub fn downcrossing_subchain(&self) -> Vec<T> {
        let first = if self.start_negative { 1 } else { 0 };
        self.overshoots.iter().skip(first).step_by(2).copied().collect()
    }
}

/// Streaming crossing extractor: feed positions one at a time.
#[derive(Clone, Debug)]
pub struct CrossingScanner<T> {
    prev: T,
    time: u64,
    trace: CrossingTrace<T>,
}

impl<T: Coord> CrossingScanner<T> {
    pub fn new(start: T) -> Self {
        CrossingScanner {
            prev: start,
            time: 0,
            trace: CrossingTrace {
                times: Vec::new(),
                overshoots: Vec::new(),
                undershoots: Vec::new(),
                n_steps: 0,
                start_negative: start < T::ZERO,
            },
        }
    }

    /// Records `S_{k}` and returns whether step `k` was a crossing.
    #[inline]
    pub fn push(&mut self, next: T) -> bool {
        self.time += 1;
        let crossed = (self.prev < T::ZERO) != (next < T::ZERO);
        if crossed {
            self.trace.times.push(self.time);
            self.trace.overshoots.push(next);
            self.trace.undershoots.push(self.prev);
        }
        self.prev = next;
        crossed
    }

    pub fn crossings(&self) -> usize {
        self.trace.times.len()
    }

    pub fn finish(mut self) -> CrossingTrace<T> {
        self.trace.n_steps = self.time;
        self.trace
    }
}

/// Crossing structure of a stored one-dimensional path.
pub fn extract_crossings_1d<T: Coord>(path: &[T]) -> CrossingTrace<T> {
    let Some((&first, rest)) = path.split_first() else {
        return CrossingScanner::new(T::ZERO).finish();
    };
    let mut scanner = CrossingScanner::new(first);
    for &x in rest {
        scanner.push(x);
    }
    scanner.finish()
}

/// Crossing structure of a path of points; the points must be one-dimensional.
pub fn extract_crossings(path: &[Vec<f64>]) -> Result<CrossingTrace<f64>, WalkError> {
    if let Some(p) = path.iter().find(|p| p.len() != 1) {
        return Err(WalkError::NotOneDimensional(p.len()));
    }
    let flat: Vec<f64> = path.iter().map(|p| p[0]).collect();
    Ok(extract_crossings_1d(&flat))
}

/// Up- and down-crossing counters for a set of levels.
#[derive(Clone, Debug)]
pub struct LevelCounter<T> {
    pub levels: Vec<T>,
    pub up: Vec<u64>,
    pub down: Vec<u64>,
    lowest: Option<T>,
    highest: Option<T>,
}

impl<T: Coord> LevelCounter<T> {
    pub fn new(levels: Vec<T>) -> Self {
        let n = levels.len();
        let pick = |better: fn(&T, &T) -> bool| levels.iter().copied().reduce(|m, a| if better(&a, &m) { a } else { m });
        let (lowest, highest) = (pick(|a, m| a < m), pick(|a, m| a > m));
        LevelCounter { levels, up: vec![0; n], down: vec![0; n], lowest, highest }
    }

    /// Counts `prev < a <= next` as up and `prev >= a > next` as down.
    #[inline]
    pub fn observe(&mut self, prev: T, next: T) {
        let (Some(lo), Some(hi)) = (self.lowest, self.highest) else { return };
        // most steps are far from every level
        if (prev < lo && next < lo) || (prev >= hi && next >= hi) {
            return;
        }
        if next > prev {
            for (a, c) in self.levels.iter().zip(self.up.iter_mut()) {
                if prev < *a && *a <= next {
                    *c += 1;
                }
            }
        } else if next < prev {
            for (a, c) in self.levels.iter().zip(self.down.iter_mut()) {
                if prev >= *a && *a > next {
                    *c += 1;
                }
            }
        }
    }

    pub fn reset(&mut self) {
        self.up.iter_mut().for_each(|c| *c = 0);
        self.down.iter_mut().for_each(|c| *c = 0);
    }
}

/// `(L^up(a), L^down(a))` over the whole path for each level `a`.
pub fn count_level_crossings<T: Coord>(path: &[T], levels: &[T]) -> Vec<(u64, u64)> {
    let mut counter = LevelCounter::new(levels.to_vec());
    for w in path.windows(2) {
        counter.observe(w[0], w[1]);
    }
    counter.up.into_iter().zip(counter.down).collect()
}

/// Outcome of running a walk to its next entrance into `A`.
#[derive(Clone, Debug, PartialEq)]
pub enum Entrance<P> {
    /// `S_{index-1}` is in `A^c` and `S_index` in `A`.
    Entered { index: u64, pre_exit: P, entry: P },
    /// The horizon was reached first: the cemetery state.
    Censored { steps: u64 },
}

impl<P> Entrance<P> {
    pub fn is_censored(&self) -> bool {
        matches!(self, Entrance::Censored { .. })
    }

    pub fn entry(&self) -> Option<&P> {
        match self {
            Entrance::Entered { entry, .. } => Some(entry),
            Entrance::Censored { .. } => None,
        }
    }
}

/// Runs the walk from `start` to the first `k >= 1` with `S_{k-1}` outside
/// and `S_k` inside `A`, giving up after `max_steps` steps.
pub fn entrance_sampler<R: Rng>(
    law: &IncrementLaw,
    a: &TargetSet,
    start: &[f64],
    max_steps: u64,
    rng: R,
) -> Result<Entrance<Vec<f64>>, WalkError> {
    let mut path = simulate_walk(law, start, max_steps, rng)?;
    let mut prev = path.next().expect("the start point is always emitted");
    let mut prev_in = a.contains(&prev);
    for (k, next) in path.enumerate() {
        let next_in = a.contains(&next);
        if next_in && !prev_in {
            return Ok(Entrance::Entered { index: k as u64 + 1, pre_exit: prev, entry: next });
        }
        prev = next;
        prev_in = next_in;
    }
    Ok(Entrance::Censored { steps: max_steps })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Entrance into `[0, inf)`.
    Up,
    /// Entrance into `(-inf, 0)`.
    Down,
}

/// One-dimensional fast path: runs from `start` to the first crossing of
/// zero in direction `dir`, calling `visit(S_{k-1}, S_k)` for every step taken.
#[inline]
pub fn run_to_crossing<I, R, F>(
    inc: &mut I,
    start: I::C,
    dir: Direction,
    max_steps: u64,
    rng: &mut R,
    mut visit: F,
) -> Entrance<I::C>
where
    I: Increments,
    R: Rng + ?Sized,
    F: FnMut(I::C, I::C),
{
    let zero = I::C::ZERO;
    let mut prev = start;
    for k in 1..=max_steps {
        let next = prev + inc.draw(rng);
        visit(prev, next);
        let done = match dir {
            Direction::Up => prev < zero && next >= zero,
            Direction::Down => prev >= zero && next < zero,
        };
        if done {
            return Entrance::Entered { index: k, pre_exit: prev, entry: next };
        }
        prev = next;
    }
    Entrance::Censored { steps: max_steps }
}

/// Sidecar header of a binary trajectory dump.
#[derive(Clone, Debug)]
pub struct TrajectoryHeader {
    pub law: String,
    pub seed: u64,
    pub n_steps: u64,
    pub dim: usize,
}

/// Writes `d * (n + 1)` little-endian `f64` values to `path` and a text
/// header to `path.hdr`. Returns the number of points written.
pub fn write_trajectory<I>(path: &Path, header: &TrajectoryHeader, points: I) -> Result<u64, WalkError>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut out = BufWriter::new(File::create(path)?);
    let mut count = 0u64;
    for p in points {
        if p.len() != header.dim {
            return Err(WalkError::DimensionMismatch { expected: header.dim, got: p.len() });
        }
        for x in p {
            out.write_all(&x.to_le_bytes())?;
        }
        count += 1;
    }
    out.flush()?;
    let mut side = PathBuf::from(path);
    side.as_mut_os_string().push(".hdr");
    let mut h = File::create(side)?;
    writeln!(h, "format = f64-le")?;
    writeln!(h, "law = {}", header.law)?;
    writeln!(h, "seed = {}", header.seed)?;
    writeln!(h, "n_steps = {}", header.n_steps)?;
    writeln!(h, "dim = {}", header.dim)?;
    writeln!(h, "points = {count}")?;
    Ok(count)
}

/// Reads back a dump written by [`write_trajectory`] as a flat vector.
pub fn read_trajectory(path: &Path) -> Result<Vec<f64>, WalkError> {
    let bytes = std::fs::read(path)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// CSV with columns `index,time,overshoot,undershoot`; positions are real.
pub fn write_trace_csv<W: Write>(out: W, trace: &CrossingTrace<f64>) -> Result<(), WalkError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "time", "overshoot", "undershoot"])?;
    for (i, ((t, o), u)) in trace.times.iter().zip(&trace.overshoots).zip(&trace.undershoots).enumerate() {
        w.write_record(&[(i + 1).to_string(), t.to_string(), o.to_string(), u.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
