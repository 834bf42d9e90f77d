//! Entrance and exit chains of an arbitrary one-step Markov sampler.
//!
//! Given a chain `Y` and a set `A`, the entrance chain records `Y` at the
//! steps it moves from `A^c` into `A`; the exit chain records the position one
//! step earlier. Both are Markov chains in their own right; here they are
//! sampled by running `Y` forward, with a step horizon standing in for the
//! cemetery state.

use std::fmt::Debug;

use rand::Rng;
use thiserror::Error;

use crate::alias::AliasTable;
use crate::laws::IncrementLaw;
use crate::target::TargetSet;
use crate::walk::{simulate_walk, WalkError};

/// Default number of proposals in the exit-step rejection sampler.
pub const DEFAULT_REJECTION_BUDGET: u64 = 1_000_000;

/// A time-homogeneous one-step sampler.
pub trait MarkovSampler: Sync {
    type State: Clone + Debug + PartialEq + Send;

    fn step<R: Rng + ?Sized>(&self, x: &Self::State, rng: &mut R) -> Self::State;
}

/// Membership predicate on a sampler's state space.
pub trait StateSet<S>: Sync {
    fn contains(&self, x: &S) -> bool;
}

impl StateSet<Vec<f64>> for TargetSet {
    fn contains(&self, x: &Vec<f64>) -> bool {
        TargetSet::contains(self, x)
    }
}

/// Subset of `{0, ..., n-1}` as a membership mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSet {
    mask: Vec<bool>,
}

impl IndexSet {
    pub fn new(n: usize, members: &[usize]) -> Self {
        let mut mask = vec![false; n];
        for &i in members {
            mask[i] = true;
        }
        IndexSet { mask }
    }
}

impl StateSet<usize> for IndexSet {
    fn contains(&self, x: &usize) -> bool {
        self.mask[*x]
    }
}

/// Finite chain sampled with one alias table per row.
#[derive(Clone, Debug)]
pub struct FiniteSampler {
    rows: Vec<AliasTable>,
}

impl FiniteSampler {
    /// `rows` must be nonnegative with positive row sums.
    pub fn new(rows: &[Vec<f64>]) -> Option<Self> {
        rows.iter().map(|r| AliasTable::new(r)).collect::<Option<Vec<_>>>().map(|rows| FiniteSampler { rows })
    }
}

impl MarkovSampler for FiniteSampler {
    type State = usize;

    #[inline]
    fn step<R: Rng + ?Sized>(&self, x: &usize, rng: &mut R) -> usize {
        self.rows[*x].sample(rng)
    }
}

/// A random walk as a Markov chain on real points.
#[derive(Clone, Debug)]
pub struct WalkSampler {
    pub law: IncrementLaw,
}

impl MarkovSampler for WalkSampler {
    type State = Vec<f64>;

    fn step<R: Rng + ?Sized>(&self, x: &Vec<f64>, rng: &mut R) -> Vec<f64> {
        let inc = self.law.sample(rng);
        x.iter().zip(inc).map(|(a, b)| a + b).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Entrance,
    Exit,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome<S> {
    State(S),
    /// Horizon exhausted: the cemetery state.
    Dagger,
}

impl<S> Outcome<S> {
    pub fn state(&self) -> Option<&S> {
        match self {
            Outcome::State(s) => Some(s),
            Outcome::Dagger => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SubchainError {
    #[error("entrance step started outside A")]
    NotInA,
    #[error("exit step started inside A")]
    NotInAc,
    #[error("no step into A in {0} proposals; the state is probably not in the exit domain")]
    RejectionBudgetExhausted(u64),
}

/// Entrance or exit chain of `sampler` relative to `A`.
pub struct SampledSubchain<'a, M: MarkovSampler, A> {
    pub sampler: &'a M,
    pub a: &'a A,
    pub mode: Mode,
    /// Steps of the underlying chain allowed per emitted state.
    pub horizon: u64,
    pub rejection_budget: u64,
}

/// Emitted states of [`run_subchain`] with the number of cemetery hits.
#[derive(Clone, Debug, PartialEq)]
pub struct SubchainRun<S> {
    pub states: Vec<Outcome<S>>,
    pub censored: u64,
}

impl<'a, M: MarkovSampler, A: StateSet<M::State>> SampledSubchain<'a, M, A> {
    pub fn new(sampler: &'a M, a: &'a A, mode: Mode, horizon: u64) -> Self {
        SampledSubchain { sampler, a, mode, horizon, rejection_budget: DEFAULT_REJECTION_BUDGET }
    }

    /// Runs from `y0` to the next `A^c -> A` transition; returns `(pre, entry)`.
    fn next_transition<R: Rng + ?Sized>(&self, y0: M::State, rng: &mut R) -> Option<(M::State, M::State)> {
        let mut prev = y0;
        let mut prev_in = self.a.contains(&prev);
        for _ in 0..self.horizon {
            let next = self.sampler.step(&prev, rng);
            let next_in = self.a.contains(&next);
            if next_in && !prev_in {
                return Some((prev, next));
            }
            prev = next;
            prev_in = next_in;
        }
        None
    }

    /// One transition of the entrance chain from `x` in `A`.
    pub fn entrance_step<R: Rng + ?Sized>(&self, x: &M::State, rng: &mut R) -> Result<Outcome<M::State>, SubchainError> {
        if !self.a.contains(x) {
            return Err(SubchainError::NotInA);
        }
        Ok(match self.next_transition(x.clone(), rng) {
            Some((_, entry)) => Outcome::State(entry),
            None => Outcome::Dagger,
        })
    }

    /// One transition of the exit chain from `x` in `A^c`.
    ///
    /// The first step is conditioned on landing in `A` by rejection; the chain
    /// then runs to its next entrance and the pre-entrance state is returned.
    pub fn exit_step<R: Rng + ?Sized>(&self, x: &M::State, rng: &mut R) -> Result<Outcome<M::State>, SubchainError> {
        if self.a.contains(x) {
            return Err(SubchainError::NotInAc);
        }
        let mut z = None;
        for _ in 0..self.rejection_budget {
            let y = self.sampler.step(x, rng);
            if self.a.contains(&y) {
                z = Some(y);
                break;
            }
        }
        let z = z.ok_or(SubchainError::RejectionBudgetExhausted(self.rejection_budget))?;
        Ok(match self.next_transition(z, rng) {
            Some((pre, _)) => Outcome::State(pre),
            None => Outcome::Dagger,
        })
    }

    pub fn step<R: Rng + ?Sized>(&self, x: &M::State, rng: &mut R) -> Result<Outcome<M::State>, SubchainError> {
        match self.mode {
            Mode::Entrance => self.entrance_step(x, rng),
            Mode::Exit => self.exit_step(x, rng),
        }
    }
}

/// Iterates the subchain `n` times from `x0`. The cemetery is absorbing, so
/// once it is hit the remaining outcomes are all [`Outcome::Dagger`].
pub fn run_subchain<M, A, R>(
    sub: &SampledSubchain<'_, M, A>,
    x0: &M::State,
    n: usize,
    rng: &mut R,
) -> Result<SubchainRun<M::State>, SubchainError>
where
    M: MarkovSampler,
    A: StateSet<M::State>,
    R: Rng + ?Sized,
{
    let mut states = Vec::with_capacity(n);
    let mut censored = 0;
    let mut x = x0.clone();
    for i in 0..n {
        match sub.step(&x, rng)? {
            Outcome::State(y) => {
                states.push(Outcome::State(y.clone()));
                x = y;
            }
            Outcome::Dagger => {
                censored = (n - i) as u64;
                states.extend(std::iter::repeat_n(Outcome::Dagger, n - i));
                break;
            }
        }
    }
    Ok(SubchainRun { states, censored })
}

/// An `A^c -> A` transition of a stored trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<S> {
    /// Index of the entrance state; the exit state sits at `time - 1`.
    pub time: u64,
    pub exit: S,
    pub entrance: S,
}

/// All `A^c -> A` transitions of a trajectory, in order.
pub fn scan_transitions<S, A, I>(a: &A, path: I) -> Vec<Transition<S>>
where
    S: Clone,
    A: StateSet<S>,
    I: IntoIterator<Item = S>,
{
    let mut out = Vec::new();
    let mut it = path.into_iter();
    let Some(mut prev) = it.next() else { return out };
    let mut prev_in = a.contains(&prev);
    for (k, next) in it.enumerate() {
        let next_in = a.contains(&next);
        if next_in && !prev_in {
            out.push(Transition { time: k as u64 + 1, exit: prev.clone(), entrance: next.clone() });
        }
        prev = next;
        prev_in = next_in;
    }
    out
}

/// Walk trajectory as input to [`scan_transitions`].
pub fn walk_transitions<R: Rng>(
    law: &IncrementLaw,
    a: &TargetSet,
    start: &[f64],
    n_steps: u64,
    rng: R,
) -> Result<Vec<Transition<Vec<f64>>>, WalkError> {
    Ok(scan_transitions(a, simulate_walk(law, start, n_steps, rng)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::LatticeLaw;
    use crate::rng::stream;

    fn flip() -> FiniteSampler {
        FiniteSampler::new(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn cycle3() -> FiniteSampler {
        FiniteSampler::new(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn flip_chain_steps() {
        let p = flip();
        let a = IndexSet::new(2, &[1]);
        let mut rng = stream(1, "flip", 0);
        let ent = SampledSubchain::new(&p, &a, Mode::Entrance, 100);
        assert_eq!(ent.entrance_step(&1, &mut rng), Ok(Outcome::State(1)));
        assert_eq!(ent.entrance_step(&0, &mut rng), Err(SubchainError::NotInA));
        let ext = SampledSubchain::new(&p, &a, Mode::Exit, 100);
        assert_eq!(ext.exit_step(&0, &mut rng), Ok(Outcome::State(0)));
        assert_eq!(ext.exit_step(&1, &mut rng), Err(SubchainError::NotInAc));
        let run = run_subchain(&ent, &1, 5, &mut rng).unwrap();
        assert_eq!(run.states, vec![Outcome::State(1); 5]);
        assert!(run_subchain(&ent, &1, 0, &mut rng).unwrap().states.is_empty());
    }

    #[test]
    fn three_cycle_steps() {
        let p = cycle3();
        let a = IndexSet::new(3, &[1, 2]);
        let mut rng = stream(1, "cyc", 0);
        let ent = SampledSubchain::new(&p, &a, Mode::Entrance, 100);
        assert_eq!(ent.entrance_step(&2, &mut rng), Ok(Outcome::State(1)));
        let ext = SampledSubchain::new(&p, &a, Mode::Exit, 100);
        assert_eq!(ext.exit_step(&0, &mut rng), Ok(Outcome::State(0)));
    }

    #[test]
    fn horizon_and_budget_are_distinct_failures() {
        let p = cycle3();
        let a = IndexSet::new(3, &[1, 2]);
        let mut rng = stream(1, "h", 0);
        let ent = SampledSubchain::new(&p, &a, Mode::Entrance, 1);
        assert_eq!(ent.entrance_step(&1, &mut rng), Ok(Outcome::Dagger));
        let run = run_subchain(&ent, &1, 4, &mut rng).unwrap();
        assert_eq!(run.censored, 4);
        // state 2 never steps into A = {0}
        let a0 = IndexSet::new(3, &[0]);
        let mut ext = SampledSubchain::new(&p, &a0, Mode::Exit, 100);
        ext.rejection_budget = 50;
        assert_eq!(ext.exit_step(&1, &mut rng), Err(SubchainError::RejectionBudgetExhausted(50)));
    }

    #[test]
    fn rademacher_subchains() {
        let w = WalkSampler { law: LatticeLaw::rademacher().into() };
        let a = TargetSet::nonneg_orthant();
        let mut rng = stream(3, "rad", 0);
        let ent = SampledSubchain::new(&w, &a, Mode::Entrance, 1 << 24);
        let run = run_subchain(&ent, &vec![0.0], 200, &mut rng).unwrap();
        assert_eq!(run.censored, 0);
        assert!(run.states.iter().all(|s| s == &Outcome::State(vec![0.0])));
        let ext = SampledSubchain::new(&w, &a, Mode::Exit, 1 << 24);
        let run = run_subchain(&ext, &vec![-1.0], 200, &mut rng).unwrap();
        assert!(run.states.iter().all(|s| s == &Outcome::State(vec![-1.0])));
    }

    #[test]
    fn exit_states_precede_entrances_by_one_step() {
        let law: IncrementLaw = LatticeLaw::from_integers(&[(-1, "2/3"), (2, "1/3")]).unwrap().into();
        let a = TargetSet::nonneg_orthant();
        let path: Vec<_> = simulate_walk(&law, &[0.0], 10_000, stream(4, "tr", 0)).unwrap().collect();
        let tr = scan_transitions(&a, path.clone());
        assert!(!tr.is_empty());
        for t in &tr {
            assert_eq!(path[t.time as usize], t.entrance);
            assert_eq!(path[t.time as usize - 1], t.exit);
            assert!(t.exit[0] < 0.0 && t.entrance[0] >= 0.0);
        }
    }
}
