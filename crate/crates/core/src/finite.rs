//! Exact entrance/exit kernels and invariant measures of finite chains.
//!
//! Everything is first-passage linear algebra on dense matrices and works
//! over any [`Scalar`]; with [`BigRational`] all identities hold with residual
//! exactly zero.
//!
//! Notation: `P_{BC}` is the block of `P` with rows in `B` and columns in `C`.
//! From a state in `A`, `G = (I - P_{AA})^{-1} P_{AA^c}` is the law of the
//! first state visited in `A^c`, and `H = (I - P_{A^cA^c})^{-1} P_{A^cA}` the
//! law of the first state visited in `A` from `A^c`.

use num_rational::BigRational;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laws::NumberSpec;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Row sums may deviate from one by this much (or by a rounding error of the
/// scalar type, if larger) before a chain is rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
/// Residual bound for identity checks.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum FiniteError {
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("empty chain")]
    Empty,
    #[error("negative entry at ({0}, {1})")]
    NegativeEntry(usize, usize),
    #[error("row {0} sums to {1}")]
    RowSum(usize, f64),
    #[error("chain is reducible; communicating classes {0:?}")]
    Reducible(Vec<Vec<usize>>),
    #[error("singular linear system while computing {0}")]
    Singular(&'static str),
    #[error("invariant measure vanishes at state {0}")]
    ZeroMu(usize),
    #[error("supplied measure is not invariant (residual {0:e})")]
    NotInvariant(f64),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid chain spec: {0}")]
    Spec(String),
}

/// Validated row-stochastic matrix.
#[derive(Clone, Debug)]
pub struct StochasticMatrix<S: Scalar>(Matrix<S>);

impl<S: Scalar> StochasticMatrix<S> {
    /// Checks nonnegativity and unit row sums (within [`ROW_SUM_TOLERANCE`]);
    /// rows that pass are rescaled to sum to one in the scalar's arithmetic.
    pub fn new(p: Matrix<S>) -> Result<Self, FiniteError> {
        if p.rows() != p.cols() {
            return Err(FiniteError::NotSquare(p.rows(), p.cols()));
        }
        if p.rows() == 0 {
            return Err(FiniteError::Empty);
        }
        let n = p.rows();
        let mut q = p;
        for i in 0..n {
            let mut total = S::zero();
            for j in 0..n {
                if q[(i, j)] < S::zero() {
                    return Err(FiniteError::NegativeEntry(i, j));
                }
                total = total + q[(i, j)].clone();
            }
            let gap = total.clone() - S::one();
            // single precision cannot meet the f64 tolerance
            if gap.abs().to_f64() > ROW_SUM_TOLERANCE && !gap.negligible(1.0) {
                return Err(FiniteError::RowSum(i, total.to_f64()));
            }
            if !total.is_one() {
                for j in 0..n {
                    q[(i, j)] = q[(i, j)].clone() / total.clone();
                }
            }
        }
        Ok(StochasticMatrix(q))
    }

    pub fn matrix(&self) -> &Matrix<S> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }
}

/// States reachable from each state in zero or more steps (boolean closure).
pub fn reachability<S: Scalar>(p: &Matrix<S>) -> Vec<Vec<bool>> {
    let n = p.rows();
    let mut r: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j || !p[(i, j)].is_zero()).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

/// Communicating classes, each sorted, ordered by smallest member.
pub fn communicating_classes<S: Scalar>(p: &Matrix<S>) -> Vec<Vec<usize>> {
    let r = reachability(p);
    let n = p.rows();
    let mut seen = vec![false; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| r[i][j] && r[j][i]).collect();
        for &j in &class {
            seen[j] = true;
        }
        classes.push(class);
    }
    classes
}

pub fn is_irreducible<S: Scalar>(p: &Matrix<S>) -> bool {
    reachability(p).iter().all(|row| row.iter().all(|&b| b))
}

/// Solves `x K = x`, `sum x = 1` through the bordered system: `K^T - I` with
/// its last row replaced by ones and right-hand side `e_n`.
///
/// `None` when the system is singular, i.e. the unit eigenvalue is not simple.
pub fn stationary_of<S: Scalar>(k: &Matrix<S>) -> Option<Vec<S>> {
    let n = k.rows();
    let mut m = k.transpose().sub(&Matrix::identity(n));
    for j in 0..n {
        m[(n - 1, j)] = S::one();
    }
    let mut rhs = vec![S::zero(); n];
    rhs[n - 1] = S::one();
    m.lu().solve(&rhs)
}

/// The stationary probability vector of an irreducible chain.
pub fn stationary_vector<S: Scalar>(p: &StochasticMatrix<S>) -> Result<Vec<S>, FiniteError> {
    let classes = communicating_classes(p.matrix());
    if classes.len() > 1 {
        return Err(FiniteError::Reducible(classes));
    }
    stationary_of(p.matrix()).ok_or(FiniteError::Singular("stationary vector"))
}

/// `||v K - v||_inf`.
pub fn invariance_residual<S: Scalar>(v: &[S], k: &Matrix<S>) -> f64 {
    let vk = k.left_mul(v);
    crate::scalar::sup_distance(&vk, v)
}

/// Irreducible chain with an invariant measure `mu` (not necessarily normalized).
#[derive(Clone, Debug)]
pub struct FiniteChain<S: Scalar> {
    p: StochasticMatrix<S>,
    mu: Vec<S>,
    pub labels: Vec<String>,
}

impl<S: Scalar> FiniteChain<S> {
    /// Validates `p`, certifies irreducibility and computes the stationary vector.
    pub fn new(p: Matrix<S>) -> Result<Self, FiniteError> {
        let p = StochasticMatrix::new(p)?;
        let mu = stationary_vector(&p)?;
        let labels = (0..p.n()).map(|i| format!("s{i}")).collect();
        Ok(FiniteChain { p, mu, labels })
    }

    /// Uses a supplied invariant measure, which must satisfy `mu P = mu`
    /// within [`IDENTITY_TOLERANCE`] and be nonzero and nonnegative.
    pub fn with_mu(p: Matrix<S>, mu: Vec<S>) -> Result<Self, FiniteError> {
        let p = StochasticMatrix::new(p)?;
        if !is_irreducible(p.matrix()) {
            return Err(FiniteError::Reducible(communicating_classes(p.matrix())));
        }
        if mu.len() != p.n() {
            return Err(FiniteError::Spec(format!("mu has {} entries for {} states", mu.len(), p.n())));
        }
        if let Some(i) = mu.iter().position(|m| *m <= S::zero()) {
            return Err(FiniteError::ZeroMu(i));
        }
        let scale = mu.iter().map(|m| m.to_f64()).fold(0.0, f64::max);
        let res = invariance_residual(&mu, p.matrix());
        if res > IDENTITY_TOLERANCE * scale.max(1.0) {
            return Err(FiniteError::NotInvariant(res));
        }
        let labels = (0..p.n()).map(|i| format!("s{i}")).collect();
        Ok(FiniteChain { p, mu, labels })
    }

    pub fn n(&self) -> usize {
        self.p.n()
    }

    pub fn p(&self) -> &Matrix<S> {
        self.p.matrix()
    }

    pub fn mu(&self) -> &[S] {
        &self.mu
    }

    /// Same kernel with invariant measure `c * mu`.
    pub fn scaled(&self, c: S) -> Self {
        FiniteChain { p: self.p.clone(), mu: self.mu.iter().map(|m| m.clone() * c.clone()).collect(), labels: self.labels.clone() }
    }

    /// The time reversal relative to `mu`, with the same `mu`.
    pub fn dual(&self) -> Result<Self, FiniteError> {
        let p = dual_kernel(self)?;
        Ok(FiniteChain { p: StochasticMatrix::new(p)?, mu: self.mu.clone(), labels: self.labels.clone() })
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> FiniteChain<T> {
        FiniteChain {
            p: StochasticMatrix(self.p.matrix().map(&f)),
            mu: self.mu.iter().map(f).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// `P^(y, x) = mu(x) P(x, y) / mu(y)`.
pub fn dual_kernel<S: Scalar>(chain: &FiniteChain<S>) -> Result<Matrix<S>, FiniteError> {
    let mu = chain.mu();
    if let Some(i) = mu.iter().position(|m| m.is_zero()) {
        return Err(FiniteError::ZeroMu(i));
    }
    let p = chain.p();
    Ok(Matrix::from_fn(chain.n(), chain.n(), |y, x| mu[x].clone() * p[(x, y)].clone() / mu[y].clone()))
}

/// A bipartition `(A, A^c)` of the states.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bipartition {
    pub a: Vec<usize>,
    pub ac: Vec<usize>,
}

impl Bipartition {
    pub fn new(n: usize, a: &[usize]) -> Result<Self, FiniteError> {
        let mut mask = vec![false; n];
        for &i in a {
            if i >= n {
                return Err(FiniteError::InvalidPartition(format!("state {i} out of range 0..{n}")));
            }
            if mask[i] {
                return Err(FiniteError::InvalidPartition(format!("state {i} listed twice")));
            }
            mask[i] = true;
        }
        let a: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        let ac: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
        if a.is_empty() || ac.is_empty() {
            return Err(FiniteError::InvalidPartition("A and its complement must be nonempty".into()));
        }
        Ok(Bipartition { a, ac })
    }

    /// `(A^c, A)`.
    pub fn swapped(&self) -> Self {
        Bipartition { a: self.ac.clone(), ac: self.a.clone() }
    }

    pub fn n(&self) -> usize {
        self.a.len() + self.ac.len()
    }
}

/// Kernel on a subset of states plus the mass sent to the cemetery.
#[derive(Clone, Debug)]
pub struct SubKernel<S: Scalar> {
    /// Original indices of the rows/columns.
    pub states: Vec<usize>,
    pub k: Matrix<S>,
    /// `1 - row sum`: probability of never producing the next state.
    pub dagger: Vec<S>,
}

impl<S: Scalar> SubKernel<S> {
    fn new(states: Vec<usize>, k: Matrix<S>) -> Self {
        let dagger = k.row_sums().into_iter().map(|s| S::one() - s).collect();
        SubKernel { states, k, dagger }
    }

    /// Largest `|row sum - 1|`, ignoring the cemetery column.
    pub fn stochasticity_defect(&self) -> f64 {
        self.dagger.iter().map(|d| d.abs().to_f64()).fold(0.0, f64::max)
    }
}

/// Expected visits inside a block before leaving it.
///
/// States of the block that cannot leave it are never counted as sources:
/// their rows stay zero, so mass that falls into such a trap is lost to the
/// cemetery instead of making the system singular.
fn block_occupation<S: Scalar>(p: &Matrix<S>, block: &[usize]) -> Result<Matrix<S>, FiniteError> {
    let m = block.len();
    let q = p.select(block, block);
    let inside: Vec<bool> = {
        let mut v = vec![false; p.rows()];
        block.iter().for_each(|&i| v[i] = true);
        v
    };
    // escaping[i]: block state i can reach a state outside the block
    let mut escaping: Vec<bool> =
        block.iter().map(|&i| (0..p.cols()).any(|j| !inside[j] && !p[(i, j)].is_zero())).collect();
    loop {
        let mut changed = false;
        for i in 0..m {
            if !escaping[i] && (0..m).any(|j| escaping[j] && !q[(i, j)].is_zero()) {
                escaping[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let e: Vec<usize> = (0..m).filter(|&i| escaping[i]).collect();
    let mut out = Matrix::zeros(m, m);
    if e.is_empty() {
        return Ok(out);
    }
    let qe = q.select(&e, &e);
    let ne = Matrix::identity(e.len()).sub(&qe).lu().inverse().ok_or(FiniteError::Singular("block occupation"))?;
    for (a, &i) in e.iter().enumerate() {
        for (b, &j) in e.iter().enumerate() {
            out[(i, j)] = ne[(a, b)].clone();
        }
    }
    Ok(out)
}

/// `(I - P_{BB})^{-1} P_{BC}`: law of the first state in `C` from each state in `B`.
fn first_hit<S: Scalar>(p: &Matrix<S>, b: &[usize], c: &[usize]) -> Result<Matrix<S>, FiniteError> {
    Ok(block_occupation(p, b)?.mul(&p.select(b, c)))
}

/// The entrance kernel `K_entr = G H` on `A`.
pub fn entrance_kernel<S: Scalar>(p: &Matrix<S>, part: &Bipartition) -> Result<SubKernel<S>, FiniteError> {
    let g = first_hit(p, &part.a, &part.ac)?;
    let h = first_hit(p, &part.ac, &part.a)?;
    Ok(SubKernel::new(part.a.clone(), g.mul(&h)))
}

/// The exit kernel on `A^c`.
///
/// From `x` the first step is conditioned on `A`; from the landing point `z`
/// the chain runs to its next entrance into `A`, and the state just before it
/// is returned: `W(z, v) = sum_w G(z, w) N1(w, v) P(v, A)` with
/// `N1 = (I - P_{A^cA^c})^{-1}`. Rows with `P(x, A) = 0` go to the cemetery.
pub fn exit_kernel<S: Scalar>(p: &Matrix<S>, part: &Bipartition) -> Result<SubKernel<S>, FiniteError> {
    let g = first_hit(p, &part.a, &part.ac)?;
    let n1 = block_occupation(p, &part.ac)?;
    let to_a: Vec<S> = part.ac.iter().map(|&v| part.a.iter().map(|&z| p[(v, z)].clone()).sum()).collect();
    let mut gn = g.mul(&n1);
    for r in 0..gn.rows() {
        for (c, pa) in to_a.iter().enumerate() {
            gn[(r, c)] = gn[(r, c)].clone() * pa.clone();
        }
    }
    let m = part.ac.len();
    let mut k: Matrix<S> = Matrix::zeros(m, m);
    for (xi, &x) in part.ac.iter().enumerate() {
        if to_a[xi].is_zero() {
            continue;
        }
        for (zi, &z) in part.a.iter().enumerate() {
            let w = p[(x, z)].clone() / to_a[xi].clone();
            if w.is_zero() {
                continue;
            }
            for c in 0..m {
                k[(xi, c)] = k[(xi, c)].clone() + w.clone() * gn[(zi, c)].clone();
            }
        }
    }
    Ok(SubKernel::new(part.ac.clone(), k))
}

/// `mu_A^entr(y) = sum_{x in A^c} mu(x) P(x, y)` for `y` in `A`.
pub fn entrance_measure<S: Scalar>(p: &Matrix<S>, mu: &[S], part: &Bipartition) -> Vec<S> {
    part.a.iter().map(|&y| part.ac.iter().map(|&x| mu[x].clone() * p[(x, y)].clone()).sum()).collect()
}

/// `mu_{A^c}^exit(x) = mu(x) P(x, A)` for `x` in `A^c`.
pub fn exit_measure<S: Scalar>(p: &Matrix<S>, mu: &[S], part: &Bipartition) -> Vec<S> {
    part.ac
        .iter()
        .map(|&x| mu[x].clone() * part.a.iter().map(|&y| p[(x, y)].clone()).sum::<S>())
        .collect()
}

/// Dual form `mu(x) P^(x, A^c)` of the entrance measure.
pub fn entrance_measure_dual<S: Scalar>(chain: &FiniteChain<S>, part: &Bipartition) -> Result<Vec<S>, FiniteError> {
    let ph = dual_kernel(chain)?;
    let mu = chain.mu();
    Ok(part.a.iter().map(|&x| mu[x].clone() * part.ac.iter().map(|&y| ph[(x, y)].clone()).sum::<S>()).collect())
}

/// `||nu K - nu||_inf` on the non-cemetery states.
pub fn verify_invariance<S: Scalar>(nu: &[S], kernel: &SubKernel<S>) -> f64 {
    invariance_residual(nu, &kernel.k)
}

/// `E_x[sum_{k < T} 1(Y_k = b)]` for every pair of states, where `T` is the
/// first step from `A^c` into `A`.
///
/// The natural state space is `state x {not yet in A^c, visited A^c}`, but
/// copies of `A` in the second phase are never occupied before `T` (reaching
/// them would be the stopping transition), so it collapses to the original
/// states with the `A^c -> A` moves removed.
pub fn occupation_before_entrance<S: Scalar>(p: &Matrix<S>, part: &Bipartition) -> Result<Matrix<S>, FiniteError> {
    let n = p.rows();
    let mut q = p.clone();
    for &x in &part.ac {
        for &y in &part.a {
            q[(x, y)] = S::zero();
        }
    }
    Matrix::identity(n).sub(&q).lu().inverse().ok_or(FiniteError::Singular("occupation before entrance"))
}

/// Kac: `sum_{x in A} mu_A^entr(x) E_x[sum_{k<T} 1(Y_k = .)]`, which equals `mu`.
pub fn kac_reconstruct<S: Scalar>(chain: &FiniteChain<S>, part: &Bipartition) -> Result<Vec<S>, FiniteError> {
    let nu = entrance_measure(chain.p(), chain.mu(), part);
    induce_back(chain.p(), part, &nu)
}

/// `sum_x nu(x) E_x[occupation before T]` for a measure `nu` on `A`.
fn induce_back<S: Scalar>(p: &Matrix<S>, part: &Bipartition, nu: &[S]) -> Result<Vec<S>, FiniteError> {
    let occ = occupation_before_entrance(p, part)?;
    let mut full = vec![S::zero(); p.rows()];
    for (i, &x) in part.a.iter().enumerate() {
        full[x] = nu[i].clone();
    }
    Ok(occ.left_mul(&full))
}

/// Residuals of the alternation and splitting identities.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitResiduals {
    /// `||mu_A^entr G - mu_{A^c}^entr||`.
    pub push_forward: f64,
    /// `||mu_{A^c}^entr H - mu_A^entr||` (the same identity with the roles swapped).
    pub push_forward_back: f64,
    /// `||mu_A^entr N0 + mu_{A^c}^entr N1 - mu||`.
    pub split: f64,
}

pub fn kac_split_check<S: Scalar>(chain: &FiniteChain<S>, part: &Bipartition) -> Result<SplitResiduals, FiniteError> {
    let p = chain.p();
    let mu = chain.mu();
    let back = part.swapped();
    let ent_a = entrance_measure(p, mu, part);
    let ent_ac = entrance_measure(p, mu, &back);
    let g = first_hit(p, &part.a, &part.ac)?;
    let h = first_hit(p, &part.ac, &part.a)?;
    let push_forward = crate::scalar::sup_distance(&g.left_mul(&ent_a), &ent_ac);
    let push_forward_back = crate::scalar::sup_distance(&h.left_mul(&ent_ac), &ent_a);
    let n0 = block_occupation(p, &part.a)?;
    let n1 = block_occupation(p, &part.ac)?;
    let mut total = vec![S::zero(); chain.n()];
    for (v, &j) in n0.left_mul(&ent_a).into_iter().zip(&part.a) {
        total[j] = v;
    }
    for (v, &j) in n1.left_mul(&ent_ac).into_iter().zip(&part.ac) {
        total[j] = v;
    }
    let split = crate::scalar::sup_distance(&total, mu);
    Ok(SplitResiduals { push_forward, push_forward_back, split })
}

/// Flux residual `max |m(x) K_exit(x, y) - m(y) K^_entr(y, x)|` for the exit
/// chain of `P` on `B = A^c` against the entrance chain of the dual into `B`.
fn exit_entrance_flux<S: Scalar>(
    chain: &FiniteChain<S>,
    dual: &FiniteChain<S>,
    part: &Bipartition,
) -> Result<f64, FiniteError> {
    let m = exit_measure(chain.p(), chain.mu(), part);
    let kx = exit_kernel(chain.p(), part)?;
    let kd = entrance_kernel(dual.p(), &part.swapped())?;
    let b = part.ac.len();
    let mut worst: f64 = 0.0;
    for x in 0..b {
        for y in 0..b {
            let lhs = m[x].clone() * kx.k[(x, y)].clone();
            let rhs = m[y].clone() * kd.k[(y, x)].clone();
            worst = worst.max((lhs - rhs).abs().to_f64());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualityResiduals {
    /// Exit chain on `A^c` vs the dual's entrance chain into `A^c`.
    pub flux_ac: f64,
    /// The same with the roles of `A` and `A^c` exchanged.
    pub flux_a: f64,
    /// Exit measure of `P` on `A^c` vs the dual's entrance measure into `A^c`.
    pub measure_swap: f64,
    /// Dual-chain alternation: `mu^_A^entr G^ = mu^_{A^c}^entr`.
    pub dual_alternation: f64,
    /// Dual-chain alternation with the roles swapped.
    pub dual_alternation_back: f64,
    /// `mu_A^entr(x) = mu(x) P^(x, A^c)`.
    pub dual_form: f64,
    /// `P^^ = P`.
    pub involution: f64,
}

pub fn duality_check<S: Scalar>(chain: &FiniteChain<S>, part: &Bipartition) -> Result<DualityResiduals, FiniteError> {
    let dual = chain.dual()?;
    let flux_ac = exit_entrance_flux(chain, &dual, part)?;
    let flux_a = exit_entrance_flux(chain, &dual, &part.swapped())?;
    let ex = exit_measure(chain.p(), chain.mu(), part);
    let dual_ent = entrance_measure(dual.p(), dual.mu(), &part.swapped());
    let measure_swap = crate::scalar::sup_distance(&ex, &dual_ent);
    let split = kac_split_check(&dual, part)?;
    let dual_form = crate::scalar::sup_distance(
        &entrance_measure(chain.p(), chain.mu(), part),
        &entrance_measure_dual(chain, part)?,
    );
    let involution = dual_kernel(&dual)?.max_abs_diff(chain.p());
    Ok(DualityResiduals {
        flux_ac,
        flux_a,
        measure_swap,
        dual_alternation: split.push_forward,
        dual_alternation_back: split.push_forward_back,
        dual_form,
        involution,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReverseInducing<S: Scalar> {
    /// Stationary probability vector of `K_entr`.
    pub nu: Vec<S>,
    /// The measure induced back from `nu`.
    pub mu: Vec<S>,
    /// `||mu P - mu||`.
    pub invariance: f64,
    /// `||entrance_measure(mu) - nu||`.
    pub entrance: f64,
    /// `m - rank(I - K_entr)`; one iff the unit eigenvalue is simple.
    pub unit_eigenspace_dim: usize,
}

pub fn reverse_inducing_check<S: Scalar>(
    chain: &FiniteChain<S>,
    part: &Bipartition,
) -> Result<ReverseInducing<S>, FiniteError> {
    let k = entrance_kernel(chain.p(), part)?;
    let m = k.states.len();
    let rank = Matrix::identity(m).sub(&k.k).lu().rank();
    let nu = stationary_of(&k.k).ok_or_else(|| {
        FiniteError::Reducible(vec![part.a.clone()])
    })?;
    let mu = induce_back(chain.p(), part, &nu)?;
    let invariance = invariance_residual(&mu, chain.p());
    let entrance = crate::scalar::sup_distance(&entrance_measure(chain.p(), &mu, part), &nu);
    Ok(ReverseInducing { nu, mu, invariance, entrance, unit_eigenspace_dim: m - rank })
}

/// One named identity with its residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub identity: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityRecord {
    pub fn new(identity: &str, residual: f64, tolerance: f64) -> Self {
        IdentityRecord { identity: identity.to_string(), residual, tolerance, pass: residual <= tolerance }
    }
}

/// Runs every identity of the lab on one chain and partition.
pub fn check_identities<S: Scalar>(chain: &FiniteChain<S>, part: &Bipartition) -> Result<Vec<IdentityRecord>, FiniteError> {
    let p = chain.p();
    let mu = chain.mu();
    let tol = IDENTITY_TOLERANCE;
    let ke = entrance_kernel(p, part)?;
    let kx = exit_kernel(p, part)?;
    let ent = entrance_measure(p, mu, part);
    let ex = exit_measure(p, mu, part);
    let kac = kac_reconstruct(chain, part)?;
    let split = kac_split_check(chain, part)?;
    let dual = duality_check(chain, part)?;
    let rev = reverse_inducing_check(chain, part)?;
    let ent_total: S = ent.iter().cloned().sum();
    let ex_total: S = ex.iter().cloned().sum();
    Ok(vec![
        IdentityRecord::new("stationary vector", invariance_residual(mu, p), tol),
        IdentityRecord::new("entrance kernel stochastic", ke.stochasticity_defect(), 1e-12),
        IdentityRecord::new("exit kernel stochastic", kx.stochasticity_defect(), 1e-12),
        IdentityRecord::new("entrance measure invariant", verify_invariance(&ent, &ke), tol),
        IdentityRecord::new("exit measure invariant", verify_invariance(&ex, &kx), tol),
        IdentityRecord::new("entrance and exit masses agree", (ent_total - ex_total).abs().to_f64(), tol),
        IdentityRecord::new("kac reconstruction", crate::scalar::sup_distance(&kac, mu), tol),
        IdentityRecord::new("alternation A to complement", split.push_forward, tol),
        IdentityRecord::new("alternation complement to A", split.push_forward_back, tol),
        IdentityRecord::new("occupation split", split.split, tol),
        IdentityRecord::new("dual form of entrance measure", dual.dual_form, tol),
        IdentityRecord::new("exit/dual-entrance detailed balance", dual.flux_ac, tol),
        IdentityRecord::new("exit/dual-entrance detailed balance (swapped)", dual.flux_a, tol),
        IdentityRecord::new("exit measure is dual entrance measure", dual.measure_swap, tol),
        IdentityRecord::new("dual alternation A to complement", dual.dual_alternation, tol),
        IdentityRecord::new("dual alternation complement to A", dual.dual_alternation_back, tol),
        IdentityRecord::new("dual involution", dual.involution, 1e-12),
        IdentityRecord::new("reverse inducing invariance", rev.invariance, tol),
        IdentityRecord::new("reverse inducing entrance measure", rev.entrance, tol),
        IdentityRecord::new("simple unit eigenvalue", (rev.unit_eigenspace_dim as f64 - 1.0).abs(), 0.0),
    ])
}

/// Denominator of the quantized random chains.
pub const RANDOM_CHAIN_DENOMINATOR: u64 = 1_000_000;

/// Random irreducible chain with entries in `Z / 10^6`, so the same chain is
/// available exactly and in floating point.
///
/// Rows are flat-simplex draws; entries below `1e-3` are zeroed before the
/// row is renormalized and quantized. Reducible draws are rejected.
pub fn random_irreducible_chain<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix<BigRational> {
    let d = RANDOM_CHAIN_DENOMINATOR;
    loop {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            w.iter_mut().for_each(|x| {
                if *x < 1e-3 {
                    *x = 0.0
                }
            });
            let total: f64 = w.iter().sum();
            let mut counts: Vec<u64> = w.iter().map(|x| (x / total * d as f64).floor() as u64).collect();
            let short = d - counts.iter().sum::<u64>();
            let top = (0..n).max_by(|&i, &j| w[i].total_cmp(&w[j])).expect("n > 0");
            counts[top] += short;
            rows.push(counts.into_iter().map(|c| BigRational::new(c.into(), d.into())).collect());
        }
        let p = Matrix::from_rows(rows);
        if is_irreducible(&p) {
            return p;
        }
    }
}

/// Uniform random proper nonempty subset as `A`.
pub fn random_bipartition<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Bipartition {
    assert!(n >= 2, "need at least two states");
    loop {
        let a: Vec<usize> = (0..n).filter(|_| rng.random::<bool>()).collect();
        if !a.is_empty() && a.len() < n {
            return Bipartition::new(n, &a).expect("valid subset");
        }
    }
}

/// A seeded random chain and partition with the lab's identity records.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabCase {
    pub index: u64,
    pub n: usize,
    pub a: Vec<usize>,
    pub records: Vec<IdentityRecord>,
}

impl LabCase {
    pub fn pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn record(&self, identity: &str) -> Option<&IdentityRecord> {
        self.records.iter().find(|r| r.identity == identity)
    }
}

/// The `index`-th random lab case under `seed`, evaluated in scalar type `S`.
/// The chain and partition do not depend on `S`.
pub fn random_lab_case<S: Scalar>(seed: u64, index: u64, n: usize) -> Result<LabCase, FiniteError> {
    let mut rng = crate::rng::stream(seed, "finite-lab", index);
    let p = random_irreducible_chain(n, &mut rng);
    let part = random_bipartition(n, &mut rng);
    let chain = FiniteChain::new(p.map(S::from_rational))?;
    Ok(LabCase { index, n, a: part.a.clone(), records: check_identities(&chain, &part)? })
}

/// Chain input: `n`, rows of `P` as numbers or rational strings, optional
/// `mu`, and the members of `A`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub n: usize,
    pub rows: Vec<Vec<NumberSpec>>,
    #[serde(default)]
    pub mu: Option<Vec<NumberSpec>>,
    pub a: Vec<usize>,
}

impl ChainSpec {
    pub fn build<S: Scalar>(&self) -> Result<(FiniteChain<S>, Bipartition), FiniteError> {
        if self.rows.len() != self.n || self.rows.iter().any(|r| r.len() != self.n) {
            return Err(FiniteError::Spec(format!("rows must form a {0}x{0} matrix", self.n)));
        }
        let conv = |x: &NumberSpec| x.to_rational().map(|q| S::from_rational(&q)).map_err(|e| FiniteError::Spec(e.to_string()));
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().map(conv).collect::<Result<Vec<S>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let p = Matrix::from_rows(rows);
        let chain = match &self.mu {
            Some(mu) => FiniteChain::with_mu(p, mu.iter().map(conv).collect::<Result<_, _>>()?)?,
            None => FiniteChain::new(p)?,
        };
        let part = Bipartition::new(self.n, &self.a)?;
        Ok((chain, part))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n.into(), d.into())
    }

    fn qm(rows: &[&[(i64, i64)]]) -> Matrix<Q> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&(n, d)| q(n, d)).collect()).collect())
    }

    fn flip() -> FiniteChain<Q> {
        FiniteChain::new(qm(&[&[(0, 1), (1, 1)], &[(1, 1), (0, 1)]])).unwrap()
    }

    fn cycle3() -> FiniteChain<Q> {
        let z = (0, 1);
        let o = (1, 1);
        FiniteChain::new(qm(&[&[z, o, z], &[z, z, o], &[o, z, z]])).unwrap()
    }

    #[test]
    fn stationary_examples() {
        assert_eq!(flip().mu(), &[q(1, 2), q(1, 2)]);
        assert_eq!(cycle3().mu(), &[q(1, 3), q(1, 3), q(1, 3)]);
        let c = FiniteChain::new(qm(&[&[(9, 10), (1, 10)], &[(2, 10), (8, 10)]])).unwrap();
        assert_eq!(c.mu(), &[q(2, 3), q(1, 3)]);
        let f: FiniteChain<f64> = FiniteChain::new(Matrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]])).unwrap();
        assert!((f.mu()[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn reducible_chains_are_rejected_with_classes() {
        let p = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5]]);
        assert_eq!(FiniteChain::new(p).unwrap_err(), FiniteError::Reducible(vec![vec![0], vec![1]]));
    }

    #[test]
    fn invalid_matrices() {
        assert!(matches!(FiniteChain::new(Matrix::from_rows(vec![vec![0.5, 0.6], vec![0.5, 0.5]])), Err(FiniteError::RowSum(0, _))));
        assert!(matches!(
            FiniteChain::new(Matrix::from_rows(vec![vec![1.5, -0.5], vec![0.5, 0.5]])),
            Err(FiniteError::NegativeEntry(0, 1))
        ));
        assert!(Bipartition::new(3, &[]).is_err());
        assert!(Bipartition::new(3, &[0, 1, 2]).is_err());
        assert!(Bipartition::new(3, &[3]).is_err());
    }

    #[test]
    fn three_cycle_by_hand() {
        let c = cycle3();
        let part = Bipartition::new(3, &[1, 2]).unwrap();
        let ke = entrance_kernel(c.p(), &part).unwrap();
        assert_eq!(ke.k.to_rows(), vec![vec![q(1, 1), q(0, 1)], vec![q(1, 1), q(0, 1)]]);
        let kx = exit_kernel(c.p(), &part).unwrap();
        assert_eq!(kx.k.to_rows(), vec![vec![q(1, 1)]]);
        assert_eq!(entrance_measure(c.p(), c.mu(), &part), vec![q(1, 3), q(0, 1)]);
        assert_eq!(exit_measure(c.p(), c.mu(), &part), vec![q(1, 3)]);
        assert_eq!(kac_reconstruct(&c, &part).unwrap(), c.mu().to_vec());
        let split = kac_split_check(&c, &part).unwrap();
        assert_eq!((split.push_forward, split.split), (0.0, 0.0));
        let rev = reverse_inducing_check(&c, &part).unwrap();
        assert_eq!(rev.nu, vec![q(1, 1), q(0, 1)]);
        assert_eq!(rev.mu, vec![q(1, 1); 3]);
        assert_eq!(rev.unit_eigenspace_dim, 1);
        // doubly stochastic: the dual is the transpose
        assert_eq!(dual_kernel(&c).unwrap(), c.p().transpose());
    }

    #[test]
    fn flip_chain_by_hand() {
        let c = flip();
        let part = Bipartition::new(2, &[1]).unwrap();
        assert_eq!(entrance_kernel(c.p(), &part).unwrap().k.to_rows(), vec![vec![q(1, 1)]]);
        assert_eq!(exit_kernel(c.p(), &part).unwrap().k.to_rows(), vec![vec![q(1, 1)]]);
        assert_eq!(entrance_measure(c.p(), c.mu(), &part), vec![q(1, 2)]);
        assert_eq!(kac_reconstruct(&c, &part).unwrap(), vec![q(1, 2), q(1, 2)]);
        assert!(check_identities(&c, &part).unwrap().iter().all(|r| r.pass && r.residual == 0.0));
    }

    #[test]
    fn two_state_dual_is_self() {
        let c = FiniteChain::new(qm(&[&[(9, 10), (1, 10)], &[(2, 10), (8, 10)]])).unwrap();
        assert_eq!(dual_kernel(&c).unwrap(), c.p().clone());
    }

    fn birth_death(n: usize) -> FiniteChain<Q> {
        let mut rows = vec![vec![q(0, 1); n]; n];
        for i in 0..n {
            let up = q(1 + i as i64, 2 * n as i64 + 1);
            let down = q(1, 3);
            if i + 1 < n {
                rows[i][i + 1] = up.clone();
            }
            if i > 0 {
                rows[i][i - 1] = down.clone();
            }
            let stay: Q = q(1, 1) - rows[i].iter().cloned().sum::<Q>();
            rows[i][i] = stay;
        }
        FiniteChain::new(Matrix::from_rows(rows)).unwrap()
    }

    #[test]
    fn birth_death_is_self_dual_and_balanced() {
        let c = birth_death(5);
        assert_eq!(dual_kernel(&c).unwrap(), c.p().clone());
        let part = Bipartition::new(5, &[0, 1, 2]).unwrap();
        let d = duality_check(&c, &part).unwrap();
        assert_eq!((d.flux_ac, d.flux_a, d.involution), (0.0, 0.0, 0.0));
    }

    #[test]
    fn random_chains_exact_and_float() {
        let mut rng = stream(17, "finite-unit", 0);
        for _ in 0..10 {
            let p = random_irreducible_chain(6, &mut rng);
            let part = random_bipartition(6, &mut rng);
            let exact = FiniteChain::new(p.clone()).unwrap();
            for r in check_identities(&exact, &part).unwrap() {
                assert_eq!(r.residual, 0.0, "{}", r.identity);
            }
            let float = FiniteChain::new(p.map(Scalar::to_f64)).unwrap();
            for r in check_identities(&float, &part).unwrap() {
                assert!(r.pass, "{} {}", r.identity, r.residual);
            }
        }
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = stream(3, "scale", 0);
        let c = FiniteChain::new(random_irreducible_chain(5, &mut rng)).unwrap();
        let part = random_bipartition(5, &mut rng);
        let s = c.scaled(q(7, 2));
        let scaled = |v: Vec<Q>| v.into_iter().map(|x| x * q(7, 2)).collect::<Vec<_>>();
        assert_eq!(entrance_measure(s.p(), s.mu(), &part), scaled(entrance_measure(c.p(), c.mu(), &part)));
        assert_eq!(exit_measure(s.p(), s.mu(), &part), scaled(exit_measure(c.p(), c.mu(), &part)));
        assert_eq!(kac_reconstruct(&s, &part).unwrap(), scaled(kac_reconstruct(&c, &part).unwrap()));
    }

    #[test]
    fn swap_symmetry_of_measures() {
        let mut rng = stream(5, "swap", 0);
        let c = FiniteChain::new(random_irreducible_chain(6, &mut rng)).unwrap();
        let part = random_bipartition(6, &mut rng);
        let d = c.dual().unwrap();
        // exit measure of (P, A^c) = entrance measure of (P^, A^c); and with roles swapped
        assert_eq!(exit_measure(c.p(), c.mu(), &part), entrance_measure(d.p(), d.mu(), &part.swapped()));
        assert_eq!(entrance_measure(c.p(), c.mu(), &part), exit_measure(d.p(), d.mu(), &part.swapped()));
    }

    #[test]
    fn cemetery_column_for_unreachable_entrances() {
        // state 2 is absorbing inside A^c: entrances from there never happen
        let p: Matrix<f64> = Matrix::from_rows(vec![vec![0.5, 0.5, 0.0], vec![0.25, 0.25, 0.5], vec![0.0, 0.0, 1.0]]);
        let part = Bipartition::new(3, &[0]).unwrap();
        let ke = entrance_kernel(&p, &part).unwrap();
        assert!((ke.dagger[0] - 2.0 / 3.0).abs() < 1e-14, "{:?}", ke.dagger);
        let kx = exit_kernel(&p, &part).unwrap();
        assert_eq!(kx.dagger[1], 1.0);
    }

    #[test]
    fn chain_spec_parses_rational_rows() {
        let spec: ChainSpec = toml::from_str(
            r#"
            n = 2
            rows = [["9/10", "1/10"], [0.2, 0.8]]
            a = [1]
            "#,
        )
        .unwrap();
        let (c, part) = spec.build::<Q>().unwrap();
        assert_eq!(c.mu(), &[q(2, 3), q(1, 3)]);
        assert_eq!(part.a, vec![1]);
    }
}
