//! Goodness-of-fit statistics used by the Monte Carlo checks.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erf;

/// `sup_y |F_n(y) - F(y)|` for a continuous reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at level 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Number of cells after pooling.
    pub cells: usize,
}

/// Minimum expected count per cell; smaller adjacent cells are pooled.
pub const MIN_EXPECTED: f64 = 5.0;

/// Pearson chi-square of `counts` against `probs` (which should sum to one;
/// any deficit is treated as an extra cell with zero observations). Cells are
/// pooled in order until each has expected count at least [`MIN_EXPECTED`].
pub fn chi_square(counts: &[u64], probs: &[f64]) -> ChiSquare {
    assert_eq!(counts.len(), probs.len(), "counts and probabilities differ in length");
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = counts.iter().zip(probs).map(|(&c, &p)| (c as f64, p * nf)).collect();
    let deficit = 1.0 - probs.iter().sum::<f64>();
    if deficit * nf > 1e-9 {
        cells.push((0.0, deficit * nf));
    }
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (o, e) in cells {
        acc = (acc.0 + o, acc.1 + e);
        if acc.1 >= MIN_EXPECTED {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match pooled.last_mut() {
            Some(last) => *last = (last.0 + acc.0, last.1 + acc.1),
            None => pooled.push(acc),
        }
    }
    let statistic: f64 = pooled.iter().filter(|c| c.1 > 0.0).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pooled.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(statistic)
    };
    ChiSquare { statistic, dof, p_value, cells: pooled.len() }
}

/// `(1/2) sum |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n).map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs()).sum::<f64>()
}

/// Median of the means of `blocks` contiguous blocks (robust mean for heavy tails).
pub fn median_of_means(values: &[f64], blocks: usize) -> f64 {
    let blocks = blocks.clamp(1, values.len().max(1));
    let size = values.len() / blocks;
    if size == 0 {
        return f64::NAN;
    }
    let mut means: Vec<f64> = values.chunks_exact(size).take(blocks).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    means.sort_by(f64::total_cmp);
    let m = means.len();
    if m % 2 == 1 {
        means[m / 2]
    } else {
        0.5 * (means[m / 2 - 1] + means[m / 2])
    }
}

/// `P(|Z| <= y)` for a standard normal `Z`.
pub fn half_normal_cdf(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        erf(y / std::f64::consts::SQRT_2)
    }
}

/// Running mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct Welford {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n.max(1) as f64).sqrt()
    }
}

/// Empirical distribution of real samples or of integer-valued samples.
#[derive(Clone, Debug)]
pub enum EmpiricalDistribution {
    Real(Vec<f64>),
    Integer(BTreeMap<i64, u64>),
}

impl EmpiricalDistribution {
    pub fn from_real(mut xs: Vec<f64>) -> Self {
        xs.sort_by(f64::total_cmp);
        EmpiricalDistribution::Real(xs)
    }

    pub fn from_integers(xs: impl IntoIterator<Item = i64>) -> Self {
        let mut m = BTreeMap::new();
        for x in xs {
            *m.entry(x).or_insert(0) += 1;
        }
        EmpiricalDistribution::Integer(m)
    }

    pub fn len(&self) -> u64 {
        match self {
            EmpiricalDistribution::Real(v) => v.len() as u64,
            EmpiricalDistribution::Integer(m) => m.values().sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `F_n(y) = #{x <= y} / n`.
    pub fn cdf(&self, y: f64) -> f64 {
        let n = self.len() as f64;
        match self {
            EmpiricalDistribution::Real(v) => v.partition_point(|&x| x <= y) as f64 / n,
            EmpiricalDistribution::Integer(m) => m.range(..=y.floor() as i64).map(|(_, c)| *c).sum::<u64>() as f64 / n,
        }
    }

    /// Counts at the given integer points (integer samples only).
    pub fn counts_at(&self, points: &[i64]) -> Vec<u64> {
        match self {
            EmpiricalDistribution::Integer(m) => points.iter().map(|p| m.get(p).copied().unwrap_or(0)).collect(),
            EmpiricalDistribution::Real(_) => vec![0; points.len()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn ks_on_uniform_samples() {
        let mut rng = crate::rng::stream(3, "ks", 0);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d < ks_critical_001(xs.len()));
        let bad = ks_statistic(&xs, |x| (x * x).clamp(0.0, 1.0));
        assert!(bad > 0.2);
        assert_eq!(ks_statistic(&[0.5], |x| x), 0.5);
    }

    #[test]
    fn chi_square_pools_small_cells() {
        let r = chi_square(&[50, 50], &[0.5, 0.5]);
        assert_eq!((r.statistic, r.dof), (0.0, 1));
        assert!((r.p_value - 1.0).abs() < 1e-12);
        // expected counts 3, 3, 94: first two cells pool
        let r = chi_square(&[3, 3, 94], &[0.03, 0.03, 0.94]);
        assert_eq!(r.cells, 2);
        let r = chi_square(&[0, 100], &[0.5, 0.5]);
        assert!(r.p_value < 1e-10);
        // probability deficit becomes a cell
        let r = chi_square(&[50, 40], &[0.5, 0.4]);
        assert_eq!(r.cells, 3);
    }

    #[test]
    fn tv_and_mom() {
        assert_eq!(tv_distance(&[0.5, 0.5], &[1.0]), 0.5);
        let mut v = vec![1.0; 99];
        v.push(1e9);
        assert_eq!(median_of_means(&v, 10), 1.0);
    }

    #[test]
    fn half_normal() {
        let v = half_normal_cdf(1.0);
        // statrs erf is good to a few 1e-11 here
        assert!((v - 0.682_689_492_137_085_9).abs() < 1e-10, "{v}");
        assert_eq!(half_normal_cdf(-1.0), 0.0);
    }

    #[test]
    fn welford_merges() {
        let xs: Vec<f64> = (0..100).map(|i| (i * i) as f64).collect();
        let mut a = Welford::default();
        let mut b = Welford::default();
        let mut all = Welford::default();
        for (i, &x) in xs.iter().enumerate() {
            if i < 37 { a.push(x) } else { b.push(x) }
            all.push(x);
        }
        a.merge(&b);
        assert!((a.mean() - all.mean()).abs() < 1e-9);
        assert!((a.variance() - all.variance()).abs() < 1e-6);
    }

    #[test]
    fn empirical_cdfs() {
        let e = EmpiricalDistribution::from_integers([0, 0, 1, 3]);
        assert_eq!(e.cdf(0.0), 0.5);
        assert_eq!(e.cdf(2.5), 0.75);
        assert_eq!(e.counts_at(&[0, 2]), vec![2, 0]);
        let r = EmpiricalDistribution::from_real(vec![0.3, 0.1, 0.2]);
        assert!((r.cdf(0.2) - 2.0 / 3.0).abs() < 1e-15);
    }
}
