//! Walker alias table drawing one `u64` per sample.
//!
//! The upper 32 bits pick a column and the lower 32 bits decide between the
//! column and its alias, so a step of a lattice walk costs a single generator
//! call. Column selection uses a multiply-shift reduction whose bias is below
//! `2^-32` per column.

use rand::Rng;

#[derive(Clone, Debug)]
pub struct AliasTable {
    threshold: Vec<u64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Builds the table from nonnegative weights (not necessarily normalized).
    ///
    /// Returns `None` for an empty input, a negative or non-finite weight, or
    /// zero total weight.
    pub fn new(weights: &[f64]) -> Option<Self> {
        let n = weights.len();
        if n == 0 || n > u32::MAX as usize || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return None;
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut prob = vec![1.0; n];
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        let full = 1u64 << 32;
        let threshold = prob
            .iter()
            .map(|&p| if p >= 1.0 { full } else { (p * full as f64).round() as u64 })
            .collect();
        Some(AliasTable { threshold, alias })
    }

    pub fn len(&self) -> usize {
        self.alias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alias.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.next_u64();
        let col = (((u >> 32) * self.alias.len() as u64) >> 32) as usize;
        if (u & 0xffff_ffff) < self.threshold[col] {
            col
        } else {
            self.alias[col] as usize
        }
    }

    /// Draw from 32 random bits: the column is the integer part of `u n / 2^32`
    /// and the fractional part is the acceptance variate. Coarser than
    /// [`AliasTable::sample`] by a factor `n` (still far below `1e-8` for small
    /// tables) but twice as cheap in generator output.
    #[inline]
    pub fn sample_u32(&self, u: u32) -> usize {
        let x = u as u64 * self.alias.len() as u64;
        let col = (x >> 32) as usize;
        if (x & 0xffff_ffff) < self.threshold[col] {
            col
        } else {
            self.alias[col] as usize
        }
    }

    /// Exact probability the table assigns to each index (up to the 2^-32 grid).
    pub fn implied_probabilities(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut p = vec![0.0; self.len()];
        for (col, (&t, &a)) in self.threshold.iter().zip(&self.alias).enumerate() {
            let keep = t as f64 / (1u64 << 32) as f64;
            p[col] += keep / n;
            p[a as usize] += (1.0 - keep) / n;
        }
        p
    }
}
