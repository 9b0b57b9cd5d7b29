//! Mergeable binned accumulators.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MergeError {
    #[error("binning mismatch: {0}")]
    BinningMismatch(String),
}

/// Accumulators that combine associatively and commutatively.
pub trait Accumulator {
    fn merge(&mut self, other: &Self) -> Result<(), MergeError>;
}

/// Combine two accumulators without mutating either.
pub fn merge<A: Accumulator + Clone>(a: &A, b: &A) -> Result<A, MergeError> {
    let mut out = a.clone();
    out.merge(b)?;
    Ok(out)
}

/// How the per-bin value is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Mean of the values of all items that fell in the bin.
    PerItem,
    /// Number of items per realization (histograms such as the DOS).
    PerRealization,
}

/// Histogram-style accumulator over half-open bins `[e_i, e_{i+1})`.
///
/// For `PerItem` series `sums`/`sq_sums` hold the item values; for
/// `PerRealization` series they hold the per-realization bin counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSeries {
    pub bin_edges: Vec<f64>,
    pub normalization: Normalization,
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
    pub sq_sums: Vec<f64>,
    pub underflow: u64,
    pub overflow: u64,
    pub realizations: u64,
}

impl BinnedSeries {
    pub fn new(bin_edges: Vec<f64>, normalization: Normalization) -> Self {
        assert!(bin_edges.len() >= 2, "need at least one bin");
        assert!(
            bin_edges.windows(2).all(|w| w[0] < w[1]),
            "bin edges must be strictly increasing"
        );
        let n = bin_edges.len() - 1;
        Self {
            bin_edges,
            normalization,
            counts: vec![0; n],
            sums: vec![0.0; n],
            sq_sums: vec![0.0; n],
            underflow: 0,
            overflow: 0,
            realizations: 0,
        }
    }

    pub fn uniform(lo: f64, hi: f64, n_bins: usize, normalization: Normalization) -> Self {
        Self::new(uniform_edges(lo, hi, n_bins), normalization)
    }

    /// Same binning, no data.
    pub fn empty_like(&self) -> Self {
        Self::new(self.bin_edges.clone(), self.normalization)
    }

    pub fn n_bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Bin index of `x`, or `Err(true)` for overflow / `Err(false)` for underflow.
    pub fn locate(&self, x: f64) -> Result<usize, bool> {
        let edges = &self.bin_edges;
        if x.is_nan() || x >= edges[edges.len() - 1] {
            return Err(true);
        }
        if x < edges[0] {
            return Err(false);
        }
        Ok(edges.partition_point(|&e| e <= x) - 1)
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        self.locate(x).ok()
    }

    /// Record one item at position `x` with observable `value`.
    pub fn add(&mut self, x: f64, value: f64) {
        match self.locate(x) {
            Ok(b) => {
                self.counts[b] += 1;
                self.sums[b] += value;
                self.sq_sums[b] += value * value;
            }
            Err(true) => self.overflow += 1,
            Err(false) => self.underflow += 1,
        }
    }

    /// Close a realization of a `PerItem` series.
    pub fn end_realization(&mut self) {
        self.realizations += 1;
    }

    /// Histogram one realization's positions (`PerRealization` series).
    pub fn add_realization(&mut self, xs: &[f64]) {
        let mut local = vec![0_u64; self.n_bins()];
        for &x in xs {
            match self.locate(x) {
                Ok(b) => local[b] += 1,
                Err(true) => self.overflow += 1,
                Err(false) => self.underflow += 1,
            }
        }
        for (b, &c) in local.iter().enumerate() {
            self.counts[b] += c;
            let c = c as f64;
            self.sums[b] += c;
            self.sq_sums[b] += c * c;
        }
        self.realizations += 1;
    }

    fn samples(&self, b: usize) -> f64 {
        match self.normalization {
            Normalization::PerItem => self.counts[b] as f64,
            Normalization::PerRealization => self.realizations as f64,
        }
    }

    /// Per-bin means (`NaN` for bins without samples).
    pub fn values(&self) -> Vec<f64> {
        (0..self.n_bins())
            .map(|b| {
                let n = self.samples(b);
                if n > 0.0 {
                    self.sums[b] / n
                } else {
                    f64::NAN
                }
            })
            .collect()
    }

    /// Standard error of each bin mean (`NaN` with fewer than two samples).
    pub fn stderrs(&self) -> Vec<f64> {
        (0..self.n_bins())
            .map(|b| {
                let n = self.samples(b);
                if n < 2.0 {
                    return f64::NAN;
                }
                (sample_variance(n, self.sums[b], self.sq_sums[b]) / n).sqrt()
            })
            .collect()
    }

    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.bin_of(x).map(|b| self.values()[b])
    }

    /// Mean over all items in bins whose centers lie in `[lo, hi]` (`PerItem`).
    pub fn pooled_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let (mut s, mut n) = (0.0, 0_u64);
        for (b, c) in self.centers().into_iter().enumerate() {
            if c >= lo && c <= hi {
                s += self.sums[b];
                n += self.counts[b];
            }
        }
        (n > 0).then(|| s / n as f64)
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV with columns `bin_center,mean,stderr,count`.
    pub fn write_csv<W: Write>(&self, mut w: W, x_scale: f64, value_scale: f64) -> std::io::Result<()> {
        writeln!(w, "bin_center,mean,stderr,count")?;
        let (vals, errs) = (self.values(), self.stderrs());
        for (b, c) in self.centers().into_iter().enumerate() {
            writeln!(
                w,
                "{:?},{:?},{:?},{}",
                c * x_scale,
                vals[b] * value_scale,
                errs[b] * value_scale,
                self.counts[b]
            )?;
        }
        Ok(())
    }
}

impl Accumulator for BinnedSeries {
    fn merge(&mut self, other: &Self) -> Result<(), MergeError> {
        if self.bin_edges != other.bin_edges {
            return Err(MergeError::BinningMismatch("bin edges differ".into()));
        }
        if self.normalization != other.normalization {
            return Err(MergeError::BinningMismatch("normalizations differ".into()));
        }
        for b in 0..self.n_bins() {
            self.counts[b] += other.counts[b];
            self.sums[b] += other.sums[b];
            self.sq_sums[b] += other.sq_sums[b];
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        self.realizations += other.realizations;
        Ok(())
    }
}

/// Sample variance from running sums. Differences below the rounding floor
/// of the accumulated sum of squares are reported as exactly zero.
pub fn sample_variance(n: f64, sum: f64, sum_sq: f64) -> f64 {
    if n < 2.0 {
        return f64::NAN;
    }
    let mean = sum / n;
    let diff = sum_sq - n * mean * mean;
    if diff <= 4.0 * n * f64::EPSILON * sum_sq {
        return 0.0;
    }
    diff / (n - 1.0)
}

pub fn uniform_edges(lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
    assert!(n_bins >= 1 && hi > lo);
    let w = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..=n_bins).map(|i| lo + w * i as f64).collect();
    edges[n_bins] = hi;
    edges
}

/// Mean/variance accumulator over realizations (mergeable).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub sum_cube: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
        self.sum_cube += x * x * x;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Sample variance.
    pub fn variance(&self) -> f64 {
        sample_variance(self.n as f64, self.sum, self.sum_sq)
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Population skewness `m3 / m2^{3/2}`.
    pub fn skewness(&self) -> f64 {
        let n = self.n as f64;
        let m = self.mean();
        let m2 = (self.sum_sq / n - m * m).max(0.0);
        let m3 = self.sum_cube / n - 3.0 * m * self.sum_sq / n + 2.0 * m * m * m;
        if m2 == 0.0 {
            0.0
        } else {
            m3 / m2.powf(1.5)
        }
    }
}

impl Accumulator for Moments {
    fn merge(&mut self, other: &Self) -> Result<(), MergeError> {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.sum_cube += other.sum_cube;
        Ok(())
    }
}

/// Pointwise mean curve over realizations on a fixed abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveAccumulator {
    pub x: Vec<f64>,
    pub sums: Vec<f64>,
    pub sq_sums: Vec<f64>,
    pub realizations: u64,
}

impl CurveAccumulator {
    pub fn new(x: Vec<f64>) -> Self {
        let n = x.len();
        Self {
            x,
            sums: vec![0.0; n],
            sq_sums: vec![0.0; n],
            realizations: 0,
        }
    }

    pub fn push(&mut self, y: &[f64]) {
        assert_eq!(y.len(), self.x.len());
        for (k, &v) in y.iter().enumerate() {
            self.sums[k] += v;
            self.sq_sums[k] += v * v;
        }
        self.realizations += 1;
    }

    pub fn mean(&self) -> Vec<f64> {
        let r = self.realizations as f64;
        self.sums.iter().map(|s| s / r).collect()
    }

    pub fn stderr(&self) -> Vec<f64> {
        let r = self.realizations as f64;
        self.sums
            .iter()
            .zip(&self.sq_sums)
            .map(|(s, q)| {
                if r < 2.0 {
                    return f64::NAN;
                }
                (sample_variance(r, *s, *q) / r).sqrt()
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, x_name: &str, x_scale: f64) -> std::io::Result<()> {
        writeln!(w, "{x_name},mean,stderr")?;
        let (m, e) = (self.mean(), self.stderr());
        for k in 0..self.x.len() {
            writeln!(w, "{:?},{:?},{:?}", self.x[k] * x_scale, m[k], e[k])?;
        }
        Ok(())
    }
}

impl Accumulator for CurveAccumulator {
    fn merge(&mut self, other: &Self) -> Result<(), MergeError> {
        if self.x != other.x {
            return Err(MergeError::BinningMismatch("curve abscissae differ".into()));
        }
        for k in 0..self.x.len() {
            self.sums[k] += other.sums[k];
            self.sq_sums[k] += other.sq_sums[k];
        }
        self.realizations += other.realizations;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_open_bins_and_overflow() {
        let mut s = BinnedSeries::new(vec![-2.0, 0.0, 2.0], Normalization::PerItem);
        s.add(-2.0, 1.0);
        s.add(0.0, 3.0);
        s.add(2.0, 5.0);
        s.add(-3.0, 5.0);
        assert_eq!(s.counts, vec![1, 1]);
        assert_eq!(s.overflow, 1);
        assert_eq!(s.underflow, 1);
    }

    #[test]
    fn per_realization_histogram() {
        let mut s = BinnedSeries::new(vec![-2.0, 0.0, 2.0], Normalization::PerRealization);
        s.add_realization(&[-1.0, 1.0]);
        s.add_realization(&[-1.0, -0.5, 3.0]);
        assert_eq!(s.counts, vec![3, 1]);
        assert_eq!(s.values(), vec![1.5, 0.5]);
        assert_eq!(s.overflow, 1);
    }

    #[test]
    fn constant_input_has_zero_stderr() {
        let mut s = BinnedSeries::uniform(0.0, 1.0, 4, Normalization::PerItem);
        for k in 0..1000 {
            s.add((k % 4) as f64 * 0.25 + 0.1, 0.37);
        }
        for e in s.stderrs() {
            assert!(e.abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_binning_refuses_merge() {
        let mut a = BinnedSeries::uniform(0.0, 1.0, 4, Normalization::PerItem);
        let b = BinnedSeries::uniform(0.0, 1.0, 5, Normalization::PerItem);
        assert!(a.merge(&b).is_err());
        let c = BinnedSeries::uniform(0.0, 1.0, 4, Normalization::PerRealization);
        assert!(a.merge(&c).is_err());
    }

    #[test]
    fn skewness_of_symmetric_data_is_zero() {
        let mut m = Moments::default();
        for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            m.push(x);
        }
        assert!(m.skewness().abs() < 1e-15);
        assert!((m.variance() - 2.5).abs() < 1e-15);
    }

    fn series_from(items: &[(f64, f64)]) -> BinnedSeries {
        let mut s = BinnedSeries::uniform(-1.0, 1.0, 8, Normalization::PerItem);
        for &(x, v) in items {
            s.add(x, v);
        }
        s.end_realization();
        s
    }

    // Integer-valued items keep the sums exact, so associativity can be
    // checked with equality.
    fn items() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-120i32..120, -50i32..50), 0..40)
            .prop_map(|v| v.into_iter().map(|(x, y)| (x as f64 / 100.0, y as f64)).collect())
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(a in items(), b in items(), c in items()) {
            let (sa, sb, sc) = (series_from(&a), series_from(&b), series_from(&c));
            prop_assert_eq!(merge(&sa, &sb).unwrap(), merge(&sb, &sa).unwrap());
            let left = merge(&merge(&sa, &sb).unwrap(), &sc).unwrap();
            let right = merge(&sa, &merge(&sb, &sc).unwrap()).unwrap();
            prop_assert_eq!(left, right);
            let empty = sa.empty_like();
            prop_assert_eq!(merge(&sa, &empty).unwrap(), sa.clone());
        }
    }
}
