//! Level-spacing-ratio statistics.
//!
//! The ratio `r_n = min(δ_n, δ_{n−1}) / max(δ_n, δ_{n−1})` of consecutive
//! spacings needs no unfolding of the spectrum. Its distribution is compared
//! with the Poisson form `2/(1+r)²` and the GOE surmise.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::binning::{BinnedSeries, Normalization};

/// `2 ln 2 − 1`.
pub const POISSON_MEAN_RATIO: f64 = 0.386_294_361_119_890_6;
/// Mean ratio of large GOE matrices (reference value; the surmise gives 4 − 2√3).
pub const GOE_LARGE_N_MEAN_RATIO: f64 = 0.5307;
/// Normalization constant of the GOE surmise.
pub const GOE_Z: f64 = 8.0 / 27.0;

#[derive(Debug, Error, PartialEq)]
pub enum LevelStatsError {
    #[error("ratio {0} outside [0, 1]")]
    OutOfDomain(f64),
    #[error("need at least 3 levels, got {0}")]
    TooFewLevels(usize),
    #[error("not enough data for a chi-square test ({0} usable bins)")]
    InsufficientData(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    Poisson,
    Goe,
}

/// Spacing ratios of one spectrum, attributed to the middle level of each
/// consecutive triple.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSet {
    pub ratios: Vec<f64>,
    pub energies: Vec<f64>,
    /// Number of exactly vanishing spacings encountered.
    pub zero_spacings: usize,
}

impl RatioSet {
    pub fn mean(&self) -> f64 {
        self.ratios.iter().sum::<f64>() / self.ratios.len() as f64
    }

    /// Ratios whose attributed energy lies in `[lo, hi]`.
    pub fn in_window(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        self.ratios
            .iter()
            .zip(&self.energies)
            .filter(move |(_, &e)| e >= lo && e <= hi)
            .map(|(&r, _)| r)
    }
}

/// Ratios of consecutive spacings of an ascending spectrum.
pub fn spacing_ratios(eigenvalues: &[f64]) -> Result<RatioSet, LevelStatsError> {
    let n = eigenvalues.len();
    if n < 3 {
        return Err(LevelStatsError::TooFewLevels(n));
    }
    let spacings: Vec<f64> = eigenvalues.windows(2).map(|w| w[1] - w[0]).collect();
    let zero_spacings = spacings.iter().filter(|&&d| d == 0.0).count();
    let mut ratios = Vec::with_capacity(n - 2);
    let mut energies = Vec::with_capacity(n - 2);
    for k in 1..spacings.len() {
        let (a, b) = (spacings[k - 1], spacings[k]);
        let hi = a.max(b);
        ratios.push(if hi > 0.0 { a.min(b) / hi } else { 0.0 });
        energies.push(eigenvalues[k]);
    }
    Ok(RatioSet {
        ratios,
        energies,
        zero_spacings,
    })
}

/// Ratio density of the reference ensembles on `[0, 1]`.
pub fn surmise_pdf(r: f64, ensemble: Ensemble) -> Result<f64, LevelStatsError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(LevelStatsError::OutOfDomain(r));
    }
    Ok(match ensemble {
        Ensemble::Poisson => 2.0 / ((1.0 + r) * (1.0 + r)),
        Ensemble::Goe => {
            let b = 1.0;
            (2.0 / GOE_Z) * (r + r * r).powf(b) / (1.0 + r + r * r).powf(1.0 + 1.5 * b)
        }
    })
}

/// Probability mass of the reference density on `[a, b] ⊂ [0, 1]`.
pub fn surmise_mass(a: f64, b: f64, ensemble: Ensemble) -> Result<f64, LevelStatsError> {
    surmise_pdf(a, ensemble)?;
    surmise_pdf(b, ensemble)?;
    Ok(match ensemble {
        // antiderivative of 2/(1+r)² is −2/(1+r)
        Ensemble::Poisson => 2.0 / (1.0 + a) - 2.0 / (1.0 + b),
        Ensemble::Goe => integrate(|r| surmise_pdf(r, Ensemble::Goe).unwrap(), a, b),
    })
}

/// Mean ratio of the reference density.
pub fn surmise_mean(ensemble: Ensemble) -> f64 {
    match ensemble {
        Ensemble::Poisson => 2.0 * std::f64::consts::LN_2 - 1.0,
        Ensemble::Goe => integrate(|r| r * surmise_pdf(r, Ensemble::Goe).unwrap(), 0.0, 1.0),
    }
}

/// Adaptive Simpson quadrature to ~1e-13 absolute.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, 1e-13, 40)
}

/// Energy-binned mean ratio accumulator.
pub fn lsr_accumulator(bin_edges: Vec<f64>) -> BinnedSeries {
    BinnedSeries::new(bin_edges, Normalization::PerItem)
}

pub fn accumulate_lsr(series: &mut BinnedSeries, ratios: &RatioSet) {
    for (&r, &e) in ratios.ratios.iter().zip(&ratios.energies) {
        series.add(e, r);
    }
    series.end_realization();
}

/// Mean spacing ratio per energy bin over several spectra.
pub fn binned_lsr<'a, I>(ratio_sets: I, bin_edges: Vec<f64>) -> BinnedSeries
where
    I: IntoIterator<Item = &'a RatioSet>,
{
    let mut s = lsr_accumulator(bin_edges);
    for r in ratio_sets {
        accumulate_lsr(&mut s, r);
    }
    s
}

/// Histogram of ratios over `[0, 1]` (ratio 1 lands in the last bin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioHistogram {
    pub counts: Vec<u64>,
    pub sum: f64,
}

impl RatioHistogram {
    pub fn new(n_bins: usize) -> Self {
        Self {
            counts: vec![0; n_bins],
            sum: 0.0,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, r: f64) {
        let nb = self.n_bins();
        let b = ((r * nb as f64) as usize).min(nb - 1);
        self.counts[b] += 1;
        self.sum += r;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.total() as f64
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), crate::binning::MergeError> {
        if self.n_bins() != other.n_bins() {
            return Err(crate::binning::MergeError::BinningMismatch("ratio histogram sizes differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.sum += other.sum;
        Ok(())
    }

    /// Pearson χ² test against a reference density. Adjacent bins are pooled
    /// until each expected count reaches 5.
    pub fn chi_square(&self, ensemble: Ensemble) -> Result<ChiSquareResult, LevelStatsError> {
        let total = self.total() as f64;
        let nb = self.n_bins();
        let width = 1.0 / nb as f64;
        let mut observed = Vec::new();
        let mut expected = Vec::new();
        let (mut o, mut e) = (0.0, 0.0);
        for b in 0..nb {
            o += self.counts[b] as f64;
            e += total * surmise_mass(b as f64 * width, ((b + 1) as f64 * width).min(1.0), ensemble)?;
            if e >= 5.0 {
                observed.push(o);
                expected.push(e);
                o = 0.0;
                e = 0.0;
            }
        }
        if e > 0.0 || o > 0.0 {
            if let (Some(lo), Some(le)) = (observed.last_mut(), expected.last_mut()) {
                *lo += o;
                *le += e;
            }
        }
        if observed.len() < 2 {
            return Err(LevelStatsError::InsufficientData(observed.len()));
        }
        let statistic: f64 = observed
            .iter()
            .zip(&expected)
            .map(|(o, e)| (o - e) * (o - e) / e)
            .sum();
        let dof = observed.len() - 1;
        let p_value = ChiSquared::new(dof as f64)
            .map(|d| 1.0 - d.cdf(statistic))
            .unwrap_or(f64::NAN);
        Ok(ChiSquareResult {
            statistic,
            dof,
            p_value,
        })
    }

    /// CSV `r_bin_center,empirical_density,surmise_poisson,surmise_goe`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r_bin_center,empirical_density,surmise_poisson,surmise_goe")?;
        let nb = self.n_bins() as f64;
        let total = self.total().max(1) as f64;
        for (b, &c) in self.counts.iter().enumerate() {
            let r = (b as f64 + 0.5) / nb;
            writeln!(
                w,
                "{:?},{:?},{:?},{:?}",
                r,
                c as f64 * nb / total,
                surmise_pdf(r, Ensemble::Poisson).unwrap(),
                surmise_pdf(r, Ensemble::Goe).unwrap()
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}
