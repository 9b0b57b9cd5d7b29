//! Radial profiles, curve fits and low-energy diagnostics.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::{BinnedSeries, MergeError, Moments, Normalization};
use crate::coupling::HoppingMatrix;
use crate::geometry::Point;

/// Components smaller than this count as having no sign.
pub const SIGN_ZERO_TOLERANCE: f64 = 1e-10;
/// Minimum number of points for any fit.
pub const MIN_FIT_POINTS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("fit needs at least {MIN_FIT_POINTS} usable points, got {0}")]
    InsufficientData(usize),
    #[error("nonlinear fit did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("invalid fit window [{0}, {1}]")]
    InvalidWindow(f64, f64),
}

/// Closed interval of the independent variable used by a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub lo: f64,
    pub hi: f64,
}

impl FitWindow {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn check(&self) -> Result<(), FitError> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi {
            Ok(())
        } else {
            Err(FitError::InvalidWindow(self.lo, self.hi))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FitModel {
    PowerLaw { exponent: f64, amplitude: f64 },
    StretchedExponential { xi: f64, beta: f64, amplitude: f64 },
    GrowthExponent { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub window: FitWindow,
    pub n_points: usize,
    /// Euclidean norm of the residuals in log space.
    pub residual_norm: f64,
    /// Standard errors in parameter order of the model.
    pub stderrs: Vec<f64>,
}

impl FitResult {
    pub fn exponent(&self) -> f64 {
        match self.model {
            FitModel::PowerLaw { exponent, .. } => exponent,
            FitModel::GrowthExponent { alpha } => alpha,
            FitModel::StretchedExponential { beta, .. } => beta,
        }
    }
}

/// Ordinary least-squares line `y = a + b x`; returns `(a, b, se_a, se_b, rss)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    let s2 = if n > 2.0 { rss / (n - 2.0) } else { f64::NAN };
    let se_b = (s2 / sxx).sqrt();
    let se_a = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    (a, b, se_a, se_b, rss)
}

/// Points of `(x, y)` inside the window with `x > 0`, `y > 0`, in log space.
fn log_points(x: &[f64], y: &[f64], window: &FitWindow) -> (Vec<f64>, Vec<f64>) {
    x.iter()
        .zip(y)
        .filter(|(&u, &v)| window.contains(u) && u > 0.0 && v > 0.0 && v.is_finite())
        .map(|(u, v)| (u.ln(), v.ln()))
        .unzip()
}

/// Slope of `ln y` against `ln x` over the window.
pub fn log_log_slope(x: &[f64], y: &[f64], window: FitWindow) -> Result<FitResult, FitError> {
    window.check()?;
    let (lx, ly) = log_points(x, y, &window);
    if lx.len() < MIN_FIT_POINTS {
        return Err(FitError::InsufficientData(lx.len()));
    }
    let (a, b, se_a, se_b, rss) = line_fit(&lx, &ly);
    Ok(FitResult {
        model: FitModel::PowerLaw {
            exponent: b,
            amplitude: a.exp(),
        },
        window,
        n_points: lx.len(),
        residual_norm: rss.sqrt(),
        stderrs: vec![se_b, se_a],
    })
}

/// Exponent `α` of `⟨r²⟩ ∝ t^α` over a time window.
pub fn growth_exponent(times: &[f64], msd: &[f64], window: FitWindow) -> Result<FitResult, FitError> {
    let mut f = log_log_slope(times, msd, window)?;
    f.model = FitModel::GrowthExponent { alpha: f.exponent() };
    f.stderrs.truncate(1);
    Ok(f)
}

/// Where radial annuli are centred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterMode {
    /// The most populated atom (single eigenstates).
    MaxPopulation,
    /// The centroid of the sampling region (late-time profiles).
    CloudCenter,
}

pub fn profile_center(mode: CenterMode, populations: &[f64], positions: &[Point], cloud_center: Point) -> Point {
    match mode {
        CenterMode::CloudCenter => cloud_center,
        CenterMode::MaxPopulation => {
            let k = populations
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(k, _)| k)
                .unwrap_or(0);
            positions[k]
        }
    }
}

/// Mean population per annulus `[kδr, (k+1)δr)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub r_bin_centers: Vec<f64>,
    /// `None` marks annuli that contain no atom.
    pub densities: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    pub delta_r: f64,
}

impl RadialProfile {
    /// Non-empty bins as `(r, n(r))`.
    pub fn points(&self) -> (Vec<f64>, Vec<f64>) {
        self.r_bin_centers
            .iter()
            .zip(&self.densities)
            .filter_map(|(&r, d)| d.map(|d| (r, d)))
            .unzip()
    }

    /// `Σ n(r)·|K_r|`, equal to the total population.
    pub fn total(&self) -> f64 {
        self.densities
            .iter()
            .zip(&self.counts)
            .map(|(d, &c)| d.unwrap_or(0.0) * c as f64)
            .sum()
    }

    /// Profile from a disorder-averaged series (empty bins stay empty).
    pub fn from_series(series: &BinnedSeries) -> Self {
        let delta_r = series.bin_edges[1] - series.bin_edges[0];
        let values = series.values();
        Self {
            r_bin_centers: series.centers(),
            densities: values
                .iter()
                .zip(&series.counts)
                .map(|(&v, &c)| if c > 0 { Some(v) } else { None })
                .collect(),
            counts: series.counts.iter().map(|&c| c as usize).collect(),
            delta_r,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r_bin_center,density,count")?;
        for ((r, d), c) in self.r_bin_centers.iter().zip(&self.densities).zip(&self.counts) {
            match d {
                Some(d) => writeln!(w, "{r:?},{d:?},{c}")?,
                None => writeln!(w, "{r:?},,{c}")?,
            }
        }
        Ok(())
    }
}

/// Radial density `n(r) = |K_r|⁻¹ Σ_{j∈K_r} P_j` around `center`.
pub fn radial_density(populations: &[f64], positions: &[Point], center: Point, delta_r: f64) -> RadialProfile {
    assert!(delta_r > 0.0, "delta_r must be positive");
    let r: Vec<f64> = positions
        .iter()
        .map(|p| {
            let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .collect();
    let n_bins = r.iter().map(|&x| (x / delta_r) as usize + 1).max().unwrap_or(0);
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&x, &p) in r.iter().zip(populations) {
        let b = (x / delta_r) as usize;
        sums[b] += p;
        counts[b] += 1;
    }
    RadialProfile {
        r_bin_centers: (0..n_bins).map(|k| (k as f64 + 0.5) * delta_r).collect(),
        densities: sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c > 0 { Some(s / c as f64) } else { None })
            .collect(),
        counts,
        delta_r,
    }
}

/// Disorder-averaged radial profile accumulator over `[0, r_max)`.
pub fn profile_accumulator(r_max: f64, delta_r: f64) -> BinnedSeries {
    let n = (r_max / delta_r).ceil().max(1.0) as usize;
    BinnedSeries::uniform(0.0, n as f64 * delta_r, n, Normalization::PerItem)
}

pub fn accumulate_profile(acc: &mut BinnedSeries, profile: &RadialProfile) {
    for (r, d) in profile.r_bin_centers.iter().zip(&profile.densities) {
        if let Some(d) = d {
            acc.add(*r, *d);
        }
    }
    acc.end_realization();
}

/// Power law `n ∝ r^p` by least squares on `ln n` against `ln r`.
pub fn fit_power_law(profile: &RadialProfile, window: FitWindow) -> Result<FitResult, FitError> {
    let (r, n) = profile.points();
    log_log_slope(&r, &n, window)
}

/// Solve the 3×3 system `a x = b` by Gaussian elimination with pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..3 {
            let f = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for c in (0..3).rev() {
        let s: f64 = (c + 1..3).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    Some(x)
}

fn invert3(a: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut inv = [[0.0; 3]; 3];
    for k in 0..3 {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        let col = solve3(a, e)?;
        for i in 0..3 {
            inv[i][k] = col[i];
        }
    }
    Some(inv)
}

/// Stretched exponential `n = A exp[−(r/ξ)^β]` by Levenberg–Marquardt on
/// `ln n`, started from `β = 1` and `ξ` at the window midpoint.
pub fn fit_stretched_exponential(profile: &RadialProfile, window: FitWindow) -> Result<FitResult, FitError> {
    let (r, n) = profile.points();
    fit_stretched_exponential_points(&r, &n, window)
}

pub fn fit_stretched_exponential_points(r: &[f64], n: &[f64], window: FitWindow) -> Result<FitResult, FitError> {
    const MAX_ITER: usize = 500;
    window.check()?;
    let (x, y): (Vec<f64>, Vec<f64>) = r
        .iter()
        .zip(n)
        .filter(|(&u, &v)| window.contains(u) && u > 0.0 && v > 0.0 && v.is_finite())
        .map(|(&u, &v)| (u, v.ln()))
        .unzip();
    if x.len() < MIN_FIT_POINTS {
        return Err(FitError::InsufficientData(x.len()));
    }
    // parameters: (ln A, ln ξ, β)
    let residuals = |p: &[f64; 3]| -> Vec<f64> {
        let xi = p[1].exp();
        x.iter().zip(&y).map(|(&u, &v)| v - (p[0] - (u / xi).powf(p[2]))).collect()
    };
    let rss = |res: &[f64]| res.iter().map(|e| e * e).sum::<f64>();
    let jacobian = |p: &[f64; 3]| -> Vec<[f64; 3]> {
        let xi = p[1].exp();
        x.iter()
            .map(|&u| {
                let s = u / xi;
                let w = s.powf(p[2]);
                let l = if s > 0.0 { s.ln() } else { 0.0 };
                [1.0, p[2] * w, -w * l]
            })
            .collect()
    };
    let mid = 0.5 * (x[0] + x[x.len() - 1]);
    let mut p = [0.0, mid.ln(), 1.0];
    p[0] = x.iter().zip(&y).map(|(&u, &v)| v + u / mid).sum::<f64>() / x.len() as f64;
    let mut res = residuals(&p);
    let mut cost = rss(&res);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let j = jacobian(&p);
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (row, e) in j.iter().zip(&res) {
            for a in 0..3 {
                jtr[a] += row[a] * e;
                for b in 0..3 {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj;
            for a in 0..3 {
                m[a][a] += lambda * jtj[a][a].max(1e-12);
            }
            let Some(step) = solve3(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).max(1e-3)];
            let tres = residuals(&trial);
            let tcost = rss(&tres);
            if tcost.is_finite() && tcost <= cost {
                let rel = (cost - tcost) / cost.max(1e-300);
                let small = step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-12;
                p = trial;
                res = tres;
                cost = tcost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-14 || small || cost < 1e-28 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: at a minimum to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(FitError::NoConvergence(MAX_ITER));
    }
    let dof = x.len().saturating_sub(3).max(1) as f64;
    let s2 = cost / dof;
    let j = jacobian(&p);
    let mut jtj = [[0.0; 3]; 3];
    for row in &j {
        for a in 0..3 {
            for b in 0..3 {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    let xi = p[1].exp();
    let amp = p[0].exp();
    let stderrs = match invert3(jtj) {
        Some(c) => vec![xi * (s2 * c[1][1]).sqrt(), (s2 * c[2][2]).sqrt(), amp * (s2 * c[0][0]).sqrt()],
        None => vec![f64::NAN; 3],
    };
    Ok(FitResult {
        model: FitModel::StretchedExponential {
            xi,
            beta: p[2],
            amplitude: amp,
        },
        window,
        n_points: x.len(),
        residual_norm: cost.sqrt(),
        stderrs,
    })
}

/// `V^mf_j = Σ_i H_ij`, the row sums of the hopping matrix.
pub fn mean_field_potential(h: &HoppingMatrix) -> Vec<f64> {
    let n = h.n();
    (0..n).map(|j| (0..n).map(|i| h.get(i, j)).sum()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SignStructure {
    pub n_positive: usize,
    pub n_negative: usize,
    pub uniform: bool,
}

/// Component sign counts after orienting the largest component positive.
pub fn sign_structure(state: &[f64]) -> SignStructure {
    let lead = state.iter().copied().fold(0.0_f64, |m, c| if c.abs() > m.abs() { c } else { m });
    let orient = if lead < 0.0 { -1.0 } else { 1.0 };
    let mut n_positive = 0;
    let mut n_negative = 0;
    for &c in state {
        let c = c * orient;
        if c > SIGN_ZERO_TOLERANCE {
            n_positive += 1;
        } else if c < -SIGN_ZERO_TOLERANCE {
            n_negative += 1;
        }
    }
    SignStructure {
        n_positive,
        n_negative,
        uniform: n_negative == 0,
    }
}

/// Energy histograms and moments of the `k` lowest eigenvalues, by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedEnergyStats {
    pub histograms: Vec<BinnedSeries>,
    pub moments: Vec<Moments>,
}

impl IndexedEnergyStats {
    pub fn new(k_lowest: usize, bin_edges: Vec<f64>) -> Self {
        Self {
            histograms: vec![BinnedSeries::new(bin_edges, Normalization::PerRealization); k_lowest],
            moments: vec![Moments::default(); k_lowest],
        }
    }

    pub fn k(&self) -> usize {
        self.moments.len()
    }

    /// Record one ascending spectrum. Panics if it has fewer than `k` levels.
    pub fn push(&mut self, eigenvalues: &[f64]) {
        assert!(eigenvalues.len() >= self.k(), "spectrum shorter than k_lowest");
        for (k, &e) in eigenvalues.iter().take(self.k()).enumerate() {
            self.histograms[k].add_realization(&[e]);
            self.moments[k].push(e);
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), MergeError> {
        use crate::binning::Accumulator;
        if self.k() != other.k() {
            return Err(MergeError::BinningMismatch("different k_lowest".into()));
        }
        for (a, b) in self.histograms.iter_mut().zip(&other.histograms) {
            a.merge(b)?;
        }
        for (a, b) in self.moments.iter_mut().zip(&other.moments) {
            a.merge(b)?;
        }
        Ok(())
    }

    /// CSV `index,mean,std,skewness,count`.
    pub fn write_summary_csv<W: Write>(&self, mut w: W, energy_scale: f64) -> std::io::Result<()> {
        writeln!(w, "index,mean,std,skewness,count")?;
        for (k, m) in self.moments.iter().enumerate() {
            writeln!(
                w,
                "{},{:?},{:?},{:?},{}",
                k + 1,
                m.mean() * energy_scale,
                m.std() * energy_scale,
                m.skewness(),
                m.n
            )?;
        }
        Ok(())
    }
}

/// Per-index histograms over a stream of ascending spectra.
pub fn per_index_energy_histograms<'a, I>(spectra: I, k_lowest: usize, bin_edges: Vec<f64>) -> IndexedEnergyStats
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut stats = IndexedEnergyStats::new(k_lowest, bin_edges);
    for s in spectra {
        stats.push(s);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{build_from_positions, ModelParams};

    fn synthetic(f: impl Fn(f64) -> f64, r_max: f64, dr: f64) -> RadialProfile {
        let n = (r_max / dr) as usize;
        let centers: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * dr).collect();
        RadialProfile {
            densities: centers.iter().map(|&r| Some(f(r))).collect(),
            counts: vec![1; n],
            r_bin_centers: centers,
            delta_r: dr,
        }
    }

    #[test]
    fn uniform_populations_give_flat_profile() {
        let pos: Vec<Point> = (0..50).map(|k| [k as f64 * 0.37, (k % 7) as f64, 0.0]).collect();
        let p = vec![1.0 / 50.0; 50];
        let prof = radial_density(&p, &pos, [0.0; 3], 1.0);
        for d in prof.densities.iter().flatten() {
            assert!((d - 0.02).abs() < 1e-15);
        }
        assert!((prof.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn localized_population_fills_first_bin_only() {
        let pos = vec![[0.0; 3], [0.5, 0.0, 0.0], [3.0, 0.0, 0.0]];
        let prof = radial_density(&[1.0, 0.0, 0.0], &pos, [0.0; 3], 1.0);
        assert_eq!(prof.densities[0], Some(0.5));
        assert_eq!(prof.counts[0], 2);
        assert_eq!(prof.densities[1], None);
        assert_eq!(prof.densities[3], Some(0.0));
        let c = profile_center(CenterMode::MaxPopulation, &[0.1, 0.0, 0.9], &pos, [0.0; 3]);
        assert_eq!(c, [3.0, 0.0, 0.0]);
    }

    #[test]
    fn power_law_self_fit() {
        let f = fit_power_law(&synthetic(|r| r.powi(-6), 30.0, 1.0), FitWindow::new(2.0, 25.0)).unwrap();
        assert!((f.exponent() + 6.0).abs() < 1e-6);
        let f = fit_power_law(&synthetic(|_| 0.3, 30.0, 1.0), FitWindow::new(2.0, 25.0)).unwrap();
        assert!(f.exponent().abs() < 1e-6);
        let short = fit_power_law(&synthetic(|_| 0.3, 30.0, 1.0), FitWindow::new(2.0, 4.0));
        assert_eq!(short.unwrap_err(), FitError::InsufficientData(2));
    }

    fn stretched_params(f: &FitResult) -> (f64, f64) {
        match f.model {
            FitModel::StretchedExponential { xi, beta, .. } => (xi, beta),
            _ => unreachable!(),
        }
    }

    #[test]
    fn stretched_exponential_self_fit() {
        let prof = synthetic(|r| (-(r / 3.0).powf(0.5)).exp(), 40.0, 0.5);
        let f = fit_stretched_exponential(&prof, FitWindow::new(0.0, 30.0)).unwrap();
        let (xi, beta) = stretched_params(&f);
        assert!((xi - 3.0).abs() < 0.01 && (beta - 0.5).abs() < 0.01, "{xi} {beta}");
        let prof = synthetic(|r| 0.2 * (-r / 4.0).exp(), 30.0, 1.0);
        let (_, beta) = stretched_params(&fit_stretched_exponential(&prof, FitWindow::new(0.0, 25.0)).unwrap());
        assert!((beta - 1.0).abs() < 0.02);
    }

    #[test]
    fn fits_recover_parameter_grid() {
        for k in 0..10 {
            let p = -1.0 - 0.6 * k as f64;
            let f = fit_power_law(&synthetic(|r| 2.0 * r.powf(p), 40.0, 1.0), FitWindow::new(1.0, 35.0)).unwrap();
            assert!((f.exponent() - p).abs() < 0.01 * p.abs());
            let (xi0, beta0) = (1.5 + 0.5 * k as f64, 0.3 + 0.08 * k as f64);
            let prof = synthetic(|r| 0.1 * (-(r / xi0).powf(beta0)).exp(), 20.0, 0.25);
            let (xi, beta) = stretched_params(&fit_stretched_exponential(&prof, FitWindow::new(0.0, 15.0)).unwrap());
            assert!((xi - xi0).abs() < 0.01 * xi0 && (beta - beta0).abs() < 0.01 * beta0, "{k}: {xi} {beta}");
        }
    }

    #[test]
    fn growth_exponents_of_exact_series() {
        let t: Vec<f64> = (0..40).map(|k| 10f64.powf(-1.0 + 0.1 * k as f64)).collect();
        let w = FitWindow::new(0.1, 1e3);
        let ballistic: Vec<f64> = t.iter().map(|x| x * x).collect();
        assert!((growth_exponent(&t, &ballistic, w).unwrap().exponent() - 2.0).abs() < 1e-6);
        assert!((growth_exponent(&t, &t, w).unwrap().exponent() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mean_field_examples() {
        let p = ModelParams::default();
        let h = build_from_positions(&[[0.0; 3], [1.0, 0.0, 0.0]], &p).unwrap();
        assert_eq!(mean_field_potential(&h), vec![-1.0, -1.0]);
        let tri = [[0.0; 3], [1.0, 0.0, 0.0], [0.5, 0.75f64.sqrt(), 0.0]];
        let h = build_from_positions(&tri, &p).unwrap();
        for v in mean_field_potential(&h) {
            assert!((v + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_structure_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(
            sign_structure(&[s, -s]),
            SignStructure { n_positive: 1, n_negative: 1, uniform: false }
        );
        let flipped = sign_structure(&[-0.6, -0.8, 1e-12]);
        assert_eq!(flipped, SignStructure { n_positive: 2, n_negative: 0, uniform: true });
    }

    #[test]
    fn repeated_spectrum_has_zero_width() {
        let spec = [-2.0, -1.5, 0.3, 1.0];
        let spectra: Vec<&[f64]> = vec![&spec; 20];
        let stats = per_index_energy_histograms(spectra, 3, crate::binning::uniform_edges(-4.0, 4.0, 80));
        for (k, m) in stats.moments.iter().enumerate() {
            assert_eq!(m.std(), 0.0);
            assert!((m.mean() - spec[k]).abs() < 1e-14);
            assert_eq!(stats.histograms[k].counts.iter().filter(|&&c| c > 0).count(), 1);
        }
    }
}
