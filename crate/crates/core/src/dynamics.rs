//! Unitary single-excitation transport from the eigendecomposition.
//!
//! With `a_n = ⟨φ_n|ψ₀⟩` the amplitudes at time `t` are
//! `ψ_j(t) = Σ_n V_jn a_n e^{−iE_n t}`; batches of times become two real
//! matrix products.

use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::analysis::{growth_exponent, FitError, FitResult, FitWindow};
use crate::geometry::{Configuration, Point};
use crate::spectra::Spectrum;

pub const DEFAULT_T_MIN: f64 = 1e-2;
pub const DEFAULT_T_MAX: f64 = 1e5;
pub const DEFAULT_N_TIMES: usize = 200;
/// Times evaluated per matrix product.
const TIME_CHUNK: usize = 256;

/// The initially excited atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialState {
    pub site: usize,
}

impl InitialState {
    pub fn site(site: usize) -> Self {
        Self { site }
    }

    /// Atom nearest to the centre of the sampling region.
    pub fn center(config: &Configuration) -> Self {
        Self {
            site: center_site(&config.positions, config.centroid()),
        }
    }
}

/// Index of the atom nearest to `origin`; ties go to the lowest index.
pub fn center_site(positions: &[Point], origin: Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, p) in positions.iter().enumerate() {
        let d = sq_dist(p, &origin);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

fn sq_dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// `times` log-spaced points from `t_min` to `t_max`.
pub fn log_time_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    assert!(t_min > 0.0 && t_max > t_min && n >= 2);
    let (a, b) = (t_min.ln(), t_max.ln());
    let mut t: Vec<f64> = (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect();
    t[0] = t_min;
    t[n - 1] = t_max;
    t
}

pub fn default_time_grid() -> Vec<f64> {
    log_time_grid(DEFAULT_T_MIN, DEFAULT_T_MAX, DEFAULT_N_TIMES)
}

/// Site populations and mean square displacement on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSeries {
    pub times: Vec<f64>,
    /// `populations[t][j] = P_j(t)`.
    pub populations: Vec<Vec<f64>>,
    pub msd: Vec<f64>,
}

impl PopulationSeries {
    pub fn norm_defect(&self) -> f64 {
        self.populations
            .iter()
            .map(|p| (p.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_population(&self) -> f64 {
        self.populations
            .iter()
            .flat_map(|p| p.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean populations over all stored times.
    pub fn time_average(&self) -> Vec<f64> {
        let n = self.populations.first().map_or(0, |p| p.len());
        let mut avg = vec![0.0; n];
        for p in &self.populations {
            for (a, x) in avg.iter_mut().zip(p) {
                *a += x;
            }
        }
        let m = self.populations.len() as f64;
        avg.iter_mut().for_each(|a| *a /= m);
        avg
    }

    /// CSV `time,msd` with times multiplied by `time_scale`.
    pub fn write_msd_csv<W: Write>(&self, mut w: W, time_scale: f64) -> std::io::Result<()> {
        writeln!(w, "time,msd")?;
        for (t, m) in self.times.iter().zip(&self.msd) {
            writeln!(w, "{:?},{:?}", t * time_scale, m)?;
        }
        Ok(())
    }

    /// CSV `time,P_0,...,P_{N-1}`.
    pub fn write_populations_csv<W: Write>(&self, mut w: W, time_scale: f64) -> std::io::Result<()> {
        let n = self.populations.first().map_or(0, |p| p.len());
        write!(w, "time")?;
        for j in 0..n {
            write!(w, ",P_{j}")?;
        }
        writeln!(w)?;
        for (t, p) in self.times.iter().zip(&self.populations) {
            write!(w, "{:?}", t * time_scale)?;
            for x in p {
                write!(w, ",{x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `Σ_j |r_j − origin|² P_j`.
pub fn msd(populations: &[f64], positions: &[Point], origin: Point) -> f64 {
    populations
        .iter()
        .zip(positions)
        .map(|(p, r)| p * sq_dist(r, &origin))
        .sum()
}

/// Populations `|ψ_j(t)|²` for every requested time, starting from `ψ₀`
/// expanded in the eigenbasis with coefficients `coeffs`.
pub(crate) fn populations_from_coefficients(spectrum: &Spectrum, coeffs: &[f64], times: &[f64]) -> Vec<Vec<f64>> {
    let n = spectrum.n();
    let mut out = Vec::with_capacity(times.len());
    for chunk in times.chunks(TIME_CHUNK) {
        let m = chunk.len();
        let cos = Mat::from_fn(n, m, |k, t| coeffs[k] * (spectrum.eigenvalues[k] * chunk[t]).cos());
        let sin = Mat::from_fn(n, m, |k, t| -coeffs[k] * (spectrum.eigenvalues[k] * chunk[t]).sin());
        let re = &spectrum.eigenvectors * &cos;
        let im = &spectrum.eigenvectors * &sin;
        for t in 0..m {
            out.push((0..n).map(|j| re[(j, t)].powi(2) + im[(j, t)].powi(2)).collect());
        }
    }
    out
}

/// Exact unitary evolution of a single excitation. The MSD is measured from
/// the initially excited atom.
pub fn evolve_populations(
    spectrum: &Spectrum,
    psi0: InitialState,
    times: &[f64],
    positions: &[Point],
) -> PopulationSeries {
    assert!(psi0.site < spectrum.n(), "initial site out of range");
    assert!(times.iter().all(|&t| t >= 0.0), "times must be non-negative");
    let coeffs: Vec<f64> = (0..spectrum.n()).map(|k| spectrum.eigenvectors[(psi0.site, k)]).collect();
    let populations = populations_from_coefficients(spectrum, &coeffs, times);
    let origin = positions[psi0.site];
    let msd = populations.iter().map(|p| msd(p, positions, origin)).collect();
    PopulationSeries {
        times: times.to_vec(),
        populations,
        msd,
    }
}

/// Infinite-time average of the populations. Levels within a degenerate
/// block are projected jointly.
pub fn diagonal_ensemble(spectrum: &Spectrum, psi0: InitialState) -> Vec<f64> {
    let n = spectrum.n();
    let s = psi0.site;
    assert!(s < n, "initial site out of range");
    let v = &spectrum.eigenvectors;
    let mut p = vec![0.0; n];
    let mut w = vec![0.0; n];
    for block in spectrum.degenerate_blocks() {
        if block.len() == 1 {
            let k = block.start;
            let a2 = v[(s, k)] * v[(s, k)];
            for j in 0..n {
                p[j] += v[(j, k)] * v[(j, k)] * a2;
            }
        } else {
            // w = Π_B |s⟩, contributes |w_j|²
            w.iter_mut().for_each(|x| *x = 0.0);
            for k in block {
                let a = v[(s, k)];
                for j in 0..n {
                    w[j] += v[(j, k)] * a;
                }
            }
            for j in 0..n {
                p[j] += w[j] * w[j];
            }
        }
    }
    p
}

/// Populations averaged over `n_samples` evenly spaced times in `[t0, t1]`.
pub fn time_averaged_populations(
    spectrum: &Spectrum,
    psi0: InitialState,
    t0: f64,
    t1: f64,
    n_samples: usize,
) -> Vec<f64> {
    let dt = (t1 - t0) / n_samples as f64;
    let times: Vec<f64> = (0..n_samples).map(|k| t0 + (k as f64 + 0.5) * dt).collect();
    let coeffs: Vec<f64> = (0..spectrum.n()).map(|k| spectrum.eigenvectors[(psi0.site, k)]).collect();
    let pops = populations_from_coefficients(spectrum, &coeffs, &times);
    let mut avg = vec![0.0; spectrum.n()];
    for p in &pops {
        for (a, x) in avg.iter_mut().zip(p) {
            *a += x;
        }
    }
    avg.iter_mut().for_each(|a| *a /= n_samples as f64);
    avg
}

/// Window spanning one decade from the first time the MSD exceeds `threshold`.
pub fn early_window(series: &PopulationSeries, threshold: f64) -> Option<FitWindow> {
    let k = series.msd.iter().position(|&m| m > threshold)?;
    let t = series.times[k];
    Some(FitWindow::new(t, 10.0 * t))
}

/// Exponent of the initial growth `⟨r²⟩ ∝ t^p` over the first decade after
/// the MSD exceeds `1e-3`.
pub fn ballistic_exponent(series: &PopulationSeries) -> Result<FitResult, FitError> {
    let w = early_window(series, 1e-3).ok_or(FitError::InsufficientData(0))?;
    growth_exponent(&series.times, &series.msd, w)
}
