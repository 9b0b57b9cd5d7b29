//! Single-excitation dynamics with site-local dephasing.
//!
//! The master equation `dρ/dt = −i[H,ρ] − γ(ρ − diag ρ)` is integrated with
//! an adaptive Dormand–Prince 5(4) pair. Writing `ρ = A + iB` with `A`
//! symmetric and `B` antisymmetric, and `H` real symmetric,
//!
//! ```text
//! dA/dt =  (HB + (HB)ᵀ) − γ offdiag(A)
//! dB/dt = −(HA − (HA)ᵀ) − γ offdiag(B)
//! ```
//!
//! so each right-hand side costs two real matrix products.
//!
//! For large systems and long times the same master equation is unravelled
//! into quantum-jump trajectories: the jump rate `Σ_k γ|ψ_k|² = γ` does not
//! depend on the state, and a jump collapses the excitation onto site `k`
//! with probability `|ψ_k|²`. Between jumps the evolution is exact.

use faer::{Mat, MatRef, Side};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{growth_exponent, FitError, FitResult, FitWindow};
use crate::coupling::HoppingMatrix;
use crate::dynamics::{msd, PopulationSeries};
use crate::geometry::Point;
use crate::rng::SimRng;
use crate::spectra::Spectrum;

pub const DEFAULT_RTOL: f64 = 1e-8;
/// Absolute floor of the error scale, relative to the unit trace.
pub const DEFAULT_ATOL: f64 = 1e-12;
/// Most negative eigenvalue tolerated at a positivity check.
pub const POSITIVITY_TOLERANCE: f64 = 1e-6;
const HERMITICITY_TOLERANCE: f64 = 1e-10;
const TRACE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum DephasingError {
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("fit window holds {0} samples, need at least 5")]
    WindowTooNarrow(usize),
    #[error("MSD must be positive inside the fit window")]
    NonPositiveMsd,
}

/// Hermitian density matrix `ρ = re + i·im`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub re: Mat<f64>,
    pub im: Mat<f64>,
}

impl DensityMatrix {
    /// `|k⟩⟨k|`.
    pub fn site(n: usize, k: usize) -> Self {
        let mut re = Mat::zeros(n, n);
        re[(k, k)] = 1.0;
        Self { re, im: Mat::zeros(n, n) }
    }

    /// `|ψ⟩⟨ψ|` for `ψ = re + i·im`.
    pub fn pure(psi_re: &[f64], psi_im: &[f64]) -> Self {
        let n = psi_re.len();
        Self {
            re: Mat::from_fn(n, n, |i, j| psi_re[i] * psi_re[j] + psi_im[i] * psi_im[j]),
            im: Mat::from_fn(n, n, |i, j| psi_im[i] * psi_re[j] - psi_re[i] * psi_im[j]),
        }
    }

    pub fn n(&self) -> usize {
        self.re.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.re[(i, i)]).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.re[(i, i)]).collect()
    }

    /// `tr ρ² = Σ_ij |ρ_ij|²` for Hermitian `ρ`.
    pub fn purity(&self) -> f64 {
        let n = self.n();
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                s += self.re[(i, j)].powi(2) + self.im[(i, j)].powi(2);
            }
        }
        s
    }

    /// `max |ρ − ρ†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0_f64;
        for j in 0..n {
            for i in 0..=j {
                worst = worst
                    .max((self.re[(i, j)] - self.re[(j, i)]).abs())
                    .max((self.im[(i, j)] + self.im[(j, i)]).abs());
            }
        }
        worst
    }

    /// Smallest eigenvalue, from the real embedding `[[re, −im], [im, re]]`
    /// whose spectrum is that of `ρ` with every level doubled.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.n();
        let m = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => self.re[(i, j)],
            (true, false) => -self.im[(i, j - n)],
            (false, true) => self.im[(i - n, j)],
            (false, false) => self.re[(i - n, j - n)],
        });
        m.self_adjoint_eigenvalues(Side::Lower)
            .map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::NAN)
    }

    pub fn validate(&self) -> Result<(), DephasingError> {
        let n = self.n();
        if self.re.ncols() != n || self.im.nrows() != n || self.im.ncols() != n {
            return Err(DephasingError::InvalidState("shape mismatch".into()));
        }
        let h = self.hermiticity_defect();
        if h > HERMITICITY_TOLERANCE {
            return Err(DephasingError::InvalidState(format!("not Hermitian (defect {h:e})")));
        }
        let t = self.trace();
        if (t - 1.0).abs() > TRACE_TOLERANCE {
            return Err(DephasingError::InvalidState(format!("trace {t} != 1")));
        }
        let m = self.min_eigenvalue();
        if m < -POSITIVITY_TOLERANCE {
            return Err(DephasingError::InvalidState(format!("negative eigenvalue {m:e}")));
        }
        Ok(())
    }

    fn symmetrize(&mut self) {
        let n = self.n();
        for j in 0..n {
            for i in 0..j {
                let a = 0.5 * (self.re[(i, j)] + self.re[(j, i)]);
                self.re[(i, j)] = a;
                self.re[(j, i)] = a;
                let b = 0.5 * (self.im[(i, j)] - self.im[(j, i)]);
                self.im[(i, j)] = b;
                self.im[(j, i)] = -b;
            }
            self.im[(j, j)] = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingParams {
    /// Dephasing rate in internal units.
    pub gamma: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step; the default bound is `0.1/(‖H‖₂ + γ)`.
    pub max_step: Option<f64>,
    /// Number of output times at which positivity is checked.
    pub positivity_checks: usize,
    pub max_steps: u64,
}

impl DephasingParams {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            max_step: None,
            positivity_checks: 4,
            max_steps: 50_000_000,
        }
    }

    pub fn validate(&self) -> Result<(), DephasingError> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(DephasingError::InvalidParams(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.rtol > 0.0 && self.atol >= 0.0) {
            return Err(DephasingError::InvalidParams("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LindbladDiagnostics {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    /// `tr ρ` at each output time.
    pub traces: Vec<f64>,
    /// `tr ρ²` at each output time.
    pub purities: Vec<f64>,
    /// Largest Hermiticity defect seen before symmetrization.
    pub max_hermiticity_defect: f64,
    /// `(time, smallest eigenvalue)` at the positivity checks.
    pub positivity: Vec<(f64, f64)>,
}

impl LindbladDiagnostics {
    pub fn max_trace_drift(&self) -> f64 {
        self.traces.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct LindbladRun {
    pub series: PopulationSeries,
    pub diagnostics: LindbladDiagnostics,
    pub final_state: DensityMatrix,
}

// Dormand–Prince 5(4) tableau (the system is autonomous, so no nodes).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// State `[A | B]` stored column-major, each block `n × n`.
struct Rhs<'a> {
    h: MatRef<'a, f64>,
    n: usize,
    gamma: f64,
}

impl Rhs<'_> {
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let nn = n * n;
        let a = MatRef::from_column_major_slice(&y[..nn], n, n);
        let b = MatRef::from_column_major_slice(&y[nn..], n, n);
        let ha = self.h * a;
        let hb = self.h * b;
        let g = self.gamma;
        let (da, db) = dy.split_at_mut(nn);
        for j in 0..n {
            for i in 0..n {
                let k = i + j * n;
                if i == j {
                    da[k] = 2.0 * hb[(i, i)];
                    db[k] = 0.0;
                } else {
                    da[k] = hb[(i, j)] + hb[(j, i)] - g * y[k];
                    db[k] = -(ha[(i, j)] - ha[(j, i)]) - g * y[nn + k];
                }
            }
        }
    }
}

fn pack(rho: &DensityMatrix) -> Vec<f64> {
    let n = rho.n();
    let mut y = Vec::with_capacity(2 * n * n);
    for m in [&rho.re, &rho.im] {
        for j in 0..n {
            for i in 0..n {
                y.push(m[(i, j)]);
            }
        }
    }
    y
}

fn unpack(y: &[f64], n: usize) -> DensityMatrix {
    let nn = n * n;
    DensityMatrix {
        re: Mat::from_fn(n, n, |i, j| y[i + j * n]),
        im: Mat::from_fn(n, n, |i, j| y[nn + i + j * n]),
    }
}

fn packed_hermiticity_defect(y: &[f64], n: usize) -> f64 {
    let nn = n * n;
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            let (a, b) = (i + j * n, j + i * n);
            worst = worst.max((y[a] - y[b]).abs()).max((y[nn + a] + y[nn + b]).abs());
        }
    }
    worst
}

fn spectral_norm(h: &HoppingMatrix) -> f64 {
    if h.n() == 0 {
        return 0.0;
    }
    h.as_mat()
        .self_adjoint_eigenvalues(Side::Lower)
        .map(|v| v.iter().fold(0.0_f64, |m, e| m.max(e.abs())))
        .unwrap_or_else(|_| h.norm_bound())
}

/// Integrate the dephased master equation and report populations and MSD
/// (about `origin`) at the requested times.
pub fn evolve_lindblad(
    h: &HoppingMatrix,
    rho0: &DensityMatrix,
    params: &DephasingParams,
    times: &[f64],
    positions: &[Point],
    origin: Point,
) -> Result<LindbladRun, DephasingError> {
    params.validate()?;
    rho0.validate()?;
    let n = h.n();
    if rho0.n() != n || positions.len() != n {
        return Err(DephasingError::InvalidState("dimension mismatch with H".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(DephasingError::InvalidParams("times must be ascending and non-negative".into()));
    }
    let bound = 0.1 / (spectral_norm(h) + params.gamma).max(1e-300);
    let h_max = params.max_step.map_or(bound, |m| m.min(bound));
    let rhs = Rhs {
        h: h.as_mat().as_ref(),
        n,
        gamma: params.gamma,
    };
    let len = 2 * n * n;
    let mut y = pack(rho0);
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; len]; 7];
    let mut tmp = vec![0.0; len];
    let mut y_new = vec![0.0; len];
    let mut t = 0.0;
    let mut step = h_max.min(1e-3 / (1.0 + spectral_norm(h)));
    let mut diag = LindbladDiagnostics {
        accepted_steps: 0,
        rejected_steps: 0,
        traces: Vec::with_capacity(times.len()),
        purities: Vec::with_capacity(times.len()),
        max_hermiticity_defect: 0.0,
        positivity: Vec::new(),
    };
    let check_every = if params.positivity_checks == 0 {
        usize::MAX
    } else {
        times.len().div_ceil(params.positivity_checks).max(1)
    };
    let mut populations = Vec::with_capacity(times.len());
    let mut msds = Vec::with_capacity(times.len());
    rhs.eval(&y, &mut k[0]);
    for (out_idx, &t_out) in times.iter().enumerate() {
        while t < t_out {
            if diag.accepted_steps + diag.rejected_steps >= params.max_steps {
                return Err(DephasingError::IntegrationFailure {
                    t,
                    reason: format!("step budget of {} exhausted", params.max_steps),
                });
            }
            let dt = step.min(h_max).min(t_out - t);
            let clipped = dt < step.min(h_max);
            for s in 1..7 {
                for (idx, v) in tmp.iter_mut().enumerate() {
                    let mut acc = y[idx];
                    for (r, kr) in k.iter().enumerate().take(s) {
                        let a = A[s][r];
                        if a != 0.0 {
                            acc += dt * a * kr[idx];
                        }
                    }
                    *v = acc;
                }
                if s == 6 {
                    y_new.copy_from_slice(&tmp);
                }
                let (_, tail) = k.split_at_mut(s);
                rhs.eval(&tmp, &mut tail[0]);
            }
            let mut err = 0.0_f64;
            for idx in 0..len {
                let mut e = 0.0;
                for (r, kr) in k.iter().enumerate() {
                    e += E[r] * kr[idx];
                }
                let scale = params.atol + params.rtol * y[idx].abs().max(y_new[idx].abs());
                err = err.max((dt * e).abs() / scale);
            }
            if !err.is_finite() {
                return Err(DephasingError::IntegrationFailure {
                    t,
                    reason: "non-finite error estimate".into(),
                });
            }
            if err <= 1.0 {
                t = if dt == t_out - t { t_out } else { t + dt };
                std::mem::swap(&mut y, &mut y_new);
                let defect = packed_hermiticity_defect(&y, n);
                diag.max_hermiticity_defect = diag.max_hermiticity_defect.max(defect);
                if defect > 0.0 {
                    let mut rho = unpack(&y, n);
                    rho.symmetrize();
                    y = pack(&rho);
                    rhs.eval(&y, &mut k[0]);
                } else {
                    // first same as last
                    k.swap(0, 6);
                }
                diag.accepted_steps += 1;
            } else {
                diag.rejected_steps += 1;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            let proposed = (dt * factor).min(h_max);
            // a step shortened to land on an output time says nothing about the scale
            step = if clipped && err <= 1.0 { step.max(proposed) } else { proposed };
            if step < 1e-14 * (1.0 + t) {
                return Err(DephasingError::IntegrationFailure {
                    t,
                    reason: "step size underflow".into(),
                });
            }
        }
        let rho = unpack(&y, n);
        let p = rho.populations();
        diag.traces.push(rho.trace());
        diag.purities.push(rho.purity());
        if params.positivity_checks > 0 && (out_idx % check_every == check_every - 1 || out_idx + 1 == times.len()) {
            let m = rho.min_eigenvalue();
            diag.positivity.push((t_out, m));
            if m < -POSITIVITY_TOLERANCE {
                return Err(DephasingError::IntegrationFailure {
                    t: t_out,
                    reason: format!("positivity lost (eigenvalue {m:e}); tighten the tolerance"),
                });
            }
        }
        msds.push(msd(&p, positions, origin));
        populations.push(p);
    }
    Ok(LindbladRun {
        series: PopulationSeries {
            times: times.to_vec(),
            populations,
            msd: msds,
        },
        diagnostics: diag,
        final_state: unpack(&y, n),
    })
}

/// Trajectory-averaged populations with their standard errors.
#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub series: PopulationSeries,
    /// Standard error of each population entry.
    pub stderr: Vec<Vec<f64>>,
    /// Standard error of the MSD.
    pub msd_stderr: Vec<f64>,
    pub n_trajectories: usize,
    pub mean_jumps: f64,
}

/// Amplitudes at time `t` after the excitation sat on `site`.
fn propagate_site(spectrum: &Spectrum, site: usize, t: f64, re: &mut [f64], im: &mut [f64], cos: &mut [f64], sin: &mut [f64]) {
    let v = &spectrum.eigenvectors;
    let n = spectrum.n();
    for k in 0..n {
        let a = v[(site, k)];
        let (s, c) = (spectrum.eigenvalues[k] * t).sin_cos();
        cos[k] = a * c;
        sin[k] = -a * s;
    }
    re.iter_mut().for_each(|x| *x = 0.0);
    im.iter_mut().for_each(|x| *x = 0.0);
    for k in 0..n {
        let col = crate::spectra::column(v, k);
        let (c, s) = (cos[k], sin[k]);
        for j in 0..n {
            re[j] += col[j] * c;
            im[j] += col[j] * s;
        }
    }
}

/// Quantum-jump unravelling of the dephased master equation, starting from
/// `|start⟩`. Populations are the exact `|ψ_j(t)|²` of each trajectory,
/// averaged over trajectories.
pub fn evolve_trajectories(
    spectrum: &Spectrum,
    start: usize,
    gamma: f64,
    times: &[f64],
    positions: &[Point],
    origin: Point,
    n_trajectories: usize,
    rng: &mut SimRng,
) -> Result<TrajectoryRun, DephasingError> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(DephasingError::InvalidParams(format!("gamma must be >= 0, got {gamma}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(DephasingError::InvalidParams("times must be ascending".into()));
    }
    if n_trajectories == 0 {
        return Err(DephasingError::InvalidParams("need at least one trajectory".into()));
    }
    let n = spectrum.n();
    let nt = times.len();
    let mut sum = vec![vec![0.0; n]; nt];
    let mut sum_sq = vec![vec![0.0; n]; nt];
    let mut msd_sum = vec![0.0; nt];
    let mut msd_sq = vec![0.0; nt];
    let (mut re, mut im, mut cos, mut sin) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let waiting = (gamma > 0.0).then(|| Exp::new(gamma).expect("positive rate"));
    let mut jumps = 0u64;
    for _ in 0..n_trajectories {
        let mut site = start;
        let mut t_last = 0.0;
        let mut next = waiting.as_ref().map_or(f64::INFINITY, |d| d.sample(rng));
        for (ti, &t) in times.iter().enumerate() {
            while next <= t {
                propagate_site(spectrum, site, next - t_last, &mut re, &mut im, &mut cos, &mut sin);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let total: f64 = re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum();
                let target = u * total;
                let mut chosen = n - 1;
                for j in 0..n {
                    acc += re[j] * re[j] + im[j] * im[j];
                    if acc > target {
                        chosen = j;
                        break;
                    }
                }
                site = chosen;
                t_last = next;
                next += waiting.as_ref().map_or(f64::INFINITY, |d| d.sample(rng));
                jumps += 1;
            }
            propagate_site(spectrum, site, t - t_last, &mut re, &mut im, &mut cos, &mut sin);
            let mut m = 0.0;
            for j in 0..n {
                let p = re[j] * re[j] + im[j] * im[j];
                sum[ti][j] += p;
                sum_sq[ti][j] += p * p;
                let r = positions[j];
                m += p * ((r[0] - origin[0]).powi(2) + (r[1] - origin[1]).powi(2) + (r[2] - origin[2]).powi(2));
            }
            msd_sum[ti] += m;
            msd_sq[ti] += m * m;
        }
    }
    let m = n_trajectories as f64;
    let se = |s: f64, q: f64| {
        if n_trajectories < 2 {
            f64::NAN
        } else {
            (crate::binning::sample_variance(m, s, q) / m).sqrt()
        }
    };
    Ok(TrajectoryRun {
        series: PopulationSeries {
            times: times.to_vec(),
            populations: sum.iter().map(|row| row.iter().map(|s| s / m).collect()).collect(),
            msd: msd_sum.iter().map(|s| s / m).collect(),
        },
        stderr: sum
            .iter()
            .zip(&sum_sq)
            .map(|(s, q)| s.iter().zip(q).map(|(&a, &b)| se(a, b)).collect())
            .collect(),
        msd_stderr: msd_sum.iter().zip(&msd_sq).map(|(&a, &b)| se(a, b)).collect(),
        n_trajectories,
        mean_jumps: jumps as f64 / m,
    })
}

/// Growth exponent `α` of `⟨r²⟩ ∝ t^α` inside `window`.
pub fn subdiffusion_exponent(series: &PopulationSeries, window: FitWindow) -> Result<FitResult, DephasingError> {
    let inside: Vec<f64> = series
        .times
        .iter()
        .zip(&series.msd)
        .filter(|(t, _)| window.contains(**t))
        .map(|(_, &m)| m)
        .collect();
    if inside.len() < 5 {
        return Err(DephasingError::WindowTooNarrow(inside.len()));
    }
    if inside.iter().any(|&m| !(m > 0.0)) {
        return Err(DephasingError::NonPositiveMsd);
    }
    growth_exponent(&series.times, &series.msd, window).map_err(|e| match e {
        FitError::InsufficientData(k) => DephasingError::WindowTooNarrow(k),
        other => DephasingError::InvalidParams(other.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{build_from_positions, ModelParams};
    use crate::dynamics::{evolve_populations, InitialState};
    use crate::spectra::diagonalize;

    fn dimer() -> (HoppingMatrix, Vec<Point>) {
        let pos = vec![[0.0; 3], [1.0, 0.0, 0.0]];
        (build_from_positions(&pos, &ModelParams::default()).unwrap(), pos)
    }

    #[test]
    fn unitary_limit_matches_rabi_formula() {
        let (h, pos) = dimer();
        let times: Vec<f64> = (1..=40).map(|k| 0.25 * k as f64).collect();
        let run = evolve_lindblad(&h, &DensityMatrix::site(2, 0), &DephasingParams::new(0.0), &times, &pos, pos[0]).unwrap();
        for (t, p) in times.iter().zip(&run.series.populations) {
            assert!((p[1] - t.sin().powi(2)).abs() < 1e-6);
        }
        assert!(run.diagnostics.max_trace_drift() < 1e-8);
        assert!(run.diagnostics.purities.iter().all(|p| (p - 1.0).abs() < 1e-6));
    }

    #[test]
    fn dephased_dimer_equalizes() {
        let (h, pos) = dimer();
        let run = evolve_lindblad(&h, &DensityMatrix::site(2, 0), &DephasingParams::new(1.0), &[10.0, 40.0], &pos, pos[0]).unwrap();
        let p = &run.series.populations[1];
        assert!((p[0] - 0.5).abs() < 1e-4 && (p[1] - 0.5).abs() < 1e-4);
        let pur = &run.diagnostics.purities;
        assert!(pur[1] <= pur[0] + 1e-10);
    }

    #[test]
    fn dephased_dimer_follows_damped_oscillator() {
        // z = 2P_0 − 1 obeys z'' + γz' + 4z = 0 with z(0) = 1, z'(0) = 0
        let (h, pos) = dimer();
        let g = 0.8_f64;
        let w = (4.0 - g * g / 4.0).sqrt();
        let times: Vec<f64> = (1..=30).map(|k| 0.2 * k as f64).collect();
        let run = evolve_lindblad(&h, &DensityMatrix::site(2, 0), &DephasingParams::new(g), &times, &pos, pos[0]).unwrap();
        for (t, p) in times.iter().zip(&run.series.populations) {
            let z = (-g * t / 2.0).exp() * ((w * t).cos() + g / (2.0 * w) * (w * t).sin());
            assert!((p[0] - 0.5 * (1.0 + z)).abs() < 1e-7);
        }
    }

    #[test]
    fn pure_dephasing_decays_coherences_only() {
        let n = 4;
        let h = HoppingMatrix::from_mat(Mat::zeros(n, n));
        let re = [0.5, 0.5, 0.5, 0.5];
        let im = [0.0, 0.3, -0.2, 0.1];
        let norm = (re.iter().chain(&im).map(|x| x * x).sum::<f64>()).sqrt();
        let re: Vec<f64> = re.iter().map(|x| x / norm).collect();
        let im: Vec<f64> = im.iter().map(|x| x / norm).collect();
        let rho0 = DensityMatrix::pure(&re, &im);
        let gamma = 0.7;
        let pos: Vec<Point> = (0..n).map(|k| [k as f64, 0.0, 0.0]).collect();
        let times = [0.5, 1.0, 3.0];
        let mut params = DephasingParams::new(gamma);
        params.max_step = Some(0.05);
        let run = evolve_lindblad(&h, &rho0, &params, &times, &pos, pos[0]).unwrap();
        let fin = &run.final_state;
        let decay = (-gamma * 3.0f64).exp();
        for i in 0..n {
            assert!((fin.re[(i, i)] - rho0.re[(i, i)]).abs() < 1e-10);
            for j in 0..n {
                if i != j {
                    assert!((fin.re[(i, j)] - rho0.re[(i, j)] * decay).abs() < 1e-8);
                    assert!((fin.im[(i, j)] - rho0.im[(i, j)] * decay).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn invalid_states_rejected() {
        let (h, pos) = dimer();
        let mut rho = DensityMatrix::site(2, 0);
        rho.re[(0, 0)] = 0.7;
        let err = evolve_lindblad(&h, &rho, &DephasingParams::new(0.1), &[1.0], &pos, pos[0]).unwrap_err();
        assert!(matches!(err, DephasingError::InvalidState(_)));
        let err = evolve_lindblad(&h, &DensityMatrix::site(2, 0), &DephasingParams::new(-1.0), &[1.0], &pos, pos[0]);
        assert!(matches!(err.unwrap_err(), DephasingError::InvalidParams(_)));
    }

    #[test]
    fn min_eigenvalue_of_mixed_state() {
        let mut rho = DensityMatrix::site(3, 0);
        rho.re[(0, 0)] = 0.5;
        rho.re[(1, 1)] = 0.3;
        rho.re[(2, 2)] = 0.2;
        assert!((rho.min_eigenvalue() - 0.2).abs() < 1e-12);
        assert!((rho.purity() - 0.38).abs() < 1e-12);
    }

    #[test]
    fn trajectories_without_dephasing_are_unitary() {
        let pos = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.3, 1.4, 0.0]];
        let h = build_from_positions(&pos, &ModelParams::default()).unwrap();
        let s = diagonalize(&h).unwrap();
        let times = [0.3, 1.1, 2.5];
        let mut rng = crate::rng::seeded(1);
        let tr = evolve_trajectories(&s, 0, 0.0, &times, &pos, pos[0], 3, &mut rng).unwrap();
        let exact = evolve_populations(&s, InitialState::site(0), &times, &pos);
        for (a, b) in tr.series.populations.iter().zip(&exact.populations) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_eq!(tr.mean_jumps, 0.0);
    }

    #[test]
    fn exponent_of_synthetic_series() {
        let times: Vec<f64> = (0..30).map(|k| 10f64.powf(0.1 * k as f64)).collect();
        let mk = |p: f64| PopulationSeries {
            populations: vec![vec![1.0]; times.len()],
            msd: times.iter().map(|t| t.powf(p)).collect(),
            times: times.clone(),
        };
        let w = FitWindow::new(1.0, 1e3);
        assert!((subdiffusion_exponent(&mk(2.0), w).unwrap().exponent() - 2.0).abs() < 1e-6);
        assert!((subdiffusion_exponent(&mk(1.0), w).unwrap().exponent() - 1.0).abs() < 1e-6);
        let narrow = subdiffusion_exponent(&mk(1.0), FitWindow::new(1.0, 1.2));
        assert!(matches!(narrow.unwrap_err(), DephasingError::WindowTooNarrow(_)));
    }
}
