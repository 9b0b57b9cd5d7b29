//! Disorder-averaged experiments: scheduling, merging and persistence.
//!
//! Realization `i` of a run is seeded with `derive_seed(master_seed, i)`.
//! Realizations run on a rayon pool in chunks; the per-realization
//! accumulators of a chunk come back in index order and are folded into the
//! running total sequentially, so the result does not depend on the number
//! of workers.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    accumulate_profile, growth_exponent, mean_field_potential, profile_accumulator, radial_density,
    sign_structure, FitWindow, IndexedEnergyStats, RadialProfile,
};
use crate::binning::{uniform_edges, Accumulator, BinnedSeries, CurveAccumulator, MergeError, Moments, Normalization};
use crate::coupling::{build_hamiltonian, CouplingError, ModelParams, SiUnits};
use crate::dephasing::{evolve_lindblad, evolve_trajectories, DensityMatrix, DephasingError, DephasingParams};
use crate::dynamics::{
    ballistic_exponent, diagonal_ensemble, evolve_populations, log_time_grid, msd, InitialState, DEFAULT_N_TIMES,
    DEFAULT_T_MAX, DEFAULT_T_MIN,
};
use crate::geometry::{sample_configuration, CloudSpec, GeometryError};
use crate::levelstats::{accumulate_lsr, lsr_accumulator, spacing_ratios, Ensemble, LevelStatsError, RatioHistogram};
use crate::rng::{derive_seed, seeded, RNG_ALGORITHM};
use crate::spectra::{
    accumulate_dos, accumulate_observable, diagonalize, dos_accumulator, dos_asymmetry, eigenvalues_only, ipr,
    Observable, SpectraError,
};

pub const TOOL_NAME: &str = "rydloc";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_bins: usize,
}

impl BinSpec {
    pub fn new(lo: f64, hi: f64, n_bins: usize) -> Self {
        Self { lo, hi, n_bins }
    }

    pub fn edges(&self) -> Vec<f64> {
        uniform_edges(self.lo, self.hi, self.n_bins)
    }

    fn validate(&self, what: &str) -> Result<(), String> {
        if self.n_bins == 0 || !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(format!("{what}: need lo < hi and at least one bin"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeGrid {
    Log { t_min: f64, t_max: f64, n: usize },
    Explicit(Vec<f64>),
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::Log {
            t_min: DEFAULT_T_MIN,
            t_max: DEFAULT_T_MAX,
            n: DEFAULT_N_TIMES,
        }
    }
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        match self {
            TimeGrid::Log { t_min, t_max, n } => log_time_grid(*t_min, *t_max, *n),
            TimeGrid::Explicit(t) => t.clone(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            TimeGrid::Log { t_min, t_max, n } => {
                if !(*t_min > 0.0 && t_min < t_max && t_max.is_finite()) || *n < 2 {
                    return Err("log time grid needs 0 < t_min < t_max and n >= 2".into());
                }
            }
            TimeGrid::Explicit(t) => {
                if t.is_empty() || t.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || t.windows(2).any(|w| w[1] < w[0]) {
                    return Err("explicit times must be non-empty, finite, non-negative and ascending".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralOptions {
    pub energy_bins: BinSpec,
    /// Order of the generalized fractal dimension.
    pub gfd_q: f64,
    /// States with IPR above this are counted by sign of their energy.
    pub ipr_threshold: f64,
    /// States with `|E|` above this are counted as tail states.
    pub tail_threshold: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            energy_bins: BinSpec::new(-8.0, 8.0, 320),
            gfd_q: 2.0,
            ipr_threshold: 0.55,
            tail_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LsrOptions {
    pub energy_bins: BinSpec,
    pub ratio_bins: usize,
    /// Energy window of the ratio histogram; all ratios when unset.
    pub window: Option<FitWindow>,
}

impl Default for LsrOptions {
    fn default() -> Self {
        Self {
            energy_bins: BinSpec::new(-8.0, 8.0, 160),
            ratio_bins: 50,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsOptions {
    pub times: TimeGrid,
    /// Annulus width of the late-time profile.
    pub profile_dr: f64,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self {
            times: TimeGrid::default(),
            profile_dr: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LindbladMethod {
    /// Quantum-jump unravelling, exact between jumps.
    Trajectories,
    /// Adaptive Runge–Kutta integration of the density matrix.
    MasterEquation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LindbladOptions {
    /// Dephasing rate in kHz (converted with the SI units of the model).
    pub gamma_khz: Option<f64>,
    /// Dephasing rate in internal units; used when `gamma_khz` is unset.
    pub gamma: Option<f64>,
    pub method: LindbladMethod,
    pub n_trajectories: usize,
    pub rtol: f64,
    pub atol: f64,
    pub times: TimeGrid,
    pub profile_dr: f64,
    /// Window for the growth exponent of the averaged MSD.
    pub alpha_window: Option<FitWindow>,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self {
            gamma_khz: Some(1.0),
            gamma: None,
            method: LindbladMethod::Trajectories,
            n_trajectories: 50,
            rtol: crate::dephasing::DEFAULT_RTOL,
            atol: crate::dephasing::DEFAULT_ATOL,
            times: TimeGrid::default(),
            profile_dr: 1.0,
            alpha_window: None,
        }
    }
}

impl LindbladOptions {
    /// Rate in internal units.
    pub fn gamma_internal(&self, units: &SiUnits) -> f64 {
        match (self.gamma_khz, self.gamma) {
            (Some(k), _) => units.rate_from_khz(k),
            (None, Some(g)) => g,
            (None, None) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowEnergyOptions {
    pub k_lowest: usize,
    pub energy_bins: BinSpec,
}

impl Default for LowEnergyOptions {
    fn default() -> Self {
        Self {
            k_lowest: 10,
            energy_bins: BinSpec::new(-8.0, 0.0, 160),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Spectral(SpectralOptions),
    Lsr(LsrOptions),
    Dynamics(DynamicsOptions),
    Lindblad(LindbladOptions),
    LowEnergy(LowEnergyOptions),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectral(_) => "spectral",
            Experiment::Lsr(_) => "lsr",
            Experiment::Dynamics(_) => "dynamics",
            Experiment::Lindblad(_) => "lindblad",
            Experiment::LowEnergy(_) => "low_energy",
        }
    }
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Template; its `seed` is replaced per realization.
    pub cloud: CloudSpec,
    #[serde(default)]
    pub model: ModelParams,
    pub experiment: Experiment,
    pub n_realizations: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Number of failed realizations tolerated before the run aborts.
    #[serde(default)]
    pub failure_budget: usize,
    /// Keep one scalar per realization (see [`ResultStore::scalars`]).
    #[serde(default)]
    pub log_scalars: bool,
}

impl RunConfig {
    pub fn new(cloud: CloudSpec, experiment: Experiment, n_realizations: usize, master_seed: u64) -> Self {
        Self {
            cloud,
            model: ModelParams::default(),
            experiment,
            n_realizations,
            master_seed,
            output_dir: None,
            failure_budget: 0,
            log_scalars: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, EnsembleError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| EnsembleError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, EnsembleError> {
        let text = fs::read_to_string(path).map_err(|e| EnsembleError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |m: String| Err(EnsembleError::Config(m));
        if self.n_realizations == 0 {
            return bad("n_realizations must be at least 1".into());
        }
        self.cloud.validate().map_err(|e| EnsembleError::Config(e.to_string()))?;
        if self.cloud.n_atoms < 2 {
            return bad("experiments need at least two atoms".into());
        }
        self.model.validate().map_err(|e| EnsembleError::Config(e.to_string()))?;
        let checked = match &self.experiment {
            Experiment::Spectral(o) => o.energy_bins.validate("energy_bins").and_then(|_| {
                if o.gfd_q == 1.0 || !(o.gfd_q > 0.0) {
                    Err("gfd_q must be positive and different from 1".into())
                } else {
                    Ok(())
                }
            }),
            Experiment::Lsr(o) => o.energy_bins.validate("energy_bins").and_then(|_| {
                if o.ratio_bins == 0 {
                    Err("ratio_bins must be positive".into())
                } else if self.cloud.n_atoms < 3 {
                    Err("level ratios need at least three atoms".into())
                } else {
                    Ok(())
                }
            }),
            Experiment::Dynamics(o) => o.times.validate().and_then(|_| positive(o.profile_dr, "profile_dr")),
            Experiment::Lindblad(o) => {
                let g = o.gamma_internal(&self.units());
                if !(g >= 0.0 && g.is_finite()) {
                    Err(format!("dephasing rate must be non-negative, got {g}"))
                } else if o.method == LindbladMethod::Trajectories && o.n_trajectories == 0 {
                    Err("n_trajectories must be positive".into())
                } else {
                    o.times.validate().and_then(|_| positive(o.profile_dr, "profile_dr"))
                }
            }
            Experiment::LowEnergy(o) => o.energy_bins.validate("energy_bins").and_then(|_| {
                if o.k_lowest == 0 || o.k_lowest > self.cloud.n_atoms {
                    Err(format!("k_lowest must lie in 1..={}", self.cloud.n_atoms))
                } else {
                    Ok(())
                }
            }),
        };
        checked.map_err(EnsembleError::Config)
    }

    pub fn units(&self) -> SiUnits {
        self.model.si.unwrap_or_default()
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Seed of realization `index`.
    pub fn realization_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, index as u64)
    }
}

fn positive(x: f64, what: &str) -> Result<(), String> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(format!("{what} must be positive, got {x}"))
    }
}

/// Rough peak memory of one run in bytes (dense matrices per worker).
pub fn estimate_memory_bytes(config: &RunConfig, workers: usize) -> u64 {
    let n = config.cloud.n_atoms as u64;
    let nn = 8 * n * n;
    let per_worker = match &config.experiment {
        Experiment::Lsr(_) => 3 * nn,
        Experiment::Spectral(_) | Experiment::LowEnergy(_) => 4 * nn,
        Experiment::Dynamics(o) => 4 * nn + 8 * n * o.times.times().len() as u64,
        Experiment::Lindblad(o) => match o.method {
            // nine stage buffers of the packed (re, im) state plus H
            LindbladMethod::MasterEquation => 19 * nn,
            LindbladMethod::Trajectories => 4 * nn + 16 * n * o.times.times().len() as u64,
        },
    };
    per_worker * workers.max(1) as u64
}

#[derive(Debug, Error)]
pub enum RealizationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    LevelStats(#[from] LevelStatsError),
    #[error(transparent)]
    Dephasing(#[from] DephasingError),
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("{failures} realizations failed (budget {budget}); realization {first_index}: {first_message}")]
    FailureBudgetExceeded {
        failures: usize,
        budget: usize,
        first_index: usize,
        first_message: String,
    },
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EnsembleError {
    pub fn exit_code(&self) -> i32 {
        match self {
            EnsembleError::Config(_) => 2,
            EnsembleError::FailureBudgetExceeded { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralAcc {
    pub dos: BinnedSeries,
    pub ipr: BinnedSeries,
    pub gfd: BinnedSeries,
    /// Moments of all eigenvalues.
    pub energy: Moments,
    pub n_tail: u64,
    pub n_high_ipr: u64,
    pub n_high_ipr_positive: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsrAcc {
    pub lsr: BinnedSeries,
    pub histogram: RatioHistogram,
    pub zero_spacings: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportAcc {
    pub msd: CurveAccumulator,
    /// Late-time MSD per realization: the diagonal ensemble for unitary
    /// runs, the last output time for dephased runs.
    pub late_msd: Moments,
    pub late_profile: BinnedSeries,
    /// Largest `|Σ_j P_j − 1|` over all realizations and times.
    pub max_norm_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowEnergyAcc {
    pub stats: IndexedEnergyStats,
    pub sign_uniform: u64,
    /// Realizations whose ground-state maximum sits in the deepest decile
    /// of the mean-field potential.
    pub deep_decile: u64,
    pub realizations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Accumulators {
    Spectral(SpectralAcc),
    Lsr(LsrAcc),
    Dynamics(TransportAcc),
    Lindblad(TransportAcc),
    LowEnergy(LowEnergyAcc),
}

impl Accumulators {
    /// Empty accumulators for `config`.
    pub fn empty(config: &RunConfig) -> Self {
        match &config.experiment {
            Experiment::Spectral(o) => Accumulators::Spectral(SpectralAcc {
                dos: dos_accumulator(o.energy_bins.edges()),
                ipr: BinnedSeries::new(o.energy_bins.edges(), Normalization::PerItem),
                gfd: BinnedSeries::new(o.energy_bins.edges(), Normalization::PerItem),
                energy: Moments::default(),
                n_tail: 0,
                n_high_ipr: 0,
                n_high_ipr_positive: 0,
            }),
            Experiment::Lsr(o) => Accumulators::Lsr(LsrAcc {
                lsr: lsr_accumulator(o.energy_bins.edges()),
                histogram: RatioHistogram::new(o.ratio_bins),
                zero_spacings: 0,
            }),
            Experiment::Dynamics(o) => Accumulators::Dynamics(transport_acc(config, &o.times, o.profile_dr)),
            Experiment::Lindblad(o) => Accumulators::Lindblad(transport_acc(config, &o.times, o.profile_dr)),
            Experiment::LowEnergy(o) => Accumulators::LowEnergy(LowEnergyAcc {
                stats: IndexedEnergyStats::new(o.k_lowest, o.energy_bins.edges()),
                sign_uniform: 0,
                deep_decile: 0,
                realizations: 0,
            }),
        }
    }
}

fn transport_acc(config: &RunConfig, times: &TimeGrid, dr: f64) -> TransportAcc {
    let reach = config.cloud.region_radius() + config.cloud.sigma_z.map_or(0.0, |s| 4.0 * s);
    TransportAcc {
        msd: CurveAccumulator::new(times.times()),
        late_msd: Moments::default(),
        late_profile: profile_accumulator(reach + dr, dr),
        max_norm_defect: 0.0,
    }
}

impl Accumulator for TransportAcc {
    fn merge(&mut self, other: &Self) -> Result<(), MergeError> {
        self.msd.merge(&other.msd)?;
        self.late_msd.merge(&other.late_msd)?;
        self.late_profile.merge(&other.late_profile)?;
        self.max_norm_defect = self.max_norm_defect.max(other.max_norm_defect);
        Ok(())
    }
}

impl Accumulator for Accumulators {
    fn merge(&mut self, other: &Self) -> Result<(), MergeError> {
        use Accumulators as A;
        match (self, other) {
            (A::Spectral(a), A::Spectral(b)) => {
                a.dos.merge(&b.dos)?;
                a.ipr.merge(&b.ipr)?;
                a.gfd.merge(&b.gfd)?;
                a.energy.merge(&b.energy)?;
                a.n_tail += b.n_tail;
                a.n_high_ipr += b.n_high_ipr;
                a.n_high_ipr_positive += b.n_high_ipr_positive;
            }
            (A::Lsr(a), A::Lsr(b)) => {
                a.lsr.merge(&b.lsr)?;
                a.histogram.merge(&b.histogram)?;
                a.zero_spacings += b.zero_spacings;
            }
            (A::Dynamics(a), A::Dynamics(b)) | (A::Lindblad(a), A::Lindblad(b)) => a.merge(b)?,
            (A::LowEnergy(a), A::LowEnergy(b)) => {
                a.stats.merge(&b.stats)?;
                a.sign_uniform += b.sign_uniform;
                a.deep_decile += b.deep_decile;
                a.realizations += b.realizations;
            }
            _ => return Err(MergeError::BinningMismatch("different experiment kinds".into())),
        }
        Ok(())
    }
}

/// One per-realization scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarRecord {
    pub realization: usize,
    pub seed: u64,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub realization: usize,
    pub seed: u64,
    pub message: String,
}

/// Output of one realization.
#[derive(Debug, Clone)]
pub struct RealizationOutput {
    pub accumulators: Accumulators,
    pub scalars: Vec<(&'static str, f64)>,
}

/// Sample, build, solve and measure realization `index` of `config`.
pub fn run_realization(config: &RunConfig, index: usize) -> Result<RealizationOutput, RealizationError> {
    let seed = config.realization_seed(index);
    let cfg = sample_configuration(&config.cloud.with_seed(seed))?;
    let h = build_hamiltonian(&cfg, &config.model)?;
    let mut acc = Accumulators::empty(config);
    let mut scalars = Vec::new();
    match (&config.experiment, &mut acc) {
        (Experiment::Spectral(o), Accumulators::Spectral(a)) => {
            let s = diagonalize(&h)?;
            accumulate_dos(&mut a.dos, &s.eigenvalues);
            accumulate_observable(&mut a.gfd, &s, Observable::Gfd(o.gfd_q))?;
            let mut max_ipr = 0.0_f64;
            for (k, &e) in s.eigenvalues.iter().enumerate() {
                let p = ipr(s.state(k))?;
                a.ipr.add(e, p);
                a.energy.push(e);
                max_ipr = max_ipr.max(p);
                if e.abs() > o.tail_threshold {
                    a.n_tail += 1;
                }
                if p > o.ipr_threshold {
                    a.n_high_ipr += 1;
                    if e > 0.0 {
                        a.n_high_ipr_positive += 1;
                    }
                }
            }
            a.ipr.end_realization();
            scalars.push(("max_ipr", max_ipr));
        }
        (Experiment::Lsr(o), Accumulators::Lsr(a)) => {
            let ev = eigenvalues_only(&h)?;
            let ratios = spacing_ratios(&ev)?;
            accumulate_lsr(&mut a.lsr, &ratios);
            let (lo, hi) = o.window.map_or((f64::NEG_INFINITY, f64::INFINITY), |w| (w.lo, w.hi));
            let mut m = Moments::default();
            for r in ratios.in_window(lo, hi) {
                a.histogram.add(r);
                m.push(r);
            }
            a.zero_spacings += ratios.zero_spacings as u64;
            scalars.push(("mean_ratio", if m.n > 0 { m.mean() } else { f64::NAN }));
        }
        (Experiment::Dynamics(o), Accumulators::Dynamics(a)) => {
            let s = diagonalize(&h)?;
            let psi0 = InitialState::center(&cfg);
            let series = evolve_populations(&s, psi0, &o.times.times(), &cfg.positions);
            a.max_norm_defect = series.norm_defect();
            a.msd.push(&series.msd);
            let late = diagonal_ensemble(&s, psi0);
            let late_msd = msd(&late, &cfg.positions, cfg.positions[psi0.site]);
            a.late_msd.push(late_msd);
            let profile = radial_density(&late, &cfg.positions, cfg.centroid(), o.profile_dr);
            accumulate_profile(&mut a.late_profile, &profile);
            scalars.push(("late_msd", late_msd));
        }
        (Experiment::Lindblad(o), Accumulators::Lindblad(a)) => {
            let gamma = o.gamma_internal(&config.units());
            let times = o.times.times();
            let start = InitialState::center(&cfg).site;
            let origin = cfg.positions[start];
            let series = match o.method {
                LindbladMethod::Trajectories => {
                    let s = diagonalize(&h)?;
                    let mut rng = seeded(derive_seed(seed, 1));
                    let run = evolve_trajectories(
                        &s,
                        start,
                        gamma,
                        &times,
                        &cfg.positions,
                        origin,
                        o.n_trajectories,
                        &mut rng,
                    )?;
                    run.series
                }
                LindbladMethod::MasterEquation => {
                    let mut p = DephasingParams::new(gamma);
                    p.rtol = o.rtol;
                    p.atol = o.atol;
                    let rho0 = DensityMatrix::site(cfg.len(), start);
                    evolve_lindblad(&h, &rho0, &p, &times, &cfg.positions, origin)?.series
                }
            };
            a.max_norm_defect = series.norm_defect();
            a.msd.push(&series.msd);
            let last = series.populations.last().expect("non-empty time grid");
            let late_msd = *series.msd.last().expect("non-empty time grid");
            a.late_msd.push(late_msd);
            let profile = radial_density(last, &cfg.positions, cfg.centroid(), o.profile_dr);
            accumulate_profile(&mut a.late_profile, &profile);
            scalars.push(("final_msd", late_msd));
        }
        (Experiment::LowEnergy(_), Accumulators::LowEnergy(a)) => {
            let s = diagonalize(&h)?;
            a.stats.push(&s.eigenvalues);
            a.realizations += 1;
            let ground = s.state(0);
            if sign_structure(ground).uniform {
                a.sign_uniform += 1;
            }
            let vmf = mean_field_potential(&h);
            let peak = (0..ground.len())
                .max_by(|&i, &j| ground[i].abs().total_cmp(&ground[j].abs()))
                .unwrap_or(0);
            let below = vmf.iter().filter(|&&v| v < vmf[peak]).count();
            if below < vmf.len().div_ceil(10) {
                a.deep_decile += 1;
            }
            scalars.push(("gap", s.eigenvalues[1] - s.eigenvalues[0]));
        }
        _ => unreachable!("accumulators are built from the experiment"),
    }
    Ok(RealizationOutput {
        accumulators: acc,
        scalars,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub rng: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub realizations_completed: usize,
    pub failures: Vec<FailureRecord>,
    /// Artifact file names, filled in when the store is written.
    pub artifacts: Vec<String>,
    pub si_output: bool,
}

/// Merged result of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultStore {
    pub manifest: Manifest,
    pub accumulators: Accumulators,
    /// Per-realization scalars in realization order (only when logging is on).
    pub scalars: Vec<ScalarRecord>,
}

/// Realizations per scheduling chunk and worker.
const CHUNK_PER_WORKER: usize = 4;

/// Run every realization of `config` on `workers` threads (0 = rayon default).
pub fn run_ensemble(config: &RunConfig, workers: usize) -> Result<ResultStore, EnsembleError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EnsembleError::Pool(e.to_string()))?;
    let chunk = (pool.current_num_threads() * CHUNK_PER_WORKER).max(1);
    let mut total = Accumulators::empty(config);
    let mut scalars = Vec::new();
    let mut failures: Vec<FailureRecord> = Vec::new();
    let mut completed = 0;
    for start in (0..config.n_realizations).step_by(chunk) {
        let end = (start + chunk).min(config.n_realizations);
        let outputs: Vec<_> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| (i, run_realization(config, i)))
                .collect()
        });
        for (i, out) in outputs {
            match out {
                Ok(out) => {
                    total.merge(&out.accumulators)?;
                    completed += 1;
                    if config.log_scalars {
                        let seed = config.realization_seed(i);
                        scalars.extend(out.scalars.into_iter().map(|(name, value)| ScalarRecord {
                            realization: i,
                            seed,
                            name: name.to_string(),
                            value,
                        }));
                    }
                }
                Err(e) => {
                    log::warn!("realization {i} failed: {e}");
                    failures.push(FailureRecord {
                        realization: i,
                        seed: config.realization_seed(i),
                        message: e.to_string(),
                    });
                }
            }
        }
        if failures.len() > config.failure_budget {
            return Err(EnsembleError::FailureBudgetExceeded {
                failures: failures.len(),
                budget: config.failure_budget,
                first_index: failures[0].realization,
                first_message: failures[0].message.clone(),
            });
        }
    }
    Ok(ResultStore {
        manifest: Manifest {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            rng: RNG_ALGORITHM.into(),
            config_hash: config.hash(),
            config: config.clone(),
            realizations_completed: completed,
            failures,
            artifacts: Vec::new(),
            si_output: false,
        },
        accumulators: total,
        scalars,
    })
}

/// Scales applied to times and energies when writing artifacts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputScales {
    pub time: f64,
    pub energy: f64,
    pub si: bool,
}

impl OutputScales {
    pub fn internal() -> Self {
        Self {
            time: 1.0,
            energy: 1.0,
            si: false,
        }
    }

    /// Times in µs, energies in MHz.
    pub fn si(units: &SiUnits) -> Self {
        Self {
            time: units.time_to_us(1.0),
            energy: units.energy_to_mhz(1.0),
            si: true,
        }
    }
}

impl ResultStore {
    pub fn config(&self) -> &RunConfig {
        &self.manifest.config
    }

    /// Combine stores of the same experiment run with different master
    /// seeds. Scalar records keep their per-store realization indices.
    pub fn merge(&mut self, other: &Self) -> Result<(), EnsembleError> {
        // stores from other machines differ in seed and count only
        let strip = |c: &RunConfig| RunConfig {
            n_realizations: 1,
            master_seed: 0,
            output_dir: None,
            ..c.clone()
        };
        if strip(self.config()) != strip(other.config()) {
            return Err(MergeError::BinningMismatch("stores come from different configurations".into()).into());
        }
        self.accumulators.merge(&other.accumulators)?;
        self.manifest.realizations_completed += other.manifest.realizations_completed;
        self.manifest.failures.extend(other.manifest.failures.iter().cloned());
        self.scalars.extend(other.scalars.iter().cloned());
        Ok(())
    }

    /// Experiment-level derived quantities.
    pub fn summary(&self) -> serde_json::Value {
        use serde_json::json;
        let units = self.config().units();
        match (&self.accumulators, &self.config().experiment) {
            (Accumulators::Spectral(a), _) => {
                let n = a.energy.n as f64;
                json!({
                    "n_states": a.energy.n,
                    "mean_energy": a.energy.mean(),
                    "energy_std": a.energy.std(),
                    "energy_skewness": a.energy.skewness(),
                    "dos_asymmetry": dos_asymmetry(&a.dos).ok(),
                    "tail_fraction": a.n_tail as f64 / n,
                    "n_high_ipr": a.n_high_ipr,
                    "high_ipr_positive_fraction": if a.n_high_ipr > 0 {
                        Some(a.n_high_ipr_positive as f64 / a.n_high_ipr as f64)
                    } else {
                        None
                    },
                    "dos_underflow": a.dos.underflow,
                    "dos_overflow": a.dos.overflow,
                })
            }
            (Accumulators::Lsr(a), _) => {
                let chi = |e| a.histogram.chi_square(e).ok();
                json!({
                    "n_ratios": a.histogram.total(),
                    "mean_ratio": a.histogram.mean(),
                    "zero_spacings": a.zero_spacings,
                    "chi_square_poisson": chi(Ensemble::Poisson),
                    "chi_square_goe": chi(Ensemble::Goe),
                })
            }
            (Accumulators::Dynamics(a), _) => {
                let mean = a.msd.mean();
                let series = crate::dynamics::PopulationSeries {
                    times: a.msd.x.clone(),
                    populations: Vec::new(),
                    msd: mean,
                };
                json!({
                    "ballistic_exponent": ballistic_exponent(&series).ok().map(|f| f.exponent()),
                    "late_msd_mean": a.late_msd.mean(),
                    "late_msd_stderr": a.late_msd.stderr(),
                    "max_norm_defect": a.max_norm_defect,
                })
            }
            (Accumulators::Lindblad(a), Experiment::Lindblad(o)) => {
                let alpha = o
                    .alpha_window
                    .and_then(|w| growth_exponent(&a.msd.x, &a.msd.mean(), w).ok())
                    .map(|f| f.exponent());
                json!({
                    "gamma_internal": o.gamma_internal(&units),
                    "gamma_khz": units.rate_to_khz(o.gamma_internal(&units)),
                    "alpha": alpha,
                    "final_msd_mean": a.late_msd.mean(),
                    "final_msd_stderr": a.late_msd.stderr(),
                    "max_norm_defect": a.max_norm_defect,
                })
            }
            (Accumulators::LowEnergy(a), _) => {
                let m = &a.stats.moments;
                let r = a.realizations as f64;
                json!({
                    "means": m.iter().map(|x| x.mean()).collect::<Vec<_>>(),
                    "stds": m.iter().map(|x| x.std()).collect::<Vec<_>>(),
                    "skewness": m.iter().map(|x| x.skewness()).collect::<Vec<_>>(),
                    "gap_over_width": if m.len() >= 2 { Some((m[1].mean() - m[0].mean()) / m[0].std()) } else { None },
                    "sign_uniform_fraction": a.sign_uniform as f64 / r,
                    "deep_decile_fraction": a.deep_decile as f64 / r,
                })
            }
            _ => serde_json::Value::Null,
        }
    }

    /// Late-time radial profile of a transport run.
    pub fn late_profile(&self) -> Option<RadialProfile> {
        match &self.accumulators {
            Accumulators::Dynamics(a) | Accumulators::Lindblad(a) => Some(RadialProfile::from_series(&a.late_profile)),
            _ => None,
        }
    }

    /// Write CSV artifacts, `summary.json`, `store.json` and `manifest.json`
    /// into `dir`. Every CSV starts with a `# config_hash=` comment line.
    pub fn write(&self, dir: &Path, scales: OutputScales) -> Result<Manifest, EnsembleError> {
        fs::create_dir_all(dir)?;
        let hash = &self.manifest.config_hash;
        let mut artifacts = Vec::new();
        let mut csv = |name: &str, body: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            writeln!(w, "# config_hash={hash}")?;
            body(&mut w)?;
            w.flush()?;
            artifacts.push(name.to_string());
            Ok(())
        };
        let (ts, es) = (scales.time, scales.energy);
        match &self.accumulators {
            Accumulators::Spectral(a) => {
                csv("dos.csv", &|w| a.dos.write_csv(w, es, 1.0))?;
                csv("ipr.csv", &|w| a.ipr.write_csv(w, es, 1.0))?;
                csv("gfd.csv", &|w| a.gfd.write_csv(w, es, 1.0))?;
            }
            Accumulators::Lsr(a) => {
                csv("lsr.csv", &|w| a.lsr.write_csv(w, es, 1.0))?;
                csv("ratio_histogram.csv", &|w| a.histogram.write_csv(w))?;
            }
            Accumulators::Dynamics(a) | Accumulators::Lindblad(a) => {
                csv("msd.csv", &|w| a.msd.write_csv(w, "time", ts))?;
                csv("late_profile.csv", &|w| RadialProfile::from_series(&a.late_profile).write_csv(w))?;
            }
            Accumulators::LowEnergy(a) => {
                csv("low_energy_summary.csv", &|w| a.stats.write_summary_csv(w, es))?;
                for (k, h) in a.stats.histograms.iter().enumerate() {
                    csv(&format!("energy_index_{}.csv", k + 1), &|w| h.write_csv(w, es, 1.0))?;
                }
            }
        }
        if !self.scalars.is_empty() {
            csv("scalars.csv", &|w| {
                writeln!(w, "realization,seed,name,value")?;
                for s in &self.scalars {
                    writeln!(w, "{},{},{},{:?}", s.realization, s.seed, s.name, s.value)?;
                }
                Ok(())
            })?;
        }
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary())?)?;
        fs::write(dir.join("store.json"), serde_json::to_string(self)?)?;
        artifacts.extend(["summary.json".to_string(), "store.json".to_string()]);
        let mut manifest = self.manifest.clone();
        manifest.artifacts = artifacts;
        manifest.si_output = scales.si;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    /// Reload a store written by [`ResultStore::write`].
    pub fn load(dir: &Path) -> Result<Self, EnsembleError> {
        let text = fs::read_to_string(dir.join("store.json"))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Artifacts grouped by file name, for callers that want the raw series.
pub fn named_series(store: &ResultStore) -> BTreeMap<&'static str, &BinnedSeries> {
    let mut out = BTreeMap::new();
    match &store.accumulators {
        Accumulators::Spectral(a) => {
            out.insert("dos", &a.dos);
            out.insert("ipr", &a.ipr);
            out.insert("gfd", &a.gfd);
        }
        Accumulators::Lsr(a) => {
            out.insert("lsr", &a.lsr);
        }
        Accumulators::Dynamics(a) | Accumulators::Lindblad(a) => {
            out.insert("late_profile", &a.late_profile);
        }
        Accumulators::LowEnergy(_) => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(experiment: Experiment, n_real: usize) -> RunConfig {
        RunConfig::new(CloudSpec::uniform_at_density(40, 0.1, 0), experiment, n_real, 11)
    }

    #[test]
    fn single_realization_matches_manual_pipeline() {
        let cfg = small(Experiment::Spectral(SpectralOptions::default()), 1);
        let store = run_ensemble(&cfg, 1).unwrap();
        let c = sample_configuration(&cfg.cloud.with_seed(derive_seed(11, 0))).unwrap();
        let s = diagonalize(&build_hamiltonian(&c, &cfg.model).unwrap()).unwrap();
        let mut dos = dos_accumulator(SpectralOptions::default().energy_bins.edges());
        accumulate_dos(&mut dos, &s.eigenvalues);
        let Accumulators::Spectral(a) = &store.accumulators else { panic!() };
        assert_eq!(a.dos, dos);
    }

    #[test]
    fn dos_counts_every_state() {
        let cfg = small(Experiment::Spectral(SpectralOptions::default()), 7);
        let store = run_ensemble(&cfg, 2).unwrap();
        let Accumulators::Spectral(a) = &store.accumulators else { panic!() };
        assert_eq!(a.dos.total_count() + a.dos.overflow + a.dos.underflow, 7 * 40);
        assert_eq!(a.dos.realizations, 7);
    }

    #[test]
    fn config_errors_map_to_exit_code_two() {
        let mut cfg = small(Experiment::Lsr(LsrOptions::default()), 1);
        cfg.n_realizations = 0;
        let e = run_ensemble(&cfg, 1).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(RunConfig::from_json("{\"cloud\": 3}").is_err());
    }

    #[test]
    fn failure_budget_aborts() {
        // more atoms than fit at the jamming limit with a tiny attempt budget
        let mut cloud = CloudSpec::uniform_at_density(60, 0.5, 0);
        cloud.max_attempts_per_atom = 1;
        let mut cfg = RunConfig::new(cloud, Experiment::Lsr(LsrOptions::default()), 4, 3);
        let e = run_ensemble(&cfg, 1).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        cfg.failure_budget = 4;
        let store = run_ensemble(&cfg, 1).unwrap();
        assert_eq!(store.manifest.failures.len() + store.manifest.realizations_completed, 4);
    }

    #[test]
    fn json_round_trip_and_hash() {
        let cfg = small(
            Experiment::Lindblad(LindbladOptions {
                alpha_window: Some(FitWindow::new(10.0, 100.0)),
                ..Default::default()
            }),
            3,
        );
        let text = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
        let minimal = r#"{"cloud": {"profile": "uniform_disk", "n_atoms": 50, "radius": 20.0},
                          "experiment": {"kind": "spectral"}, "n_realizations": 2}"#;
        let m = RunConfig::from_json(minimal).unwrap();
        assert_eq!(m.experiment, Experiment::Spectral(SpectralOptions::default()));
        assert_eq!(m.master_seed, 1);
    }

    #[test]
    fn constant_scalars_have_zero_stderr() {
        let mut m = Moments::default();
        for _ in 0..10 {
            m.push(2.5);
        }
        assert_eq!(m.stderr(), 0.0);
    }

    #[test]
    fn store_write_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Experiment::Dynamics(DynamicsOptions::default()), 2);
        cfg.log_scalars = true;
        let store = run_ensemble(&cfg, 1).unwrap();
        let manifest = store.write(dir.path(), OutputScales::internal()).unwrap();
        assert!(manifest.artifacts.contains(&"msd.csv".to_string()));
        let text = fs::read_to_string(dir.path().join("msd.csv")).unwrap();
        assert!(text.starts_with(&format!("# config_hash={}", cfg.hash())));
        assert_eq!(ResultStore::load(dir.path()).unwrap(), store);
        assert_eq!(store.scalars.len(), 2);
    }
}
