//! Small regular clusters and the three-level dimer picture.

use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{build_from_positions, CouplingError, ModelParams};
use crate::geometry::Point;
use crate::spectra::{diagonalize, ipr, symmetric_eigen, SpectraError};

/// Ratio `V_couple / V_dimer` above which the perturbative picture is unreliable.
pub const PERTURBATIVE_LIMIT: f64 = 0.3;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("nearest-neighbour spacing {0} is below the blockade radius")]
    SpacingBelowBlockade(f64),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKind {
    Dimer,
    LineTrimer,
    Triangle,
    Square,
    /// Positions in units of the spacing.
    Custom(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGeometry {
    pub kind: ClusterKind,
    pub spacing: f64,
}

impl ClusterGeometry {
    pub fn new(kind: ClusterKind) -> Self {
        Self { kind, spacing: 1.0 }
    }

    pub fn with_spacing(kind: ClusterKind, spacing: f64) -> Result<Self, ClusterError> {
        let g = Self { kind, spacing };
        g.validate()?;
        Ok(g)
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ClusterKind::Dimer => "dimer",
            ClusterKind::LineTrimer => "line_trimer",
            ClusterKind::Triangle => "triangle",
            ClusterKind::Square => "square",
            ClusterKind::Custom(_) => "custom",
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        // the blockade radius is the unit length
        if !(self.spacing >= 1.0) {
            return Err(ClusterError::SpacingBelowBlockade(self.spacing));
        }
        Ok(())
    }

    pub fn positions(&self) -> Vec<Point> {
        let unit: Vec<Point> = match &self.kind {
            ClusterKind::Dimer => vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            ClusterKind::LineTrimer => vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            ClusterKind::Triangle => vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.75f64.sqrt(), 0.0]],
            ClusterKind::Square => vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            ClusterKind::Custom(p) => p.clone(),
        };
        unit.iter()
            .map(|p| [p[0] * self.spacing, p[1] * self.spacing, p[2] * self.spacing])
            .collect()
    }

    /// The four canonical clusters at spacing `r_b`.
    pub fn canonical() -> Vec<Self> {
        [ClusterKind::Dimer, ClusterKind::LineTrimer, ClusterKind::Triangle, ClusterKind::Square]
            .into_iter()
            .map(Self::new)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSpectrum {
    pub eigenvalues: Vec<f64>,
    pub iprs: Vec<f64>,
    pub degeneracies: Vec<usize>,
}

/// Levels and IPRs of a cluster through the full coupling and diagonalization path.
pub fn cluster_spectrum(geom: &ClusterGeometry) -> Result<ClusterSpectrum, ClusterError> {
    geom.validate()?;
    let h = build_from_positions(&geom.positions(), &ModelParams::default())?;
    let s = diagonalize(&h)?;
    let iprs = (0..s.n()).map(|k| ipr(s.state(k))).collect::<Result<_, _>>()?;
    Ok(ClusterSpectrum {
        degeneracies: s.degeneracies(),
        eigenvalues: s.eigenvalues,
        iprs,
    })
}

/// Result of the three-level model: symmetric dimer state `|φ₊⟩` at `−V_dimer`,
/// antisymmetric `|φ₋⟩` at `+V_dimer`, and a single site `|s⟩` at zero,
/// with `|φ₊⟩` and `|s⟩` coupled by `−√2·V_couple`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimerShift {
    /// Level continuously connected to the single-site state.
    pub shift: f64,
    /// Weights of that level on `(φ₊, φ₋, s)`.
    pub weights: [f64; 3],
    /// Level connected to `|φ₋⟩` (stays at `+V_dimer`).
    pub antisymmetric_level: f64,
    /// True when `V_couple / V_dimer` exceeds [`PERTURBATIVE_LIMIT`].
    pub beyond_perturbative: bool,
}

pub fn dimer_perturbation_shift(v_dimer: f64, v_couple: f64) -> DimerShift {
    let beyond = v_couple.abs() > PERTURBATIVE_LIMIT * v_dimer.abs();
    if beyond {
        log::warn!(
            "coupling ratio {:.3} exceeds {PERTURBATIVE_LIMIT}; the three-level picture is not perturbative",
            v_couple / v_dimer
        );
    }
    let g = -std::f64::consts::SQRT_2 * v_couple;
    let mut m = Mat::<f64>::zeros(3, 3);
    m[(0, 0)] = -v_dimer;
    m[(1, 1)] = v_dimer;
    m[(0, 2)] = g;
    m[(2, 0)] = g;
    let s = symmetric_eigen(&m).expect("3x3 symmetric eigenproblem");
    let weight = |n: usize, k: usize| s.eigenvectors[(k, n)].powi(2);
    let pick = |k: usize| {
        (0..3)
            .max_by(|&a, &b| weight(a, k).total_cmp(&weight(b, k)))
            .unwrap()
    };
    let single = pick(2);
    let anti = pick(1);
    DimerShift {
        shift: s.eigenvalues[single],
        weights: [weight(single, 0), weight(single, 1), weight(single, 2)],
        antisymmetric_level: s.eigenvalues[anti],
        beyond_perturbative: beyond,
    }
}
