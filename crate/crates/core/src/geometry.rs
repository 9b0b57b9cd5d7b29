//! Blockade-constrained random atom clouds.
//!
//! Atoms are placed by random sequential adsorption: proposals are drawn from
//! the cloud profile one at a time and rejected when they fall closer than the
//! blockade radius to an already accepted atom. A uniform grid with cell size
//! `r_b` restricts each rejection test to the neighbouring cells.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, RNG_ALGORITHM};

/// Atom position in units of the blockade radius. Planar clouds keep `z = 0`.
pub type Point = [f64; 3];

/// Default hard cap on the packing fraction of uniform clouds.
pub const DEFAULT_RHO_CAP: f64 = 0.53;
/// Default proposal budget per atom.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;
/// Gaussian profiles are truncated at this many standard deviations.
pub const GAUSSIAN_TRUNCATION: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid cloud spec: {0}")]
    InvalidSpec(String),
    #[error("jamming limit unreachable: atom {atom} not placed after {attempts} attempts")]
    JammingUnreachable { atom: usize, attempts: u64 },
    #[error("at least two atoms are required, got {0}")]
    TooFewAtoms(usize),
    #[error("malformed configuration file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    UniformDisk,
    GaussianDisk,
    /// Planar profile (uniform, or Gaussian when `sigma_in_plane` is set)
    /// with an independent Gaussian transverse coordinate.
    Pancake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSpec {
    pub profile: Profile,
    pub n_atoms: usize,
    /// Disk radius for uniform profiles.
    pub radius: f64,
    #[serde(default = "one")]
    pub blockade: f64,
    #[serde(default)]
    pub sigma_in_plane: Option<f64>,
    #[serde(default)]
    pub sigma_z: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rho_cap")]
    pub rho_cap: f64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts_per_atom: u64,
}

fn one() -> f64 {
    1.0
}
fn default_rho_cap() -> f64 {
    DEFAULT_RHO_CAP
}
fn default_max_attempts() -> u64 {
    DEFAULT_MAX_ATTEMPTS
}

impl CloudSpec {
    /// Uniform disk of the given radius.
    pub fn uniform(n_atoms: usize, radius: f64, seed: u64) -> Self {
        Self {
            profile: Profile::UniformDisk,
            n_atoms,
            radius,
            blockade: 1.0,
            sigma_in_plane: None,
            sigma_z: None,
            seed,
            rho_cap: DEFAULT_RHO_CAP,
            max_attempts_per_atom: DEFAULT_MAX_ATTEMPTS,
        }
    }

    /// Uniform disk whose radius realizes packing fraction `rho` for `n_atoms`.
    pub fn uniform_at_density(n_atoms: usize, rho: f64, seed: u64) -> Self {
        Self::uniform(n_atoms, radius_for_density(n_atoms, rho, 1.0), seed)
    }

    /// Isotropic Gaussian disk, truncated at four standard deviations.
    pub fn gaussian(n_atoms: usize, sigma: f64, seed: u64) -> Self {
        Self {
            profile: Profile::GaussianDisk,
            radius: GAUSSIAN_TRUNCATION * sigma,
            sigma_in_plane: Some(sigma),
            ..Self::uniform(n_atoms, GAUSSIAN_TRUNCATION * sigma, seed)
        }
    }

    /// Uniform disk with a Gaussian transverse profile of width `sigma_z`.
    pub fn pancake(n_atoms: usize, radius: f64, sigma_z: f64, seed: u64) -> Self {
        Self {
            profile: Profile::Pancake,
            sigma_z: Some(sigma_z),
            ..Self::uniform(n_atoms, radius, seed)
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Radius of the region proposals are drawn from.
    pub fn region_radius(&self) -> f64 {
        match (self.profile, self.sigma_in_plane) {
            (Profile::GaussianDisk, Some(s)) | (Profile::Pancake, Some(s)) => {
                GAUSSIAN_TRUNCATION * s
            }
            _ => self.radius,
        }
    }

    /// Nominal packing fraction. For Gaussian in-plane profiles this is the
    /// peak value `N r_b² / (8 σ²)` of the untruncated distribution.
    pub fn nominal_rho(&self) -> f64 {
        match self.sigma_in_plane {
            Some(s) if self.profile != Profile::UniformDisk => {
                self.n_atoms as f64 * self.blockade * self.blockade / (8.0 * s * s)
            }
            _ => packing_fraction(self.n_atoms, self.radius, self.blockade),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidSpec(m));
        if self.n_atoms == 0 {
            return bad("n_atoms must be at least 1".into());
        }
        if !(self.blockade > 0.0 && self.blockade.is_finite()) {
            return bad(format!("blockade radius must be positive, got {}", self.blockade));
        }
        match self.profile {
            Profile::UniformDisk => {}
            Profile::GaussianDisk => match self.sigma_in_plane {
                Some(s) if s > 0.0 && s.is_finite() => {}
                _ => return bad("GaussianDisk requires sigma_in_plane > 0".into()),
            },
            Profile::Pancake => {
                match self.sigma_z {
                    Some(s) if s > 0.0 && s.is_finite() => {}
                    _ => return bad("Pancake requires sigma_z > 0".into()),
                }
                if let Some(s) = self.sigma_in_plane {
                    if !(s > 0.0 && s.is_finite()) {
                        return bad("sigma_in_plane must be positive".into());
                    }
                }
            }
        }
        let r = self.region_radius();
        if !(r > 0.0 && r.is_finite()) {
            return bad(format!("radius must be positive, got {r}"));
        }
        if self.profile == Profile::UniformDisk
            || (self.profile == Profile::Pancake && self.sigma_in_plane.is_none())
        {
            let rho = packing_fraction(self.n_atoms, self.radius, self.blockade);
            if rho > self.rho_cap {
                return bad(format!(
                    "packing fraction {rho:.4} exceeds cap {:.4}",
                    self.rho_cap
                ));
            }
        }
        if self.max_attempts_per_atom == 0 {
            return bad("attempt budget must be positive".into());
        }
        Ok(())
    }
}

/// Fraction of the disk area covered by `n_atoms` disks of diameter `r_b`.
pub fn packing_fraction(n_atoms: usize, radius: f64, r_b: f64) -> f64 {
    n_atoms as f64 * (r_b / 2.0).powi(2) / (radius * radius)
}

/// Disk radius at which `n_atoms` reach packing fraction `rho`.
pub fn radius_for_density(n_atoms: usize, rho: f64, r_b: f64) -> f64 {
    (n_atoms as f64 * (r_b / 2.0).powi(2) / rho).sqrt()
}

/// One disorder realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub positions: Vec<Point>,
    pub spec: CloudSpec,
    pub rho: f64,
    pub attempts_used: u64,
}

impl Configuration {
    /// Configuration with hand-placed atoms (clusters, tests).
    pub fn from_positions(positions: Vec<Point>) -> Self {
        let radius = positions
            .iter()
            .map(|p| norm(p))
            .fold(0.0_f64, f64::max)
            .max(0.5);
        let spec = CloudSpec::uniform(positions.len(), radius, 0);
        Self {
            rho: packing_fraction(positions.len(), radius, 1.0),
            positions,
            spec,
            attempts_used: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Multiply every coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            for c in p.iter_mut() {
                *c *= factor;
            }
        }
        out.spec.radius *= factor;
        out
    }

    /// Geometric center of the sampling region.
    pub fn centroid(&self) -> Point {
        [0.0; 3]
    }

    pub fn is_three_dimensional(&self) -> bool {
        self.spec.profile == Profile::Pancake
    }

    /// CSV with one row per atom: `index,x,y[,z]`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let three_d = self.is_three_dimensional();
        if three_d {
            writeln!(w, "index,x,y,z")?;
        } else {
            writeln!(w, "index,x,y")?;
        }
        for (i, p) in self.positions.iter().enumerate() {
            if three_d {
                writeln!(w, "{i},{:?},{:?},{:?}", p[0], p[1], p[2])?;
            } else {
                writeln!(w, "{i},{:?},{:?}", p[0], p[1])?;
            }
        }
        Ok(())
    }

    /// Metadata sidecar for [`Configuration::write_csv`].
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "spec": self.spec,
            "seed": self.spec.seed,
            "rho": self.rho,
            "attempts_used": self.attempts_used,
            "n_atoms": self.positions.len(),
            "rng": RNG_ALGORITHM,
        })
    }

    /// Parse the CSV produced by [`Configuration::write_csv`].
    pub fn read_csv(text: &str, spec: CloudSpec) -> Result<Self, GeometryError> {
        let mut positions = Vec::new();
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 3 {
                return Err(GeometryError::Parse(format!("line {}: too few fields", line_no + 1)));
            }
            let mut p = [0.0; 3];
            for (k, f) in fields[1..].iter().take(3).enumerate() {
                p[k] = f
                    .trim()
                    .parse()
                    .map_err(|e| GeometryError::Parse(format!("line {}: {e}", line_no + 1)))?;
            }
            positions.push(p);
        }
        Ok(Self {
            rho: spec.nominal_rho(),
            positions,
            spec,
            attempts_used: 0,
        })
    }
}

pub(crate) fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Euclidean distance. The same expression is used by the sampler's
/// rejection test, so accepted configurations never report a distance below
/// the blockade radius.
pub fn distance(a: &Point, b: &Point) -> f64 {
    distance_sq(a, b).sqrt()
}

fn distance_sq(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Smallest pairwise distance.
pub fn min_pair_distance(config: &Configuration) -> Result<f64, GeometryError> {
    let pos = &config.positions;
    if pos.len() < 2 {
        return Err(GeometryError::TooFewAtoms(pos.len()));
    }
    let mut best = f64::INFINITY;
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            best = best.min(distance_sq(&pos[i], &pos[j]));
        }
    }
    Ok(best.sqrt())
}

/// Planar bucket grid over `[-extent, extent]²` with cell size `r_b`.
///
/// Pancake clouds are bucketed by their in-plane coordinates only: any atom
/// within 3D distance `r_b` is also within in-plane distance `r_b`, so the
/// 3×3 cell neighbourhood still covers every conflict.
struct CellGrid {
    extent: f64,
    cell: f64,
    side: usize,
    cells: Vec<Vec<u32>>,
}

impl CellGrid {
    fn new(extent: f64, cell: f64) -> Self {
        let side = ((2.0 * extent / cell).ceil() as usize).max(1) + 1;
        Self {
            extent,
            cell,
            side,
            cells: vec![Vec::new(); side * side],
        }
    }

    fn coords(&self, p: &Point) -> (usize, usize) {
        let f = |x: f64| (((x + self.extent) / self.cell).floor().max(0.0) as usize).min(self.side - 1);
        (f(p[0]), f(p[1]))
    }

    fn insert(&mut self, p: &Point, idx: u32) {
        let (cx, cy) = self.coords(p);
        self.cells[cy * self.side + cx].push(idx);
    }

    fn conflicts(&self, p: &Point, accepted: &[Point], r_b_sq: f64) -> bool {
        let (cx, cy) = self.coords(p);
        let lo = |c: usize| c.saturating_sub(1);
        let hi = |c: usize| (c + 1).min(self.side - 1);
        for y in lo(cy)..=hi(cy) {
            for x in lo(cx)..=hi(cx) {
                for &j in &self.cells[y * self.side + x] {
                    if distance_sq(p, &accepted[j as usize]) < r_b_sq {
                        return true;
                    }
                }
            }
        }
        false
    }
}

fn propose<R: Rng>(spec: &CloudSpec, rng: &mut R) -> Option<Point> {
    let planar = |rng: &mut R| -> Option<[f64; 2]> {
        match spec.sigma_in_plane {
            Some(s) if spec.profile != Profile::UniformDisk => {
                let x: f64 = rng.sample::<f64, _>(StandardNormal) * s;
                let y: f64 = rng.sample::<f64, _>(StandardNormal) * s;
                ((x * x + y * y).sqrt() <= GAUSSIAN_TRUNCATION * s).then_some([x, y])
            }
            _ => {
                let u: f64 = rng.random();
                let phi: f64 = rng.random::<f64>() * 2.0 * PI;
                let r = spec.radius * u.sqrt();
                let p = [r * phi.cos(), r * phi.sin()];
                ((p[0] * p[0] + p[1] * p[1]).sqrt() <= spec.radius).then_some(p)
            }
        }
    };
    let [x, y] = planar(rng)?;
    let z = match (spec.profile, spec.sigma_z) {
        (Profile::Pancake, Some(sz)) => {
            let z: f64 = StandardNormal.sample(rng);
            let z = z * sz;
            if z.abs() > GAUSSIAN_TRUNCATION * sz {
                return None;
            }
            z
        }
        _ => 0.0,
    };
    Some([x, y, z])
}

/// Draw one blockade-respecting configuration. Deterministic in `spec.seed`.
pub fn sample_configuration(spec: &CloudSpec) -> Result<Configuration, GeometryError> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let r_b_sq = spec.blockade * spec.blockade;
    let mut grid = CellGrid::new(spec.region_radius(), spec.blockade);
    let mut positions: Vec<Point> = Vec::with_capacity(spec.n_atoms);
    let mut attempts_used = 0_u64;

    for atom in 0..spec.n_atoms {
        let mut attempts = 0_u64;
        loop {
            if attempts == spec.max_attempts_per_atom {
                return Err(GeometryError::JammingUnreachable { atom, attempts });
            }
            attempts += 1;
            let Some(p) = propose(spec, &mut rng) else {
                continue;
            };
            if !grid.conflicts(&p, &positions, r_b_sq) {
                grid.insert(&p, positions.len() as u32);
                positions.push(p);
                break;
            }
        }
        attempts_used += attempts;
    }

    Ok(Configuration {
        positions,
        rho: spec.nominal_rho(),
        spec: spec.clone(),
        attempts_used,
    })
}
