//! Single-excitation hopping Hamiltonian of a dipolar cloud.
//!
//! Internal units: `r_b = C3 = ħ = 1`, so energies are in `C3/(ħ r_b³)` and
//! times in `r_b³/C3`.

use std::f64::consts::PI;
use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Configuration, Point};

/// Pairs closer than this are treated as coincident.
pub const MIN_PAIR_DISTANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("atoms {i} and {j} coincide (distance {distance:e})")]
    DuplicatePositions { i: usize, j: usize, distance: f64 },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
}

/// Orientation of the dipole quantization axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisMode {
    /// Axis normal to the plane: every in-plane pair sits at θ = π/2.
    IsotropicPerpendicular,
    /// Arbitrary axis, normalized on use.
    ExplicitAxis([f64; 3]),
}

/// Experimental scales used only for reporting in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiUnits {
    /// `C3 / 2π` in GHz·µm³.
    pub c3_over_2pi_ghz_um3: f64,
    /// Blockade radius in µm.
    pub r_b_um: f64,
}

impl Default for SiUnits {
    fn default() -> Self {
        Self {
            c3_over_2pi_ghz_um3: 0.86,
            r_b_um: 5.0,
        }
    }
}

impl SiUnits {
    /// Energy unit `C3/(h r_b³)` as a cyclic frequency in Hz.
    pub fn energy_unit_hz(&self) -> f64 {
        self.c3_over_2pi_ghz_um3 * 1e9 / self.r_b_um.powi(3)
    }

    /// Time unit `r_b³/C3` in seconds.
    pub fn time_unit_s(&self) -> f64 {
        1.0 / (2.0 * PI * self.energy_unit_hz())
    }

    pub fn energy_to_mhz(&self, e: f64) -> f64 {
        e * self.energy_unit_hz() * 1e-6
    }

    pub fn time_to_us(&self, t: f64) -> f64 {
        t * self.time_unit_s() * 1e6
    }

    pub fn time_from_us(&self, t_us: f64) -> f64 {
        t_us * 1e-6 / self.time_unit_s()
    }

    /// Convert a decay rate given in kHz (10³ s⁻¹) to internal units.
    pub fn rate_from_khz(&self, khz: f64) -> f64 {
        khz * 1e3 * self.time_unit_s()
    }

    pub fn rate_to_khz(&self, rate: f64) -> f64 {
        rate / self.time_unit_s() * 1e-3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(default = "unit_c3")]
    pub c3: f64,
    #[serde(default = "isotropic")]
    pub axis: AxisMode,
    #[serde(default)]
    pub si: Option<SiUnits>,
}

fn unit_c3() -> f64 {
    1.0
}
fn isotropic() -> AxisMode {
    AxisMode::IsotropicPerpendicular
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            c3: 1.0,
            axis: AxisMode::IsotropicPerpendicular,
            si: Some(SiUnits::default()),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), CouplingError> {
        if !(self.c3 > 0.0 && self.c3.is_finite()) {
            return Err(CouplingError::InvalidParams(format!("C3 must be positive, got {}", self.c3)));
        }
        if let AxisMode::ExplicitAxis(a) = self.axis {
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            if !(n > 0.0 && n.is_finite()) {
                return Err(CouplingError::InvalidParams("quantization axis must be nonzero".into()));
            }
        }
        Ok(())
    }
}

/// Dense real symmetric matrix `H_ij = -V_ij` with zero diagonal.
#[derive(Debug, Clone)]
pub struct HoppingMatrix {
    entries: Mat<f64>,
}

impl HoppingMatrix {
    /// Wrap an existing symmetric matrix (used for reduced models and tests).
    pub fn from_mat(entries: Mat<f64>) -> Self {
        assert_eq!(entries.nrows(), entries.ncols(), "hopping matrix must be square");
        Self { entries }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.entries
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: Mat::from_fn(self.n(), self.n(), |i, j| self.entries[(i, j)] * factor),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| self.entries[(i, j)] == self.entries[(j, i)]))
    }

    /// Largest absolute row sum, an upper bound on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.entries[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Row-major little-endian `f64` dump.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.n();
        let mut row = Vec::with_capacity(8 * n);
        for i in 0..n {
            row.clear();
            for j in 0..n {
                row.extend_from_slice(&self.entries[(i, j)].to_le_bytes());
            }
            w.write_all(&row)?;
        }
        Ok(())
    }

    pub fn read_binary(bytes: &[u8], n: usize) -> Option<Self> {
        if bytes.len() != 8 * n * n {
            return None;
        }
        let at = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
        Some(Self {
            entries: Mat::from_fn(n, n, |i, j| at(i * n + j)),
        })
    }

    /// JSON sidecar for [`HoppingMatrix::write_binary`].
    pub fn sidecar(&self, params: &ModelParams, provenance: &str) -> serde_json::Value {
        serde_json::json!({
            "n": self.n(),
            "layout": "row-major",
            "dtype": "f64-le",
            "units": "energy in C3/(hbar r_b^3); lengths in r_b",
            "model": params,
            "provenance": provenance,
        })
    }
}

fn unit_axis(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Dipolar exchange `V = C3 (1 - 3cos²θ) / r³` for the pair separation `d`.
fn dipolar(c3: f64, axis: &AxisMode, d: [f64; 3], r: f64) -> f64 {
    let inv_r3 = 1.0 / (r * r * r);
    match axis {
        AxisMode::IsotropicPerpendicular => c3 * inv_r3,
        AxisMode::ExplicitAxis(a) => {
            let u = unit_axis(*a);
            let cos = (u[0] * d[0] + u[1] * d[1] + u[2] * d[2]) / r;
            c3 * (1.0 - 3.0 * cos * cos) * inv_r3
        }
    }
}

/// Build the hopping matrix of a configuration.
pub fn build_hamiltonian(
    config: &Configuration,
    params: &ModelParams,
) -> Result<HoppingMatrix, CouplingError> {
    build_from_positions(&config.positions, params)
}

pub fn build_from_positions(
    positions: &[Point],
    params: &ModelParams,
) -> Result<HoppingMatrix, CouplingError> {
    params.validate()?;
    let n = positions.len();
    let mut h = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        let pi = positions[i];
        for j in 0..i {
            let pj = positions[j];
            let d = [pi[0] - pj[0], pi[1] - pj[1], pi[2] - pj[2]];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r < MIN_PAIR_DISTANCE {
                return Err(CouplingError::DuplicatePositions { i: j, j: i, distance: r });
            }
            let v = -dipolar(params.c3, &params.axis, d, r);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(HoppingMatrix { entries: h })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(d: f64) -> Vec<Point> {
        vec![[0.0, 0.0, 0.0], [d, 0.0, 0.0]]
    }

    #[test]
    fn unit_and_double_distance() {
        let p = ModelParams::default();
        let h = build_from_positions(&pair(1.0), &p).unwrap();
        assert_eq!(h.get(0, 1), -1.0);
        assert_eq!(h.get(1, 0), -1.0);
        assert_eq!(h.get(0, 0), 0.0);
        let h = build_from_positions(&pair(2.0), &p).unwrap();
        assert_eq!(h.get(0, 1), -0.125);
    }

    #[test]
    fn duplicate_positions_rejected() {
        let err = build_from_positions(&pair(1e-12), &ModelParams::default()).unwrap_err();
        assert!(matches!(err, CouplingError::DuplicatePositions { .. }));
    }

    #[test]
    fn explicit_axis_follows_angular_factor() {
        let mut p = ModelParams::default();
        // axis along the pair: cos θ = 1 → V = -2 C3/r³, H = +2
        p.axis = AxisMode::ExplicitAxis([1.0, 0.0, 0.0]);
        let h = build_from_positions(&pair(1.0), &p).unwrap();
        assert!((h.get(0, 1) - 2.0).abs() < 1e-15);
        // perpendicular axis reproduces the isotropic value
        p.axis = AxisMode::ExplicitAxis([0.0, 0.0, 3.0]);
        let h = build_from_positions(&pair(1.0), &p).unwrap();
        assert!((h.get(0, 1) + 1.0).abs() < 1e-15);
        // magic angle: V vanishes
        let magic = (1.0_f64 / 3.0).sqrt().acos();
        p.axis = AxisMode::ExplicitAxis([magic.cos(), magic.sin(), 0.0]);
        let h = build_from_positions(&pair(1.0), &p).unwrap();
        assert!(h.get(0, 1).abs() < 1e-15);
    }

    #[test]
    fn si_conversions() {
        let si = SiUnits::default();
        assert!((si.energy_unit_hz() - 6.88e6).abs() < 1.0);
        // one internal time unit is about 23 ns
        assert!((si.time_to_us(1.0) - 0.023_133).abs() < 1e-5);
        assert!((si.time_from_us(si.time_to_us(7.0)) - 7.0).abs() < 1e-12);
        assert!((si.rate_to_khz(si.rate_from_khz(10.0)) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn binary_dump_round_trip() {
        let pos = vec![[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [0.0, 2.0, 0.0]];
        let h = build_from_positions(&pos, &ModelParams::default()).unwrap();
        let mut buf = Vec::new();
        h.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 72);
        let back = HoppingMatrix::read_binary(&buf, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(back.get(i, j).to_bits(), h.get(i, j).to_bits());
            }
        }
        assert!(HoppingMatrix::read_binary(&buf, 2).is_none());
    }
}
