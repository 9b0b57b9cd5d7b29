//! Exact diagonalization and eigenstate localization measures.

use faer::{Mat, Side};
use thiserror::Error;

pub use crate::binning::{BinnedSeries, Normalization};
use crate::coupling::HoppingMatrix;

/// Eigenvalues closer than this multiple of `‖H‖₂` are treated as degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-10;
/// Allowed deviation of `‖c‖₂` from one.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum SpectraError {
    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("fractal dimension undefined at q = 1")]
    DegenerateQ,
    #[error("system size must be at least 2, got {0}")]
    TooSmall(usize),
    #[error("moment order must be positive, got {0}")]
    InvalidOrder(f64),
    #[error("DOS bins are not mirror-symmetric about zero")]
    AsymmetricBins,
}

/// Full eigendecomposition. Column `n` of `eigenvectors` belongs to
/// `eigenvalues[n]`, which are ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<f64>,
    /// `‖H‖₂ = max |E_n|`.
    pub spectral_norm: f64,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Amplitudes `c_j` of eigenstate `n`.
    pub fn state(&self, n: usize) -> &[f64] {
        column(&self.eigenvectors, n)
    }

    /// Maximal runs of consecutive eigenvalues whose neighbouring gaps are
    /// within `DEGENERACY_RTOL · ‖H‖₂`. Singletons are included.
    pub fn degenerate_blocks(&self) -> Vec<std::ops::Range<usize>> {
        let tol = DEGENERACY_RTOL * self.spectral_norm;
        let mut blocks = Vec::new();
        let mut start = 0;
        for k in 1..=self.n() {
            if k == self.n() || self.eigenvalues[k] - self.eigenvalues[k - 1] > tol {
                blocks.push(start..k);
                start = k;
            }
        }
        blocks
    }

    /// Degeneracy of each level (size of its block).
    pub fn degeneracies(&self) -> Vec<usize> {
        let mut out = vec![1; self.n()];
        for b in self.degenerate_blocks() {
            for k in b.clone() {
                out[k] = b.len();
            }
        }
        out
    }

    /// `max_n ‖H v_n − E_n v_n‖₂`.
    pub fn max_residual(&self, h: &Mat<f64>) -> f64 {
        let hv = h * &self.eigenvectors;
        (0..self.n())
            .map(|k| {
                let e = self.eigenvalues[k];
                column(&hv, k)
                    .iter()
                    .zip(self.state(k))
                    .map(|(a, b)| (a - e * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `max |VᵀV − I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.eigenvectors.transpose() * &self.eigenvectors;
        let n = self.n();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Contiguous view of column `j` of a column-major matrix.
pub fn column(m: &Mat<f64>, j: usize) -> &[f64] {
    m.col(j)
        .try_as_col_major()
        .expect("owned matrices are column-major")
        .as_slice()
}

/// Eigendecomposition of an arbitrary real symmetric matrix (lower triangle
/// is read).
pub fn symmetric_eigen(m: &Mat<f64>) -> Result<Spectrum, SpectraError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
            eigenvectors: Mat::zeros(0, 0),
            spectral_norm: 0.0,
        });
    }
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| SpectraError::ConvergenceFailure(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let mut eigenvalues: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let mut eigenvectors = evd.U().to_owned();
    if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        eigenvectors = Mat::from_fn(n, n, |i, j| eigenvectors[(i, order[j])]);
        eigenvalues = order.iter().map(|&k| eigenvalues[k]).collect();
    }
    if eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(SpectraError::ConvergenceFailure("non-finite eigenvalue".into()));
    }
    let spectral_norm = eigenvalues[0].abs().max(eigenvalues[n - 1].abs());
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        spectral_norm,
    })
}

/// Eigenvalues and eigenvectors of the hopping matrix.
pub fn diagonalize(h: &HoppingMatrix) -> Result<Spectrum, SpectraError> {
    symmetric_eigen(h.as_mat())
}

/// Ascending eigenvalues only (cheaper; for level statistics).
pub fn eigenvalues_only(h: &HoppingMatrix) -> Result<Vec<f64>, SpectraError> {
    if h.n() == 0 {
        return Ok(Vec::new());
    }
    let mut vals = h
        .as_mat()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| SpectraError::ConvergenceFailure(format!("{e:?}")))?;
    if vals.windows(2).any(|w| w[0] > w[1]) {
        vals.sort_by(f64::total_cmp);
    }
    Ok(vals)
}

fn check_normalized(state: &[f64]) -> Result<(), SpectraError> {
    let norm = state.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(SpectraError::NotNormalized(norm));
    }
    Ok(())
}

fn ipr_unchecked(state: &[f64]) -> f64 {
    state
        .iter()
        .map(|c| {
            let p = c * c;
            p * p
        })
        .sum()
}

/// Inverse participation ratio `Σ_j |c_j|⁴`.
pub fn ipr(state: &[f64]) -> Result<f64, SpectraError> {
    check_normalized(state)?;
    Ok(ipr_unchecked(state))
}

/// Participation moment `I_q = Σ_j |c_j|^{2q}`. `q = 2` is the IPR.
pub fn moments(state: &[f64], q: f64) -> Result<f64, SpectraError> {
    if !(q > 0.0) {
        return Err(SpectraError::InvalidOrder(q));
    }
    check_normalized(state)?;
    if q == 2.0 {
        return Ok(ipr_unchecked(state));
    }
    Ok(state
        .iter()
        .map(|c| {
            let p = c * c;
            if p == 0.0 {
                0.0
            } else {
                p.powf(q)
            }
        })
        .sum())
}

/// Finite-size fractal dimension from a moment value: `log_N(I_q)/(1 − q)`.
pub fn gfd_from_moment(i_q: f64, q: f64, n: usize) -> Result<f64, SpectraError> {
    if q == 1.0 {
        return Err(SpectraError::DegenerateQ);
    }
    if n < 2 {
        return Err(SpectraError::TooSmall(n));
    }
    Ok(i_q.ln() / (n as f64).ln() / (1.0 - q))
}

/// Finite-size generalized fractal dimension `D̃_q` of a state in a system of
/// `n` sites.
pub fn gfd(state: &[f64], q: f64, n: usize) -> Result<f64, SpectraError> {
    if q == 1.0 {
        return Err(SpectraError::DegenerateQ);
    }
    gfd_from_moment(moments(state, q)?, q, n)
}

/// Eigenstate observable to average per energy bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    Ipr,
    Gfd(f64),
}

impl Observable {
    pub fn evaluate(&self, state: &[f64]) -> Result<f64, SpectraError> {
        match *self {
            Observable::Ipr => ipr(state),
            Observable::Gfd(q) => gfd(state, q, state.len()),
        }
    }
}

/// Fresh DOS accumulator over the given edges.
pub fn dos_accumulator(bin_edges: Vec<f64>) -> BinnedSeries {
    BinnedSeries::new(bin_edges, Normalization::PerRealization)
}

/// Add one realization's eigenvalues to a DOS accumulator.
pub fn accumulate_dos(dos: &mut BinnedSeries, eigenvalues: &[f64]) {
    dos.add_realization(eigenvalues);
}

/// Eigenvalue histogram accumulated over realizations.
pub fn dos_histogram<'a, I>(spectra: I, bin_edges: Vec<f64>) -> BinnedSeries
where
    I: IntoIterator<Item = &'a Spectrum>,
{
    let mut dos = dos_accumulator(bin_edges);
    for s in spectra {
        accumulate_dos(&mut dos, &s.eigenvalues);
    }
    dos
}

/// Add one realization's eigenstates to an energy-binned observable.
pub fn accumulate_observable(
    series: &mut BinnedSeries,
    spectrum: &Spectrum,
    observable: Observable,
) -> Result<(), SpectraError> {
    for n in 0..spectrum.n() {
        let v = observable.evaluate(spectrum.state(n))?;
        series.add(spectrum.eigenvalues[n], v);
    }
    series.end_realization();
    Ok(())
}

/// Mean of an eigenstate observable per energy bin.
pub fn binned_eigenstate_observable<'a, I>(
    spectra: I,
    bin_edges: Vec<f64>,
    observable: Observable,
) -> Result<BinnedSeries, SpectraError>
where
    I: IntoIterator<Item = &'a Spectrum>,
{
    let mut series = BinnedSeries::new(bin_edges, Normalization::PerItem);
    for s in spectra {
        accumulate_observable(&mut series, s, observable)?;
    }
    Ok(series)
}

/// Mirror asymmetry `|Σ_{E>0} (D(E) − D(−E))| / Σ_E D(E)` of a DOS whose
/// bin edges are symmetric about zero: the imbalance between levels above
/// and below zero. A bin straddling zero is its own mirror and drops out.
pub fn dos_asymmetry(dos: &BinnedSeries) -> Result<f64, SpectraError> {
    let e = &dos.bin_edges;
    let m = e.len() - 1;
    let scale = e[m].abs().max(e[0].abs());
    if (0..=m).any(|i| (e[i] + e[m - i]).abs() > 1e-12 * scale) {
        return Err(SpectraError::AsymmetricBins);
    }
    let c = &dos.counts;
    let total: u64 = c.iter().sum();
    if total == 0 {
        return Ok(0.0);
    }
    let (below, above): (u64, u64) = (0..m / 2).fold((0, 0), |(lo, hi), b| (lo + c[b], hi + c[m - 1 - b]));
    Ok(below.abs_diff(above) as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{build_from_positions, ModelParams};

    fn spectrum_of(pos: &[[f64; 3]]) -> Spectrum {
        diagonalize(&build_from_positions(pos, &ModelParams::default()).unwrap()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn dimer_levels() {
        let s = spectrum_of(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!(close(s.eigenvalues[0], -1.0, 1e-14));
        assert!(close(s.eigenvalues[1], 1.0, 1e-14));
    }

    #[test]
    fn triangle_levels_and_degeneracy() {
        let h = 3f64.sqrt() / 2.0;
        let s = spectrum_of(&[[0.0; 3], [1.0, 0.0, 0.0], [0.5, h, 0.0]]);
        assert!(close(s.eigenvalues[0], -2.0, 1e-12));
        assert!(close(s.eigenvalues[1], 1.0, 1e-12));
        assert!(close(s.eigenvalues[2], 1.0, 1e-12));
        assert_eq!(s.degeneracies(), vec![1, 2, 2]);
    }

    #[test]
    fn line_trimer_levels() {
        // λ = 1/8 and the roots of λ² + λ/8 − 2 = 0
        let disc = (1.0_f64 / 64.0 + 8.0).sqrt();
        let expected = [(-0.125 - disc) / 2.0, 0.125, (-0.125 + disc) / 2.0];
        let s = spectrum_of(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        for (e, x) in s.eigenvalues.iter().zip(expected) {
            assert!(close(*e, x, 1e-12), "{e} vs {x}");
        }
        assert!(close(expected[0], -1.47810, 1e-5));
        assert!(close(expected[2], 1.35310, 1e-5));
    }

    #[test]
    fn ipr_examples() {
        let mut e = vec![0.0; 10];
        e[3] = 1.0;
        assert_eq!(ipr(&e).unwrap(), 1.0);
        let u = vec![0.1; 100];
        assert!(close(ipr(&u).unwrap(), 0.01, 1e-15));
        assert!(matches!(ipr(&[0.5, 0.5]), Err(SpectraError::NotNormalized(_))));
    }

    #[test]
    fn line_trimer_top_ipr() {
        let s = spectrum_of(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        // independent: (1, λ, 1)/norm with λ the lowest root
        let l = -1.478_098_9_f64;
        let norm2 = 2.0 + l * l;
        let expect = (2.0 + l.powi(4)) / (norm2 * norm2);
        assert!(close(ipr(s.state(2)).unwrap(), expect, 1e-6));
        assert!(close(expect, 0.3868, 5e-4));
    }

    #[test]
    fn moment_examples() {
        let u = vec![0.1; 100];
        assert!(close(moments(&u, 1.0).unwrap(), 1.0, 1e-13));
        assert!(close(moments(&u, 2.0).unwrap(), 0.01, 1e-15));
        assert!(close(moments(&u, 0.5).unwrap(), 10.0, 1e-12));
        assert!(moments(&u, 0.0).is_err());
    }

    #[test]
    fn moment_two_is_ipr_bitwise() {
        let s = spectrum_of(&[[0.0; 3], [1.0, 0.0, 0.0], [2.3, 0.4, 0.0], [0.2, 1.9, 0.0]]);
        for n in 0..s.n() {
            let st = s.state(n);
            assert_eq!(moments(st, 2.0).unwrap().to_bits(), ipr(st).unwrap().to_bits());
        }
    }

    #[test]
    fn gfd_examples() {
        for n in [10usize, 100, 1000] {
            let u = vec![1.0 / (n as f64).sqrt(); n];
            assert!(close(gfd(&u, 2.0, n).unwrap(), 1.0, 1e-10));
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            assert!(close(gfd(&e, 2.0, n).unwrap(), 0.0, 1e-15));
            let half = (n as f64).powf(-0.5);
            assert!(close(gfd_from_moment(half, 2.0, n).unwrap(), 0.5, 1e-12));
        }
        assert_eq!(gfd(&[1.0], 1.0, 2), Err(SpectraError::DegenerateQ));
        assert_eq!(gfd_from_moment(0.5, 2.0, 1), Err(SpectraError::TooSmall(1)));
    }

    #[test]
    fn dimer_dos_and_binned_ipr() {
        let s = spectrum_of(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        let dos = dos_histogram([&s], vec![-2.0, 0.0, 2.0]);
        assert_eq!(dos.counts, vec![1, 1]);
        let b = binned_eigenstate_observable([&s], vec![-2.0, 0.0, 2.0], Observable::Ipr).unwrap();
        for v in b.values() {
            assert!(close(v, 0.5, 1e-14));
        }
    }

    #[test]
    fn residual_and_orthonormality_on_sampled_cloud() {
        use crate::geometry::{sample_configuration, CloudSpec};
        let cfg = sample_configuration(&CloudSpec::uniform_at_density(200, 0.3, 3)).unwrap();
        let h = crate::coupling::build_hamiltonian(&cfg, &ModelParams::default()).unwrap();
        let s = diagonalize(&h).unwrap();
        assert!(s.max_residual(h.as_mat()) <= 1e-8 * s.spectral_norm);
        assert!(s.orthonormality_defect() <= 1e-8);
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let vals = eigenvalues_only(&h).unwrap();
        for (a, b) in vals.iter().zip(&s.eigenvalues) {
            assert!(close(*a, *b, 1e-10));
        }
    }

    #[test]
    fn dos_asymmetry_counts_mirror_mismatch() {
        let mut dos = dos_accumulator(crate::binning::uniform_edges(-2.0, 2.0, 4));
        accumulate_dos(&mut dos, &[-1.5, 1.5, -0.5, 0.5]);
        assert_eq!(dos_asymmetry(&dos).unwrap(), 0.0);
        accumulate_dos(&mut dos, &[1.5, 1.5]);
        // 4 levels above zero, 2 below
        assert!((dos_asymmetry(&dos).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        // only the balance counts, not the shape
        let mut moved = dos_accumulator(crate::binning::uniform_edges(-2.0, 2.0, 4));
        accumulate_dos(&mut moved, &[-1.5, 0.5]);
        assert_eq!(dos_asymmetry(&moved).unwrap(), 0.0);
        let shifted = dos_accumulator(crate::binning::uniform_edges(-2.0, 3.0, 5));
        assert_eq!(dos_asymmetry(&shifted), Err(SpectraError::AsymmetricBins));
    }
}
