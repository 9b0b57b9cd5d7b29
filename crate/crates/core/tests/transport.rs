use rydloc::coupling::{build_hamiltonian, ModelParams};
use rydloc::dynamics::{diagonal_ensemble, msd, time_averaged_populations, InitialState};
use rydloc::geometry::{sample_configuration, CloudSpec};
use rydloc::spectra::{diagonalize, Spectrum};

fn realization(n: usize, rho: f64, seed: u64) -> (Vec<[f64; 3]>, Spectrum, InitialState) {
    let cfg = sample_configuration(&CloudSpec::uniform_at_density(n, rho, seed)).unwrap();
    let h = build_hamiltonian(&cfg, &ModelParams::default()).unwrap();
    let psi0 = InitialState::center(&cfg);
    (cfg.positions, diagonalize(&h).unwrap(), psi0)
}

fn max_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn long_time_average_matches_diagonal_ensemble() {
    for seed in [1u64, 2] {
        let (_, s, psi0) = realization(100, 0.1, seed);
        let de = diagonal_ensemble(&s, psi0);
        assert!((de.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let avg = time_averaged_populations(&s, psi0, 1e3, 1e6, 100_000);
        let worst = max_deviation(&avg, &de);
        assert!(worst < 1e-3, "seed {seed}: {worst}");
    }
}

// Over a window of 9·10³ the average cannot separate level pairs closer than
// ~10⁻⁴, so individual realizations may miss the diagonal ensemble by more
// than 10⁻³ (seed 1 does, through a pair split by 1.9·10⁻⁴).
#[test]
#[ignore = "finite-window limit: unresolved near-degenerate pairs"]
fn decade_window_average_matches_diagonal_ensemble() {
    for seed in [1u64, 2, 3] {
        let (_, s, psi0) = realization(200, 0.1, seed);
        let avg = time_averaged_populations(&s, psi0, 1e3, 1e4, 8000);
        let worst = max_deviation(&avg, &diagonal_ensemble(&s, psi0));
        assert!(worst < 1e-3, "seed {seed}: {worst}");
    }
}

#[test]
fn windowed_msd_discrepancy_shrinks_with_window() {
    let windows: Vec<f64> = (0..7).map(|k| 1e3 * 2f64.powi(k)).collect();
    let mut mean_gap = vec![0.0; windows.len()];
    let seeds = 1..13u64;
    let count = seeds.clone().count() as f64;
    for seed in seeds {
        let (pos, s, psi0) = realization(100, 0.1, seed);
        let origin = pos[psi0.site];
        let target = msd(&diagonal_ensemble(&s, psi0), &pos, origin);
        for (g, &t1) in mean_gap.iter_mut().zip(&windows) {
            let avg = time_averaged_populations(&s, psi0, 0.0, t1, (t1 / 2.0) as usize);
            *g += (msd(&avg, &pos, origin) - target).abs() / count;
        }
    }
    assert!(mean_gap.windows(2).all(|w| w[1] < w[0]), "{mean_gap:?}");
}
