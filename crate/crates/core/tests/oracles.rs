//! Independent oracles for derived quantities: brute-force Monte Carlo,
//! explicit matrices and grid searches that share no code path with the
//! closed forms they check.

use qetlab::c64;
use qetlab::dynamics::{evolve, time_averaged_density, time_stats_closed_form, time_stats_quadrature, DensityMatrix};
use qetlab::entropy::Entropy;
use qetlab::equilibrium::macro_equivalence;
use qetlab::rng::trial_rng;
use qetlab::sampling::{haar_unitary, random_decomposition, uniform_sphere_state, StateVector};
use qetlab::spectra::sample_nonresonant_spectrum;
use qetlab::typicality::{algebra_statistic, check_theorem_condition, compute_f, concentration_experiment};
use rand::Rng;

/// `‖Pψ‖²` for the projector onto the first `d` columns of a Haar frame,
/// summed amplitude by amplitude.
fn brute_force_weight(dim: usize, d: usize, frame: &[Vec<c64>], psi: &[c64]) -> f64 {
    (0..d)
        .map(|k| {
            let amp: c64 = (0..dim).map(|a| frame[k][a].conj() * psi[a]).sum();
            amp.norm_sqr()
        })
        .sum()
}

#[test]
fn sphere_variance_formula_matches_small_dimension_monte_carlo() {
    // D = 4, d = 1 and d = 2: the weight is Beta(d, D - d) with variance
    // d(D-d) / (D²(D+1)); here it is estimated from explicit vectors.
    let dim = 4;
    let mut rng = trial_rng(31, 0);
    let u = haar_unitary(dim, &mut rng).unwrap();
    let frame: Vec<Vec<c64>> = (0..dim).map(|k| (0..dim).map(|a| u.as_ref()[(a, k)]).collect()).collect();
    let n = 200_000;
    for d in [1usize, 2] {
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let psi = uniform_sphere_state(dim, &mut rng).unwrap();
                brute_force_weight(dim, d, &frame, psi.coefficients())
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let exact = (d * (dim - d)) as f64 / (dim * dim * (dim + 1)) as f64;
        assert!((var - exact).abs() < 0.02 * exact, "d = {d}: {var} vs {exact}");
        assert!((mean - d as f64 / dim as f64).abs() < 4.0 * (var / n as f64).sqrt());
    }
}

#[test]
fn two_dimensional_concentration_is_uniform() {
    // |c_1|² is uniform on [0, 1] when D = 2: mean 1/2, variance 1/12
    let d = random_decomposition(&[1, 1], &mut trial_rng(1, 0)).unwrap();
    let r = concentration_experiment(&d, 100_000, &mut trial_rng(1, 1)).unwrap();
    assert!((r.empirical_mean[0] - 0.5).abs() < 3.0 * r.standard_error[0]);
    assert!((r.empirical_variance[0] - 1.0 / 12.0).abs() < 0.02 / 12.0);
    assert!(r.empirical_variance[0] < r.variance_bound[0]);
    assert!((r.variance_bound[0] - 0.25).abs() < 1e-15);
}

/// Normalized squared deviation of `A = Σ α_ν P_ν` in state `ψ`, built from
/// explicit matrices: `(⟨ψ|A|ψ⟩ - tr(A)/D)² / (tr(A²)/D)`.
fn explicit_normalized_deviation(alpha: &[f64], projectors: &[Vec<Vec<c64>>], psi: &[c64]) -> f64 {
    let dim = psi.len();
    let a: Vec<Vec<c64>> = (0..dim)
        .map(|i| (0..dim).map(|j| projectors.iter().zip(alpha).map(|(p, &w)| p[i][j] * w).sum()).collect())
        .collect();
    let expect: f64 = (0..dim).map(|i| (0..dim).map(|j| psi[i].conj() * a[i][j] * psi[j]).sum::<c64>().re).sum();
    let trace: f64 = (0..dim).map(|i| a[i][i].re).sum::<f64>() / dim as f64;
    let trace_sq: f64 =
        (0..dim).map(|i| (0..dim).map(|j| (a[i][j] * a[j][i]).re).sum::<f64>()).sum::<f64>() / dim as f64;
    (expect - trace).powi(2) / trace_sq
}

#[test]
fn algebra_statistic_is_the_supremum_over_combinations() {
    let dims = [2usize, 4, 4, 6];
    let dim = 16;
    let mut rng = trial_rng(16, 0);
    let decomp = random_decomposition(&dims, &mut rng).unwrap();
    let projectors: Vec<Vec<Vec<c64>>> = (0..dims.len())
        .map(|nu| {
            let p = decomp.projector(nu);
            (0..dim).map(|i| (0..dim).map(|j| p[(i, j)]).collect()).collect()
        })
        .collect();
    let spectrum = sample_nonresonant_spectrum(dim, (0.0, 1.0), &mut rng, 1e-12, 10).unwrap();
    let psi0 = uniform_sphere_state(dim, &mut rng).unwrap();

    for t in [0.0, 3.7, 41.0] {
        let psi = evolve(&psi0, &spectrum, t).unwrap();
        let p: Vec<f64> = (0..dims.len())
            .map(|nu| {
                (0..dim)
                    .map(|i| (0..dim).map(|j| psi.coefficients()[i].conj() * projectors[nu][i][j] * psi.coefficients()[j]).sum::<c64>().re)
                    .sum()
            })
            .collect();
        let statistic = algebra_statistic(&p, &dims);

        // random search: every combination stays below the statistic
        let mut best = (0.0, vec![0.0; dims.len()]);
        for _ in 0..10_000 {
            let alpha: Vec<f64> = (0..dims.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let value = explicit_normalized_deviation(&alpha, &projectors, psi.coefficients());
            assert!(value <= statistic * (1.0 + 1e-9) + 1e-15);
            if value > best.0 {
                best = (value, alpha);
            }
        }
        assert!(best.0 > 0.9 * statistic, "random search reached {} of {statistic}", best.0);

        // gradient ascent from the best random draw closes the gap
        let w: Vec<f64> = dims.iter().map(|&d| d as f64 / dim as f64).collect();
        let x: Vec<f64> = p.iter().zip(&w).map(|(p, w)| p - w).collect();
        let mut alpha = best.1;
        for _ in 0..20_000 {
            let ax: f64 = alpha.iter().zip(&x).map(|(a, x)| a * x).sum();
            let awa: f64 = alpha.iter().zip(&w).map(|(a, w)| a * a * w).sum();
            let grad: Vec<f64> =
                (0..alpha.len()).map(|i| 2.0 * ax * x[i] / awa - 2.0 * ax * ax * w[i] * alpha[i] / (awa * awa)).collect();
            let eta = 0.1 / statistic.max(1e-300);
            for i in 0..alpha.len() {
                alpha[i] += eta * grad[i];
            }
            let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
            alpha.iter_mut().for_each(|a| *a /= norm);
        }
        let refined = explicit_normalized_deviation(&alpha, &projectors, psi.coefficients());
        assert!((refined - statistic).abs() < 1e-10 * statistic.max(1.0), "t = {t}: {refined} vs {statistic}");
    }
}

#[test]
fn dropped_entropy_term_is_at_most_log_n() {
    // grid over the 3-simplex: max of -Σ p log p is log 3, at the centre
    let k = Entropy::default();
    let dims = [1usize, 1, 1];
    let steps = 300;
    let mut worst = 0.0f64;
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let p = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
            let approx = k.approx_from_probabilities(&p, &dims);
            let s = k.from_probabilities(&p, &dims);
            assert!((s - approx.value + approx.dropped).abs() < 1e-12);
            worst = worst.max((s - approx.value).abs());
        }
    }
    assert!(worst <= 3f64.ln() + 1e-12);
    assert!(worst > 3f64.ln() - 1e-12);
}

#[test]
fn quadrature_approaches_closed_form() {
    let mut rng = trial_rng(8, 0);
    let spectrum = sample_nonresonant_spectrum(12, (0.0, 1.0), &mut rng, 1e-12, 10).unwrap();
    let decomp = random_decomposition(&[3, 4, 5], &mut rng).unwrap();
    let psi = uniform_sphere_state(12, &mut rng).unwrap();
    let exact = time_stats_closed_form(&psi, &decomp, &spectrum).unwrap();
    let horizon = 1e4 / spectrum.min_level_spacing().unwrap();
    let quad = time_stats_quadrature(&psi, &decomp, &spectrum, horizon, 50_000).unwrap();
    for nu in 0..3 {
        assert!((exact.time_mean[nu] - quad.time_mean[nu]).abs() < 1e-3);
        assert!((exact.time_variance[nu] - quad.time_variance[nu]).abs() < 1e-3);
    }
}

#[test]
fn theorem_condition_is_out_of_reach_at_shell_dimension_1000() {
    // F_ν ≈ 3e-3 for Haar decompositions with n = 10, d = 100, while the
    // condition asks for F_ν < ε²(d/nD)(δ′/n) = 4e-6 at ε = 0.2, δ′ = 0.1
    let dims = [100usize; 10];
    let mut rng = trial_rng(11, 0);
    let spectrum = sample_nonresonant_spectrum(1000, (0.0, 1.0), &mut rng, 1e-14, 10).unwrap();
    let decomp = random_decomposition(&dims, &mut trial_rng(11, 1)).unwrap();
    let f = compute_f(&decomp);
    assert!(f.iter().all(|&x| x < 1e-2), "{f:?}");
    let check = check_theorem_condition(&decomp, &spectrum, 0.2, 0.1).unwrap();
    assert!(!check.holds);
    assert!(check.margins.iter().all(|&m| m < 0.0));
}

#[test]
fn time_average_is_macroscopically_micro_canonical() {
    let mut rng = trial_rng(12, 0);
    let dims = [100usize, 100, 100, 100];
    let spectrum = sample_nonresonant_spectrum(400, (0.0, 1.0), &mut rng, 1e-13, 10).unwrap();
    let decomp = random_decomposition(&dims, &mut rng).unwrap();
    let mc = DensityMatrix::micro_canonical(400);
    for _ in 0..5 {
        let psi = uniform_sphere_state(400, &mut rng).unwrap();
        let omega = time_averaged_density(&psi, &spectrum).unwrap();
        assert!(macro_equivalence(&omega, &mc, &decomp, 0.2).unwrap());
    }
    let inside = decomp.block_state(0).unwrap();
    let pure = DensityMatrix::pure(&inside);
    assert!(!macro_equivalence(&pure, &mc, &decomp, 0.2).unwrap());
}

#[test]
fn explicit_projector_weights_match_fast_paths() {
    let mut rng = trial_rng(13, 0);
    let decomp = random_decomposition(&[5, 3], &mut rng).unwrap().with_equilibrium(0).unwrap();
    let psi = uniform_sphere_state(8, &mut rng).unwrap();
    let p = qetlab::dynamics::macro_probabilities(&psi, &decomp).unwrap();
    for (nu, weight) in p.iter().enumerate() {
        let proj = decomp.projector(nu);
        let c = psi.coefficients();
        let explicit: f64 = (0..8).map(|i| (0..8).map(|j| c[i].conj() * proj[(i, j)] * c[j]).sum::<c64>().re).sum();
        assert!((weight - explicit).abs() < 1e-13);
    }
    let single = StateVector::basis(8, 2).unwrap();
    let total: f64 = qetlab::dynamics::macro_probabilities(&single, &decomp).unwrap().iter().sum();
    assert!((total - 1.0).abs() < 1e-13);
}
