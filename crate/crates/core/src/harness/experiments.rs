use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::config::{ExperimentConfig, ExperimentKind, InitialState};
use super::output::{Cell, Table};
use super::{scaling_stream, Check, Outcome};
use crate::dynamics::{macro_trajectory, recurrence_search_after, time_stats_closed_form, TimeGrid};
use crate::entropy::{h_theorem_trajectory, superposition_measurement, Entropy};
use crate::equilibrium::build_equilibrium_decomposition;
use crate::error::Result;
use crate::rng::{trial_rng, TrialRng, SHARED_STREAM};
use crate::sampling::{random_decomposition, uniform_sphere_state, MacroDecomposition, StateVector};
use crate::spectra::{sample_nonresonant_spectrum, Spectrum};
use crate::typicality::{
    block_state_fractions, compute_f, good_time_fractions, normality_verdict, quantifier_trial,
    summarize_quantifier, theorem_condition_from_f, ConcentrationSums, InitialStateMode, DEVIATION_BOUND_SLACK,
};

/// Sphere samples drawn per concentration chunk (and per stream).
const CONCENTRATION_CHUNK: usize = 1000;

pub(crate) fn execute(config: &ExperimentConfig) -> Result<Outcome> {
    match config.kind {
        ExperimentKind::Normality => normality(config),
        ExperimentKind::Sweep => sweep(config),
        ExperimentKind::Concentration => concentration(config),
        ExperimentKind::Entropy => entropy(config),
        ExperimentKind::Quantifier => quantifier(config),
        ExperimentKind::Recurrence => recurrence(config),
        ExperimentKind::Equilibrium => equilibrium(config),
    }
}

fn shared_rng(config: &ExperimentConfig) -> TrialRng {
    trial_rng(config.master_seed, SHARED_STREAM)
}

fn spectrum(config: &ExperimentConfig, rng: &mut TrialRng) -> Result<Spectrum> {
    match &config.spectrum {
        Some(levels) => Spectrum::new(levels.clone(), config.resonance_tolerance),
        None => {
            let dim = config.shell_dim().expect("validated");
            let [lo, hi] = config.energy_window;
            sample_nonresonant_spectrum(dim, (lo, hi), rng, config.resonance_tolerance, config.max_retries)
        }
    }
}

fn horizon(config: &ExperimentConfig, spectrum: &Spectrum) -> f64 {
    config.horizon.unwrap_or_else(|| spectrum.default_horizon())
}

fn initial_state<R: Rng + ?Sized>(
    state: InitialState,
    decomp: &MacroDecomposition,
    rng: &mut R,
) -> Result<StateVector> {
    match state {
        InitialState::Random => uniform_sphere_state(decomp.dim(), rng),
        InitialState::Eigenstate(i) => StateVector::basis(decomp.dim(), i),
        InitialState::BlockState(j) => decomp.block_state(j),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn normality(config: &ExperimentConfig) -> Result<Outcome> {
    let spectrum = spectrum(config, &mut shared_rng(config))?;
    let mut rng = trial_rng(config.master_seed, 0);
    let decomp = random_decomposition(&config.dims, &mut rng)?;
    let psi0 = initial_state(config.initial_state, &decomp, &mut rng)?;
    let report = normality_verdict(
        &psi0,
        &decomp,
        &spectrum,
        config.epsilon,
        config.delta_prime,
        horizon(config, &spectrum),
        config.samples,
    )?;
    let theorem = theorem_condition_from_f(&report.f_values, &config.dims, config.epsilon, config.delta_prime);

    let mut table =
        Table::new(&["nu", "d", "f", "msd", "time_mean", "time_variance", "theorem_margin"]);
    for nu in 0..config.dims.len() {
        table.push(vec![
            nu.into(),
            config.dims[nu].into(),
            report.f_values[nu].into(),
            report.msd[nu].into(),
            report.time_mean[nu].into(),
            report.time_variance[nu].into(),
            theorem.margins[nu].into(),
        ]);
    }
    let checks = vec![
        Check::new("msd_below_f", report.deviation_bound_holds(), "time-averaged squared deviation <= F for every macro-space"),
        Check::new(
            "theorem_implies_normality",
            !theorem.holds || report.verdict_algebra,
            format!("theorem condition {}, algebra verdict {}", theorem.holds, report.verdict_algebra),
        ),
    ];
    let summary = json!({
        "fractions": report.fractions,
        "verdict_per_block": report.verdict_per_block,
        "verdict_algebra": report.verdict_algebra,
        "verdict_relative": report.verdict_relative,
        "theorem_condition": theorem.holds,
        "horizon": report.horizon,
        "samples": report.samples,
    });
    Ok(Outcome { table, checks, summary })
}

struct SweepRow {
    trial: usize,
    max_f: f64,
    theorem: bool,
    min_fraction_random: f64,
    min_fraction_block: Option<f64>,
    max_msd_gap: f64,
    normal: bool,
}

fn sweep_trial(config: &ExperimentConfig, spectrum: &Spectrum, grid: &TimeGrid, trial: usize) -> Result<SweepRow> {
    let mut rng = trial_rng(config.master_seed, trial as u64);
    let decomp = random_decomposition(&config.dims, &mut rng)?;
    let f = compute_f(&decomp);
    let theorem = theorem_condition_from_f(&f, &config.dims, config.epsilon, config.delta_prime).holds;
    let need = 1.0 - config.delta_prime;

    let mut min_fraction_random = 1.0f64;
    let mut max_msd_gap = f64::NEG_INFINITY;
    for _ in 0..config.random_states {
        let psi = uniform_sphere_state(decomp.dim(), &mut rng)?;
        let traj = macro_trajectory(&psi, &decomp, spectrum, grid)?;
        min_fraction_random = min_fraction_random.min(good_time_fractions(traj.as_ref(), &config.dims, config.epsilon).algebra);
        let msd = time_stats_closed_form(&psi, &decomp, spectrum)?.mean_square_deviation();
        for (e, f) in msd.iter().zip(&f) {
            max_msd_gap = max_msd_gap.max(e - f);
        }
    }
    let min_fraction_block = if config.block_states {
        let fractions = block_state_fractions(&decomp, spectrum, grid, config.epsilon)?;
        Some(fractions.iter().map(|x| x.algebra).fold(1.0, f64::min))
    } else {
        None
    };
    let normal = min_fraction_random >= need && min_fraction_block.is_none_or(|x| x >= need);
    Ok(SweepRow {
        trial,
        max_f: f.iter().copied().fold(0.0, f64::max),
        theorem,
        min_fraction_random,
        min_fraction_block,
        max_msd_gap,
        normal,
    })
}

fn sweep(config: &ExperimentConfig) -> Result<Outcome> {
    let spectrum = spectrum(config, &mut shared_rng(config))?;
    let grid = TimeGrid::new(horizon(config, &spectrum), config.samples)?;
    let rows: Vec<SweepRow> = (0..config.trials)
        .into_par_iter()
        .map(|t| sweep_trial(config, &spectrum, &grid, t))
        .collect::<Result<_>>()?;

    let scaling: Vec<Vec<f64>> = config
        .scaling_dims
        .iter()
        .enumerate()
        .map(|(set, dims)| {
            (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(config.master_seed, scaling_stream(set, t));
                    let decomp = random_decomposition(dims, &mut rng)?;
                    Ok(compute_f(&decomp).into_iter().fold(0.0, f64::max))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let dim = spectrum.dim();
    let mut table = Table::new(&[
        "dim",
        "trial",
        "stream",
        "max_f",
        "theorem_condition",
        "min_fraction_random",
        "min_fraction_block",
        "max_msd_gap",
        "normal",
    ]);
    for r in &rows {
        table.push(vec![
            dim.into(),
            r.trial.into(),
            (r.trial as u64).into(),
            r.max_f.into(),
            r.theorem.into(),
            r.min_fraction_random.into(),
            r.min_fraction_block.into(),
            (config.random_states > 0).then_some(r.max_msd_gap).into(),
            r.normal.into(),
        ]);
    }
    for (set, values) in scaling.iter().enumerate() {
        let set_dim: usize = config.scaling_dims[set].iter().sum();
        for (t, max_f) in values.iter().enumerate() {
            let mut row = vec![set_dim.into(), t.into(), scaling_stream(set, t).into(), (*max_f).into()];
            row.extend(std::iter::repeat_n(Cell::Empty, 5));
            table.push(row);
        }
    }

    let normal = rows.iter().filter(|r| r.normal).count();
    let normal_fraction = normal as f64 / rows.len() as f64;
    let worst_gap = rows.iter().map(|r| r.max_msd_gap).fold(f64::NEG_INFINITY, f64::max);
    let mut main_f: Vec<f64> = rows.iter().map(|r| r.max_f).collect();
    let main_median = median(&mut main_f);

    let mut checks = vec![Check::new(
        "normal_typicality",
        normal_fraction >= config.thresholds.sweep_pass_fraction,
        format!(
            "{normal}/{} decompositions normal for every tested state (required fraction {})",
            rows.len(),
            config.thresholds.sweep_pass_fraction
        ),
    )];
    if config.random_states > 0 {
        checks.push(Check::new("msd_below_f", worst_gap <= DEVIATION_BOUND_SLACK, format!("max(msd - F) = {worst_gap:e}")));
    }
    let mut scaling_summary = Vec::new();
    for (set, values) in scaling.iter().enumerate() {
        let set_dim: usize = config.scaling_dims[set].iter().sum();
        let set_median = median(&mut values.clone());
        let passed = match set_dim.cmp(&dim) {
            std::cmp::Ordering::Less => main_median < set_median,
            std::cmp::Ordering::Greater => main_median > set_median,
            std::cmp::Ordering::Equal => true,
        };
        checks.push(Check::new(
            format!("f_scaling_D{set_dim}"),
            passed,
            format!("median max F: {main_median:e} at D = {dim}, {set_median:e} at D = {set_dim}"),
        ));
        scaling_summary.push(json!({"dim": set_dim, "median_max_f": set_median}));
    }
    let summary = json!({
        "dim": dim,
        "horizon": grid.horizon,
        "samples": grid.samples,
        "normal_decompositions": normal,
        "normal_fraction": normal_fraction,
        "theorem_condition_count": rows.iter().filter(|r| r.theorem).count(),
        "median_max_f": main_median,
        "scaling": scaling_summary,
    });
    Ok(Outcome { table, checks, summary })
}

fn concentration(config: &ExperimentConfig) -> Result<Outcome> {
    let decomp = random_decomposition(&config.dims, &mut shared_rng(config))?;
    let chunks = config.trials.div_ceil(CONCENTRATION_CHUNK);
    let parts: Vec<ConcentrationSums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CONCENTRATION_CHUNK.min(config.trials - c * CONCENTRATION_CHUNK);
            let mut sums = ConcentrationSums::new(decomp.n_blocks());
            sums.accumulate(&decomp, count, &mut trial_rng(config.master_seed, c as u64));
            sums
        })
        .collect();
    let mut total = ConcentrationSums::new(decomp.n_blocks());
    for part in &parts {
        total.merge(part);
    }
    let report = total.finish(&decomp);

    let mut table = Table::new(&[
        "nu",
        "d",
        "sample_count",
        "empirical_mean",
        "empirical_variance",
        "standard_error",
        "variance_bound",
        "exact_variance",
    ]);
    for nu in 0..decomp.n_blocks() {
        table.push(vec![
            nu.into(),
            report.dims[nu].into(),
            report.sample_count.into(),
            report.empirical_mean[nu].into(),
            report.empirical_variance[nu].into(),
            report.standard_error[nu].into(),
            report.variance_bound[nu].into(),
            report.exact_variance[nu].into(),
        ]);
    }
    let dim = decomp.dim() as f64;
    let mean_ok = (0..decomp.n_blocks()).all(|nu| {
        let w = report.dims[nu] as f64 / dim;
        (report.empirical_mean[nu] - w).abs() <= 3.0 * report.standard_error[nu] + 1e-15
    });
    let bound_ok = report.bound_holds().iter().all(|&b| b);
    let rel = config.thresholds.variance_relative;
    let exact_ok = (0..decomp.n_blocks()).all(|nu| {
        let exact = report.exact_variance[nu];
        (report.empirical_variance[nu] - exact).abs() <= rel * exact + 1e-30
    });
    let checks = vec![
        Check::new("mean_within_3se", mean_ok, "empirical mean within 3 standard errors of d/D"),
        Check::new("variance_below_bound", bound_ok, "empirical variance < (1/d)(d/D)^2"),
        Check::new("variance_matches_exact", exact_ok, format!("relative tolerance {rel}")),
    ];
    let summary = serde_json::to_value(&report)?;
    Ok(Outcome { table, checks, summary })
}

fn entropy(config: &ExperimentConfig) -> Result<Outcome> {
    let spectrum = spectrum(config, &mut shared_rng(config))?;
    let mut rng = trial_rng(config.master_seed, 0);
    let decomp = random_decomposition(&config.dims, &mut rng)?;
    let psi0 = initial_state(config.initial_state, &decomp, &mut rng)?;
    let k = Entropy::new(config.k)?;
    let traj = h_theorem_trajectory(
        &k,
        &psi0,
        &decomp,
        &spectrum,
        horizon(config, &spectrum),
        config.samples,
        config.theta,
    )?;
    let measurement = superposition_measurement(&k, &psi0, &decomp, &mut trial_rng(config.master_seed, 1), config.trials)?;

    let mut table = Table::new(&["t", "S", "S_over_klogD"]);
    for (t, s) in traj.times.iter().zip(&traj.s_values) {
        let ratio = if traj.s_max > 0.0 { Cell::from(s / traj.s_max) } else { Cell::Empty };
        table.push(vec![(*t).into(), (*s).into(), ratio]);
    }
    let n = config.dims.len() as f64;
    let dim = decomp.dim() as f64;
    let slack = config.thresholds.entropy_relative_slack.unwrap_or_else(|| (1e3 * n).ln() / dim.ln());
    let relative_gap = (traj.mean_s - traj.prediction).abs() / traj.prediction.abs();
    let bounded = traj.s_values.iter().all(|&s| s >= -1e-12 && s <= traj.s_max + 1e-9);
    let checks = vec![
        Check::new("entropy_bounds", bounded, "0 <= S <= k log D at every sampled time"),
        Check::new(
            "near_maximum",
            traj.fraction_near_max >= config.thresholds.entropy_near_max_fraction,
            format!("fraction with S >= {} k log D: {}", traj.theta, traj.fraction_near_max),
        ),
        Check::new(
            "mean_vs_prediction",
            relative_gap <= slack,
            format!("|mean S - prediction| / prediction = {relative_gap} (slack {slack})"),
        ),
    ];
    let summary = json!({
        "s_max": traj.s_max,
        "mean_s": traj.mean_s,
        "prediction": traj.prediction,
        "fraction_near_max": traj.fraction_near_max,
        "relative_slack": slack,
        "measurement": measurement,
    });
    Ok(Outcome { table, checks, summary })
}

fn quantifier(config: &ExperimentConfig) -> Result<Outcome> {
    let spectrum = spectrum(config, &mut shared_rng(config))?;
    spectrum.ensure_resonance_free()?;
    let mode = match config.initial_state {
        InitialState::Eigenstate(i) => InitialStateMode::FixedEigenstate(i),
        _ => InitialStateMode::PerDecompositionRandom,
    };
    let rows = (0..config.trials)
        .into_par_iter()
        .map(|t| quantifier_trial(&spectrum, &config.dims, mode, &mut trial_rng(config.master_seed, t as u64)))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_quantifier(&spectrum, &config.dims, mode, rows)?;

    let mut table = Table::new(&["decomposition", "trial", "nu", "f", "msd"]);
    for (t, row) in summary.rows.iter().enumerate() {
        for nu in 0..config.dims.len() {
            table.push(vec!["haar".into(), t.into(), nu.into(), row.f_values[nu].into(), row.msd[nu].into()]);
        }
    }
    for nu in 0..config.dims.len() {
        table.push(vec![
            "aligned".into(),
            Cell::Empty,
            nu.into(),
            summary.aligned_f[nu].into(),
            summary.aligned_msd[nu].into(),
        ]);
    }
    let threshold = config.thresholds.quantifier_msd;
    let worst_mean = summary.mean_msd.iter().copied().fold(0.0, f64::max);
    let bounded = summary.rows.iter().all(|r| r.msd.iter().zip(&r.f_values).all(|(e, f)| *e <= f + DEVIATION_BOUND_SLACK));
    let checks = vec![
        Check::new(
            "average_over_decompositions",
            worst_mean < threshold,
            format!("max over nu of the mean squared deviation: {worst_mean} (threshold {threshold})"),
        ),
        Check::new("msd_below_f", bounded, "squared deviation <= F for every decomposition"),
    ];
    let value = json!({
        "mean_f": summary.mean_f,
        "mean_msd": summary.mean_msd,
        "mean_max_msd": summary.mean_max_msd,
        "aligned_msd": summary.aligned_msd,
        "aligned_f": summary.aligned_f,
        "aligned_max_msd": summary.aligned_max_msd(),
    });
    Ok(Outcome { table, checks, summary: value })
}

fn recurrence(config: &ExperimentConfig) -> Result<Outcome> {
    let spectrum = spectrum(config, &mut shared_rng(config))?;
    let found = recurrence_search_after(
        &spectrum,
        config.t_min.unwrap_or(0.0),
        config.t_max.expect("validated"),
        config.step.expect("validated"),
    )?;
    let mut table = Table::new(&["time", "deviation"]);
    table.push(vec![found.time.into(), found.deviation.into()]);
    let threshold = config.thresholds.recurrence_deviation;
    let checks = vec![Check::new(
        "recurrence",
        found.deviation < threshold,
        format!("best deviation {} at t = {} (threshold {threshold})", found.deviation, found.time),
    )];
    let summary = json!({ "time": found.time, "deviation": found.deviation, "eigenvalues": spectrum.eigenvalues() });
    Ok(Outcome { table, checks, summary })
}

fn equilibrium(config: &ExperimentConfig) -> Result<Outcome> {
    let mut shared = shared_rng(config);
    let spectrum = spectrum(config, &mut shared)?;
    let decomp = build_equilibrium_decomposition(
        spectrum.dim(),
        config.eq_fraction.expect("validated"),
        config.n_small.expect("validated"),
        &mut shared,
    )?;
    let eq = decomp.eq_index().expect("set by construction");
    let grid = TimeGrid::new(horizon(config, &spectrum), config.samples)?;
    let threshold = config.thresholds.equilibrium;

    // adversarial states: block-basis states outside the equilibrium block
    let adversarial: Vec<usize> = (0..decomp.dim())
        .filter(|&j| decomp.block_of(j) != eq)
        .take(config.adversarial_states)
        .collect();
    let jobs: Vec<(String, Option<u64>, Option<usize>)> = (0..config.random_states)
        .map(|t| (format!("random_{t}"), Some(t as u64), None))
        .chain(adversarial.iter().map(|&j| (format!("block_{j}"), None, Some(j))))
        .collect();
    let fractions = jobs
        .par_iter()
        .map(|(_, stream, column)| {
            let psi = match (stream, column) {
                (Some(s), _) => uniform_sphere_state(decomp.dim(), &mut trial_rng(config.master_seed, *s))?,
                (None, Some(j)) => decomp.block_state(*j)?,
                (None, None) => unreachable!(),
            };
            let traj = macro_trajectory(&psi, &decomp, &spectrum, &grid)?;
            let good = (0..grid.samples).filter(|&k| traj[(eq, k)] >= threshold).count();
            Ok(good as f64 / grid.samples as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let required = config.thresholds.residence_fraction;
    let mut table = Table::new(&["label", "stream", "fraction_good_times", "threshold", "verdict"]);
    for ((label, stream, _), fraction) in jobs.iter().zip(&fractions) {
        table.push(vec![
            label.as_str().into(),
            (*stream).into(),
            (*fraction).into(),
            threshold.into(),
            (*fraction >= required).into(),
        ]);
    }
    let worst = fractions.iter().copied().fold(1.0, f64::min);
    let checks = vec![Check::new(
        "residence",
        fractions.iter().all(|&f| f >= required),
        format!("smallest equilibrium time fraction {worst} (required {required})"),
    )];
    let summary = json!({
        "dims": decomp.dims(),
        "horizon": grid.horizon,
        "samples": grid.samples,
        "min_fraction": worst,
    });
    Ok(Outcome { table, checks, summary })
}
