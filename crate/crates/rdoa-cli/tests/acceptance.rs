//! Acceptance suite: every shipped property of the estimator, data models,
//! metrics and harness, one test per criterion, run at the desk-scale
//! profile (N = 20 sensors, L = 25 snapshots, M = 1801 grid points,
//! 100 Monte-Carlo runs unless stated otherwise).
//!
//! Each test prints its measured values, so `--nocapture` (or any failure)
//! shows the numbers behind the verdict.

use std::time::Instant;

use rayon::prelude::*;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use rdoa_cli::config::parse_config;
use rdoa_cli::experiment::{rows_to_csv, run_experiment};
use rdoa_core::estimator::{estimate_doas, gamma_update, weighted_scm};
use rdoa_core::geometry::{build_dictionary, steering_vector, Dictionary};
use rdoa_core::loss::consistency_factor;
use rdoa_core::metrics::{
    crb_ces, crb_gauss, match_and_accumulate, psi1_mvt, sigma_derivative, RmseAccumulator,
};
use rdoa_core::{
    asnr_to_sigma2, generate, run_rng, ArrayGeometry, EstimatorConfig, LossSpec, NoiseModel,
    Scenario,
};

const N: usize = 20;
const L: usize = 25;
const M: usize = 1801;
const N_RUNS: usize = 100;

fn geom() -> ArrayGeometry {
    ArrayGeometry::half_wavelength(N)
}

fn all_losses() -> Vec<(&'static str, LossSpec)> {
    vec![
        ("gauss", LossSpec::gauss(N).unwrap()),
        ("huber", LossSpec::huber(N).unwrap()),
        ("mvt", LossSpec::mvt(N).unwrap()),
        ("tyler", LossSpec::tyler(N).unwrap()),
    ]
}

#[derive(Debug)]
struct Cell {
    name: &'static str,
    rmse: f64,
    mean_iters: f64,
    mean_iters_converged: f64,
    runs_ok: usize,
    capped: usize,
    all_converged: bool,
    max_iters_seen: usize,
}

/// Per-run, per-loss outcome: (estimated DOAs, iterations, converged).
type RunOutcome = Option<(Vec<f64>, usize, bool)>;

/// One Monte-Carlo cell: `n_runs` realizations of (scenario, noise), each
/// estimated with every loss on the same data.
fn run_cell(
    scenario: &Scenario,
    noise: &NoiseModel,
    losses: &[(&'static str, LossSpec)],
    dict: &Dictionary,
    n_runs: usize,
    master: u64,
) -> Vec<Cell> {
    let cfg = EstimatorConfig::default();
    let k = scenario.n_sources();
    let per_run: Vec<Vec<RunOutcome>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = run_rng(master, r);
            let y = generate(scenario, &dict.geometry, noise, L, &mut rng).unwrap();
            losses
                .iter()
                .map(|(_, spec)| {
                    estimate_doas(&y.data, dict, k, spec, &cfg)
                        .ok()
                        .map(|res| (res.doas_degrees, res.iterations, res.converged))
                })
                .collect()
        })
        .collect();

    losses
        .iter()
        .enumerate()
        .map(|(li, (name, _))| {
            let mut acc = RmseAccumulator::new();
            let mut iters = 0usize;
            let mut iters_conv = 0usize;
            let mut ok = 0usize;
            let mut n_conv = 0usize;
            let mut all_conv = true;
            let mut max_it = 0usize;
            for run in &per_run {
                let Some((doas, it, conv)) = &run[li] else {
                    all_conv = false;
                    continue;
                };
                match_and_accumulate(&mut acc, doas, &scenario.doas_degrees).unwrap();
                iters += it;
                max_it = max_it.max(*it);
                all_conv &= conv;
                ok += 1;
                if *conv {
                    iters_conv += it;
                    n_conv += 1;
                }
            }
            Cell {
                name,
                rmse: acc.rmse().unwrap(),
                mean_iters: iters as f64 / ok as f64,
                mean_iters_converged: iters_conv as f64 / n_conv.max(1) as f64,
                runs_ok: ok,
                capped: ok - n_conv,
                all_converged: all_conv,
                max_iters_seen: max_it,
            }
        })
        .collect()
}

fn assert_full_convergence(cells: &[Cell], n_runs: usize) {
    for c in cells {
        assert_eq!(c.runs_ok, n_runs, "{}: runs failed", c.name);
        assert!(c.all_converged, "{}: some run hit the iteration cap", c.name);
        assert!(c.max_iters_seen <= 1200, "{}: {}", c.name, c.max_iters_seen);
    }
}

#[test]
fn criterion_01_consistency_factors() {
    // Gaussian loss: exactly one by definition
    let gauss = LossSpec::gauss(N).unwrap();
    assert_eq!(gauss.b(), 1.0);

    // Huber: closed form against numerical quadrature of E[psi(t)]/N
    let huber = LossSpec::huber(N).unwrap();
    let quad = consistency_factor(&huber).unwrap();
    let diff = (huber.b() - quad).abs();
    println!("criterion 01: b_gauss={} b_huber={:.12} quadrature={:.12} |diff|={:.2e}", gauss.b(), huber.b(), quad, diff);
    assert!(diff <= 1e-6, "closed form vs quadrature differ by {diff}");

    // MVT: quadrature value against a 1e6-draw Monte-Carlo of E[psi(t)]/N
    // under Gaussian data, where t = |z|^2 ~ Gamma(N, 1)
    let mvt = LossSpec::mvt(N).unwrap();
    let mut rng = run_rng(9001, 0);
    let gamma_n = Gamma::new(N as f64, 1.0).unwrap();
    let draws = 1_000_000;
    let mut sum = 0.0;
    for _ in 0..draws {
        let t: f64 = gamma_n.sample(&mut rng);
        sum += mvt.psi(t).unwrap();
    }
    let b_mc = sum / draws as f64 / N as f64;
    let rel = (b_mc - mvt.b()).abs() / mvt.b();
    println!("criterion 01: b_mvt={:.12} monte_carlo={:.12} rel={:.2e}", mvt.b(), b_mc, rel);
    assert!(rel < 0.01, "MVT b Monte-Carlo off by {rel}");
}

#[test]
fn criterion_02_contaminated_variance() {
    let sigma1_sq = 0.4;
    let noise = NoiseModel::eps_contaminated_fixed_background(sigma1_sq, 0.05, 10.0).unwrap();
    // reported total variance is the closed-form inflation, bit for bit
    assert_eq!(noise.sigma2(), sigma1_sq * 5.95);

    // empirical per-sensor variance over 1e5 snapshots (negligible source)
    let scenario = Scenario::new(vec![0.0], vec![1e-30], 0.0).unwrap();
    let l = 100_000;
    let mut rng = run_rng(9002, 0);
    let y = generate(&scenario, &geom(), &noise, l, &mut rng).unwrap();
    let mean_sq: f64 =
        y.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / (N * l) as f64;
    let rel = (mean_sq - noise.sigma2()).abs() / noise.sigma2();
    println!(
        "criterion 02: sigma2={} empirical={:.6} rel={:.4}",
        noise.sigma2(),
        mean_sq,
        rel
    );
    assert!(rel < 0.03, "empirical variance off by {rel}");
}

#[test]
fn criterion_03_weighted_scm_consistency() {
    // Gaussian data with known scatter: the adaptively weighted SCM must be
    // unbiased for every loss (Tyler estimates shape only, so it is compared
    // on the trace-matched scale)
    let scenario = Scenario::three_sources();
    let sigma2 = asnr_to_sigma2(10.0, N);
    let geometry = geom();
    let mut sigma_true = DMatrix::from_diagonal_element(N, N, Complex64::new(sigma2, 0.0));
    for (j, &theta) in scenario.doas_degrees.iter().enumerate() {
        let a = steering_vector(&geometry, theta).unwrap();
        sigma_true += &a * a.adjoint() * Complex64::new(scenario.source_powers[j], 0.0);
    }
    let sigma_true = (&sigma_true + sigma_true.adjoint()) * Complex64::new(0.5, 0.0);
    let trace_true = sigma_true.trace().re;

    let noise = NoiseModel::gaussian(sigma2).unwrap();
    let trials = 200;
    let l_big = 500;
    for (name, spec) in all_losses() {
        let mut mean = DMatrix::<Complex64>::zeros(N, N);
        for trial in 0..trials as u64 {
            let mut rng = run_rng(9003, trial);
            let y = generate(&scenario, &geometry, &noise, l_big, &mut rng).unwrap();
            mean += weighted_scm(&y.data, &sigma_true, &spec).unwrap();
        }
        mean /= Complex64::new(trials as f64, 0.0);
        if name == "tyler" {
            mean *= Complex64::new(trace_true, 0.0);
        }
        let rel = (&mean - &sigma_true).norm() / sigma_true.norm();
        println!("criterion 03: loss={name} relative_bias={rel:.4}");
        assert!(rel < 0.05, "{name}: weighted SCM bias {rel}");
    }
}

#[test]
fn criterion_04_gamma_fixed_point() {
    // with R_Y equal to the model covariance, one multiplicative update
    // must leave every power untouched
    let dict = build_dictionary(&geom(), M).unwrap();
    let spikes = [800usize, 1000]; // -10 and +10 deg on the 0.1-deg grid
    let sigma2 = asnr_to_sigma2(30.0, N);
    let mut gamma = DVector::zeros(M);
    let mut sigma = DMatrix::from_diagonal_element(N, N, Complex64::new(sigma2, 0.0));
    for &p in &spikes {
        gamma[p] = 0.5;
        let a = dict.steering.column(p);
        sigma += a * a.adjoint() * Complex64::new(0.5, 0.0);
    }
    let sigma = (&sigma + sigma.adjoint()) * Complex64::new(0.5, 0.0);

    let pruned: Vec<usize> = (0..M).collect();
    let updated = gamma_update(&gamma, &pruned, &dict, &sigma, &sigma, 1.0).unwrap();
    let mut worst = 0.0f64;
    for p in 0..M {
        if gamma[p] > 0.0 {
            worst = worst.max((updated[p] - gamma[p]).abs() / gamma[p]);
        } else {
            assert_eq!(updated[p], 0.0);
        }
    }
    println!("criterion 04: worst relative change {worst:.3e}");
    assert!(worst <= 1e-12, "fixed point moved by {worst}");
}

#[test]
fn criterion_05_single_source_exact_recovery() {
    let t0 = Instant::now();
    let dict = build_dictionary(&geom(), M).unwrap();
    let noise = NoiseModel::gaussian(asnr_to_sigma2(30.0, N)).unwrap();
    let cells = run_cell(
        &Scenario::single_source(),
        &noise,
        &all_losses(),
        &dict,
        N_RUNS,
        9005,
    );
    let elapsed = t0.elapsed().as_secs_f64();
    for c in &cells {
        println!(
            "criterion 05: loss={} rmse={} mean_iters={:.1} ({elapsed:.1}s total)",
            c.name, c.rmse, c.mean_iters
        );
    }
    assert_full_convergence(&cells, N_RUNS);
    for c in &cells {
        assert_eq!(c.rmse, 0.0, "{}: nonzero RMSE on-grid at 30 dB", c.name);
    }
    assert!(elapsed < 120.0, "criterion 5 took {elapsed:.1}s");
}

#[test]
fn criterion_06_off_grid_rmse_floor() {
    // a source uniformly off-grid around -10 deg leaves a quantization
    // error: RMSE -> grid_step/sqrt(12)
    let noise = NoiseModel::gaussian(asnr_to_sigma2(30.0, N)).unwrap();
    let spec = LossSpec::gauss(N).unwrap();
    let cfg = EstimatorConfig::default();
    for (m_points, master) in [(181usize, 9006u64), (1801, 9007)] {
        let dict = build_dictionary(&geom(), m_points).unwrap();
        let delta = 180.0 / (m_points - 1) as f64;
        let results: Vec<(Vec<f64>, Vec<f64>)> = (0..N_RUNS as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = run_rng(master, r);
                let theta = -10.0 + rng.gen_range(-0.5 * delta..0.5 * delta);
                let scenario = Scenario::new(vec![theta], vec![1.0], 0.0).unwrap();
                let y = generate(&scenario, &dict.geometry, &noise, L, &mut rng).unwrap();
                let res = estimate_doas(&y.data, &dict, 1, &spec, &cfg).unwrap();
                (res.doas_degrees, vec![theta])
            })
            .collect();
        let mut acc = RmseAccumulator::new();
        for (est, truth) in &results {
            match_and_accumulate(&mut acc, est, truth).unwrap();
        }
        let rmse = acc.rmse().unwrap();
        let floor = delta / 12.0f64.sqrt();
        println!(
            "criterion 06: M={m_points} rmse={rmse:.5} floor={floor:.5} ratio={:.3}",
            rmse / floor
        );
        assert!(
            rmse >= 0.75 * floor && rmse <= 1.25 * floor,
            "M={m_points}: rmse {rmse} vs floor {floor}"
        );
    }
}

#[test]
fn criterion_07_mvt_data_robustness() {
    let dict = build_dictionary(&geom(), M).unwrap();
    let noise = NoiseModel::mvt(asnr_to_sigma2(30.0, N), 2.1).unwrap();
    let cells = run_cell(
        &Scenario::two_sources(),
        &noise,
        &all_losses(),
        &dict,
        N_RUNS,
        9008,
    );
    for c in &cells {
        println!(
            "criterion 07: loss={} rmse={:.4} mean_iters={:.1}",
            c.name, c.rmse, c.mean_iters
        );
    }
    assert_full_convergence(&cells, N_RUNS);
    let rmse_of = |n: &str| cells.iter().find(|c| c.name == n).unwrap().rmse;
    let (g, h, m, t) = (rmse_of("gauss"), rmse_of("huber"), rmse_of("mvt"), rmse_of("tyler"));
    assert!(g >= 1.5 * m, "gauss {g} not >= 1.5x mvt {m}");
    let robust = [h, m, t];
    let lo = robust.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = robust.iter().cloned().fold(0.0, f64::max);
    assert!(hi <= 1.5 * lo, "robust losses spread too wide: {robust:?}");
}

#[test]
fn criterion_08_contaminated_data_robustness() {
    let dict = build_dictionary(&geom(), M).unwrap();
    let noise =
        NoiseModel::eps_contaminated_fixed_background(asnr_to_sigma2(30.0, N), 0.05, 10.0)
            .unwrap();
    let cells = run_cell(
        &Scenario::two_sources(),
        &noise,
        &all_losses(),
        &dict,
        N_RUNS,
        9009,
    );
    for c in &cells {
        println!(
            "criterion 08: loss={} rmse={:.4} mean_iters={:.1}",
            c.name, c.rmse, c.mean_iters
        );
    }
    assert_full_convergence(&cells, N_RUNS);
    let gauss = cells.iter().find(|c| c.name == "gauss").unwrap().rmse;
    for c in cells.iter().filter(|c| c.name != "gauss") {
        assert!(
            gauss > c.rmse,
            "gauss rmse {gauss} not strictly above {} rmse {}",
            c.name,
            c.rmse
        );
    }
}

#[test]
fn criterion_09_source_correlation_has_little_effect() {
    let dict = build_dictionary(&geom(), M).unwrap();
    let noise = NoiseModel::gaussian(asnr_to_sigma2(30.0, N)).unwrap();
    let mut by_loss: Vec<(&'static str, Vec<f64>)> =
        all_losses().iter().map(|(n, _)| (*n, Vec::new())).collect();
    for (ci, rho) in [0.0, 0.9, 1.0].into_iter().enumerate() {
        let scenario = Scenario::new(vec![-10.0, 10.0], vec![0.5, 0.5], rho).unwrap();
        let cells = run_cell(&scenario, &noise, &all_losses(), &dict, N_RUNS, 9010 + ci as u64);
        assert_full_convergence(&cells, N_RUNS);
        for (slot, cell) in by_loss.iter_mut().zip(&cells) {
            println!("criterion 09: rho={rho} loss={} rmse={:.4}", cell.name, cell.rmse);
            slot.1.push(cell.rmse);
        }
    }
    // the capped-error scale makes "varies by < 2x" meaningful even when a
    // cell hits zero error: anything below one grid step counts as floor
    let grid_step = 180.0 / (M - 1) as f64;
    for (name, rmses) in &by_loss {
        let lo = rmses.iter().cloned().fold(f64::INFINITY, f64::min).max(grid_step);
        let hi = rmses.iter().cloned().fold(0.0, f64::max).max(grid_step);
        assert!(
            hi < 2.0 * lo,
            "{name}: correlation changes RMSE more than 2x: {rmses:?}"
        );
    }
}

#[test]
fn criterion_10_crb_identities() {
    // (a) the CES bound with psi1 = 1 reproduces the Gaussian bound
    let geometry = geom();
    let mut rng = run_rng(9011, 0);
    let mut worst_eq = 0.0f64;
    for _ in 0..20 {
        let theta = rng.gen_range(-80.0..80.0);
        let power = rng.gen_range(0.2..3.0);
        let sigma2 = rng.gen_range(0.05..5.0);
        let sc = Scenario::new(vec![theta], vec![power], 0.0).unwrap();
        let a = crb_gauss(&sc, &geometry, sigma2, L).unwrap();
        let b = crb_ces(&sc, &geometry, sigma2, L, 1.0).unwrap();
        worst_eq = worst_eq.max((a - b).abs() / a);
    }
    println!("criterion 10: worst crb_ces(1) vs crb_gauss rel diff {worst_eq:.2e}");
    assert!(worst_eq <= 1e-6);

    // (b) three-source MVT bound within 3% of the Gaussian bound in RMSE
    let scenario = Scenario::three_sources();
    let psi1 = psi1_mvt(N, 2.1);
    let mut worst_gap = 0.0f64;
    for asnr_tenths in 0..=300 {
        let s2 = asnr_to_sigma2(asnr_tenths as f64 / 10.0, N);
        let g = crb_gauss(&scenario, &geometry, s2, L).unwrap();
        let c = crb_ces(&scenario, &geometry, s2, L, psi1).unwrap();
        worst_gap = worst_gap.max(((c / g).sqrt() - 1.0).abs());
    }
    println!("criterion 10: worst MVT-vs-Gauss bound gap {:.3}%", worst_gap * 100.0);
    assert!(worst_gap < 0.03);

    // (c) analytic scatter derivatives against central differences
    let mut worst_fd = 0.0f64;
    for (theta, gamma_k) in [(-10.0, 1.0), (23.4, 0.8), (75.0, 1.0 / 3.0)] {
        let analytic = sigma_derivative(&geometry, theta, gamma_k).unwrap();
        let h = 1e-4;
        let term = |th: f64| {
            let a = steering_vector(&geometry, th).unwrap();
            &a * a.adjoint() * Complex64::new(gamma_k, 0.0)
        };
        let fd = (term(theta + h) - term(theta - h)) / Complex64::new(2.0 * h, 0.0);
        worst_fd = worst_fd.max((&analytic - &fd).norm() / analytic.norm());
    }
    println!("criterion 10: worst derivative FD mismatch {worst_fd:.2e}");
    assert!(worst_fd < 1e-6);
}

#[test]
fn criterion_11_iteration_counts_fall_with_asnr() {
    // Full convergence of every run is asserted inside the RMSE criteria
    // above. This test checks the iteration-count trend on the three-source
    // scenario, whose closely spaced pair makes low-SNR convergence slow
    // enough for the trend to be measurable. The coarse
    // 0.1-degree grid lets the active set fall into a two-state cycle in rare
    // low-SNR runs; such capped runs are excluded from the means (an excluded
    // cap-hit can only lower the noisy side, so exclusion never helps the
    // asserted direction) and their rate is bounded instead.
    let dict = build_dictionary(&geom(), M).unwrap();
    let scenario = Scenario::three_sources();
    let n_runs = 50;
    let mut per_asnr = Vec::new();
    for (asnr, master) in [(10.0, 9012u64), (30.0, 9013)] {
        let noise = NoiseModel::gaussian(asnr_to_sigma2(asnr, N)).unwrap();
        let cells = run_cell(&scenario, &noise, &all_losses(), &dict, n_runs, master);
        let mut capped_total = 0;
        for c in &cells {
            assert_eq!(c.runs_ok, n_runs, "{}: runs failed", c.name);
            assert!(c.max_iters_seen <= 1200, "{}: {}", c.name, c.max_iters_seen);
            capped_total += c.capped;
            println!(
                "criterion 11: asnr={asnr} loss={} mean iterations {:.1} ({} capped)",
                c.name, c.mean_iters_converged, c.capped
            );
        }
        assert!(
            capped_total * 50 <= n_runs * cells.len(),
            "asnr={asnr}: {capped_total} capped runs exceed 2%"
        );
        per_asnr.push(cells);
    }
    for (lo, hi) in per_asnr[0].iter().zip(per_asnr[1].iter()) {
        assert!(
            hi.mean_iters_converged < lo.mean_iters_converged,
            "{}: iterations at 30 dB ({:.1}) not below 10 dB ({:.1})",
            lo.name,
            hi.mean_iters_converged,
            lo.mean_iters_converged
        );
    }
}

#[test]
fn criterion_12_sweep_is_byte_deterministic() {
    // criterion 7's sweep, run twice through the full harness
    let text = "\
[scenario]
name = two_sources

[data]
model = mvt
nu = 2.1
n_runs = 100
master_seed = 9014

[estimator]
losses = gauss, huber, mvt, tyler

[sweep]
kind = asnr
values = 30
";
    let cfg = parse_config(text).unwrap();
    let csv_a = rows_to_csv(&run_experiment(&cfg).unwrap(), false);
    let csv_b = rows_to_csv(&run_experiment(&cfg).unwrap(), false);

    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    std::fs::write(&pa, &csv_a).unwrap();
    std::fs::write(&pb, &csv_b).unwrap();
    let same = std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap();
    println!(
        "criterion 12: {} bytes, identical={same}",
        csv_a.len()
    );
    assert!(same, "repeated sweep differs:\n{csv_a}\n---\n{csv_b}");
}
