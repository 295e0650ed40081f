//! Monte-Carlo sweep execution and CSV serialization.
//!
//! Each (sweep value, run) pair owns an independent RNG stream derived from
//! the master seed, so results do not depend on the degree of parallelism,
//! and all losses within a run see the same data realization. CSV bytes are
//! deterministic for a fixed (config, seed); per-run wall time is reported
//! as 0.000 unless timing output is requested, so timing noise never breaks
//! byte-level reproducibility.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use rdoa_core::datagen::{peek_snapshot_dimensions, read_snapshots_file};
use rdoa_core::geometry::build_dictionary;
use rdoa_core::metrics::{crb_ces, crb_gauss, match_and_accumulate, psi1_mvt, RmseAccumulator};
use rdoa_core::{
    asnr_to_sigma2, estimate_doas, generate, run_rng, ArrayGeometry, EstimatorConfig, LossSpec,
    NoiseModel,
};

use crate::config::{DataModel, ExperimentConfig, LossChoice, Sweep};
use crate::{CliError, Result};

/// Fixed column layout of the sweep CSV.
pub const CSV_HEADER: &str =
    "sweep_value,loss,rmse_deg,mean_iters,crb_gauss_deg,crb_model_deg,runs_ok,seconds_per_run";

/// Fixed column layout of the bounds-only CSV written by the crb subcommand.
pub const CRB_CSV_HEADER: &str = "sweep_value,crb_gauss_deg,crb_model_deg";

/// One CSV row: a (sweep value, loss) cell of the experiment.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub loss: &'static str,
    /// Permutation-matched capped RMSE in degrees; NaN if no run succeeded.
    pub rmse_deg: f64,
    pub mean_iters: f64,
    /// sqrt(CRB trace / K): Gaussian bound, RMSE-comparable degrees.
    pub crb_gauss_deg: f64,
    /// Bound matched to the data model (CES for MVT, variance-shifted
    /// Gaussian for contamination); equals `crb_gauss_deg` for Gaussian data.
    pub crb_model_deg: f64,
    pub runs_ok: usize,
    pub n_runs: usize,
    pub seconds_per_run: f64,
}

/// Noise model for one sweep point.
fn point_noise(cfg: &ExperimentConfig, sweep_value: f64) -> Result<NoiseModel> {
    let model = match cfg.sweep {
        Sweep::Asnr { .. } => {
            let sigma2 = asnr_to_sigma2(sweep_value, cfg.n_sensors);
            match cfg.model {
                DataModel::Gaussian => NoiseModel::gaussian(sigma2),
                DataModel::Mvt { nu_data } => NoiseModel::mvt(sigma2, nu_data),
                // ASNR refers to the nominal background component; outliers
                // add on top of it
                DataModel::EpsContaminated { epsilon, lambda } => {
                    NoiseModel::eps_contaminated_fixed_background(sigma2, epsilon, lambda)
                }
            }
        }
        Sweep::Lambda { asnr_db, .. } => {
            let sigma1_squared = asnr_to_sigma2(asnr_db, cfg.n_sensors);
            match cfg.model {
                DataModel::EpsContaminated { epsilon, .. } => {
                    NoiseModel::eps_contaminated_fixed_background(sigma1_squared, epsilon, sweep_value)
                }
                _ => {
                    return Err(CliError::Config(
                        "lambda sweep requires the eps_contaminated model".into(),
                    ))
                }
            }
        }
    };
    model.map_err(CliError::from)
}

/// RMSE-comparable bounds in degrees for one sweep point:
/// (Gaussian bound at the nominal noise variance, model-matched bound).
pub fn point_bounds(cfg: &ExperimentConfig, sweep_value: f64) -> Result<(f64, f64)> {
    let geometry = ArrayGeometry::half_wavelength(cfg.n_sensors);
    let k = cfg.scenario.n_sources() as f64;
    let l = cfg.n_snapshots;
    let noise = point_noise(cfg, sweep_value)?;
    let sigma2_nominal = noise.sigma1_squared().unwrap_or_else(|| noise.sigma2());
    let gauss = crb_gauss(&cfg.scenario, &geometry, sigma2_nominal, l)?;
    let model = match cfg.model {
        DataModel::Gaussian => gauss,
        DataModel::Mvt { nu_data } => crb_ces(
            &cfg.scenario,
            &geometry,
            sigma2_nominal,
            l,
            psi1_mvt(cfg.n_sensors, nu_data),
        )?,
        // the contaminated mixture is treated as Gaussian at the inflated
        // total variance of the mixture
        DataModel::EpsContaminated { .. } => {
            crb_gauss(&cfg.scenario, &geometry, noise.sigma2(), l)?
        }
    };
    Ok(((gauss / k).sqrt(), (model / k).sqrt()))
}

struct LossRun {
    doas: Vec<f64>,
    iterations: usize,
    seconds: f64,
}

/// Run the full sweep. Row order is (sweep value, loss-list order); a failed
/// run is excluded from its cell's RMSE and iteration statistics and shows
/// up as `runs_ok < n_runs`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let geometry = ArrayGeometry::half_wavelength(cfg.n_sensors);
    let dict = build_dictionary(&geometry, cfg.grid_size)?;
    let specs: Vec<LossSpec> = cfg
        .losses
        .iter()
        .map(|c| c.to_spec(cfg.n_sensors, cfg.huber_q, cfg.mvt_nu_loss))
        .collect::<rdoa_core::Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.sweep.values().len() * specs.len());
    for (pi, &sweep_value) in cfg.sweep.values().iter().enumerate() {
        let noise = point_noise(cfg, sweep_value)?;
        let (crb_gauss_deg, crb_model_deg) = point_bounds(cfg, sweep_value)?;

        // one data realization per run, shared by all losses
        let per_run: Vec<Option<Vec<Option<LossRun>>>> = (0..cfg.n_runs)
            .into_par_iter()
            .map(|r| {
                let mut rng = run_rng(cfg.master_seed, ((pi as u64) << 32) | r as u64);
                let y = generate(&cfg.scenario, &geometry, &noise, cfg.n_snapshots, &mut rng)
                    .ok()?;
                Some(
                    specs
                        .iter()
                        .map(|spec| {
                            let t0 = Instant::now();
                            estimate_doas(&y.data, &dict, cfg.n_sources, spec, &cfg.estimator)
                                .ok()
                                .map(|res| LossRun {
                                    doas: res.doas_degrees,
                                    iterations: res.iterations,
                                    seconds: t0.elapsed().as_secs_f64(),
                                })
                        })
                        .collect(),
                )
            })
            .collect();

        for (li, choice) in cfg.losses.iter().enumerate() {
            let mut acc = RmseAccumulator::new();
            let mut iters_sum = 0usize;
            let mut seconds_sum = 0.0;
            let mut runs_ok = 0usize;
            for run in &per_run {
                let Some(per_loss) = run else { continue };
                let Some(out) = &per_loss[li] else { continue };
                match_and_accumulate(&mut acc, &out.doas, &cfg.scenario.doas_degrees)?;
                iters_sum += out.iterations;
                seconds_sum += out.seconds;
                runs_ok += 1;
            }
            let (rmse_deg, mean_iters, seconds_per_run) = if runs_ok > 0 {
                (
                    acc.rmse()?,
                    iters_sum as f64 / runs_ok as f64,
                    seconds_sum / runs_ok as f64,
                )
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            rows.push(ResultRow {
                sweep_value,
                loss: choice.name(),
                rmse_deg,
                mean_iters,
                crb_gauss_deg,
                crb_model_deg,
                runs_ok,
                n_runs: cfg.n_runs,
                seconds_per_run,
            });
        }
    }
    Ok(rows)
}

/// Serialize rows under the fixed header. With `timing` off the last column
/// is written as 0.000 so repeated runs produce identical bytes.
pub fn rows_to_csv(rows: &[ResultRow], timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let secs = if timing { row.seconds_per_run } else { 0.0 };
        out.push_str(&format!(
            "{},{},{:.6},{:.2},{:.6e},{:.6e},{},{:.3}\n",
            row.sweep_value,
            row.loss,
            row.rmse_deg,
            row.mean_iters,
            row.crb_gauss_deg,
            row.crb_model_deg,
            row.runs_ok,
            secs
        ));
    }
    out
}

/// Evaluate the bounds over the sweep without running the estimator.
pub fn run_crb(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64, f64)>> {
    cfg.sweep
        .values()
        .iter()
        .map(|&v| point_bounds(cfg, v).map(|(g, m)| (v, g, m)))
        .collect()
}

pub fn crb_to_csv(points: &[(f64, f64, f64)]) -> String {
    let mut out = String::from(CRB_CSV_HEADER);
    out.push('\n');
    for &(v, g, m) in points {
        out.push_str(&format!("{},{:.6e},{:.6e}\n", v, g, m));
    }
    out
}

/// Options for single-shot estimation on a stored snapshot file.
#[derive(Debug, Clone)]
pub struct EstimateArgs {
    pub k: usize,
    pub loss: LossChoice,
    pub huber_q: f64,
    pub mvt_nu: f64,
    pub grid_size: usize,
    pub estimator: EstimatorConfig,
}

/// Run the estimator once on a snapshot file and render a small JSON report.
///
/// The array is assumed to be a half-wavelength ULA with as many elements as
/// the file's sensor rows. K is validated against the header before the
/// payload is decoded.
pub fn run_estimate(path: &Path, args: &EstimateArgs) -> Result<String> {
    let (n_sensors, _) = peek_snapshot_dimensions(path)?;
    if args.k == 0 || args.k >= n_sensors {
        return Err(CliError::Config(format!(
            "requested K = {} sources, but the file holds data from {} sensors (need 1 <= K < N)",
            args.k, n_sensors
        )));
    }
    let y = read_snapshots_file(path)?;
    let spec = args.loss.to_spec(n_sensors, args.huber_q, args.mvt_nu)?;
    let geometry = ArrayGeometry::half_wavelength(n_sensors);
    let dict = build_dictionary(&geometry, args.grid_size)?;
    let res = estimate_doas(&y.data, &dict, args.k, &spec, &args.estimator)?;

    let doas = res
        .doas_degrees
        .iter()
        .map(|d| format!("{d:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(format!(
        "{{\n  \"loss\": \"{}\",\n  \"doas_deg\": [{}],\n  \"sigma2\": {:.6e},\n  \"iterations\": {},\n  \"converged\": {}\n}}",
        args.loss.name(),
        doas,
        res.sigma2,
        res.iterations,
        res.converged
    ))
}

/// Write `text` to `path`, creating parent directories as needed.
pub fn write_output(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Config(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}
