//! Iterative sparse-Bayesian DOA M-estimator over a fixed angular grid.
//!
//! One estimate alternates between (a) a robustly weighted sample covariance
//! R_Y computed under the current scatter model Σ = A_𝓟 Γ_𝓟 A_𝓟ᴴ + σ̂²I and
//! (b) a multiplicative update of the grid powers γ whose fixed point is
//! R_Y = Σ. The active set 𝓜 (the K largest peaks of γ) provides the DOA
//! estimates; iteration stops once 𝓜 has been stable for `conv_window`
//! iterations.
//!
//! All Σ⁻¹ applications go through a Cholesky factor of Σ; the scatter model
//! is assembled as B·Bᴴ + σ̂²I with B = A_𝓟·diag(√γ_𝓟) and explicitly
//! hermitized, so factorization failures can only come from genuinely bad
//! inputs, not from asymmetric rounding.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Dictionary;
use crate::linalg;
use crate::loss::{tyler_b, LossKind, LossSpec};

/// Tuning parameters of the iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Stepsize μ ∈ (0, 1] of the γ update.
    pub stepsize: f64,
    /// Stop after the active set is unchanged for this many iterations.
    pub conv_window: usize,
    /// Hard iteration cap.
    pub max_iters: usize,
    /// Dynamic range of the grid pruning threshold, γ_floor = gamma_range·max γ.
    pub gamma_range: f64,
    /// Bounds σ̂² from below via σ²_floor = σ²_ceil/snr_max.
    pub snr_max: f64,
    /// Initialization floor δ keeping every initial γ entry positive.
    pub gamma_floor_init: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            stepsize: 1.0,
            conv_window: 10,
            max_iters: 1200,
            gamma_range: 1e-3,
            snr_max: 1e6,
            gamma_floor_init: 1e-12,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stepsize > 0.0 && self.stepsize <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "stepsize",
                reason: format!("must lie in (0, 1], got {}", self.stepsize),
            });
        }
        if self.conv_window == 0 || self.conv_window >= self.max_iters {
            return Err(Error::InvalidParameter {
                name: "conv_window",
                reason: format!(
                    "need 1 <= conv_window < max_iters, got {} vs {}",
                    self.conv_window, self.max_iters
                ),
            });
        }
        if !(self.gamma_range > 0.0 && self.gamma_range <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "gamma_range",
                reason: format!("must lie in (0, 1], got {}", self.gamma_range),
            });
        }
        if !(self.snr_max >= 1.0) || !self.snr_max.is_finite() {
            return Err(Error::InvalidParameter {
                name: "snr_max",
                reason: format!("must be at least 1, got {}", self.snr_max),
            });
        }
        if !(self.gamma_floor_init > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma_floor_init",
                reason: format!("must be positive, got {}", self.gamma_floor_init),
            });
        }
        Ok(())
    }
}

/// Output of one estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    /// Sorted grid indices of the K selected peaks.
    pub active_set: Vec<usize>,
    /// Grid angles of the active set, ascending.
    pub doas_degrees: Vec<f64>,
    /// Final power estimate over the full grid (pruned entries keep their
    /// last value).
    pub gamma: DVector<f64>,
    /// Final noise variance estimate, within [σ²_floor, σ²_ceil].
    pub sigma2: f64,
    /// Number of iterations executed.
    pub iterations: usize,
    /// Whether the active set stabilized before the iteration cap.
    pub converged: bool,
}

/// Per-iteration snapshot of the estimator state (iteration 0 is the
/// initialization).
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub gamma: DVector<f64>,
    pub sigma2: f64,
    pub active_set: Vec<usize>,
}

/// Plain sample covariance S_Y = Y·Yᴴ/L.
pub fn sample_covariance(y: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let l = y.ncols();
    weighted_outer(y, &vec![1.0; l], 1.0 / l as f64)
}

/// C = scale · Σ_ℓ w_ℓ y_ℓ y_ℓᴴ, hermitized. The Gauss path feeds unit
/// weights through the identical kernel, which is what makes its R_Y
/// bit-identical to S_Y.
fn weighted_outer(y: &DMatrix<Complex64>, weights: &[f64], scale: f64) -> DMatrix<Complex64> {
    let mut w = y.clone();
    for (mut col, &u) in w.column_iter_mut().zip(weights) {
        col *= Complex64::new(u, 0.0);
    }
    let mut c = &w * y.adjoint();
    c *= Complex64::new(scale, 0.0);
    hermitize(&mut c);
    c
}

/// Copy the upper triangle onto the lower, conjugated, and zero the
/// diagonal's imaginary part: exact Hermitian symmetry by construction.
pub(crate) fn hermitize(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)].im = 0.0;
        for i in 0..j {
            m[(j, i)] = m[(i, j)].conj();
        }
    }
}

/// Scatter model Σ = A_𝓟 diag(γ_𝓟) A_𝓟ᴴ + σ̂²I over the pruned grid.
fn build_sigma(
    dict: &Dictionary,
    gamma: &DVector<f64>,
    pruned: &[usize],
    sigma2: f64,
) -> DMatrix<Complex64> {
    let n = dict.geometry.n_sensors;
    let mut b = DMatrix::zeros(n, pruned.len());
    for (j, &p) in pruned.iter().enumerate() {
        let g = gamma[p].max(0.0).sqrt();
        for i in 0..n {
            b[(i, j)] = dict.steering[(i, p)] * g;
        }
    }
    let mut sigma = &b * b.adjoint();
    hermitize(&mut sigma);
    for i in 0..n {
        sigma[(i, i)].re += sigma2;
    }
    sigma
}

/// Quadratic forms t_ℓ = y_ℓᴴ Σ⁻¹ y_ℓ via the triangular factor:
/// t_ℓ = ‖L⁻¹y_ℓ‖², nonnegative by construction.
fn quad_forms(chol: &Cholesky<Complex64, Dyn>, y: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let lower = chol.l();
    let solved = lower
        .solve_lower_triangular(y)
        .ok_or(Error::Singular {
            context: "scatter Cholesky factor",
        })?;
    Ok(solved.column_iter().map(|c| c.norm_squared()).collect())
}

fn snapshot_weights(loss: &LossSpec, t: &[f64]) -> Result<(Vec<f64>, f64)> {
    if loss.kind() == LossKind::Tyler {
        for (l_idx, &tl) in t.iter().enumerate() {
            if !(tl > 0.0) {
                return Err(Error::TylerQuadForm {
                    snapshot: l_idx,
                    value: tl,
                });
            }
        }
        let b = tyler_b(loss.n_sensors(), t)?;
        let n = loss.n_sensors() as f64;
        Ok((t.iter().map(|&tl| n / tl).collect(), b))
    } else {
        let weights = t
            .iter()
            .map(|&tl| loss.weight(tl))
            .collect::<Result<Vec<f64>>>()?;
        Ok((weights, loss.b()))
    }
}

fn weighted_scm_with(
    y: &DMatrix<Complex64>,
    chol: &Cholesky<Complex64, Dyn>,
    loss: &LossSpec,
) -> Result<DMatrix<Complex64>> {
    let l = y.ncols();
    let t = quad_forms(chol, y)?;
    let (weights, b) = snapshot_weights(loss, &t)?;
    let mut r_y = weighted_outer(y, &weights, 1.0 / (l as f64 * b));
    if loss.kind() == LossKind::Tyler {
        let trace = r_y.trace().re;
        if !(trace > 0.0) || !trace.is_finite() {
            return Err(Error::Singular {
                context: "weighted covariance trace",
            });
        }
        r_y /= Complex64::new(trace, 0.0);
    }
    Ok(r_y)
}

/// Adaptively weighted sample covariance R_Y = (1/(Lb)) Σ_ℓ u(t_ℓ)·y_ℓy_ℓᴴ
/// with t_ℓ = y_ℓᴴΣ⁻¹y_ℓ. For the Tyler loss, b is recomputed from the
/// current quadratic forms and R_Y is normalized to unit trace.
pub fn weighted_scm(
    y: &DMatrix<Complex64>,
    sigma: &DMatrix<Complex64>,
    loss: &LossSpec,
) -> Result<DMatrix<Complex64>> {
    let chol = linalg::cholesky(sigma.clone(), "scatter model")?;
    weighted_scm_with(y, &chol, loss)
}

/// Negative log-likelihood style objective
/// (1/(Lb)) Σ_ℓ ρ(y_ℓᴴΣ⁻¹y_ℓ) + log det Σ. Diagnostic only.
pub fn objective(y: &DMatrix<Complex64>, sigma: &DMatrix<Complex64>, loss: &LossSpec) -> Result<f64> {
    let chol = linalg::cholesky(sigma.clone(), "scatter model")?;
    let t = quad_forms(&chol, y)?;
    let b = if loss.kind() == LossKind::Tyler {
        tyler_b(loss.n_sensors(), &t)?
    } else {
        loss.b()
    };
    let l = y.ncols() as f64;
    let mut sum = 0.0;
    for &tl in &t {
        sum += loss.loss_value(tl)?;
    }
    Ok(sum / (l * b) + linalg::log_det(&chol))
}

/// Conventional-beamformer grid powers γ_m = a_mᴴ S a_m / ‖a_m‖⁴.
fn cbf_powers(dict: &Dictionary, s: &DMatrix<Complex64>) -> DVector<f64> {
    let n = dict.geometry.n_sensors as f64;
    let v = s * &dict.steering;
    DVector::from_iterator(
        dict.m_points(),
        (0..dict.m_points()).map(|m| dict.steering.column(m).dotc(&v.column(m)).re / (n * n)),
    )
}

/// Residual noise power tr((I − A_𝓜A_𝓜⁺)·S)/(N−K), no clamping.
fn raw_noise_variance(
    s: &DMatrix<Complex64>,
    dict: &Dictionary,
    active_set: &[usize],
) -> Result<f64> {
    let n = dict.geometry.n_sensors;
    let k = active_set.len();
    if k >= n {
        return Err(Error::SourceCount { k, n });
    }
    let total = s.trace().re;
    if k == 0 {
        return Ok(total / n as f64);
    }
    let a = dict.steering.select_columns(active_set.iter());
    let pinv = linalg::pseudo_inverse(&a)?;
    let projected = (a * pinv * s).trace().re;
    Ok((total - projected) / (n - k) as f64)
}

/// Noise variance estimate from the weighted covariance, clamped to
/// [σ²_floor, σ²_ceil].
pub fn noise_variance(
    r_y: &DMatrix<Complex64>,
    dict: &Dictionary,
    active_set: &[usize],
    sigma2_floor: f64,
    sigma2_ceil: f64,
) -> Result<f64> {
    Ok(raw_noise_variance(r_y, dict, active_set)?.min(sigma2_ceil).max(sigma2_floor))
}

/// Pruned grid 𝓟 = {p : γ_p ≥ gamma_range·max γ}, in index order.
pub fn prune_grid(gamma: &DVector<f64>, gamma_range: f64) -> Result<Vec<usize>> {
    let max = gamma.iter().fold(0.0f64, |acc, &g| acc.max(g));
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::AllZeroGamma);
    }
    let floor = gamma_range * max;
    Ok((0..gamma.len()).filter(|&p| gamma[p] >= floor).collect())
}

/// K largest peaks of γ, as sorted grid indices.
///
/// A peak is a strict local maximum; boundary entries qualify against their
/// single neighbor. If fewer than K peaks exist, the largest remaining
/// non-peak entries fill the set. Ties prefer the lower index.
pub fn select_active_set(gamma: &DVector<f64>, k: usize) -> Vec<usize> {
    let m = gamma.len();
    if k == 0 || m == 0 {
        return Vec::new();
    }
    let is_peak = |i: usize| -> bool {
        if m == 1 {
            return true;
        }
        let left_ok = i == 0 || gamma[i] > gamma[i - 1];
        let right_ok = i == m - 1 || gamma[i] > gamma[i + 1];
        left_ok && right_ok
    };
    let by_power_then_index = |a: &usize, b: &usize| {
        gamma[*b]
            .partial_cmp(&gamma[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    let mut peaks: Vec<usize> = (0..m).filter(|&i| is_peak(i)).collect();
    peaks.sort_by(by_power_then_index);
    let mut chosen: Vec<usize> = peaks.into_iter().take(k).collect();
    if chosen.len() < k {
        let mut rest: Vec<usize> = (0..m).filter(|i| !chosen.contains(i)).collect();
        rest.sort_by(by_power_then_index);
        chosen.extend(rest.into_iter().take(k - chosen.len()));
    }
    chosen.sort_unstable();
    chosen
}

fn update_gamma_in_place(
    gamma: &mut DVector<f64>,
    pruned: &[usize],
    dict: &Dictionary,
    chol: &Cholesky<Complex64, Dyn>,
    r_y: &DMatrix<Complex64>,
    mu: f64,
) -> Result<()> {
    let a = dict.steering.select_columns(pruned.iter());
    let b = chol.solve(&a);
    let v = r_y * &b;
    for (j, &p) in pruned.iter().enumerate() {
        // G_p = (b_pᴴ R_Y b_p)/(b_pᴴ a_p) with b_p = Σ⁻¹a_p; both forms are
        // real for Hermitian Σ, R_Y, and the denominator is positive for PD Σ.
        let num = b.column(j).dotc(&v.column(j)).re.max(0.0);
        let den = b.column(j).dotc(&a.column(j)).re;
        if !(den > 0.0) || !den.is_finite() {
            return Err(Error::Singular {
                context: "power update denominator",
            });
        }
        let g = num / den;
        gamma[p] = (1.0 - mu) * gamma[p] + mu * gamma[p] * g;
    }
    Ok(())
}

/// Multiplicative power update γ_p ← (1−μ)γ_p + μγ_p·G_p over the pruned set
/// 𝓟; entries outside 𝓟 are passed through unchanged. The update's fixed
/// point is R_Y = Σ (all G_p = 1).
pub fn gamma_update(
    gamma_old: &DVector<f64>,
    pruned: &[usize],
    dict: &Dictionary,
    sigma: &DMatrix<Complex64>,
    r_y: &DMatrix<Complex64>,
    mu: f64,
) -> Result<DVector<f64>> {
    let chol = linalg::cholesky(sigma.clone(), "scatter model")?;
    let mut gamma = gamma_old.clone();
    update_gamma_in_place(&mut gamma, pruned, dict, &chol, r_y, mu)?;
    Ok(gamma)
}

fn initialize_parts(
    y: &DMatrix<Complex64>,
    dict: &Dictionary,
    k: usize,
    config: &EstimatorConfig,
) -> Result<(DVector<f64>, f64, Vec<usize>)> {
    let n = dict.geometry.n_sensors;
    if k >= n {
        return Err(Error::SourceCount { k, n });
    }
    if y.ncols() < 1 {
        return Err(Error::InvalidParameter {
            name: "n_snapshots",
            reason: "need at least one snapshot".into(),
        });
    }
    let s_y = sample_covariance(y);
    let gamma_init = cbf_powers(dict, &s_y);
    let active = select_active_set(&gamma_init, k);
    let sigma2 = raw_noise_variance(&s_y, dict, &active)?;
    // The beamformer powers carry a noise floor of σ²/N, not σ²: subtracting
    // the sensor-level variance would zero out every bin whenever the
    // post-beamforming SNR is moderate, freezing the active set at the plain
    // beamformer peaks before the solver ever moves.
    let floor = sigma2 / n as f64;
    let gamma = gamma_init.map(|g| (g - floor).max(config.gamma_floor_init));
    Ok((gamma, sigma2, active))
}

/// Initialization: conventional-beamformer powers, noise variance from the
/// residual outside the K strongest peaks, and the floored power vector
/// γ_m = max(δ, γ_m^cbf − σ̂²/N), where σ̂²/N is the beamformer noise floor.
pub fn initialize(
    y: &DMatrix<Complex64>,
    dict: &Dictionary,
    k: usize,
    config: &EstimatorConfig,
) -> Result<(DVector<f64>, f64)> {
    let (gamma, sigma2, _) = initialize_parts(y, dict, k, config)?;
    Ok((gamma, sigma2))
}

/// Per-iteration observer: (iteration, γ, σ̂², active set).
type Observer<'a> = dyn FnMut(usize, &DVector<f64>, f64, &[usize]) + 'a;

fn run(
    y: &DMatrix<Complex64>,
    dict: &Dictionary,
    k: usize,
    loss: &LossSpec,
    config: &EstimatorConfig,
    observe: &mut Observer,
) -> Result<EstimateResult> {
    config.validate()?;
    let n = dict.geometry.n_sensors;
    if y.nrows() != n {
        return Err(Error::LengthMismatch {
            what: "snapshot rows",
            got: y.nrows(),
            expected: n,
        });
    }
    if loss.n_sensors() != n {
        return Err(Error::LengthMismatch {
            what: "loss n_sensors",
            got: loss.n_sensors(),
            expected: n,
        });
    }
    if k > dict.m_points() {
        return Err(Error::InvalidParameter {
            name: "n_sources",
            reason: format!("{k} sources exceed the {} grid points", dict.m_points()),
        });
    }
    let l = y.ncols();
    let s_y = sample_covariance(y);
    let sigma2_ceil = s_y.trace().re / n as f64;
    let sigma2_floor = sigma2_ceil / config.snr_max;

    let (mut gamma, mut sigma2, mut active) = initialize_parts(y, dict, k, config)?;
    observe(0, &gamma, sigma2, &active);

    let mut iterations = 0;
    let mut streak = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        iterations += 1;
        let pruned = prune_grid(&gamma, config.gamma_range)?;
        let sigma = build_sigma(dict, &gamma, &pruned, sigma2);
        let chol = linalg::cholesky(sigma, "scatter model")?;
        let t = quad_forms(&chol, y)?;
        let (weights, b) = snapshot_weights(loss, &t)?;
        let mut r_y = weighted_outer(y, &weights, 1.0 / (l as f64 * b));
        if loss.kind() == LossKind::Tyler {
            let trace = r_y.trace().re;
            if !(trace > 0.0) || !trace.is_finite() {
                return Err(Error::Singular {
                    context: "weighted covariance trace",
                });
            }
            r_y /= Complex64::new(trace, 0.0);
        }
        update_gamma_in_place(&mut gamma, &pruned, dict, &chol, &r_y, config.stepsize)?;
        let new_active = select_active_set(&gamma, k);
        sigma2 = noise_variance(&r_y, dict, &new_active, sigma2_floor, sigma2_ceil)?;
        if new_active == active {
            streak += 1;
        } else {
            active = new_active;
            streak = 0;
        }
        observe(iterations, &gamma, sigma2, &active);
        if streak >= config.conv_window {
            converged = true;
            break;
        }
    }

    let doas_degrees = active.iter().map(|&m| dict.grid_degrees[m]).collect();
    Ok(EstimateResult {
        active_set: active,
        doas_degrees,
        gamma,
        sigma2,
        iterations,
        converged,
    })
}

/// Run the full estimator on snapshots `y` for `k` sources.
pub fn estimate_doas(
    y: &DMatrix<Complex64>,
    dict: &Dictionary,
    k: usize,
    loss: &LossSpec,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    run(y, dict, k, loss, config, &mut |_, _, _, _| {})
}

/// Like [`estimate_doas`], also returning the per-iteration state trajectory
/// (record 0 is the initialization). Intended for diagnostics and testing;
/// the trace clones the full γ vector each iteration.
pub fn estimate_doas_traced(
    y: &DMatrix<Complex64>,
    dict: &Dictionary,
    k: usize,
    loss: &LossSpec,
    config: &EstimatorConfig,
) -> Result<(EstimateResult, Vec<IterationRecord>)> {
    let mut trace = Vec::new();
    let result = run(y, dict, k, loss, config, &mut |iteration, gamma, sigma2, active| {
        trace.push(IterationRecord {
            iteration,
            gamma: gamma.clone(),
            sigma2,
            active_set: active.to_vec(),
        });
    })?;
    Ok((result, trace))
}
