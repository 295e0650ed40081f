//! Benchmark metrics: permutation-matched RMSE accumulation and Cramér-Rao
//! bounds for the Gaussian and CES (e.g. MVT) array data models.
//!
//! RMSE follows the capped optimal-subpattern-assignment convention: each
//! run's estimates are matched to the true DOAs by the error-minimizing
//! permutation, every |error| is capped at `e_max` degrees, and
//! RMSE = sqrt(Σ err² / (K·N_run)). All bounds are returned as the trace of
//! the K×K bound matrix in deg², so sqrt(trace/K) is directly comparable to
//! the per-source RMSE.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::datagen::Scenario;
use crate::error::{Error, Result};
use crate::geometry::{steering_derivative, steering_vector, ArrayGeometry};
use crate::linalg;

const MAX_MATCH_SOURCES: usize = 5;

/// Streaming accumulator for capped, assignment-matched squared DOA errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseAccumulator {
    sum_sq: f64,
    count: usize,
    e_max: f64,
}

impl Default for RmseAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl RmseAccumulator {
    /// Accumulator with the conventional 10° error cap.
    pub fn new() -> Self {
        Self {
            sum_sq: 0.0,
            count: 0,
            e_max: 10.0,
        }
    }

    pub fn with_cap(e_max: f64) -> Result<Self> {
        if !(e_max > 0.0) || !e_max.is_finite() {
            return Err(Error::InvalidParameter {
                name: "e_max",
                reason: format!("error cap must be positive, got {e_max}"),
            });
        }
        Ok(Self {
            sum_sq: 0.0,
            count: 0,
            e_max,
        })
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    /// Number of accumulated per-source errors (K summed over runs).
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    /// Fold another accumulator in; the reduction is associative, so partial
    /// accumulators from parallel runs can be merged in any order. Both sides
    /// must use the same error cap.
    pub fn merge(&mut self, other: &Self) {
        assert_eq!(
            self.e_max, other.e_max,
            "merging accumulators with different error caps"
        );
        self.sum_sq += other.sum_sq;
        self.count += other.count;
    }

    /// RMSE in degrees over everything accumulated so far.
    pub fn rmse(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        Ok((self.sum_sq / self.count as f64).sqrt())
    }
}

/// Match `est_doas` to `true_doas` by the permutation minimizing the summed
/// capped squared error (brute force, K ≤ 5) and accumulate each capped
/// error.
pub fn match_and_accumulate(
    acc: &mut RmseAccumulator,
    est_doas: &[f64],
    true_doas: &[f64],
) -> Result<()> {
    if est_doas.len() != true_doas.len() {
        return Err(Error::LengthMismatch {
            what: "estimated DOAs",
            got: est_doas.len(),
            expected: true_doas.len(),
        });
    }
    let k = est_doas.len();
    if k > MAX_MATCH_SOURCES {
        return Err(Error::InvalidParameter {
            name: "n_sources",
            reason: format!("assignment is brute-force, needs K <= {MAX_MATCH_SOURCES}, got {k}"),
        });
    }
    if k == 0 {
        return Ok(());
    }
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| (est_doas[j] - true_doas[i]).abs().min(acc.e_max).powi(2))
            .sum()
    };
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = cost(&perm);
    // Heap's algorithm over the remaining K!−1 permutations
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    acc.sum_sq += best;
    acc.count += k;
    Ok(())
}

/// Fisher-consistency scale ψ₁ of the MVT data model, (2N+ν)/(2(N+1)+ν).
pub fn psi1_mvt(n_sensors: usize, nu_data: f64) -> f64 {
    let n2 = 2.0 * n_sensors as f64;
    (n2 + nu_data) / (n2 + 2.0 + nu_data)
}

/// ∂Σ/∂θ_k in deg⁻¹ for the rank-one source term γ_k·a(θ_k)a(θ_k)ᴴ:
/// γ_k(d aᴴ + a dᴴ) with d the per-degree steering derivative.
pub fn sigma_derivative(
    geometry: &ArrayGeometry,
    theta_degrees: f64,
    gamma_k: f64,
) -> Result<DMatrix<Complex64>> {
    let a = steering_vector(geometry, theta_degrees)?;
    let d = steering_derivative(geometry, theta_degrees)?;
    let g = Complex64::new(gamma_k, 0.0);
    Ok((&d * a.adjoint() + &a * d.adjoint()) * g)
}

fn check_crb_inputs(scenario: &Scenario, geometry: &ArrayGeometry, sigma2: f64, l: usize) -> Result<()> {
    scenario.validate()?;
    geometry.validate()?;
    let k = scenario.n_sources();
    if k >= geometry.n_sensors {
        return Err(Error::SourceCount {
            k,
            n: geometry.n_sensors,
        });
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("noise variance must be positive, got {sigma2}"),
        });
    }
    if l < 1 {
        return Err(Error::InvalidParameter {
            name: "n_snapshots",
            reason: "need at least one snapshot".into(),
        });
    }
    Ok(())
}

/// Stochastic (unconditional) CRB for DOA from Gaussian array data, in deg²:
/// (σ²/2L)·tr{ Re[Γ(I + AᴴAΓ/σ²)⁻¹(AᴴAΓ/σ²)] ⊙ Hᵀ }⁻¹ with
/// H = Dᴴ(I − AA⁺)D. Source powers enter as Γ = diag(γ).
pub fn crb_gauss(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    sigma2: f64,
    l: usize,
) -> Result<f64> {
    check_crb_inputs(scenario, geometry, sigma2, l)?;
    let n = geometry.n_sensors;
    let k = scenario.n_sources();
    let mut a = DMatrix::zeros(n, k);
    let mut d = DMatrix::zeros(n, k);
    for (j, &theta) in scenario.doas_degrees.iter().enumerate() {
        a.set_column(j, &steering_vector(geometry, theta)?);
        d.set_column(j, &steering_derivative(geometry, theta)?);
    }
    let gamma = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            Complex64::new(scenario.source_powers[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let q_gamma = (a.adjoint() * &a * &gamma) / Complex64::new(sigma2, 0.0);
    let inner = (DMatrix::identity(k, k) + &q_gamma)
        .try_inverse()
        .ok_or(Error::Singular {
            context: "CRB source-power bracket",
        })?;
    let m1 = &gamma * inner * q_gamma;

    let pinv = linalg::pseudo_inverse(&a)?;
    let proj = &a * pinv;
    let h = d.adjoint() * (DMatrix::identity(n, n) - proj) * &d;

    let fim = DMatrix::from_fn(k, k, |i, j| (m1[(i, j)] * h[(j, i)]).re);
    let fim_inv = fim.try_inverse().ok_or(Error::Singular {
        context: "CRB information matrix",
    })?;
    Ok(sigma2 / (2.0 * l as f64) * fim_inv.trace())
}

/// Slepian-Bangs CRB for DOA from CES array data, in deg²: tr(F⁻¹)/L with
/// F_ij = (ψ₁−1)·tr(Σ⁻¹Σ_i)tr(Σ⁻¹Σ_j) + ψ₁·tr(Σ⁻¹Σ_iΣ⁻¹Σ_j). ψ₁ = 1
/// recovers the DOA-only Gaussian bound; [`psi1_mvt`] supplies the MVT value.
pub fn crb_ces(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    sigma2: f64,
    l: usize,
    psi1: f64,
) -> Result<f64> {
    check_crb_inputs(scenario, geometry, sigma2, l)?;
    if !(psi1 > 0.0) || !psi1.is_finite() {
        return Err(Error::InvalidParameter {
            name: "psi1",
            reason: format!("must be positive, got {psi1}"),
        });
    }
    let n = geometry.n_sensors;
    let k = scenario.n_sources();

    let mut sigma = DMatrix::from_diagonal_element(n, n, Complex64::new(sigma2, 0.0));
    for (j, &theta) in scenario.doas_degrees.iter().enumerate() {
        let a = steering_vector(geometry, theta)?;
        sigma += &a * a.adjoint() * Complex64::new(scenario.source_powers[j], 0.0);
    }
    crate::estimator::hermitize(&mut sigma);
    let chol = linalg::cholesky(sigma, "CES scatter")?;

    let mut solved = Vec::with_capacity(k);
    let mut traces = Vec::with_capacity(k);
    for (j, &theta) in scenario.doas_degrees.iter().enumerate() {
        let deriv = sigma_derivative(geometry, theta, scenario.source_powers[j])?;
        let x = chol.solve(&deriv);
        traces.push(x.trace().re);
        solved.push(x);
    }
    let fim = DMatrix::from_fn(k, k, |i, j| {
        (psi1 - 1.0) * traces[i] * traces[j] + psi1 * (&solved[i] * &solved[j]).trace().re
    });
    let fim_inv = fim.try_inverse().ok_or(Error::Singular {
        context: "CES information matrix",
    })?;
    Ok(fim_inv.trace() / l as f64)
}
