//! Loss, weight, and ψ functions for the four array M-estimators, their
//! consistency factors, and the χ² special functions they require.
//!
//! Conventions, with `t = yᴴΣ⁻¹y` and N the sensor count:
//!
//! | kind  | ρ(t)                      | u(t)              | ψ(t) = t·u(t) |
//! |-------|---------------------------|-------------------|---------------|
//! | Gauss | t                         | 1                 | t             |
//! | Huber | t or c²(ln(t/c²)+1)       | 1 or c²/t         | t or c²       |
//! | MVT   | (ν+2N)/2 · ln(ν+2t)       | (ν+2N)/(ν+2t)     | t·u(t)        |
//! | Tyler | N ln t                    | N/t               | N             |
//!
//! The Huber branch switches at t = c², where c² is half the q-quantile of
//! χ²_{2N}. The consistency factor b rescales the weighted sample covariance
//! so it stays unbiased for Σ under Gaussian data; Tyler has no fixed b, the
//! estimator recomputes it each iteration from the mean of Tyler's weights.

use crate::error::{Error, Result};

/// Loss family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Gauss,
    Huber,
    Mvt,
    Tyler,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Gauss => "gauss",
            LossKind::Huber => "huber",
            LossKind::Mvt => "mvt",
            LossKind::Tyler => "tyler",
        }
    }
}

/// A fully parameterized loss: kind, sensor count, tuning parameters, and the
/// derived constants (Huber threshold c², consistency factor b).
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    kind: LossKind,
    n_sensors: usize,
    q: Option<f64>,
    nu_loss: Option<f64>,
    c_squared: Option<f64>,
    b: f64,
}

impl LossSpec {
    pub fn gauss(n_sensors: usize) -> Result<Self> {
        check_sensors(n_sensors)?;
        Ok(Self {
            kind: LossKind::Gauss,
            n_sensors,
            q: None,
            nu_loss: None,
            c_squared: None,
            b: 1.0,
        })
    }

    /// Huber loss at the default quantile q = 0.9.
    pub fn huber(n_sensors: usize) -> Result<Self> {
        Self::huber_with_q(n_sensors, 0.9)
    }

    pub fn huber_with_q(n_sensors: usize, q: f64) -> Result<Self> {
        check_sensors(n_sensors)?;
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter {
                name: "q",
                reason: format!("Huber quantile must lie in (0, 1), got {q}"),
            });
        }
        let c_squared = huber_threshold(q, n_sensors)?;
        let mut spec = Self {
            kind: LossKind::Huber,
            n_sensors,
            q: Some(q),
            nu_loss: None,
            c_squared: Some(c_squared),
            b: 1.0,
        };
        spec.b = consistency_factor(&spec)?;
        Ok(spec)
    }

    /// MVT (multivariate-t maximum-likelihood) loss at the default ν = 2.1.
    pub fn mvt(n_sensors: usize) -> Result<Self> {
        Self::mvt_with_nu(n_sensors, 2.1)
    }

    pub fn mvt_with_nu(n_sensors: usize, nu_loss: f64) -> Result<Self> {
        check_sensors(n_sensors)?;
        if !(nu_loss > 0.0) || !nu_loss.is_finite() {
            return Err(Error::InvalidParameter {
                name: "nu_loss",
                reason: format!("degrees of freedom must be positive, got {nu_loss}"),
            });
        }
        let mut spec = Self {
            kind: LossKind::Mvt,
            n_sensors,
            q: None,
            nu_loss: Some(nu_loss),
            c_squared: None,
            b: 1.0,
        };
        spec.b = consistency_factor(&spec)?;
        Ok(spec)
    }

    /// Tyler's loss. `b` defaults to 1; the estimator replaces it every
    /// iteration with the data-adaptive value from [`tyler_b`].
    pub fn tyler(n_sensors: usize) -> Result<Self> {
        check_sensors(n_sensors)?;
        Ok(Self {
            kind: LossKind::Tyler,
            n_sensors,
            q: None,
            nu_loss: None,
            c_squared: None,
            b: 1.0,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn q(&self) -> Option<f64> {
        self.q
    }

    pub fn nu_loss(&self) -> Option<f64> {
        self.nu_loss
    }

    /// Huber threshold c² (None for other kinds).
    pub fn c_squared(&self) -> Option<f64> {
        self.c_squared
    }

    /// Consistency factor b (1 for Gauss and for Tyler's placeholder).
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Weight u(t); nonincreasing in t for every kind.
    pub fn weight(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        let n = self.n_sensors as f64;
        Ok(match self.kind {
            LossKind::Gauss => 1.0,
            LossKind::Huber => {
                let c2 = self.c_squared.expect("huber has c_squared");
                if t <= c2 {
                    1.0
                } else {
                    c2 / t
                }
            }
            LossKind::Mvt => {
                let nu = self.nu_loss.expect("mvt has nu_loss");
                (nu + 2.0 * n) / (nu + 2.0 * t)
            }
            LossKind::Tyler => n / t,
        })
    }

    /// Loss value ρ(t).
    pub fn loss_value(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        let n = self.n_sensors as f64;
        Ok(match self.kind {
            LossKind::Gauss => t,
            LossKind::Huber => {
                let c2 = self.c_squared.expect("huber has c_squared");
                if t <= c2 {
                    t
                } else {
                    c2 * ((t / c2).ln() + 1.0)
                }
            }
            LossKind::Mvt => {
                let nu = self.nu_loss.expect("mvt has nu_loss");
                0.5 * (nu + 2.0 * n) * (nu + 2.0 * t).ln()
            }
            LossKind::Tyler => n * t.ln(),
        })
    }

    /// ψ(t) = t·u(t); constant N for Tyler.
    pub fn psi(&self, t: f64) -> Result<f64> {
        match self.kind {
            LossKind::Tyler => {
                self.check_t(t)?;
                Ok(self.n_sensors as f64)
            }
            _ => Ok(t * self.weight(t)?),
        }
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::InvalidParameter {
                name: "t",
                reason: format!("quadratic form must be nonnegative, got {t}"),
            });
        }
        if self.kind == LossKind::Tyler && t == 0.0 {
            return Err(Error::TylerDomain(t));
        }
        Ok(())
    }
}

fn check_sensors(n_sensors: usize) -> Result<()> {
    if n_sensors < 2 {
        return Err(Error::InvalidParameter {
            name: "n_sensors",
            reason: format!("need at least 2 sensors, got {n_sensors}"),
        });
    }
    Ok(())
}

/// Huber threshold: c² = ½ · quantile(χ²_{2N}, q).
pub fn huber_threshold(q: f64, n_sensors: usize) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::QuantileOutOfRange(q));
    }
    Ok(0.5 * chi2_quantile(2 * n_sensors, q)?)
}

/// Consistency factor b for the non-Tyler losses.
///
/// Gauss: exactly 1. Huber: the closed form
/// `F_{χ²_{2(N+1)}}(2c²) + c²(1−q)/N`. MVT: the quadrature
/// `(1/N)∫₀^∞ ψ(t/2) f_{χ²_{2N}}(t) dt`, truncated where the χ² tail mass
/// drops below 1e−12.
pub fn consistency_factor(spec: &LossSpec) -> Result<f64> {
    let n = spec.n_sensors as f64;
    match spec.kind {
        LossKind::Gauss => Ok(1.0),
        LossKind::Huber => {
            let q = spec.q.expect("huber has q");
            let c2 = spec.c_squared.expect("huber has c_squared");
            Ok(chi2_cdf(2 * (spec.n_sensors + 1), 2.0 * c2) + c2 * (1.0 - q) / n)
        }
        LossKind::Mvt => {
            let nu = spec.nu_loss.expect("mvt has nu_loss");
            let dof = 2 * spec.n_sensors;
            let x_hi = chi2_quantile(dof, 1.0 - 1e-12)?;
            let integrand = |t: f64| {
                let psi = (t / 2.0) * (nu + 2.0 * n) / (nu + t);
                psi * chi2_pdf(dof, t)
            };
            Ok(adaptive_simpson(&integrand, 0.0, x_hi, 1e-10) / n)
        }
        LossKind::Tyler => Err(Error::InvalidParameter {
            name: "kind",
            reason: "Tyler has no fixed consistency factor; use tyler_b each iteration".into(),
        }),
    }
}

/// Data-adaptive Tyler factor: the mean of Tyler's weights,
/// b = (1/L) Σ_ℓ N/t_ℓ over the snapshot quadratic forms t_ℓ = y_ℓᴴΣ⁻¹y_ℓ.
pub fn tyler_b(n_sensors: usize, sigma_inv_quadforms: &[f64]) -> Result<f64> {
    if sigma_inv_quadforms.is_empty() {
        return Err(Error::EmptyAccumulator);
    }
    let n = n_sensors as f64;
    let mut sum = 0.0;
    for (snapshot, &t) in sigma_inv_quadforms.iter().enumerate() {
        if !(t > 0.0) {
            return Err(Error::TylerQuadForm { snapshot, value: t });
        }
        sum += n / t;
    }
    Ok(sum / sigma_inv_quadforms.len() as f64)
}

// --- χ² special functions -------------------------------------------------
//
// Self-contained regularized incomplete gamma: power series for the lower
// tail when x < a+1, Lentz continued fraction for the upper tail otherwise.

/// χ² CDF: P(dof/2, x/2). Returns 0 for x ≤ 0.
pub fn chi2_cdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(dof as f64 / 2.0, x / 2.0)
}

/// χ² density, for quadrature and the quantile's Newton steps.
pub fn chi2_pdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let a = dof as f64 / 2.0;
    ((a - 1.0) * x.ln() - 0.5 * x - ln_gamma(a) - a * std::f64::consts::LN_2).exp()
}

/// χ² quantile: the x with chi2_cdf(dof, x) = p, solved by bracketing plus
/// safeguarded Newton in whichever tail is better conditioned.
pub fn chi2_quantile(dof: usize, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::QuantileOutOfRange(p));
    }
    let a = dof as f64 / 2.0;
    let lower = p <= 0.5;
    let target = if lower { p } else { 1.0 - p };
    // residual increases with x in the lower tail, decreases in the upper
    let f = |x: f64| {
        if lower {
            gamma_p(a, x / 2.0) - target
        } else {
            gamma_q(a, x / 2.0) - target
        }
    };
    let mut lo = 0.0;
    let mut hi = (dof as f64).max(1.0);
    while (lower && f(hi) < 0.0) || (!lower && f(hi) > 0.0) {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() <= 1e-13 * target {
            break;
        }
        if (lower && fx < 0.0) || (!lower && fx > 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        let slope = chi2_pdf(dof, x) * if lower { 1.0 } else { -1.0 };
        let mut next = x - fx / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= f64::EPSILON * x {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Regularized lower incomplete gamma P(a, x).
fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 − P(a, x).
fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut k = 1.0;
    while term.abs() > sum.abs() * 1e-17 {
        term *= x / (a + k);
        sum += term;
        k += 1.0;
        if k > 10_000.0 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    // Lentz's algorithm on the standard continued fraction for Q.
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Lanczos approximation (g = 7, 9 terms), |error| ≲ 1e−15 for a > 0.
fn ln_gamma(a: f64) -> f64 {
    const G: f64 = 7.0;
    #[allow(clippy::excessive_precision)] // published coefficients, digits matter
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if a < 0.5 {
        // reflection, not reached for half-integer dof/2 ≥ 0.5 but kept total
        let pi = std::f64::consts::PI;
        return (pi / (pi * a).sin()).ln() - ln_gamma(1.0 - a);
    }
    let z = a - 1.0;
    let mut series = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + series.ln()
}

/// Recursive adaptive Simpson with absolute tolerance.
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            return left + right + err / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_distr::Distribution;

    #[test]
    fn gauss_weight_loss_psi_are_identity_like() {
        let spec = LossSpec::gauss(20).unwrap();
        assert_eq!(spec.weight(3.5).unwrap(), 1.0);
        assert_eq!(spec.loss_value(3.5).unwrap(), 3.5);
        assert_eq!(spec.psi(3.5).unwrap(), 3.5);
        assert_eq!(spec.b(), 1.0);
    }

    #[test]
    fn huber_weight_and_psi_branches() {
        let spec = LossSpec::huber(20).unwrap();
        let c2 = spec.c_squared().unwrap();
        assert_eq!(spec.weight(0.5 * c2).unwrap(), 1.0);
        assert_eq!(spec.weight(c2).unwrap(), 1.0);
        assert_relative_eq!(spec.weight(2.0 * c2).unwrap(), 0.5, max_relative = 1e-15);
        // psi saturates at c² past the threshold
        assert_relative_eq!(spec.psi(3.0 * c2).unwrap(), c2, max_relative = 1e-15);
        // continuity of rho at the branch point
        let below = spec.loss_value(c2 * (1.0 - 1e-12)).unwrap();
        let above = spec.loss_value(c2 * (1.0 + 1e-12)).unwrap();
        assert_relative_eq!(below, above, max_relative = 1e-9);
        assert_relative_eq!(spec.loss_value(c2).unwrap(), c2, max_relative = 1e-15);
    }

    #[test]
    fn mvt_weight_limits() {
        let spec = LossSpec::mvt_with_nu(20, 2.1).unwrap();
        assert_relative_eq!(spec.weight(0.0).unwrap(), 42.1 / 2.1, max_relative = 1e-15);
        assert!(spec.weight(1e12).unwrap() < 1e-9);
    }

    #[test]
    fn mvt_loss_value_matches_direct_formula() {
        let spec = LossSpec::mvt_with_nu(20, 2.1).unwrap();
        // independent evaluation of (ν+2N)/2 · ln(ν+2t) at t = 1
        let expected = (2.1 + 40.0) / 2.0 * (2.1f64 + 2.0).ln();
        assert_relative_eq!(spec.loss_value(1.0).unwrap(), expected, max_relative = 1e-15);
    }

    #[test]
    fn tyler_weight_psi_and_domain() {
        let spec = LossSpec::tyler(20).unwrap();
        assert_relative_eq!(spec.weight(20.0).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(spec.psi(5.0).unwrap(), 20.0);
        assert_relative_eq!(spec.loss_value(2.0).unwrap(), 20.0 * 2.0f64.ln());
        assert!(matches!(spec.weight(0.0), Err(Error::TylerDomain(_))));
        assert!(spec.loss_value(0.0).is_err());
    }

    #[test]
    fn weights_nonincreasing_psi_nondecreasing() {
        let specs = [
            LossSpec::gauss(20).unwrap(),
            LossSpec::huber(20).unwrap(),
            LossSpec::mvt(20).unwrap(),
            LossSpec::tyler(20).unwrap(),
        ];
        // log grid over eight decades
        let grid: Vec<f64> = (0..160).map(|i| 10f64.powf(-4.0 + i as f64 * 0.05)).collect();
        for spec in &specs {
            for w in grid.windows(2) {
                let (u0, u1) = (spec.weight(w[0]).unwrap(), spec.weight(w[1]).unwrap());
                assert!(u1 <= u0 + 1e-15, "{:?}: u not nonincreasing", spec.kind());
                let (p0, p1) = (spec.psi(w[0]).unwrap(), spec.psi(w[1]).unwrap());
                assert!(p1 >= p0 - 1e-12, "{:?}: psi not nondecreasing", spec.kind());
            }
        }
    }

    #[test]
    fn huber_approaches_gauss_as_q_to_one() {
        let spec = LossSpec::huber_with_q(20, 1.0 - 1e-6).unwrap();
        for &t in &[0.1, 1.0, 10.0, 40.0] {
            assert_eq!(spec.weight(t).unwrap(), 1.0);
        }
    }

    #[test]
    fn mvt_approaches_tyler_as_nu_to_zero() {
        let n = 20;
        let mvt = LossSpec::mvt_with_nu(n, 1e-8).unwrap();
        let tyler = LossSpec::tyler(n).unwrap();
        let mut t = 0.1 * n as f64;
        while t <= 10.0 * n as f64 {
            let ratio = mvt.weight(t).unwrap() / tyler.weight(t).unwrap();
            assert_abs_diff_eq!(ratio, 1.0, epsilon = 1e-4);
            t *= 1.3;
        }
    }

    #[test]
    fn huber_threshold_examples() {
        // N=1, q=0.5: χ²₂ median is 2 ln 2, so c² = ln 2
        assert_relative_eq!(
            huber_threshold(0.5, 1).unwrap(),
            std::f64::consts::LN_2,
            max_relative = 1e-12
        );
        // round-trip at N=20, q=0.9
        let c2 = huber_threshold(0.9, 20).unwrap();
        assert_abs_diff_eq!(chi2_cdf(40, 2.0 * c2), 0.9, epsilon = 1e-11);
        // shrinks toward the Tyler limit as q → 0⁺
        assert!(huber_threshold(1e-6, 20).unwrap() < huber_threshold(0.5, 20).unwrap());
        assert!(huber_threshold(0.0, 20).is_err());
        assert!(huber_threshold(1.0, 20).is_err());
    }

    #[test]
    fn chi2_cdf_closed_form_dof2() {
        // dof = 2 is exponential: CDF(x) = 1 − e^{−x/2}
        for &x in &[0.1, 1.0, 2.0 * std::f64::consts::LN_2, 10.0, 60.0] {
            assert_relative_eq!(
                chi2_cdf(2, x),
                1.0 - (-x / 2.0).exp(),
                max_relative = 1e-13,
                epsilon = 1e-15
            );
        }
        assert_abs_diff_eq!(chi2_cdf(2, 2.0 * std::f64::consts::LN_2), 0.5, epsilon = 1e-14);
        assert_eq!(chi2_cdf(40, 0.0), 0.0);
    }

    #[test]
    fn chi2_cdf_matches_monte_carlo_dof40() {
        // Independent oracle: empirical CDF of 10⁷ χ²₄₀ draws.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(201);
        let dist = rand_distr::ChiSquared::new(40.0).unwrap();
        let n = 10_000_000usize;
        let mut below = 0usize;
        for _ in 0..n {
            if dist.sample(&mut rng) <= 40.0 {
                below += 1;
            }
        }
        let empirical = below as f64 / n as f64;
        assert_abs_diff_eq!(chi2_cdf(40, 40.0), empirical, epsilon = 5e-4);
        // external reference cross-check
        assert_abs_diff_eq!(chi2_cdf(40, 40.0), 0.529_742_733_160_760_7, epsilon = 1e-12);
    }

    #[test]
    fn chi2_quantile_closed_form_and_round_trips() {
        assert_relative_eq!(
            chi2_quantile(2, 0.5).unwrap(),
            2.0 * std::f64::consts::LN_2,
            max_relative = 1e-12
        );
        for &dof in &[2usize, 40] {
            for &x in &[1.0, 10.0, 50.0] {
                let p = chi2_cdf(dof, x);
                let back = chi2_quantile(dof, p).unwrap();
                // Rounding p to f64 already perturbs x by ~2ε/pdf(x) (the CDF
                // saturates near 1), so the bound cannot be tighter than that.
                let representation_limit = 4.0 * f64::EPSILON / chi2_pdf(dof, x);
                let tol = (1e-8 * x).max(representation_limit);
                assert_abs_diff_eq!(back, x, epsilon = tol);
            }
            for &p in &[1e-6, 0.01, 0.3, 0.5, 0.9, 0.99, 1.0 - 1e-9] {
                let x = chi2_quantile(dof, p).unwrap();
                assert_abs_diff_eq!(chi2_cdf(dof, x), p, epsilon = 1e-10);
            }
        }
        // external reference cross-check
        assert_relative_eq!(
            chi2_quantile(40, 0.9).unwrap(),
            51.805_057_213_317_51,
            max_relative = 1e-9
        );
        assert!(chi2_quantile(40, 0.0).is_err());
        assert!(chi2_quantile(40, 1.0).is_err());
    }

    #[test]
    fn consistency_factor_gauss_is_exactly_one() {
        let spec = LossSpec::gauss(20).unwrap();
        assert_eq!(consistency_factor(&spec).unwrap(), 1.0);
    }

    #[test]
    fn consistency_factor_huber_closed_form_vs_quadrature() {
        // Independent oracle: direct quadrature of (1/N)∫ψ(t/2)f_{χ²₂ₙ}(t)dt
        // with the Huber ψ, against the closed form used in the code.
        let spec = LossSpec::huber_with_q(20, 0.9).unwrap();
        let c2 = spec.c_squared().unwrap();
        let x_hi = chi2_quantile(40, 1.0 - 1e-13).unwrap();
        let integrand = |t: f64| {
            let half = t / 2.0;
            let psi = if half <= c2 { half } else { c2 };
            psi * chi2_pdf(40, t)
        };
        let oracle = adaptive_simpson(&integrand, 0.0, x_hi, 1e-12) / 20.0;
        assert_abs_diff_eq!(spec.b(), oracle, epsilon = 1e-6);
        // external reference cross-check
        assert_relative_eq!(spec.b(), 0.986_717_608_409_922_3, max_relative = 1e-8);
    }

    #[test]
    fn consistency_factor_mvt_vs_monte_carlo() {
        // Independent oracle: b ≈ mean of ψ(‖y‖²)/N over standard complex
        // Gaussian draws.
        let spec = LossSpec::mvt_with_nu(20, 2.1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(202);
        let normal = rand_distr::StandardNormal;
        let draws = 1_000_000usize;
        let mut acc = 0.0;
        for _ in 0..draws {
            let mut t = 0.0;
            for _ in 0..40 {
                let g: f64 = normal.sample(&mut rng);
                t += 0.5 * g * g;
            }
            acc += spec.psi(t).unwrap();
        }
        let mc = acc / (draws as f64 * 20.0);
        assert_relative_eq!(spec.b(), mc, max_relative = 1e-2);
        // external reference cross-check
        assert_relative_eq!(spec.b(), 0.997_531_747_508_368_7, max_relative = 1e-8);
    }

    #[test]
    fn consistency_factor_rejects_tyler() {
        let spec = LossSpec::tyler(20).unwrap();
        assert!(consistency_factor(&spec).is_err());
    }

    #[test]
    fn scaled_psi_has_unit_gaussian_expectation() {
        // E[ψ(‖y‖²)]/(N·b) = 1 for standard complex Gaussian y, each
        // non-Tyler loss.
        let specs = [
            LossSpec::gauss(20).unwrap(),
            LossSpec::huber(20).unwrap(),
            LossSpec::mvt(20).unwrap(),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(203);
        let normal = rand_distr::StandardNormal;
        let draws = 1_000_000usize;
        let mut acc = [0.0f64; 3];
        for _ in 0..draws {
            let mut t = 0.0;
            for _ in 0..40 {
                let g: f64 = normal.sample(&mut rng);
                t += 0.5 * g * g;
            }
            for (a, spec) in acc.iter_mut().zip(&specs) {
                *a += spec.psi(t).unwrap();
            }
        }
        for (a, spec) in acc.iter().zip(&specs) {
            let scaled = a / (draws as f64 * 20.0 * spec.b());
            assert_abs_diff_eq!(scaled, 1.0, epsilon = 1e-2);
        }
    }

    #[test]
    fn tyler_b_examples() {
        assert_relative_eq!(tyler_b(20, &[20.0; 7]).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(tyler_b(20, &[10.0, 40.0]).unwrap(), 1.25, max_relative = 1e-15);
        assert!(matches!(
            tyler_b(20, &[20.0, 0.0]),
            Err(Error::TylerQuadForm { snapshot: 1, .. })
        ));
        assert!(tyler_b(20, &[]).is_err());
    }

    #[test]
    fn tyler_b_gaussian_expectation() {
        // For y ~ CN(0, Σ), t = yᴴΣ⁻¹y ~ ½χ²₂ₙ so E[N/t] = N/(N−1).
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(204);
        let normal = rand_distr::StandardNormal;
        for &n in &[20usize, 40] {
            let l = 10_000usize;
            let mut quads = Vec::with_capacity(l);
            for _ in 0..l {
                let mut t = 0.0;
                for _ in 0..2 * n {
                    let g: f64 = normal.sample(&mut rng);
                    t += 0.5 * g * g;
                }
                quads.push(t);
            }
            let b = tyler_b(n, &quads).unwrap();
            let expected = n as f64 / (n as f64 - 1.0);
            assert_relative_eq!(b, expected, max_relative = 0.01);
            if n == 40 {
                assert_abs_diff_eq!(b, 1.0, epsilon = 0.05);
            }
        }
    }
}
