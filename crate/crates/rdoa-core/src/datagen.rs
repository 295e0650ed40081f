//! Seeded synthetic snapshot generation for the three array-data models
//! (Gaussian, heavy-tailed MVT, ε-contaminated) and the benchmark source
//! scenarios, plus the snapshot file formats used by the CLI.
//!
//! Reproducibility contract: generation consumes the caller's RNG in a fixed
//! documented order (source amplitudes, then noise, then per-snapshot scale
//! draws), so the same seeded stream yields a bit-identical SnapshotMatrix.
//! Monte-Carlo runs get independent streams via [`run_rng`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{steering_vector, ArrayGeometry};

/// Source scenario: DOAs, per-source powers, and pairwise correlation ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub doas_degrees: Vec<f64>,
    pub source_powers: Vec<f64>,
    pub correlation: f64,
}

impl Scenario {
    pub fn new(doas_degrees: Vec<f64>, source_powers: Vec<f64>, correlation: f64) -> Result<Self> {
        let s = Self {
            doas_degrees,
            source_powers,
            correlation,
        };
        s.validate()?;
        Ok(s)
    }

    /// One source at −10°, unit power.
    pub fn single_source() -> Self {
        Self {
            doas_degrees: vec![-10.0],
            source_powers: vec![1.0],
            correlation: 0.0,
        }
    }

    /// Two equal-power sources at ±10°.
    pub fn two_sources() -> Self {
        Self {
            doas_degrees: vec![-10.0, 10.0],
            source_powers: vec![0.5, 0.5],
            correlation: 0.0,
        }
    }

    /// Three equal-power sources at −3°, 2°, 75°.
    pub fn three_sources() -> Self {
        Self {
            doas_degrees: vec![-3.0, 2.0, 75.0],
            source_powers: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            correlation: 0.0,
        }
    }

    pub fn n_sources(&self) -> usize {
        self.doas_degrees.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.doas_degrees.is_empty() {
            return Err(Error::InvalidParameter {
                name: "doas_degrees",
                reason: "need at least one source".into(),
            });
        }
        if self.source_powers.len() != self.doas_degrees.len() {
            return Err(Error::LengthMismatch {
                what: "source_powers",
                got: self.source_powers.len(),
                expected: self.doas_degrees.len(),
            });
        }
        for &theta in &self.doas_degrees {
            if !(-90.0..=90.0).contains(&theta) || theta.is_nan() {
                return Err(Error::AngleOutOfRange(theta));
            }
        }
        for (i, &a) in self.doas_degrees.iter().enumerate() {
            for &b in &self.doas_degrees[i + 1..] {
                if a == b {
                    return Err(Error::InvalidParameter {
                        name: "doas_degrees",
                        reason: format!("duplicate DOA {a} deg"),
                    });
                }
            }
        }
        for &p in &self.source_powers {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "source_powers",
                    reason: format!("powers must be positive, got {p}"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::InvalidParameter {
                name: "correlation",
                reason: format!("must lie in [0, 1], got {}", self.correlation),
            });
        }
        Ok(())
    }
}

/// Array-data noise model. The ε-contaminated variant stores the background
/// variance σ₁² so the reported total σ² = (1−ε+ελ²)·σ₁² holds exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian {
        sigma2: f64,
    },
    Mvt {
        sigma2: f64,
        nu_data: f64,
    },
    EpsContaminated {
        sigma1_squared: f64,
        epsilon: f64,
        lambda: f64,
    },
}

impl NoiseModel {
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        let m = Self::Gaussian { sigma2 };
        m.validate()?;
        Ok(m)
    }

    pub fn mvt(sigma2: f64, nu_data: f64) -> Result<Self> {
        let m = Self::Mvt { sigma2, nu_data };
        m.validate()?;
        Ok(m)
    }

    /// ε-contaminated model parameterized by the *total* noise variance σ²;
    /// the background variance becomes σ₁² = σ²/(1−ε+ελ²).
    pub fn eps_contaminated(sigma2: f64, epsilon: f64, lambda: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma2",
                reason: format!("noise variance must be positive, got {sigma2}"),
            });
        }
        let factor = 1.0 - epsilon + epsilon * lambda * lambda;
        let m = Self::EpsContaminated {
            sigma1_squared: sigma2 / factor,
            epsilon,
            lambda,
        };
        m.validate()?;
        Ok(m)
    }

    /// ε-contaminated model with the background σ₁² held fixed (used when
    /// sweeping λ); the total σ² grows with λ.
    pub fn eps_contaminated_fixed_background(
        sigma1_squared: f64,
        epsilon: f64,
        lambda: f64,
    ) -> Result<Self> {
        let m = Self::EpsContaminated {
            sigma1_squared,
            epsilon,
            lambda,
        };
        m.validate()?;
        Ok(m)
    }

    /// Total per-sensor noise variance σ².
    pub fn sigma2(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma2 } | Self::Mvt { sigma2, .. } => sigma2,
            Self::EpsContaminated {
                sigma1_squared,
                epsilon,
                lambda,
            } => sigma1_squared * (1.0 - epsilon + epsilon * lambda * lambda),
        }
    }

    /// Background noise variance σ₁² (contaminated model only).
    pub fn sigma1_squared(&self) -> Option<f64> {
        match *self {
            Self::EpsContaminated { sigma1_squared, .. } => Some(sigma1_squared),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_sigma2 = |s2: f64, name: &'static str| -> Result<()> {
            if !(s2 > 0.0) || !s2.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("noise variance must be positive, got {s2}"),
                });
            }
            Ok(())
        };
        match *self {
            Self::Gaussian { sigma2 } => check_sigma2(sigma2, "sigma2"),
            Self::Mvt { sigma2, nu_data } => {
                check_sigma2(sigma2, "sigma2")?;
                if !(nu_data > 0.0) || !nu_data.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "nu_data",
                        reason: format!("degrees of freedom must be positive, got {nu_data}"),
                    });
                }
                Ok(())
            }
            Self::EpsContaminated {
                sigma1_squared,
                epsilon,
                lambda,
            } => {
                check_sigma2(sigma1_squared, "sigma1_squared")?;
                if !(0.0..1.0).contains(&epsilon) {
                    return Err(Error::InvalidParameter {
                        name: "epsilon",
                        reason: format!("contamination fraction must lie in [0, 1), got {epsilon}"),
                    });
                }
                if !(lambda >= 1.0) || !lambda.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "lambda",
                        reason: format!("outlier scale must be at least 1, got {lambda}"),
                    });
                }
                Ok(())
            }
        }
    }
}

/// N×L complex array snapshots Y = [y₁ … y_L].
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub data: DMatrix<Complex64>,
}

impl SnapshotMatrix {
    pub fn n_sensors(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.ncols()
    }
}

/// ASNR (dB) → total noise variance: σ² = N / 10^(asnr/10).
pub fn asnr_to_sigma2(asnr_db: f64, n_sensors: usize) -> f64 {
    n_sensors as f64 / 10f64.powf(asnr_db / 10.0)
}

/// Inverse of [`asnr_to_sigma2`].
pub fn sigma2_to_asnr_db(sigma2: f64, n_sensors: usize) -> f64 {
    10.0 * (n_sensors as f64 / sigma2).log10()
}

/// Independent ChaCha stream for Monte-Carlo run `run_index` under
/// `master_seed`; results are invariant to how runs are scheduled.
pub fn run_rng(master_seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

fn standard_complex(rng: &mut impl Rng) -> Complex64 {
    // CN(0, 1): real and imaginary parts N(0, 1/2)
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Source amplitude matrix X (K×L): columns iid CN(0, Γ) with Γ diagonal
/// `source_powers` and off-diagonals ρ√(γ_i γ_j).
///
/// ρ = 1 is handled by the rank-one factor [√γ_i] (fully coherent sources);
/// ρ < 1 keeps Γ positive definite and uses its Cholesky factor.
pub fn source_amplitudes(
    scenario: &Scenario,
    l: usize,
    rng: &mut impl Rng,
) -> Result<DMatrix<Complex64>> {
    scenario.validate()?;
    if l < 1 {
        return Err(Error::InvalidParameter {
            name: "n_snapshots",
            reason: "need at least one snapshot".into(),
        });
    }
    let k = scenario.n_sources();
    let rho = scenario.correlation;
    let factor: DMatrix<f64> = if rho == 0.0 {
        DMatrix::from_diagonal(&DVector::from_iterator(
            k,
            scenario.source_powers.iter().map(|p| p.sqrt()),
        ))
    } else if rho == 1.0 {
        DMatrix::from_iterator(k, 1, scenario.source_powers.iter().map(|p| p.sqrt()))
    } else {
        let gamma = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                scenario.source_powers[i]
            } else {
                rho * (scenario.source_powers[i] * scenario.source_powers[j]).sqrt()
            }
        });
        nalgebra::Cholesky::new(gamma)
            .ok_or(Error::NotPositiveDefinite {
                context: "source correlation matrix",
            })?
            .l()
    };
    let r = factor.ncols();
    let mut x = DMatrix::zeros(k, l);
    let mut z = DVector::zeros(r);
    for col in 0..l {
        for i in 0..r {
            z[i] = standard_complex(rng);
        }
        for row in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..r {
                acc += Complex64::new(factor[(row, i)], 0.0) * z[i];
            }
            x[(row, col)] = acc;
        }
    }
    Ok(x)
}

/// Generate L snapshots under the given scenario and noise model.
///
/// Steering vectors are evaluated exactly at the scenario DOAs (no grid
/// snapping). RNG consumption order: source amplitudes, then the N×L noise
/// normals, then any per-snapshot scale draws. With ε = 0 the contaminated
/// model therefore reproduces the Gaussian model bit for bit on the same
/// seed.
pub fn generate(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    noise: &NoiseModel,
    l: usize,
    rng: &mut impl Rng,
) -> Result<SnapshotMatrix> {
    noise.validate()?;
    let x = source_amplitudes(scenario, l, rng)?;
    let k = scenario.n_sources();
    let n = geometry.n_sensors;
    let mut a = DMatrix::zeros(n, k);
    for (j, &theta) in scenario.doas_degrees.iter().enumerate() {
        a.set_column(j, &steering_vector(geometry, theta)?);
    }
    let signal = &a * &x;

    let mut w = DMatrix::zeros(n, l);
    for col in 0..l {
        for row in 0..n {
            w[(row, col)] = standard_complex(rng);
        }
    }

    let mut y = DMatrix::zeros(n, l);
    match *noise {
        NoiseModel::Gaussian { sigma2 } => {
            let sigma = sigma2.sqrt();
            for col in 0..l {
                for row in 0..n {
                    y[(row, col)] = signal[(row, col)] + w[(row, col)] * sigma;
                }
            }
        }
        NoiseModel::EpsContaminated {
            sigma1_squared,
            epsilon,
            lambda,
        } => {
            let sigma1 = sigma1_squared.sqrt();
            for col in 0..l {
                let outlier = rng.gen::<f64>() < epsilon;
                let sigma = if outlier { lambda * sigma1 } else { sigma1 };
                for row in 0..n {
                    y[(row, col)] = signal[(row, col)] + w[(row, col)] * sigma;
                }
            }
        }
        NoiseModel::Mvt { sigma2, nu_data } => {
            let sigma = sigma2.sqrt();
            let chi2 = Gamma::new(nu_data / 2.0, 2.0).map_err(|e| Error::InvalidParameter {
                name: "nu_data",
                reason: e.to_string(),
            })?;
            for col in 0..l {
                let s: f64 = chi2.sample(rng);
                let tau_sqrt = (nu_data / s).sqrt();
                for row in 0..n {
                    y[(row, col)] = (signal[(row, col)] + w[(row, col)] * sigma) * tau_sqrt;
                }
            }
        }
    }
    Ok(SnapshotMatrix { data: y })
}

// --- snapshot file formats --------------------------------------------------
//
// Binary: magic "RDOA", u32 LE N, u32 LE L, then N·L complex values as
// interleaved f64 (re, im), column-major by snapshot.
// CSV (debug): 2N rows × L columns; the first N rows carry real parts, the
// next N rows imaginary parts.

const MAGIC: &[u8; 4] = b"RDOA";
const HEADER_BYTES: u64 = 12;

pub fn write_snapshots_binary(w: &mut impl Write, y: &SnapshotMatrix) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(y.n_sensors() as u32).to_le_bytes())?;
    w.write_all(&(y.n_snapshots() as u32).to_le_bytes())?;
    for col in 0..y.n_snapshots() {
        for row in 0..y.n_sensors() {
            let v = y.data[(row, col)];
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_snapshots_binary(r: &mut impl Read) -> Result<SnapshotMatrix> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 4 || &buf[0..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if (buf.len() as u64) < HEADER_BYTES {
        return Err(Error::Truncated {
            expected: HEADER_BYTES,
            actual: buf.len() as u64,
        });
    }
    let n = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    let l = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if n == 0 || l == 0 {
        return Err(Error::BadDimensions { n, l });
    }
    let expected = HEADER_BYTES + n as u64 * l as u64 * 16;
    if buf.len() as u64 != expected {
        return Err(Error::Truncated {
            expected,
            actual: buf.len() as u64,
        });
    }
    let (n, l) = (n as usize, l as usize);
    let mut data = DMatrix::zeros(n, l);
    let mut off = HEADER_BYTES as usize;
    for col in 0..l {
        for row in 0..n {
            let re = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[off + 8..off + 16].try_into().unwrap());
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "snapshot data",
                    reason: format!("non-finite entry at sensor {row}, snapshot {col}"),
                });
            }
            data[(row, col)] = Complex64::new(re, im);
            off += 16;
        }
    }
    Ok(SnapshotMatrix { data })
}

pub fn write_snapshots_file(path: &std::path::Path, y: &SnapshotMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_snapshots_binary(&mut f, y)?;
    f.flush()?;
    Ok(())
}

pub fn read_snapshots_file(path: &std::path::Path) -> Result<SnapshotMatrix> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_snapshots_binary(&mut f)
}

/// Read only the 12-byte header and return (n_sensors, n_snapshots), so
/// callers can validate request parameters against the dimensions before
/// decoding the payload.
pub fn peek_snapshot_dimensions(path: &std::path::Path) -> Result<(usize, usize)> {
    use std::io::Read as _;
    let mut f = std::fs::File::open(path)?;
    let mut buf = [0u8; HEADER_BYTES as usize];
    let mut got = 0;
    while got < buf.len() {
        let k = f.read(&mut buf[got..])?;
        if k == 0 {
            break;
        }
        got += k;
    }
    if got < 4 || &buf[0..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if (got as u64) < HEADER_BYTES {
        return Err(Error::Truncated {
            expected: HEADER_BYTES,
            actual: got as u64,
        });
    }
    let n = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    let l = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if n == 0 || l == 0 {
        return Err(Error::BadDimensions { n, l });
    }
    Ok((n as usize, l as usize))
}

pub fn write_snapshots_csv(w: &mut impl Write, y: &SnapshotMatrix) -> Result<()> {
    let n = y.n_sensors();
    for block in 0..2 {
        for row in 0..n {
            for col in 0..y.n_snapshots() {
                if col > 0 {
                    write!(w, ",")?;
                }
                let v = y.data[(row, col)];
                write!(w, "{}", if block == 0 { v.re } else { v.im })?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
