//! Dense Gaussian primitives: densities, linear-Gaussian prediction, the
//! Kalman component update and the Gaussian product identity.
//!
//! Covariances are factorized with a Cholesky decomposition. When a matrix
//! is not numerically positive definite, diagonal jitter is escalated from
//! `1e-12` to `1e-6` times `trace / d` before giving up.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::scalar::Real;

const JITTER_LEVELS: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch in {what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{0} is not positive definite, even after diagonal jitter")]
    NotFactorizable(&'static str),
    #[error("probability {value} for {what} is outside [0, 1]")]
    Probability { what: &'static str, value: f64 },
    #[error("covariance invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, GaussianError>;

/// One weighted Gaussian term of a PHD intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent<T: Real> {
    /// Contribution to the expected target count.
    pub weight: T,
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: Real> GaussianComponent<T> {
    pub fn new(weight: T, mean: DVector<T>, cov: DMatrix<T>) -> Self {
        Self { weight, mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Checks weight finiteness, covariance symmetry and positive
    /// semi-definiteness at the tolerances the filter guarantees.
    pub fn validate(&self) -> Result<()> {
        if !self.weight.is_finite() || self.weight < T::zero() {
            return Err(GaussianError::Invariant(format!(
                "weight {} is negative or not finite",
                self.weight
            )));
        }
        check_dims("component covariance", &self.cov, (self.dim(), self.dim()))?;
        check_finite_vec(&self.mean, "component mean")?;
        check_finite_mat(&self.cov, "component covariance")?;
        check_covariance(&self.cov)
    }
}

/// Symmetry within `1e-9 · max|P|` and smallest eigenvalue at least
/// `-1e-9 · trace(P) / d`.
pub fn check_covariance<T: Real>(cov: &DMatrix<T>) -> Result<()> {
    let scale = cov.amax();
    let asym = (cov - cov.transpose()).amax();
    if asym > T::lit(1e-9) * scale {
        return Err(GaussianError::Invariant(format!(
            "asymmetry {asym} exceeds 1e-9 * {scale}"
        )));
    }
    let d = T::lit(cov.nrows() as f64);
    let floor = -T::lit(1e-9) * cov.trace().abs() / d;
    let min_eig = cov
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::infinity(), |a, b| a.min(b));
    if min_eig < floor {
        return Err(GaussianError::Invariant(format!(
            "smallest eigenvalue {min_eig} below {floor}"
        )));
    }
    Ok(())
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_dims<T: Real>(what: &'static str, m: &DMatrix<T>, expected: (usize, usize)) -> Result<()> {
    if m.shape() != expected {
        return Err(GaussianError::DimensionMismatch {
            what,
            expected,
            found: m.shape(),
        });
    }
    Ok(())
}

fn check_len<T: Real>(what: &'static str, v: &DVector<T>, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(GaussianError::DimensionMismatch {
            what,
            expected: (expected, 1),
            found: (v.len(), 1),
        });
    }
    Ok(())
}

fn check_finite_vec<T: Real>(v: &DVector<T>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GaussianError::NonFinite(what))
    }
}

fn check_finite_mat<T: Real>(m: &DMatrix<T>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GaussianError::NonFinite(what))
    }
}

fn check_probability<T: Real>(what: &'static str, p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(GaussianError::Probability {
            what,
            value: p.as_f64(),
        })
    }
}

/// Lower Cholesky factor of a covariance together with its log-determinant.
#[derive(Debug, Clone)]
pub struct CovFactor<T: Real> {
    lower: DMatrix<T>,
    log_det: T,
}

impl<T: Real> CovFactor<T> {
    /// Factorizes `cov`, escalating diagonal jitter when needed. `what`
    /// names the matrix in the error.
    pub fn new(cov: &DMatrix<T>, what: &'static str) -> Result<Self> {
        if !cov.is_square() {
            return Err(GaussianError::DimensionMismatch {
                what,
                expected: (cov.nrows(), cov.nrows()),
                found: cov.shape(),
            });
        }
        check_finite_mat(cov, what)?;
        if let Some(f) = Self::try_factor(cov.clone()) {
            return Ok(f);
        }
        let d = cov.nrows().max(1);
        let mut scale = cov.trace().abs() / T::lit(d as f64);
        if !(scale > T::zero()) {
            scale = T::one();
        }
        for eps in JITTER_LEVELS {
            let mut jittered = cov.clone();
            let bump = T::lit(eps) * scale;
            for i in 0..d {
                jittered[(i, i)] += bump;
            }
            if let Some(f) = Self::try_factor(jittered) {
                return Ok(f);
            }
        }
        Err(GaussianError::NotFactorizable(what))
    }

    fn try_factor(m: DMatrix<T>) -> Option<Self> {
        let lower = Cholesky::new(m)?.unpack();
        let mut log_det = T::zero();
        for i in 0..lower.nrows() {
            let d = lower[(i, i)];
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            log_det += d.ln();
        }
        Some(Self {
            lower,
            log_det: log_det + log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    /// `rᵀ C⁻¹ r`
    pub fn mahalanobis_sq(&self, r: &DVector<T>) -> T {
        let n = self.dim();
        // forward substitution, L y = r
        let mut y = r.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lower[(i, k)] * y[k];
            }
            y[i] = s / self.lower[(i, i)];
        }
        y.norm_squared()
    }

    /// Log-density of a zero-mean Gaussian with this covariance at `r`.
    pub fn logpdf_residual(&self, r: &DVector<T>) -> T {
        let d = T::lit(self.dim() as f64);
        -T::lit(0.5) * (d * T::ln_two_pi() + self.log_det + self.mahalanobis_sq(r))
    }

    /// `C⁻¹ B`
    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let y = self
            .lower
            .solve_lower_triangular(b)
            .expect("factor has a positive diagonal");
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("factor has a positive diagonal")
    }
}

/// `log N(x; mean, cov)`.
pub fn mvn_logpdf<T: Real>(x: &DVector<T>, mean: &DVector<T>, cov: &DMatrix<T>) -> Result<T> {
    check_finite_vec(x, "density argument")?;
    check_finite_vec(mean, "density mean")?;
    check_len("density mean", mean, x.len())?;
    check_dims("density covariance", cov, (x.len(), x.len()))?;
    let factor = CovFactor::new(cov, "density covariance")?;
    Ok(factor.logpdf_residual(&(x - mean)))
}

/// Affine-Gaussian propagation: `m' = F m`, `P' = Q + F P Fᵀ`, `w' = p_S w`.
pub fn predict_component<T: Real>(
    c: &GaussianComponent<T>,
    transition: &DMatrix<T>,
    process_noise: &DMatrix<T>,
    survival: T,
) -> Result<GaussianComponent<T>> {
    check_probability("survival", survival)?;
    let d = c.dim();
    check_dims("transition matrix", transition, (d, d))?;
    check_dims("process noise", process_noise, (d, d))?;
    check_dims("component covariance", &c.cov, (d, d))?;
    let mean = transition * &c.mean;
    let mut cov = transition * &c.cov * transition.transpose() + process_noise;
    symmetrize(&mut cov);
    Ok(GaussianComponent {
        weight: survival * c.weight,
        mean,
        cov,
    })
}

/// Posterior mean, covariance and measurement log-likelihood of a single
/// component update.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentUpdate<T: Real> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
    /// `log q(z) = log N(z; H m, R + H P Hᵀ)`
    pub log_likelihood: T,
}

impl<T: Real> ComponentUpdate<T> {
    pub fn likelihood(&self) -> T {
        self.log_likelihood.exp()
    }
}

/// The measurement-independent part of a Kalman update: predicted
/// measurement, factored innovation covariance, gain and posterior
/// covariance. Built once per component and reused for every measurement.
#[derive(Debug, Clone)]
pub struct UpdateTerms<T: Real> {
    pub predicted_measurement: DVector<T>,
    pub innovation: CovFactor<T>,
    pub gain: DMatrix<T>,
    pub posterior_cov: DMatrix<T>,
}

impl<T: Real> UpdateTerms<T> {
    pub fn new(
        c: &GaussianComponent<T>,
        observation: &DMatrix<T>,
        noise: &DMatrix<T>,
    ) -> Result<Self> {
        let d = c.dim();
        let dz = observation.nrows();
        check_dims("observation matrix", observation, (dz, d))?;
        check_dims("measurement noise", noise, (dz, dz))?;
        check_dims("component covariance", &c.cov, (d, d))?;

        let predicted_measurement = observation * &c.mean;
        let hp = observation * &c.cov;
        let mut s = &hp * observation.transpose() + noise;
        symmetrize(&mut s);
        let innovation = CovFactor::new(&s, "innovation covariance")?;
        // K = P Hᵀ S⁻¹ = (S⁻¹ H P)ᵀ
        let gain = innovation.solve(&hp).transpose();
        // Joseph form: (I - K H) P (I - K H)ᵀ + K R Kᵀ
        let a = DMatrix::identity(d, d) - &gain * observation;
        let mut posterior_cov = &a * &c.cov * a.transpose() + &gain * noise * gain.transpose();
        symmetrize(&mut posterior_cov);
        Ok(Self {
            predicted_measurement,
            innovation,
            gain,
            posterior_cov,
        })
    }

    pub fn log_likelihood(&self, z: &DVector<T>) -> T {
        self.innovation
            .logpdf_residual(&(z - &self.predicted_measurement))
    }

    pub fn posterior_mean(&self, prior_mean: &DVector<T>, z: &DVector<T>) -> DVector<T> {
        prior_mean + &self.gain * (z - &self.predicted_measurement)
    }
}

/// Kalman update of one component with measurement `z`. The component's
/// weight is not touched; the caller combines it with the likelihood.
pub fn update_component<T: Real>(
    c: &GaussianComponent<T>,
    z: &DVector<T>,
    observation: &DMatrix<T>,
    noise: &DMatrix<T>,
) -> Result<ComponentUpdate<T>> {
    check_finite_vec(z, "measurement")?;
    check_len("measurement", z, observation.nrows())?;
    let terms = UpdateTerms::new(c, observation, noise)?;
    Ok(ComponentUpdate {
        mean: terms.posterior_mean(&c.mean, z),
        log_likelihood: terms.log_likelihood(z),
        cov: terms.posterior_cov,
    })
}

/// `∫ N(y; M ζ, P₁) N(ζ; m₂, P₂) dζ = N(y; M m₂, P₁ + M P₂ Mᵀ)`; returns the
/// mean and covariance of the right-hand side.
pub fn gaussian_product_marginal<T: Real>(
    map: &DMatrix<T>,
    p1: &DMatrix<T>,
    m2: &DVector<T>,
    p2: &DMatrix<T>,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let (dy, dx) = map.shape();
    check_len("marginal inner mean", m2, dx)?;
    check_dims("outer covariance", p1, (dy, dy))?;
    check_dims("inner covariance", p2, (dx, dx))?;
    let mean = map * m2;
    let mut cov = p1 + map * p2 * map.transpose();
    symmetrize(&mut cov);
    Ok((mean, cov))
}
