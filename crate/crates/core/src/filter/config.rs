//! Per-type and cross-type model parameters of the N-type filter.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::{ln_or_neg_inf, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("filter needs at least one target type")]
    NoTypes,
    #[error("{field} = {value} is outside [0, 1]")]
    Probability { field: String, value: f64 },
    #[error("{field} = {value} must be positive")]
    NotPositive { field: String, value: f64 },
    #[error("{field} has shape {found:?}, expected {expected:?}")]
    Shape {
        field: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// Poisson background clutter, uniform over an axis-aligned box in
/// measurement space: `c_s(z) = λ / volume` inside the box, `0` outside.
#[derive(Debug, Clone, PartialEq)]
pub struct ClutterModel<T: Real> {
    /// Expected number of clutter returns per frame.
    pub rate: T,
    pub lower: DVector<T>,
    pub upper: DVector<T>,
}

impl<T: Real> ClutterModel<T> {
    pub fn uniform(rate: T, lower: DVector<T>, upper: DVector<T>) -> Self {
        Self { rate, lower, upper }
    }

    pub fn log_volume(&self) -> T {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .fold(T::zero(), |acc, (&lo, &hi)| acc + (hi - lo).ln())
    }

    pub fn contains(&self, z: &DVector<T>) -> bool {
        z.len() == self.lower.len()
            && z.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// `log c_s(z)`; `-∞` outside the box or when the rate is zero.
    pub fn log_intensity(&self, z: &DVector<T>) -> T {
        if !self.contains(z) {
            return T::neg_infinity();
        }
        ln_or_neg_inf(self.rate) - self.log_volume()
    }
}

/// Motion, survival, birth and clutter model for one target type.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeModel<T: Real> {
    pub transition: DMatrix<T>,
    pub process_noise: DMatrix<T>,
    pub survival: T,
    pub birth_cov: DMatrix<T>,
    pub birth_weight: T,
    /// Background clutter seen by this type's own detector.
    pub clutter: ClutterModel<T>,
}

/// Linear-Gaussian observation of a target by one detector.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel<T: Real> {
    pub observation: DMatrix<T>,
    pub noise: DMatrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Components with weight strictly below this are dropped.
    pub prune: f64,
    /// Squared Mahalanobis merge radius (inclusive).
    pub merge: f64,
    /// Components with weight strictly above this are reported.
    pub extract: f64,
    pub max_components: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            prune: 1e-5,
            merge: 4.0,
            extract: 0.5,
            max_components: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig<T: Real> {
    pub types: Vec<TypeModel<T>>,
    /// `sensors[j][i]`: detector `j` observing a type-`i` target.
    pub sensors: Vec<Vec<SensorModel<T>>>,
    /// `detection[(j, i)]`: probability that detector `j` fires on a
    /// type-`i` target. The diagonal holds true detection probabilities,
    /// off-diagonal entries the confusion probabilities.
    pub detection: DMatrix<T>,
    pub prune_threshold: T,
    pub merge_threshold: T,
    pub extract_threshold: T,
    pub max_components: usize,
}

impl<T: Real> FilterConfig<T> {
    pub fn n_types(&self) -> usize {
        self.types.len()
    }

    pub fn state_dim(&self) -> usize {
        self.types.first().map_or(0, |t| t.transition.nrows())
    }

    pub fn detection_prob(&self, detector: usize, target_type: usize) -> T {
        self.detection[(detector, target_type)]
    }

    /// Checks shapes, probabilities and thresholds. A true detection
    /// probability that does not dominate its confusions is logged, not
    /// rejected.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n_types();
        if n == 0 {
            return Err(ConfigError::NoTypes);
        }
        let d = self.state_dim();
        let shape = |field: String, m: &DMatrix<T>, expected: (usize, usize)| {
            if m.shape() == expected {
                Ok(())
            } else {
                Err(ConfigError::Shape {
                    field,
                    expected,
                    found: m.shape(),
                })
            }
        };
        let prob = |field: String, p: T| {
            if p >= T::zero() && p <= T::one() {
                Ok(())
            } else {
                Err(ConfigError::Probability {
                    field,
                    value: p.as_f64(),
                })
            }
        };
        for (i, t) in self.types.iter().enumerate() {
            shape(format!("types[{i}].transition"), &t.transition, (d, d))?;
            shape(
                format!("types[{i}].process_noise"),
                &t.process_noise,
                (d, d),
            )?;
            shape(format!("types[{i}].birth_cov"), &t.birth_cov, (d, d))?;
            prob(format!("types[{i}].survival"), t.survival)?;
            if !(t.birth_weight >= T::zero()) {
                return Err(ConfigError::NotPositive {
                    field: format!("types[{i}].birth_weight"),
                    value: t.birth_weight.as_f64(),
                });
            }
            if !(t.clutter.rate >= T::zero()) {
                return Err(ConfigError::NotPositive {
                    field: format!("types[{i}].clutter.rate"),
                    value: t.clutter.rate.as_f64(),
                });
            }
        }
        shape("detection".into(), &self.detection, (n, n))?;
        if self.sensors.len() != n || self.sensors.iter().any(|row| row.len() != n) {
            return Err(ConfigError::Shape {
                field: "sensors".into(),
                expected: (n, n),
                found: (
                    self.sensors.len(),
                    self.sensors.first().map_or(0, |r| r.len()),
                ),
            });
        }
        for j in 0..n {
            for i in 0..n {
                let s = &self.sensors[j][i];
                let dz = s.observation.nrows();
                shape(
                    format!("sensors[{j}][{i}].observation"),
                    &s.observation,
                    (dz, d),
                )?;
                shape(format!("sensors[{j}][{i}].noise"), &s.noise, (dz, dz))?;
                prob(format!("detection[{j}][{i}]"), self.detection[(j, i)])?;
            }
        }
        for (field, v) in [
            ("prune_threshold", self.prune_threshold),
            ("merge_threshold", self.merge_threshold),
        ] {
            if !(v > T::zero()) {
                return Err(ConfigError::NotPositive {
                    field: field.into(),
                    value: v.as_f64(),
                });
            }
        }
        if self.max_components == 0 {
            return Err(ConfigError::NotPositive {
                field: "max_components".into(),
                value: 0.0,
            });
        }
        for i in 0..n {
            let own = self.detection[(i, i)];
            for j in (0..n).filter(|&j| j != i) {
                if !(own > self.detection[(j, i)]) {
                    log::warn!(
                        "detection[{i}][{i}] = {own} does not exceed confusion detection[{j}][{i}] = {}",
                        self.detection[(j, i)]
                    );
                }
            }
        }
        Ok(())
    }

    /// The same model with every off-diagonal detection probability zeroed.
    pub fn without_confusion(&self) -> Self {
        let mut cfg = self.clone();
        let n = self.n_types();
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    cfg.detection[(j, i)] = T::zero();
                }
            }
        }
        cfg
    }

    /// A one-type configuration for type `i` alone: a standard GM-PHD
    /// filter driven by detector `i`.
    pub fn single_type(&self, i: usize) -> Self {
        Self {
            types: vec![self.types[i].clone()],
            sensors: vec![vec![self.sensors[i][i].clone()]],
            detection: DMatrix::from_element(1, 1, self.detection[(i, i)]),
            prune_threshold: self.prune_threshold,
            merge_threshold: self.merge_threshold,
            extract_threshold: self.extract_threshold,
            max_components: self.max_components,
        }
    }
}

/// Constant-velocity transition and process noise for the box state
/// `[cx, cy, vx, vy, w, h]` with sampling period `dt`.
pub fn constant_velocity<T: Real>(dt: f64, sigma_v: f64) -> (DMatrix<T>, DMatrix<T>) {
    let mut f = DMatrix::<f64>::identity(6, 6);
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    let s2 = sigma_v * sigma_v;
    let mut q = DMatrix::<f64>::zeros(6, 6);
    for a in 0..2 {
        q[(a, a)] = s2 * dt.powi(4) / 4.0;
        q[(a, a + 2)] = s2 * dt.powi(3) / 2.0;
        q[(a + 2, a)] = s2 * dt.powi(3) / 2.0;
        q[(a + 2, a + 2)] = s2 * dt * dt;
        q[(a + 4, a + 4)] = s2 * dt * dt;
    }
    (f.map(T::lit), q.map(T::lit))
}

/// Projects `[cx, cy, vx, vy, w, h]` onto the measurement `[cx, cy, w, h]`.
pub fn box_observation<T: Real>() -> DMatrix<T> {
    let mut h = DMatrix::zeros(4, 6);
    h[(0, 0)] = T::one();
    h[(1, 1)] = T::one();
    h[(2, 4)] = T::one();
    h[(3, 5)] = T::one();
    h
}

/// Parameters of the reference bounding-box configuration; turned into a
/// [`FilterConfig`] by [`BoxModel::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoxModel {
    pub dt: f64,
    /// Process noise standard deviation per type.
    pub sigma_v: Vec<f64>,
    /// Measurement noise standard deviation, `[detector][type]`.
    pub sigma_r: Vec<Vec<f64>>,
    /// `[detector][type]`
    pub detection: Vec<Vec<f64>>,
    pub survival: Vec<f64>,
    /// Expected clutter returns per frame, per detector.
    pub clutter_rate: Vec<f64>,
    pub measurement_lower: [f64; 4],
    pub measurement_upper: [f64; 4],
    pub birth_cov_diag: [f64; 6],
    pub birth_weight: f64,
    pub thresholds: Thresholds,
}

impl BoxModel {
    pub fn n_types(&self) -> usize {
        self.sigma_v.len()
    }

    pub fn build<T: Real>(&self) -> Result<FilterConfig<T>, ConfigError> {
        let n = self.n_types();
        let check_len = |field: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(ConfigError::Shape {
                    field: field.into(),
                    expected: (n, 1),
                    found: (len, 1),
                })
            }
        };
        check_len("survival", self.survival.len())?;
        check_len("clutter_rate", self.clutter_rate.len())?;
        check_len("sigma_r", self.sigma_r.len())?;
        check_len("detection", self.detection.len())?;
        for j in 0..n {
            check_len("sigma_r row", self.sigma_r[j].len())?;
            check_len("detection row", self.detection[j].len())?;
        }
        let lower = DVector::from_iterator(4, self.measurement_lower.iter().map(|&v| T::lit(v)));
        let upper = DVector::from_iterator(4, self.measurement_upper.iter().map(|&v| T::lit(v)));
        let birth_cov = DMatrix::from_diagonal(&DVector::from_iterator(
            6,
            self.birth_cov_diag.iter().map(|&v| T::lit(v)),
        ));
        let types = (0..n)
            .map(|i| {
                let (transition, process_noise) = constant_velocity(self.dt, self.sigma_v[i]);
                TypeModel {
                    transition,
                    process_noise,
                    survival: T::lit(self.survival[i]),
                    birth_cov: birth_cov.clone(),
                    birth_weight: T::lit(self.birth_weight),
                    clutter: ClutterModel::uniform(
                        T::lit(self.clutter_rate[i]),
                        lower.clone(),
                        upper.clone(),
                    ),
                }
            })
            .collect();
        let sensors = (0..n)
            .map(|j| {
                (0..n)
                    .map(|i| {
                        let s = self.sigma_r[j][i];
                        SensorModel {
                            observation: box_observation(),
                            noise: DMatrix::identity(4, 4) * T::lit(s * s),
                        }
                    })
                    .collect()
            })
            .collect();
        let cfg = FilterConfig {
            types,
            sensors,
            detection: DMatrix::from_fn(n, n, |j, i| T::lit(self.detection[j][i])),
            prune_threshold: T::lit(self.thresholds.prune),
            merge_threshold: T::lit(self.thresholds.merge),
            extract_threshold: T::lit(self.thresholds.extract),
            max_components: self.thresholds.max_components,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
