//! Birth, prediction and the confusion-aware update.

use nalgebra::DVector;

use super::{FilterConfig, FilterError, Result, Scan, TypedIntensity};
use crate::gaussian::{predict_component, CovFactor, GaussianComponent, UpdateTerms};
use crate::scalar::{ln_or_neg_inf, log_sum_exp, Real};

/// Measurement-driven birth: one component per measurement of the type's
/// own detector.
///
/// The mean is `Hᵀ z` with `H` the type's own observation matrix, so for
/// the box model `[cx, cy, w, h]` becomes `[cx, cy, 0, 0, w, h]` (zero
/// initial velocity).
pub fn birth_intensity<T: Real>(
    measurements: &[DVector<T>],
    cfg: &FilterConfig<T>,
    type_index: usize,
) -> Vec<GaussianComponent<T>> {
    let model = &cfg.types[type_index];
    let h_t = cfg.sensors[type_index][type_index].observation.transpose();
    measurements
        .iter()
        .map(|z| GaussianComponent::new(model.birth_weight, &h_t * z, model.birth_cov.clone()))
        .collect()
}

/// Births first, followed by every prior component propagated through the
/// type's dynamics. Births are not propagated in their birth frame.
pub fn predict<T: Real>(
    prior: &TypedIntensity<T>,
    births: Vec<GaussianComponent<T>>,
    cfg: &FilterConfig<T>,
) -> Result<TypedIntensity<T>> {
    let model = &cfg.types[prior.type_index];
    let mut components = births;
    components.reserve(prior.components.len());
    for c in &prior.components {
        components.push(predict_component(
            c,
            &model.transition,
            &model.process_noise,
            model.survival,
        )?);
    }
    Ok(TypedIntensity {
        type_index: prior.type_index,
        components,
    })
}

struct ConfusionTerm<T: Real> {
    log_weight: T,
    predicted_measurement: DVector<T>,
    factor: CovFactor<T>,
}

/// The clutter intensity that the predicted targets of every other type
/// induce in one type's measurement space:
///
/// `c_t(z) = Σ_{j≠i} Σ_v p_D[j][i] w_j⁽ᵛ⁾ N(z; H_ji m_j⁽ᵛ⁾, R_ji + H_ji P_j⁽ᵛ⁾ H_jiᵀ)`
///
/// Terms are precomputed once per update so that evaluating a measurement
/// costs one log-density per foreign component.
pub struct ConfusionField<T: Real> {
    terms: Vec<ConfusionTerm<T>>,
}

impl<T: Real> ConfusionField<T> {
    pub fn new(
        target_type: usize,
        all_predicted: &[TypedIntensity<T>],
        cfg: &FilterConfig<T>,
    ) -> Result<Self> {
        let mut terms = Vec::new();
        for (j, intensity) in all_predicted.iter().enumerate() {
            if j == target_type {
                continue;
            }
            let log_p = ln_or_neg_inf(cfg.detection_prob(j, target_type));
            if log_p == T::neg_infinity() {
                continue;
            }
            let sensor = &cfg.sensors[j][target_type];
            for c in &intensity.components {
                let log_weight = log_p + ln_or_neg_inf(c.weight);
                if log_weight == T::neg_infinity() {
                    continue;
                }
                let mut s =
                    &sensor.observation * &c.cov * sensor.observation.transpose() + &sensor.noise;
                crate::gaussian::symmetrize(&mut s);
                terms.push(ConfusionTerm {
                    log_weight,
                    predicted_measurement: &sensor.observation * &c.mean,
                    factor: CovFactor::new(&s, "confusion innovation covariance")?,
                });
            }
        }
        Ok(Self { terms })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `log c_t(z)`; `-∞` when no foreign component can produce `z`.
    pub fn log_intensity(&self, z: &DVector<T>) -> T {
        let logs: Vec<T> = self
            .terms
            .iter()
            .map(|t| t.log_weight + t.factor.logpdf_residual(&(z - &t.predicted_measurement)))
            .collect();
        log_sum_exp(&logs)
    }
}

/// `log c_t(z)` for type `target_type`, computed from this frame's
/// predicted intensities of all types.
pub fn confusion_clutter_logintensity<T: Real>(
    z: &DVector<T>,
    target_type: usize,
    all_predicted: &[TypedIntensity<T>],
    cfg: &FilterConfig<T>,
) -> Result<T> {
    Ok(ConfusionField::new(target_type, all_predicted, cfg)?.log_intensity(z))
}

/// Updates one type's predicted intensity with its own detector's scan.
///
/// The output holds `(|Z| + 1) · n` components: the `n` missed-detection
/// terms first, then `n` detection terms per measurement in scan order.
/// Each measurement's detection weights are normalized by
/// `c_s(z) + c_t(z) + Σ_l p_D w_l q_l(z)` in the log domain.
pub fn update<T: Real>(
    predicted: &TypedIntensity<T>,
    scan: &Scan<T>,
    all_predicted: &[TypedIntensity<T>],
    cfg: &FilterConfig<T>,
) -> Result<TypedIntensity<T>> {
    let i = predicted.type_index;
    if scan.detector != i {
        return Err(FilterError::DetectorMismatch {
            type_index: i,
            detector: scan.detector,
        });
    }
    if all_predicted.len() != cfg.n_types() {
        return Err(FilterError::FrameCount {
            expected: cfg.n_types(),
            found: all_predicted.len(),
        });
    }
    let p_detect = cfg.detection_prob(i, i);
    let sensor = &cfg.sensors[i][i];
    let clutter = &cfg.types[i].clutter;
    let n = predicted.components.len();

    let mut components = Vec::with_capacity(n * (scan.measurements.len() + 1));
    let miss = T::one() - p_detect;
    for c in &predicted.components {
        components.push(GaussianComponent::new(
            miss * c.weight,
            c.mean.clone(),
            c.cov.clone(),
        ));
    }
    if scan.measurements.is_empty() {
        return Ok(TypedIntensity {
            type_index: i,
            components,
        });
    }

    let terms = predicted
        .components
        .iter()
        .map(|c| UpdateTerms::new(c, &sensor.observation, &sensor.noise))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let log_prior: Vec<T> = predicted
        .components
        .iter()
        .map(|c| ln_or_neg_inf(p_detect) + ln_or_neg_inf(c.weight))
        .collect();
    let confusion = ConfusionField::new(i, all_predicted, cfg)?;

    // [c_s, c_t, numerators...]
    let mut logs = vec![T::zero(); n + 2];
    for z in &scan.measurements {
        logs[0] = clutter.log_intensity(z);
        logs[1] = confusion.log_intensity(z);
        for (v, t) in terms.iter().enumerate() {
            logs[v + 2] = log_prior[v] + t.log_likelihood(z);
        }
        let log_norm = log_sum_exp(&logs);
        for (v, (t, c)) in terms.iter().zip(&predicted.components).enumerate() {
            let weight = if log_norm == T::neg_infinity() {
                T::zero()
            } else {
                (logs[v + 2] - log_norm).exp()
            };
            components.push(GaussianComponent::new(
                weight,
                t.posterior_mean(&c.mean, z),
                t.posterior_cov.clone(),
            ));
        }
    }
    Ok(TypedIntensity {
        type_index: i,
        components,
    })
}
