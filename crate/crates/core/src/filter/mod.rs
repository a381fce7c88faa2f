//! The N-type Gaussian-mixture PHD recursion.
//!
//! Each target type keeps its own Gaussian-mixture intensity. Per frame,
//! every type is born from its own detector's measurements, predicted, and
//! then updated against its detector's scan. The update's clutter term adds
//! to the uniform background the intensity that the *predicted* targets of
//! all other types would produce in this detector through confusion, so
//! confused detections are explained away instead of spawning tracks.
//! With all confusion probabilities at zero the recursion is exactly `N`
//! independent GM-PHD filters.

mod config;
mod recursion;
mod reduction;


use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

pub use config::{
    box_observation, constant_velocity, BoxModel, ClutterModel, ConfigError, FilterConfig,
    SensorModel, Thresholds, TypeModel,
};
pub use recursion::{
    birth_intensity, confusion_clutter_logintensity, predict, update, ConfusionField,
};
pub use reduction::{extract_states, prune_and_merge};

use crate::gaussian::{GaussianComponent, GaussianError};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("type {type_index} must be updated with detector {type_index}'s scan, got detector {detector}")]
    DetectorMismatch { type_index: usize, detector: usize },
    #[error("expected {expected} per-type inputs, got {found}")]
    FrameCount { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, FilterError>;

/// The Gaussian-mixture intensity of one target type.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedIntensity<T: Real> {
    pub type_index: usize,
    pub components: Vec<GaussianComponent<T>>,
}

impl<T: Real> TypedIntensity<T> {
    pub fn empty(type_index: usize) -> Self {
        Self {
            type_index,
            components: Vec::new(),
        }
    }

    /// Expected number of targets of this type.
    pub fn total_mass(&self) -> T {
        self.components
            .iter()
            .fold(T::zero(), |acc, c| acc + c.weight)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// An extracted target state.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedEstimate<T: Real> {
    pub type_index: usize,
    pub mean: DVector<T>,
    pub weight: T,
    /// Number of estimates extracted for this type in the same frame.
    pub count: usize,
}

/// One detector's measurement set for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan<T: Real> {
    pub detector: usize,
    pub measurements: Vec<DVector<T>>,
}

impl<T: Real> Scan<T> {
    pub fn new(detector: usize, measurements: Vec<DVector<T>>) -> Self {
        Self {
            detector,
            measurements,
        }
    }
}

/// Estimates of one filter step, indexed by type.
pub type StepEstimates<T> = Vec<Vec<TypedEstimate<T>>>;

/// One full recursion over all types: birth, prediction, update against
/// the snapshot of every type's predicted intensity, reduction and
/// extraction. Pure: the input state is not modified.
pub fn step<T: Real>(
    state: &[TypedIntensity<T>],
    scans: &[Scan<T>],
    cfg: &FilterConfig<T>,
) -> Result<(Vec<TypedIntensity<T>>, StepEstimates<T>)> {
    let n = cfg.n_types();
    if state.len() != n {
        return Err(FilterError::FrameCount {
            expected: n,
            found: state.len(),
        });
    }
    if scans.len() != n {
        return Err(FilterError::FrameCount {
            expected: n,
            found: scans.len(),
        });
    }
    for (i, scan) in scans.iter().enumerate() {
        if scan.detector != i {
            return Err(FilterError::DetectorMismatch {
                type_index: i,
                detector: scan.detector,
            });
        }
    }

    let predicted = state
        .iter()
        .zip(scans)
        .map(|(prior, scan)| {
            let births = birth_intensity(&scan.measurements, cfg, prior.type_index);
            predict(prior, births, cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    // updates only read the shared predicted snapshot
    let snapshot = &predicted;
    let reduced = (0..n)
        .into_par_iter()
        .map(|i| {
            let updated = update(&snapshot[i], &scans[i], snapshot, cfg)?;
            Ok(prune_and_merge(&updated, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    let estimates = reduced.iter().map(|d| extract_states(d, cfg)).collect();
    Ok((reduced, estimates))
}

/// Stateful wrapper around [`step`]. Not meant for concurrent use; run
/// one instance per stream.
#[derive(Debug, Clone)]
pub struct NTypeFilter<T: Real> {
    cfg: FilterConfig<T>,
    state: Vec<TypedIntensity<T>>,
}

impl<T: Real> NTypeFilter<T> {
    pub fn new(cfg: FilterConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let state = (0..cfg.n_types()).map(TypedIntensity::empty).collect();
        Ok(Self { cfg, state })
    }

    pub fn config(&self) -> &FilterConfig<T> {
        &self.cfg
    }

    pub fn intensities(&self) -> &[TypedIntensity<T>] {
        &self.state
    }

    /// Expected number of targets per type.
    pub fn expected_cardinality(&self) -> Vec<T> {
        self.state.iter().map(TypedIntensity::total_mass).collect()
    }

    /// Advances one frame. On error the filter state is left unchanged.
    pub fn step(&mut self, scans: &[Scan<T>]) -> Result<StepEstimates<T>> {
        let (next, estimates) = step(&self.state, scans, &self.cfg)?;
        self.state = next;
        Ok(estimates)
    }
}

/// `N` standard single-type GM-PHD filters run side by side, each on its own
/// detector, with no knowledge of confusion.
#[derive(Debug, Clone)]
pub struct IndependentFilters<T: Real> {
    filters: Vec<NTypeFilter<T>>,
}

impl<T: Real> IndependentFilters<T> {
    pub fn new(cfg: &FilterConfig<T>) -> Result<Self> {
        let filters = (0..cfg.n_types())
            .map(|i| NTypeFilter::new(cfg.single_type(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { filters })
    }

    pub fn intensities(&self) -> Vec<&TypedIntensity<T>> {
        self.filters.iter().map(|f| &f.intensities()[0]).collect()
    }

    pub fn step(&mut self, scans: &[Scan<T>]) -> Result<StepEstimates<T>> {
        if scans.len() != self.filters.len() {
            return Err(FilterError::FrameCount {
                expected: self.filters.len(),
                found: scans.len(),
            });
        }
        let mut out = Vec::with_capacity(scans.len());
        for (i, (filter, scan)) in self.filters.iter_mut().zip(scans).enumerate() {
            if scan.detector != i {
                return Err(FilterError::DetectorMismatch {
                    type_index: i,
                    detector: scan.detector,
                });
            }
            let local = Scan::new(0, scan.measurements.clone());
            let mut est = filter.step(std::slice::from_ref(&local))?.remove(0);
            for e in &mut est {
                e.type_index = i;
            }
            out.push(est);
        }
        Ok(out)
    }
}
