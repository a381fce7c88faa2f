//! Multi-target, multi-type tracking with an N-type Gaussian-mixture PHD
//! filter whose update treats other types' detections as structured
//! clutter, together with a detection simulator, OSPA-based evaluation and
//! frame-to-frame track labeling.
//!
//! The numerical core is generic over the scalar type; the aliases below
//! fix it to `f64` (and `f32` where useful).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod filter;
pub mod gaussian;
pub mod io;
pub mod metrics;
pub mod scalar;
pub mod sim;

pub use scalar::Real;

pub type Component = gaussian::GaussianComponent<f64>;
pub type Intensity = filter::TypedIntensity<f64>;
pub type Estimate = filter::TypedEstimate<f64>;
pub type Config = filter::FilterConfig<f64>;
pub type Filter = filter::NTypeFilter<f64>;
pub type Independent = filter::IndependentFilters<f64>;
pub type Filter32 = filter::NTypeFilter<f32>;
pub type Config32 = filter::FilterConfig<f32>;
