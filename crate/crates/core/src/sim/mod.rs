//! Synthetic multi-type scenarios: ground truth and detector output with
//! missed detections, cross-type confusion and Poisson clutter.

mod presets;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{BoxModel, Thresholds};

pub use presets::{preset, preset_names, preset_scenarios};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("scenario field {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("bad provenance tag {0:?}")]
    Provenance(String),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SimError {
    SimError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Image plane and admissible box sizes, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub width: f64,
    pub height: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Region {
    /// Lower corner of the measurement box `[cx, cy, w, h]`.
    pub fn lower(&self) -> [f64; 4] {
        [0.0, 0.0, self.w_min, self.h_min]
    }

    pub fn upper(&self) -> [f64; 4] {
        [self.width, self.height, self.w_max, self.h_max]
    }

    pub fn clip_measurement(&self, z: [f64; 4]) -> [f64; 4] {
        let (lo, hi) = (self.lower(), self.upper());
        std::array::from_fn(|k| z[k].clamp(lo[k], hi[k]))
    }
}

/// One scheduled target. Alive on frames `birth_frame..death_frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub type_index: usize,
    pub birth_frame: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death_frame: Option<usize>,
    /// `[cx, cy, vx, vy, w, h]` at the birth frame.
    pub initial: [f64; 6],
}

impl TargetSpec {
    pub fn alive_at(&self, frame: usize) -> bool {
        frame >= self.birth_frame && self.death_frame.is_none_or(|d| frame < d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub n_types: usize,
    pub frame_count: usize,
    pub region: Region,
    pub targets: Vec<TargetSpec>,
    /// Process noise the filter assumes, per type.
    pub sigma_v: Vec<f64>,
    /// Process noise actually driving the ground truth, per type.
    pub truth_sigma_v: Vec<f64>,
    /// `[detector][type]`
    pub sigma_r: Vec<Vec<f64>>,
    /// `[detector][type]`: probability that detector `j` fires on a type-`i` target.
    pub p_d: Vec<Vec<f64>>,
    /// Mean clutter count per frame, per detector.
    pub clutter_rate: Vec<f64>,
    pub survival: Vec<f64>,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.n_types;
        if n == 0 {
            return Err(invalid("n_types", "must be at least 1"));
        }
        let per_type: [(&str, &Vec<f64>); 4] = [
            ("sigma_v", &self.sigma_v),
            ("truth_sigma_v", &self.truth_sigma_v),
            ("clutter_rate", &self.clutter_rate),
            ("survival", &self.survival),
        ];
        for (field, v) in per_type {
            if v.len() != n {
                return Err(invalid(
                    field,
                    format!("has {} entries, expected {n}", v.len()),
                ));
            }
            if let Some((k, x)) = v
                .iter()
                .enumerate()
                .find(|(_, x)| !(x.is_finite() && **x >= 0.0))
            {
                return Err(invalid(
                    format!("{field}[{k}]"),
                    format!("{x} must be finite and non-negative"),
                ));
            }
        }
        for (k, &s) in self.survival.iter().enumerate() {
            if s > 1.0 {
                return Err(invalid(
                    format!("survival[{k}]"),
                    format!("{s} outside [0,1]"),
                ));
            }
        }
        for (field, m) in [("p_d", &self.p_d), ("sigma_r", &self.sigma_r)] {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(invalid(field, format!("must be {n}x{n}")));
            }
        }
        for (j, row) in self.p_d.iter().enumerate() {
            for (i, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid(
                        format!("p_d[{j}][{i}]"),
                        format!("{p} outside [0,1]"),
                    ));
                }
            }
        }
        for (j, row) in self.sigma_r.iter().enumerate() {
            for (i, &s) in row.iter().enumerate() {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(invalid(
                        format!("sigma_r[{j}][{i}]"),
                        format!("{s} must be finite and non-negative"),
                    ));
                }
            }
        }
        let r = &self.region;
        let sizes_ok = r.width > 0.0
            && r.height > 0.0
            && r.w_min < r.w_max
            && r.h_min < r.h_max
            && r.w_min > 0.0
            && r.h_min > 0.0;
        if !sizes_ok {
            return Err(invalid(
                "region",
                "needs positive extent and w_min < w_max, h_min < h_max",
            ));
        }
        for (k, t) in self.targets.iter().enumerate() {
            if t.type_index >= n {
                return Err(invalid(
                    format!("targets[{k}].type_index"),
                    format!("{} >= n_types {n}", t.type_index),
                ));
            }
            if t.birth_frame >= self.frame_count {
                return Err(invalid(
                    format!("targets[{k}].birth_frame"),
                    format!("{} beyond frame_count {}", t.birth_frame, self.frame_count),
                ));
            }
            if let Some(d) = t.death_frame {
                if d <= t.birth_frame {
                    return Err(invalid(
                        format!("targets[{k}].death_frame"),
                        "must come after birth_frame",
                    ));
                }
            }
            if t.initial.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("targets[{k}].initial"), "non-finite state"));
            }
        }
        Ok(())
    }

    /// Filter model matching this scenario's sensors, with the given birth
    /// and reduction settings.
    pub fn filter_model(
        &self,
        birth_weight: f64,
        birth_cov_diag: [f64; 6],
        thresholds: Thresholds,
    ) -> BoxModel {
        BoxModel {
            dt: 1.0,
            sigma_v: self.sigma_v.clone(),
            sigma_r: self.sigma_r.clone(),
            detection: self.p_d.clone(),
            survival: self.survival.clone(),
            clutter_rate: self.clutter_rate.clone(),
            measurement_lower: self.region.lower(),
            measurement_upper: self.region.upper(),
            birth_cov_diag,
            birth_weight,
            thresholds,
        }
    }

    /// First `frames` frames only; targets born later are dropped.
    pub fn truncated(&self, frames: usize) -> Self {
        let mut s = self.clone();
        s.frame_count = frames;
        s.targets.retain(|t| t.birth_frame < frames);
        s
    }

    /// Same scenario with every cross-type detection probability set to 0.
    pub fn without_confusion(&self) -> Self {
        let mut s = self.clone();
        for (j, row) in s.p_d.iter_mut().enumerate() {
            for (i, p) in row.iter_mut().enumerate() {
                if i != j {
                    *p = 0.0;
                }
            }
        }
        s
    }
}

/// Seed of Monte-Carlo replicate `r`, derived from a base seed.
pub fn replicate_seed(base: u64, replicate: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(replicate.wrapping_add(1));
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthTarget {
    pub id: u64,
    pub type_index: usize,
    /// `[cx, cy, vx, vy, w, h]`
    pub state: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub frame: usize,
    pub targets: Vec<TruthTarget>,
}

/// Origin of a simulated measurement. Kept for evaluation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Target(u64),
    Confusion { truth_id: u64, source_type: usize },
    Clutter,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Target(id) => write!(f, "target:{id}"),
            Provenance::Confusion {
                truth_id,
                source_type,
            } => write!(f, "confusion:{truth_id}:{source_type}"),
            Provenance::Clutter => f.write_str("clutter"),
        }
    }
}

impl FromStr for Provenance {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SimError::Provenance(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["clutter"] => Ok(Provenance::Clutter),
            ["target", id] => Ok(Provenance::Target(id.parse().map_err(|_| bad())?)),
            ["confusion", id, ty] => Ok(Provenance::Confusion {
                truth_id: id.parse().map_err(|_| bad())?,
                source_type: ty.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// One detector's output for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionFrame {
    pub frame: usize,
    pub detector: usize,
    /// `[cx, cy, w, h]`
    pub measurements: Vec<[f64; 4]>,
    /// Parallel to `measurements`; empty when unknown (ingested files).
    pub provenance: Vec<Provenance>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ground truth for every frame. Targets follow the constant-velocity
/// model driven by `truth_sigma_v`; a target reaching the image border is
/// held there with its outward velocity zeroed.
pub fn generate_truth(scn: &Scenario) -> Vec<GroundTruthFrame> {
    let mut rng = rng_for(scn.seed, 0);
    let mut states: Vec<Option<[f64; 6]>> = vec![None; scn.targets.len()];
    let r = &scn.region;
    (0..scn.frame_count)
        .map(|frame| {
            let mut targets = Vec::new();
            for (id, (spec, slot)) in scn.targets.iter().zip(states.iter_mut()).enumerate() {
                if !spec.alive_at(frame) {
                    *slot = None;
                    continue;
                }
                let next = match slot {
                    Some(x) if frame > spec.birth_frame => {
                        let s = scn.truth_sigma_v[spec.type_index];
                        let mut a = [0.0; 4];
                        for v in &mut a {
                            let n: f64 = StandardNormal.sample(&mut rng);
                            *v = s * n;
                        }
                        let mut y = [
                            x[0] + x[2] + 0.5 * a[0],
                            x[1] + x[3] + 0.5 * a[1],
                            x[2] + a[0],
                            x[3] + a[1],
                            x[4] + a[2],
                            x[5] + a[3],
                        ];
                        for (p, v, hi) in [(0, 2, r.width), (1, 3, r.height)] {
                            if y[p] < 0.0 {
                                y[p] = 0.0;
                                y[v] = y[v].max(0.0);
                            } else if y[p] > hi {
                                y[p] = hi;
                                y[v] = y[v].min(0.0);
                            }
                        }
                        y[4] = y[4].clamp(r.w_min, r.w_max);
                        y[5] = y[5].clamp(r.h_min, r.h_max);
                        y
                    }
                    _ => spec.initial,
                };
                *slot = Some(next);
                targets.push(TruthTarget {
                    id: id as u64,
                    type_index: spec.type_index,
                    state: next,
                });
            }
            GroundTruthFrame { frame, targets }
        })
        .collect()
}

/// The `N` detector outputs for one ground-truth frame. Measurements are
/// shuffled within each detector and clipped to the region box.
pub fn simulate_detections(truth: &GroundTruthFrame, scn: &Scenario) -> Vec<DetectionFrame> {
    let mut rng = rng_for(scn.seed, truth.frame as u64 + 1);
    let region = &scn.region;
    (0..scn.n_types)
        .map(|j| {
            let mut tagged: Vec<([f64; 4], Provenance)> = Vec::new();
            for t in &truth.targets {
                let i = t.type_index;
                if !(rng.random::<f64>() < scn.p_d[j][i]) {
                    continue;
                }
                let noise = Normal::new(0.0, scn.sigma_r[j][i]).expect("validated sigma_r");
                let x = &t.state;
                let z = [x[0], x[1], x[4], x[5]].map(|v| v + noise.sample(&mut rng));
                let tag = if i == j {
                    Provenance::Target(t.id)
                } else {
                    Provenance::Confusion {
                        truth_id: t.id,
                        source_type: i,
                    }
                };
                tagged.push((region.clip_measurement(z), tag));
            }
            let rate = scn.clutter_rate[j];
            let count = if rate > 0.0 {
                Poisson::new(rate)
                    .expect("validated clutter rate")
                    .sample(&mut rng) as usize
            } else {
                0
            };
            let (lo, hi) = (region.lower(), region.upper());
            for _ in 0..count {
                let z = std::array::from_fn(|k| rng.random_range(lo[k]..=hi[k]));
                tagged.push((z, Provenance::Clutter));
            }
            tagged.shuffle(&mut rng);
            let (measurements, provenance) = tagged.into_iter().unzip();
            DetectionFrame {
                frame: truth.frame,
                detector: j,
                measurements,
                provenance,
            }
        })
        .collect()
}

/// Ground truth plus per-frame detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub truth: Vec<GroundTruthFrame>,
    /// `detections[frame][detector]`
    pub detections: Vec<Vec<DetectionFrame>>,
}

pub fn simulate(scn: &Scenario) -> Result<Simulation, SimError> {
    scn.validate()?;
    let truth = generate_truth(scn);
    let detections = truth.iter().map(|t| simulate_detections(t, scn)).collect();
    Ok(Simulation { truth, detections })
}
