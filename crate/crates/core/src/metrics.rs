//! OSPA, cardinality and type-discrimination metrics.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{distance, solve_assignment, CostMatrix};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("OSPA order must be at least 1, got {0}")]
    Order(f64),
    #[error("OSPA cutoff must be positive, got {0}")]
    Cutoff(f64),
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
}

/// A point of a typed set: 2-D centroid plus target type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypedPoint<T: Real> {
    pub pos: [T; 2],
    pub type_index: usize,
}

/// Settings shared by every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSettings {
    pub order: f64,
    pub cutoff: f64,
    /// Maximum centroid distance for type discrimination and label matching.
    pub gate: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            order: 1.0,
            cutoff: 100.0,
            gate: 50.0,
        }
    }
}

impl MetricSettings {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.order >= 1.0) {
            return Err(MetricError::Order(self.order));
        }
        if !(self.cutoff > 0.0) {
            return Err(MetricError::Cutoff(self.cutoff));
        }
        Ok(())
    }
}

/// OSPA distance of order `p` with cutoff `c` between two point sets.
/// Two empty sets are at distance 0.
pub fn ospa<T: Real>(x: &[[T; 2]], y: &[[T; 2]], p: T, c: T) -> Result<T, MetricError> {
    if !(p >= T::one()) {
        return Err(MetricError::Order(p.as_f64()));
    }
    if !(c > T::zero()) {
        return Err(MetricError::Cutoff(c.as_f64()));
    }
    for (index, pt) in x.iter().chain(y).enumerate() {
        if !pt[0].is_finite() || !pt[1].is_finite() {
            return Err(MetricError::NonFinite { index });
        }
    }
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let n = large.len();
    if n == 0 {
        return Ok(T::zero());
    }
    let unit = p == T::one();
    let pow = |d: T| if unit { d } else { d.powf(p) };
    let costs: Vec<T> = small
        .iter()
        .flat_map(|a| large.iter().map(move |b| pow(distance(a, b).min(c))))
        .collect();
    let matrix = CostMatrix::new(small.len(), n, costs).expect("cutoff distances are finite");
    let matched = solve_assignment(&matrix).total_cost(&matrix);
    let penalty = pow(c) * T::lit((n - small.len()) as f64);
    let mean = (matched + penalty) / T::lit(n as f64);
    Ok(if unit { mean } else { mean.powf(T::one() / p) })
}

pub fn cardinality_error(truth_count: usize, est_count: usize) -> usize {
    truth_count.abs_diff(est_count)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrimination {
    /// `correct / matched`, or 1 when nothing was matched.
    pub rate: f64,
    pub correct: usize,
    /// Estimates with a truth within the gate.
    pub matched: usize,
    /// Estimates with no truth within the gate.
    pub false_tracks: usize,
    /// Set when the rate is 1 only because nothing was matched.
    pub vacuous: bool,
}

/// Fraction of estimates whose nearest truth (within `gate`) has the same
/// type. Estimates with no truth in the gate are counted separately.
pub fn discrimination_rate<T: Real>(
    estimates: &[TypedPoint<T>],
    truth: &[TypedPoint<T>],
    gate: T,
) -> Discrimination {
    let mut correct = 0;
    let mut matched = 0;
    for e in estimates {
        let nearest = truth
            .iter()
            .map(|t| (distance(&e.pos, &t.pos), t.type_index))
            .fold(None::<(T, usize)>, |best, cur| match best {
                Some(b) if b.0 <= cur.0 => Some(b),
                _ => Some(cur),
            });
        if let Some((d, ty)) = nearest {
            if d <= gate {
                matched += 1;
                if ty == e.type_index {
                    correct += 1;
                }
            }
        }
    }
    Discrimination {
        rate: if matched == 0 {
            1.0
        } else {
            correct as f64 / matched as f64
        },
        correct,
        matched,
        false_tracks: estimates.len() - matched,
        vacuous: matched == 0,
    }
}

/// One row of the per-frame metric series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub frame: usize,
    pub ospa: f64,
    pub card_truth: usize,
    pub card_est: usize,
    pub card_err: usize,
    pub disc_rate: f64,
}

/// Per-frame evaluation with OSPA pooled over all types.
pub fn evaluate_frame<T: Real>(
    frame: usize,
    estimates: &[TypedPoint<T>],
    truth: &[TypedPoint<T>],
    settings: &MetricSettings,
) -> Result<(MetricRecord, Discrimination), MetricError> {
    settings.validate()?;
    let est_pos: Vec<[T; 2]> = estimates.iter().map(|e| e.pos).collect();
    let truth_pos: Vec<[T; 2]> = truth.iter().map(|t| t.pos).collect();
    let d = ospa(
        &truth_pos,
        &est_pos,
        T::lit(settings.order),
        T::lit(settings.cutoff),
    )?;
    let disc = discrimination_rate(estimates, truth, T::lit(settings.gate));
    Ok((
        MetricRecord {
            frame,
            ospa: d.as_f64(),
            card_truth: truth.len(),
            card_est: estimates.len(),
            card_err: cardinality_error(truth.len(), estimates.len()),
            disc_rate: disc.rate,
        },
        disc,
    ))
}

/// OSPA restricted to each type in `0..n_types`.
pub fn per_type_ospa<T: Real>(
    estimates: &[TypedPoint<T>],
    truth: &[TypedPoint<T>],
    n_types: usize,
    settings: &MetricSettings,
) -> Result<Vec<T>, MetricError> {
    (0..n_types)
        .map(|i| {
            let pick = |s: &[TypedPoint<T>]| -> Vec<[T; 2]> {
                s.iter()
                    .filter(|p| p.type_index == i)
                    .map(|p| p.pos)
                    .collect()
            };
            ospa(
                &pick(truth),
                &pick(estimates),
                T::lit(settings.order),
                T::lit(settings.cutoff),
            )
        })
        .collect()
}

/// Frame-level aggregates of a metric series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub frames: usize,
    pub mean_ospa: f64,
    pub mean_card_err: f64,
    /// Pooled over all frames: total correct over total matched.
    pub disc_rate: f64,
}

pub fn summarize(records: &[MetricRecord], discriminations: &[Discrimination]) -> SeriesSummary {
    let n = records.len();
    let mean = |f: &dyn Fn(&MetricRecord) -> f64| {
        if n == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let matched: usize = discriminations.iter().map(|d| d.matched).sum();
    let correct: usize = discriminations.iter().map(|d| d.correct).sum();
    SeriesSummary {
        frames: n,
        mean_ospa: mean(&|r| r.ospa),
        mean_card_err: mean(&|r| r.card_err as f64),
        disc_rate: if matched == 0 {
            1.0
        } else {
            correct as f64 / matched as f64
        },
    }
}

/// A ground-truth target at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthPoint<T: Real> {
    pub id: u64,
    pub point: TypedPoint<T>,
}

/// A labeled estimate at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint<T: Real> {
    pub label: u64,
    pub point: TypedPoint<T>,
}

/// Fraction of ground-truth targets, matched in two consecutive frames,
/// whose matched estimate label changed. Matching is a per-type minimum-cost
/// assignment with the given gate. Returns `(switches, opportunities)`.
pub fn label_switches<T: Real>(
    truth: &[Vec<TruthPoint<T>>],
    estimates: &[Vec<LabeledPoint<T>>],
    gate: T,
) -> (usize, usize) {
    let mut previous: HashMap<u64, u64> = HashMap::new();
    let mut switches = 0;
    let mut opportunities = 0;
    for (tf, ef) in truth.iter().zip(estimates) {
        let mut current = HashMap::new();
        let mut types: Vec<usize> = tf.iter().map(|t| t.point.type_index).collect();
        types.sort_unstable();
        types.dedup();
        for ty in types {
            let ts: Vec<&TruthPoint<T>> = tf.iter().filter(|t| t.point.type_index == ty).collect();
            let es: Vec<&LabeledPoint<T>> =
                ef.iter().filter(|e| e.point.type_index == ty).collect();
            let from: Vec<[T; 2]> = ts.iter().map(|t| t.point.pos).collect();
            let to: Vec<[T; 2]> = es.iter().map(|e| e.point.pos).collect();
            let Ok(costs) = CostMatrix::euclidean(&from, &to) else {
                continue;
            };
            for (r, c) in solve_assignment(&costs).pairs {
                if costs.get(r, c) <= gate {
                    current.insert(ts[r].id, es[c].label);
                }
            }
        }
        for (id, label) in &current {
            if let Some(prev) = previous.get(id) {
                opportunities += 1;
                if prev != label {
                    switches += 1;
                }
            }
        }
        previous = current;
    }
    (switches, opportunities)
}

pub fn label_switch_rate<T: Real>(
    truth: &[Vec<TruthPoint<T>>],
    estimates: &[Vec<LabeledPoint<T>>],
    gate: T,
) -> f64 {
    let (s, n) = label_switches(truth, estimates, gate);
    if n == 0 {
        0.0
    } else {
        s as f64 / n as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AxiomReport {
    pub pairs: usize,
    pub triples: usize,
    pub symmetry_violations: usize,
    pub identity_violations: usize,
    pub triangle_violations: usize,
    pub bound_violations: usize,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.symmetry_violations == 0
            && self.identity_violations == 0
            && self.triangle_violations == 0
            && self.bound_violations == 0
    }
}

fn random_set<R: Rng>(rng: &mut R, max_len: usize, extent: f64) -> Vec<[f64; 2]> {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| [rng.random_range(0.0..extent), rng.random_range(0.0..extent)])
        .collect()
}

/// Samples `trials` random pairs and triples of sets with at most 5 points
/// and checks the metric axioms and `0 ≤ d ≤ c`.
pub fn ospa_axioms_check<R: Rng>(
    rng: &mut R,
    trials: usize,
    p: f64,
    c: f64,
) -> Result<AxiomReport, MetricError> {
    let tol = 1e-9 * c;
    let mut report = AxiomReport::default();
    // spread comparable to the cutoff so both regimes are exercised
    let extent = 1.5 * c;
    for _ in 0..trials {
        let x = random_set(rng, 5, extent);
        let y = random_set(rng, 5, extent);
        let z = random_set(rng, 5, extent);
        let xy = ospa(&x, &y, p, c)?;
        let yx = ospa(&y, &x, p, c)?;
        let yz = ospa(&y, &z, p, c)?;
        let xz = ospa(&x, &z, p, c)?;
        report.pairs += 1;
        report.triples += 1;
        if (xy - yx).abs() > tol {
            report.symmetry_violations += 1;
        }
        if ospa(&x, &x, p, c)?.abs() > tol || (xy <= 0.0 && x.len() != y.len()) {
            report.identity_violations += 1;
        }
        if xz > xy + yz + tol {
            report.triangle_violations += 1;
        }
        if [xy, yz, xz].iter().any(|&d| !(-tol..=c + tol).contains(&d)) {
            report.bound_violations += 1;
        }
    }
    Ok(report)
}
