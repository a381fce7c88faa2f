//! Mixture reduction (prune, merge, cap) and state extraction.

use nalgebra::{DMatrix, DVector};

use super::{FilterConfig, TypedEstimate, TypedIntensity};
use crate::gaussian::{symmetrize, CovFactor, GaussianComponent};
use crate::scalar::Real;

/// Drops components with weight below the prune threshold, then greedily
/// merges around the heaviest remaining component: every candidate `v`
/// with `(m_v - m_u)ᵀ P_v⁻¹ (m_v - m_u) ≤ U` is fused by moment matching.
/// Merging conserves the post-prune mass. The result is sorted by
/// descending weight and truncated to `max_components`.
pub fn prune_and_merge<T: Real>(
    intensity: &TypedIntensity<T>,
    cfg: &FilterConfig<T>,
) -> TypedIntensity<T> {
    let survivors: Vec<&GaussianComponent<T>> = intensity
        .components
        .iter()
        .filter(|c| !(c.weight < cfg.prune_threshold))
        .collect();
    let factors: Vec<Option<CovFactor<T>>> = survivors
        .iter()
        .map(
            |c| match CovFactor::new(&c.cov, "merge candidate covariance") {
                Ok(f) => Some(f),
                Err(e) => {
                    log::warn!(
                        "type {}: {e}; component kept but excluded from merging",
                        intensity.type_index
                    );
                    None
                }
            },
        )
        .collect();

    let mut remaining: Vec<usize> = (0..survivors.len()).collect();
    let mut merged = Vec::new();
    while !remaining.is_empty() {
        // heaviest, lowest index on ties
        let pivot = remaining
            .iter()
            .copied()
            .fold(None::<usize>, |best, v| match best {
                Some(b) if survivors[b].weight >= survivors[v].weight => Some(b),
                _ => Some(v),
            })
            .expect("remaining is non-empty");
        let centre = &survivors[pivot].mean;
        let (group, rest): (Vec<usize>, Vec<usize>) = remaining.iter().partition(|&&v| {
            v == pivot
                || factors[v].as_ref().is_some_and(|f| {
                    f.mahalanobis_sq(&(&survivors[v].mean - centre)) <= cfg.merge_threshold
                })
        });
        merged.push(moment_match(group.iter().map(|&v| survivors[v])));
        remaining = rest;
    }

    merged.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    merged.truncate(cfg.max_components);
    TypedIntensity {
        type_index: intensity.type_index,
        components: merged,
    }
}

fn moment_match<'a, T: Real>(
    group: impl Iterator<Item = &'a GaussianComponent<T>> + Clone,
) -> GaussianComponent<T> {
    let mut members = group.clone();
    let first = members.next().expect("group holds the pivot");
    if members.next().is_none() {
        return first.clone();
    }
    let d = first.dim();
    let weight = group.clone().fold(T::zero(), |acc, c| acc + c.weight);
    let mut mean = DVector::zeros(d);
    for c in group.clone() {
        mean += &c.mean * c.weight;
    }
    mean /= weight;
    let mut cov = DMatrix::zeros(d, d);
    for c in group {
        let diff = &mean - &c.mean;
        cov += (&c.cov + &diff * diff.transpose()) * c.weight;
    }
    cov /= weight;
    symmetrize(&mut cov);
    GaussianComponent { weight, mean, cov }
}

/// One estimate per component whose weight strictly exceeds the extraction
/// threshold, heaviest first.
pub fn extract_states<T: Real>(
    intensity: &TypedIntensity<T>,
    cfg: &FilterConfig<T>,
) -> Vec<TypedEstimate<T>> {
    let mut picked: Vec<&GaussianComponent<T>> = intensity
        .components
        .iter()
        .filter(|c| c.weight > cfg.extract_threshold)
        .collect();
    picked.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let count = picked.len();
    picked
        .into_iter()
        .map(|c| TypedEstimate {
            type_index: intensity.type_index,
            mean: c.mean.clone(),
            weight: c.weight,
            count,
        })
        .collect()
}
