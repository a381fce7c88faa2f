use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{dvector, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Mode, RunConfig};
use super::files::{
    ingest_detections, pad_frames, read_estimates, read_truth, write_estimates, write_json,
    write_metrics, write_truth, EstimateRow,
};
use super::{IoError, Result};
use crate::association::Labeler;
use crate::filter::{
    BoxModel, IndependentFilters, NTypeFilter, Scan, StepEstimates, TypedEstimate,
};
use crate::metrics::{
    evaluate_frame, label_switch_rate, per_type_ospa, summarize, Discrimination, LabeledPoint,
    MetricRecord, MetricSettings, SeriesSummary, TruthPoint, TypedPoint,
};
use crate::sim::{replicate_seed, simulate, DetectionFrame, GroundTruthFrame, Scenario};

/// Labeled estimates of one method over a detection stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub mode: Mode,
    /// One entry per input frame.
    pub estimates: Vec<Vec<EstimateRow>>,
    /// Wall time spent producing estimates, per frame.
    pub seconds_per_frame: f64,
}

fn scans_of(frame: &[DetectionFrame]) -> Vec<Scan<f64>> {
    frame
        .iter()
        .map(|d| {
            Scan::new(
                d.detector,
                d.measurements
                    .iter()
                    .map(|z| DVector::from_row_slice(z))
                    .collect(),
            )
        })
        .collect()
}

fn rows_for(
    frame: usize,
    labelers: &mut [Labeler<f64>],
    per_type: &StepEstimates<f64>,
) -> Result<Vec<EstimateRow>> {
    let mut rows = Vec::new();
    for (labeler, est) in labelers.iter_mut().zip(per_type) {
        let labeled = labeler
            .label(frame, est)
            .map_err(|e| IoError::Invalid(e.to_string()))?;
        for le in labeled.estimates {
            let m = &le.estimate.mean;
            rows.push(EstimateRow {
                frame,
                type_index: le.estimate.type_index,
                label: le.label,
                cx: m[0],
                cy: m[1],
                vx: m[2],
                vy: m[3],
                w: m[4],
                h: m[5],
                weight: le.estimate.weight,
            });
        }
    }
    Ok(rows)
}

fn detections_as_estimates(frame: &[DetectionFrame]) -> StepEstimates<f64> {
    frame
        .iter()
        .map(|d| {
            d.measurements
                .iter()
                .map(|z| TypedEstimate {
                    type_index: d.detector,
                    mean: dvector![z[0], z[1], 0.0, 0.0, z[2], z[3]],
                    weight: 1.0,
                    count: d.measurements.len(),
                })
                .collect()
        })
        .collect()
}

/// Runs one method over `detections[frame][detector]`.
pub fn track_frames(
    mode: Mode,
    model: &BoxModel,
    detections: &[Vec<DetectionFrame>],
    gate: f64,
) -> Result<MethodOutput> {
    let cfg = model
        .build::<f64>()
        .map_err(|e| IoError::Invalid(format!("filter: {e}")))?;
    let n = cfg.n_types();
    let mut labelers: Vec<Labeler<f64>> = (0..n).map(|i| Labeler::new(i, gate)).collect();
    let mut joint = NTypeFilter::new(cfg.clone()).map_err(|e| IoError::Invalid(e.to_string()))?;
    let mut solo = IndependentFilters::new(&cfg).map_err(|e| IoError::Invalid(e.to_string()))?;
    let mut estimates = Vec::with_capacity(detections.len());
    let mut seconds = 0.0;
    for frame in detections {
        let index = frame.first().map_or(estimates.len(), |d| d.frame);
        if frame.len() != n {
            return Err(IoError::Invalid(format!(
                "frame {index} has {} detectors, expected {n}",
                frame.len()
            )));
        }
        let scans = scans_of(frame);
        let start = Instant::now();
        let step = match mode {
            Mode::Ntype => joint.step(&scans),
            Mode::Independent => solo.step(&scans),
            Mode::Detections => Ok(detections_as_estimates(frame)),
            Mode::Compare => {
                return Err(IoError::Invalid(
                    "compare runs each method separately".into(),
                ))
            }
        }
        .map_err(|e| IoError::Invalid(format!("frame {index}: {e}")))?;
        seconds += start.elapsed().as_secs_f64();
        estimates.push(rows_for(index, &mut labelers, &step)?);
    }
    Ok(MethodOutput {
        mode,
        seconds_per_frame: if detections.is_empty() {
            0.0
        } else {
            seconds / detections.len() as f64
        },
        estimates,
    })
}

/// Metrics of one estimate stream against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub records: Vec<MetricRecord>,
    pub discriminations: Vec<Discrimination>,
    pub summary: SeriesSummary,
    /// Frame-averaged OSPA per type.
    pub per_type_ospa: Vec<f64>,
    pub label_switch_rate: f64,
    pub false_tracks: usize,
}

/// `estimates[k]` is compared with `truth[k]`; missing estimate frames
/// count as empty.
pub fn evaluate(
    truth: &[GroundTruthFrame],
    estimates: &[Vec<EstimateRow>],
    n_types: usize,
    settings: &MetricSettings,
) -> Result<Evaluation> {
    let none = Vec::new();
    let mut records = Vec::with_capacity(truth.len());
    let mut discriminations = Vec::with_capacity(truth.len());
    let mut per_type = vec![0.0; n_types];
    let mut truth_points = Vec::with_capacity(truth.len());
    let mut labeled_points = Vec::with_capacity(truth.len());
    for (k, t) in truth.iter().enumerate() {
        let est = estimates.get(k).unwrap_or(&none);
        let tp: Vec<TypedPoint<f64>> = t
            .targets
            .iter()
            .map(|x| TypedPoint {
                pos: [x.state[0], x.state[1]],
                type_index: x.type_index,
            })
            .collect();
        let ep: Vec<TypedPoint<f64>> = est
            .iter()
            .map(|e| TypedPoint {
                pos: [e.cx, e.cy],
                type_index: e.type_index,
            })
            .collect();
        let (record, disc) = evaluate_frame(t.frame, &ep, &tp, settings)
            .map_err(|e| IoError::Invalid(e.to_string()))?;
        for (acc, d) in per_type.iter_mut().zip(
            per_type_ospa(&ep, &tp, n_types, settings)
                .map_err(|e| IoError::Invalid(e.to_string()))?,
        ) {
            *acc += d;
        }
        records.push(record);
        discriminations.push(disc);
        truth_points.push(
            t.targets
                .iter()
                .zip(&tp)
                .map(|(x, p)| TruthPoint {
                    id: x.id,
                    point: *p,
                })
                .collect::<Vec<_>>(),
        );
        labeled_points.push(
            est.iter()
                .zip(&ep)
                .map(|(e, p)| LabeledPoint {
                    label: e.label,
                    point: *p,
                })
                .collect::<Vec<_>>(),
        );
    }
    if !truth.is_empty() {
        for v in &mut per_type {
            *v /= truth.len() as f64;
        }
    }
    Ok(Evaluation {
        summary: summarize(&records, &discriminations),
        false_tracks: discriminations.iter().map(|d| d.false_tracks).sum(),
        label_switch_rate: label_switch_rate(&truth_points, &labeled_points, settings.gate),
        per_type_ospa: per_type,
        records,
        discriminations,
    })
}

/// One method's row of the run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mode: Mode,
    pub frames: usize,
    /// Present only when ground truth is available.
    pub mean_ospa: Option<f64>,
    pub mean_card_err: Option<f64>,
    pub disc_rate: Option<f64>,
    pub label_switch_rate: Option<f64>,
    pub per_type_ospa: Option<Vec<f64>>,
    pub ms_per_frame: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub replicates: usize,
    /// Averages over replicates, one row per method.
    pub methods: Vec<MethodSummary>,
    /// `per_replicate[r][method]`
    pub per_replicate: Vec<Vec<MethodSummary>>,
}

impl RunSummary {
    /// Plain-text table: method, cardinality error, OSPA, time, discrimination.
    pub fn table(&self) -> String {
        let fmt =
            |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
        let mut s = format!(
            "{:<12} {:>10} {:>10} {:>12} {:>10}\n",
            "method", "card_err", "ospa", "ms/frame", "disc_rate"
        );
        for m in &self.methods {
            s.push_str(&format!(
                "{:<12} {:>10} {:>10} {:>12.3} {:>10}\n",
                m.mode.name(),
                fmt(m.mean_card_err, 3),
                fmt(m.mean_ospa, 2),
                m.ms_per_frame,
                fmt(m.disc_rate, 4),
            ));
        }
        s
    }
}

fn summarize_method(out: &MethodOutput, eval: Option<&Evaluation>) -> MethodSummary {
    MethodSummary {
        mode: out.mode,
        frames: out.estimates.len(),
        mean_ospa: eval.map(|e| e.summary.mean_ospa),
        mean_card_err: eval.map(|e| e.summary.mean_card_err),
        disc_rate: eval.map(|e| e.summary.disc_rate),
        label_switch_rate: eval.map(|e| e.label_switch_rate),
        per_type_ospa: eval.map(|e| e.per_type_ospa.clone()),
        ms_per_frame: out.seconds_per_frame * 1e3,
    }
}

fn average(rows: &[&MethodSummary]) -> MethodSummary {
    let n = rows.len() as f64;
    let mean_opt = |f: &dyn Fn(&MethodSummary) -> Option<f64>| -> Option<f64> {
        rows.iter()
            .map(|r| f(r))
            .sum::<Option<f64>>()
            .map(|s| s / n)
    };
    let per_type = rows
        .iter()
        .map(|r| r.per_type_ospa.clone())
        .collect::<Option<Vec<_>>>()
        .map(|all| {
            let width = all.first().map_or(0, Vec::len);
            (0..width)
                .map(|i| all.iter().map(|v| v[i]).sum::<f64>() / n)
                .collect()
        });
    MethodSummary {
        mode: rows[0].mode,
        frames: rows[0].frames,
        mean_ospa: mean_opt(&|r| r.mean_ospa),
        mean_card_err: mean_opt(&|r| r.mean_card_err),
        disc_rate: mean_opt(&|r| r.disc_rate),
        label_switch_rate: mean_opt(&|r| r.label_switch_rate),
        per_type_ospa: per_type,
        ms_per_frame: rows.iter().map(|r| r.ms_per_frame).sum::<f64>() / n,
    }
}

fn methods(mode: Mode) -> Vec<Mode> {
    match mode {
        Mode::Compare => vec![Mode::Detections, Mode::Independent, Mode::Ntype],
        m => vec![m],
    }
}

type ReplicateInput = (Option<Vec<GroundTruthFrame>>, Vec<Vec<DetectionFrame>>);

fn replicate_input(cfg: &RunConfig, scn: &Scenario, r: usize) -> Result<ReplicateInput> {
    match &cfg.input {
        Some(input) => {
            let mut detections = ingest_detections(&input.detections, input.format, scn.n_types)?;
            let truth = input.truth.as_deref().map(read_truth).transpose()?;
            if let Some(t) = &truth {
                let first = detections
                    .first()
                    .and_then(|f| f.first())
                    .map_or(0, |d| d.frame);
                pad_frames(&mut detections, t.len(), first, scn.n_types);
            }
            Ok((truth, detections))
        }
        None => {
            let mut s = scn.clone();
            if cfg.replicates > 1 {
                s.seed = replicate_seed(scn.seed, r as u64);
            }
            let sim = simulate(&s).map_err(|e| IoError::Invalid(e.to_string()))?;
            Ok((Some(sim.truth), sim.detections))
        }
    }
}

fn file_name(stem: &str, mode: Mode, compare: bool) -> String {
    if compare {
        format!("{stem}_{}.csv", mode.name())
    } else {
        format!("{stem}.csv")
    }
}

/// Runs the configured methods, writes estimates, metric series and
/// `summary.json` under `cfg.out`, and returns the summary. With several
/// replicates each one writes into `rep_NNN/`.
pub fn run_tracking(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let scn = cfg.resolve_scenario()?;
    if cfg.input.is_some() && cfg.replicates > 1 {
        return Err(IoError::Invalid(
            "replicates > 1 needs simulated input, not a detection file".into(),
        ));
    }
    let model = cfg.box_model(&scn);
    let compare = cfg.mode == Mode::Compare;
    let per_replicate = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<MethodSummary>> {
            let dir: PathBuf = if cfg.replicates == 1 {
                cfg.out.clone()
            } else {
                cfg.out.join(format!("rep_{r:03}"))
            };
            let (truth, detections) = replicate_input(cfg, &scn, r)?;
            if cfg.input.is_none() {
                if let Some(t) = &truth {
                    write_truth(&dir.join("truth.csv"), t)?;
                }
            }
            methods(cfg.mode)
                .into_iter()
                .map(|mode| {
                    let out = track_frames(mode, &model, &detections, cfg.metrics.gate)?;
                    write_estimates(
                        &dir.join(file_name("estimates", mode, compare)),
                        &out.estimates,
                    )?;
                    let eval = truth
                        .as_ref()
                        .map(|t| evaluate(t, &out.estimates, scn.n_types, &cfg.metrics))
                        .transpose()?;
                    if let Some(e) = &eval {
                        write_metrics(&dir.join(file_name("metrics", mode, compare)), &e.records)?;
                    }
                    Ok(summarize_method(&out, eval.as_ref()))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let n_methods = per_replicate.first().map_or(0, Vec::len);
    let methods = (0..n_methods)
        .map(|m| average(&per_replicate.iter().map(|rep| &rep[m]).collect::<Vec<_>>()))
        .collect();
    let summary = RunSummary {
        scenario: scn.name.clone(),
        seed: scn.seed,
        replicates: cfg.replicates,
        methods,
        per_replicate,
    };
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Metrics of an estimates file against a truth file; writes
/// `metrics.csv` and `summary.json` into `out`.
pub fn evaluate_files(
    estimates: &Path,
    truth: &Path,
    settings: &MetricSettings,
    out: &Path,
) -> Result<Evaluation> {
    settings
        .validate()
        .map_err(|e| IoError::Invalid(e.to_string()))?;
    let truth = read_truth(truth)?;
    let est = read_estimates(estimates)?;
    let n_types = truth
        .iter()
        .flat_map(|f| f.targets.iter().map(|t| t.type_index + 1))
        .chain(est.iter().flatten().map(|e| e.type_index + 1))
        .max()
        .unwrap_or(0);
    let eval = evaluate(&truth, &est, n_types, settings)?;
    write_metrics(&out.join("metrics.csv"), &eval.records)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        frames: usize,
        mean_ospa: f64,
        mean_card_err: f64,
        disc_rate: f64,
        label_switch_rate: f64,
        false_tracks: usize,
        per_type_ospa: &'a [f64],
    }
    write_json(
        &out.join("summary.json"),
        &Summary {
            frames: eval.summary.frames,
            mean_ospa: eval.summary.mean_ospa,
            mean_card_err: eval.summary.mean_card_err,
            disc_rate: eval.summary.disc_rate,
            label_switch_rate: eval.label_switch_rate,
            false_tracks: eval.false_tracks,
            per_type_ospa: &eval.per_type_ospa,
        },
    )?;
    Ok(eval)
}
