//! CSV readers and writers for truth, detections, estimates and metrics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{IoError, Result};
use crate::metrics::MetricRecord;
use crate::sim::{DetectionFrame, GroundTruthFrame, Provenance, TruthTarget};

pub const TRUTH_HEADER: &[&str] = &[
    "frame", "truth_id", "type", "cx", "cy", "vx", "vy", "w", "h",
];
pub const DETECTION_HEADER: &[&str] = &["frame", "detector", "cx", "cy", "w", "h"];
pub const ESTIMATE_HEADER: &[&str] = &[
    "frame", "type", "label", "cx", "cy", "vx", "vy", "w", "h", "weight",
];
pub const METRIC_HEADER: &[&str] = &[
    "frame",
    "ospa",
    "card_truth",
    "card_est",
    "card_err",
    "disc_rate",
];

/// Detection file flavours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DetectionFormat {
    /// `frame,detector,cx,cy,w,h[,provenance]`, frames from 0.
    SimCsv,
    /// MOT challenge text: `frame,id,bb_left,bb_top,bb_width,bb_height,conf,...`, frames from 1.
    Mot,
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so `path` never holds a partial file.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| IoError::file(dir, e))?;
    let mut builder = tempfile::Builder::new();
    // temp files default to 0600; outputs should follow the umask
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o666));
    }
    let tmp = builder
        .tempfile_in(dir)
        .map_err(|e| IoError::file(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush().map_err(|e| IoError::file(path, e))?;
    }
    tmp.persist(path)
        .map_err(|e| IoError::file(path, e.error))?;
    Ok(())
}

fn write_csv<R: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = R>,
) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        let csv_err = |e: csv::Error| IoError::Csv {
            path: path.to_path_buf(),
            line: None,
            message: e.to_string(),
        };
        out.write_record(header).map_err(csv_err)?;
        for row in rows {
            out.serialize(row).map_err(csv_err)?;
        }
        out.flush().map_err(|e| IoError::file(path, e))
    })
}

/// Parsed row with its 1-based line number.
struct Line<R> {
    line: u64,
    row: R,
}

fn read_csv<R: DeserializeOwned>(
    path: &Path,
    headers: &[&[&str]],
) -> Result<(Vec<Line<R>>, usize)> {
    let file = File::open(path).map_err(|e| IoError::file(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: Option<u64>, message: String| IoError::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let found = reader
        .headers()
        .map_err(|e| parse_err(Some(1), e.to_string()))?
        .clone();
    if found.is_empty() {
        return Ok((Vec::new(), 0));
    }
    let variant = headers
        .iter()
        .position(|h| found.iter().eq(h.iter().copied()))
        .ok_or_else(|| {
            parse_err(
                Some(1),
                format!(
                    "header {:?} does not match {:?}",
                    found.iter().collect::<Vec<_>>(),
                    headers[0].join(",")
                ),
            )
        })?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| parse_err(e.position().map(|p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .deserialize(Some(&found))
            .map_err(|e| parse_err(Some(line), e.to_string()))?;
        rows.push(Line { line, row });
    }
    Ok((rows, variant))
}

/// Groups rows by frame into a dense vector starting at `first_frame`.
fn group_frames<R, F>(
    path: &Path,
    rows: Vec<Line<R>>,
    first_frame: usize,
    mut push: F,
) -> Result<usize>
where
    F: FnMut(usize, R) -> Result<()>,
    R: HasFrame,
{
    let mut last = None;
    for Line { line, row } in rows {
        let frame = row.frame();
        if frame < first_frame {
            return Err(IoError::Csv {
                path: path.to_path_buf(),
                line: Some(line),
                message: format!("frame {frame} precedes the first frame {first_frame}"),
            });
        }
        if last.is_some_and(|l| frame < l) {
            return Err(IoError::Csv {
                path: path.to_path_buf(),
                line: Some(line),
                message: format!(
                    "frame {frame} after frame {}: frames must not decrease",
                    last.unwrap_or(0)
                ),
            });
        }
        last = Some(frame);
        push(frame - first_frame, row).map_err(|e| e.at_line(line))?;
    }
    Ok(last.map_or(0, |l| l - first_frame + 1))
}

trait HasFrame {
    fn frame(&self) -> usize;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TruthRow {
    frame: usize,
    truth_id: u64,
    #[serde(rename = "type")]
    type_index: usize,
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    w: f64,
    h: f64,
}

impl HasFrame for TruthRow {
    fn frame(&self) -> usize {
        self.frame
    }
}

pub fn write_truth(path: &Path, truth: &[GroundTruthFrame]) -> Result<()> {
    let rows = truth.iter().flat_map(|f| {
        f.targets.iter().map(move |t| {
            let s = t.state;
            TruthRow {
                frame: f.frame,
                truth_id: t.id,
                type_index: t.type_index,
                cx: s[0],
                cy: s[1],
                vx: s[2],
                vy: s[3],
                w: s[4],
                h: s[5],
            }
        })
    });
    write_csv(path, TRUTH_HEADER, rows)
}

/// Frames `0..=last` present in the file; frames without rows are empty.
pub fn read_truth(path: &Path) -> Result<Vec<GroundTruthFrame>> {
    let (rows, _) = read_csv::<TruthRow>(path, &[TRUTH_HEADER])?;
    let mut frames: Vec<GroundTruthFrame> = Vec::new();
    group_frames(path, rows, 0, |k, r| {
        while frames.len() <= k {
            frames.push(GroundTruthFrame {
                frame: frames.len(),
                targets: Vec::new(),
            });
        }
        frames[k].targets.push(TruthTarget {
            id: r.truth_id,
            type_index: r.type_index,
            state: [r.cx, r.cy, r.vx, r.vy, r.w, r.h],
        });
        Ok(())
    })?;
    Ok(frames)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectionRow {
    frame: usize,
    detector: usize,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
}

impl HasFrame for DetectionRow {
    fn frame(&self) -> usize {
        self.frame
    }
}

/// `detections[frame][detector]`. Provenance is written only on request.
pub fn write_detections(
    path: &Path,
    detections: &[Vec<DetectionFrame>],
    with_provenance: bool,
) -> Result<()> {
    let mut header = DETECTION_HEADER.to_vec();
    if with_provenance {
        header.push("provenance");
    }
    let rows = detections.iter().flatten().flat_map(|d| {
        d.measurements
            .iter()
            .enumerate()
            .map(move |(k, z)| DetectionRow {
                frame: d.frame,
                detector: d.detector,
                cx: z[0],
                cy: z[1],
                w: z[2],
                h: z[3],
                provenance: if with_provenance {
                    d.provenance.get(k).map(ToString::to_string)
                } else {
                    None
                },
            })
    });
    write_csv(path, &header, rows)
}

fn empty_frames(count: usize, first_frame: usize, n_detectors: usize) -> Vec<Vec<DetectionFrame>> {
    (0..count)
        .map(|k| {
            (0..n_detectors)
                .map(|j| DetectionFrame {
                    frame: k + first_frame,
                    detector: j,
                    ..Default::default()
                })
                .collect()
        })
        .collect()
}

fn push_measurement(
    frames: &mut Vec<Vec<DetectionFrame>>,
    k: usize,
    first_frame: usize,
    n_detectors: usize,
    detector: usize,
    z: [f64; 4],
    tag: Option<Provenance>,
) -> Result<()> {
    if detector >= n_detectors {
        return Err(IoError::Invalid(format!(
            "detector {detector} but only {n_detectors} detectors configured"
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(IoError::Invalid("non-finite measurement".into()));
    }
    while frames.len() <= k {
        let next = frames.len();
        frames.extend(empty_frames(1, next + first_frame, n_detectors));
    }
    let d = &mut frames[k][detector];
    d.measurements.push(z);
    if let Some(t) = tag {
        d.provenance.push(t);
    }
    Ok(())
}

/// Reads a detection file as `frames[frame][detector]`, covering every
/// frame from the format's first frame to the last one present.
pub fn ingest_detections(
    path: &Path,
    format: DetectionFormat,
    n_detectors: usize,
) -> Result<Vec<Vec<DetectionFrame>>> {
    match format {
        DetectionFormat::SimCsv => {
            let tagged: Vec<&str> = DETECTION_HEADER
                .iter()
                .copied()
                .chain(["provenance"])
                .collect();
            let (rows, _) = read_csv::<DetectionRow>(path, &[DETECTION_HEADER, &tagged])?;
            let mut frames = Vec::new();
            group_frames(path, rows, 0, |k, r| {
                let tag = r
                    .provenance
                    .as_deref()
                    .map(str::parse::<Provenance>)
                    .transpose()
                    .map_err(|e| IoError::Invalid(e.to_string()))?;
                push_measurement(
                    &mut frames,
                    k,
                    0,
                    n_detectors,
                    r.detector,
                    [r.cx, r.cy, r.w, r.h],
                    tag,
                )
            })?;
            Ok(frames)
        }
        DetectionFormat::Mot => {
            if n_detectors != 1 {
                return Err(IoError::Invalid(format!(
                    "MOT files feed a single detector, {n_detectors} configured"
                )));
            }
            read_mot(path)
        }
    }
}

struct MotRow {
    frame: usize,
    z: [f64; 4],
}

impl HasFrame for MotRow {
    fn frame(&self) -> usize {
        self.frame
    }
}

fn read_mot(path: &Path) -> Result<Vec<Vec<DetectionFrame>>> {
    let file = File::open(path).map_err(|e| IoError::file(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IoError::Csv {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| IoError::Csv {
            path: path.to_path_buf(),
            line: Some(line),
            message,
        };
        if record.len() < 7 {
            return Err(bad(format!(
                "expected at least 7 fields, found {}",
                record.len()
            )));
        }
        let num = |k: usize| -> Result<f64> {
            record[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    bad(format!(
                        "field {} = {:?} is not a number",
                        k + 1,
                        &record[k]
                    ))
                })
        };
        let frame: usize = record[0].parse().map_err(|_| {
            bad(format!(
                "frame {:?} is not a non-negative integer",
                &record[0]
            ))
        })?;
        let (left, top, w, h) = (num(2)?, num(3)?, num(4)?, num(5)?);
        num(6)?;
        rows.push(Line {
            line,
            row: MotRow {
                frame,
                z: [left + w / 2.0, top + h / 2.0, w, h],
            },
        });
    }
    let mut frames = Vec::new();
    group_frames(path, rows, 1, |k, r| {
        push_measurement(&mut frames, k, 1, 1, 0, r.z, None)
    })?;
    Ok(frames)
}

/// Extends a detection stream with empty frames up to `frame_count`.
pub fn pad_frames(
    frames: &mut Vec<Vec<DetectionFrame>>,
    frame_count: usize,
    first_frame: usize,
    n_detectors: usize,
) {
    if frames.len() < frame_count {
        let start = frames.len();
        frames.extend(empty_frames(
            frame_count - start,
            first_frame + start,
            n_detectors,
        ));
    }
}

/// One labeled estimate row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub frame: usize,
    #[serde(rename = "type")]
    pub type_index: usize,
    pub label: u64,
    pub cx: f64,
    pub cy: f64,
    pub vx: f64,
    pub vy: f64,
    pub w: f64,
    pub h: f64,
    pub weight: f64,
}

impl HasFrame for EstimateRow {
    fn frame(&self) -> usize {
        self.frame
    }
}

pub fn write_estimates(path: &Path, frames: &[Vec<EstimateRow>]) -> Result<()> {
    write_csv(path, ESTIMATE_HEADER, frames.iter().flatten())
}

/// Estimates grouped into frames `0..=last`.
pub fn read_estimates(path: &Path) -> Result<Vec<Vec<EstimateRow>>> {
    let (rows, _) = read_csv::<EstimateRow>(path, &[ESTIMATE_HEADER])?;
    let mut frames: Vec<Vec<EstimateRow>> = Vec::new();
    group_frames(path, rows, 0, |k, r| {
        frames.resize_with(frames.len().max(k + 1), Vec::new);
        frames[k].push(r);
        Ok(())
    })?;
    Ok(frames)
}

pub fn write_metrics(path: &Path, records: &[MetricRecord]) -> Result<()> {
    write_csv(path, METRIC_HEADER, records)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let (rows, _) = read_csv::<MetricRecord>(path, &[METRIC_HEADER])?;
    Ok(rows.into_iter().map(|l| l.row).collect())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)
            .map_err(|e| IoError::Invalid(e.to_string()))?;
        writeln!(w).map_err(|e| IoError::file(path, e))
    })
}
