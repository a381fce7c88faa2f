//! Minimum-cost assignment and frame-to-frame track labeling.

use nalgebra::DVector;
use thiserror::Error;

use crate::filter::TypedEstimate;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("cost matrix has {found} entries, expected {rows}x{cols}")]
    Shape {
        rows: usize,
        cols: usize,
        found: usize,
    },
    #[error("cost[{row}][{col}] = {value} is not a finite non-negative number")]
    BadCost { row: usize, col: usize, value: f64 },
    #[error("estimate of type {found} passed to the labeler of type {expected}")]
    TypeMismatch { expected: usize, found: usize },
}

/// Dense row-major cost matrix with finite, non-negative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> CostMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, AssignmentError> {
        if data.len() != rows * cols {
            return Err(AssignmentError::Shape {
                rows,
                cols,
                found: data.len(),
            });
        }
        for (k, &value) in data.iter().enumerate() {
            if !value.is_finite() || value < T::zero() {
                return Err(AssignmentError::BadCost {
                    row: k / cols.max(1),
                    col: k % cols.max(1),
                    value: value.as_f64(),
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, AssignmentError> {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<T> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, data)
    }

    /// Euclidean distances between 2-D points.
    pub fn euclidean(from: &[[T; 2]], to: &[[T; 2]]) -> Result<Self, AssignmentError> {
        let data = from
            .iter()
            .flat_map(|a| to.iter().map(move |b| distance(a, b)))
            .collect();
        Self::new(from.len(), to.len(), data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }
}

pub(crate) fn distance<T: Real>(a: &[T; 2], b: &[T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// `(row, col)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost<T: Real>(&self, costs: &CostMatrix<T>) -> T {
        self.pairs
            .iter()
            .fold(T::zero(), |acc, &(r, c)| acc + costs.get(r, c))
    }
}

/// Minimum-cost matching of size `min(rows, cols)` (Kuhn-Munkres with
/// potentials, O(n²m)).
///
/// Deterministic: among equally cheap augmenting paths the lowest column
/// index is taken, and rows are inserted in index order.
pub fn solve_assignment<T: Real>(costs: &CostMatrix<T>) -> Assignment {
    if costs.is_empty() {
        return Assignment {
            pairs: Vec::new(),
            unmatched_rows: (0..costs.rows).collect(),
            unmatched_cols: (0..costs.cols).collect(),
        };
    }
    let transposed = costs.rows > costs.cols;
    let (n, m) = if transposed {
        (costs.cols, costs.rows)
    } else {
        (costs.rows, costs.cols)
    };
    let at = |i: usize, j: usize| {
        if transposed {
            costs.get(j, i)
        } else {
            costs.get(i, j)
        }
    };
    let row_to_col = shortest_augmenting_paths(n, m, at);

    let mut pairs: Vec<(usize, usize)> = row_to_col
        .iter()
        .enumerate()
        .map(|(i, &j)| if transposed { (j, i) } else { (i, j) })
        .collect();
    pairs.sort_unstable();
    let mut row_used = vec![false; costs.rows];
    let mut col_used = vec![false; costs.cols];
    for &(r, c) in &pairs {
        row_used[r] = true;
        col_used[c] = true;
    }
    Assignment {
        pairs,
        unmatched_rows: (0..costs.rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..costs.cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Requires `n <= m`; returns the column of every row.
fn shortest_augmenting_paths<T: Real>(
    n: usize,
    m: usize,
    cost: impl Fn(usize, usize) -> T,
) -> Vec<usize> {
    // 1-based, index 0 is the virtual source column
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![T::infinity(); m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = T::infinity();
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track<T: Real> {
    pub label: u64,
    pub type_index: usize,
    pub last_state: DVector<T>,
    pub last_seen_frame: usize,
    /// Frames in which the track has been observed.
    pub age: usize,
}

impl<T: Real> Track<T> {
    pub fn centroid(&self) -> [T; 2] {
        [self.last_state[0], self.last_state[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEstimate<T: Real> {
    pub label: u64,
    pub estimate: TypedEstimate<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabels<T: Real> {
    pub tracks: Vec<Track<T>>,
    /// In the order of the input estimates.
    pub estimates: Vec<LabeledEstimate<T>>,
    pub deleted: Vec<u64>,
    pub created: Vec<u64>,
}

/// Labels one frame's estimates of a single type against the previous
/// frame's tracks.
///
/// Pairs whose centroid distance exceeds `gate` are treated as unmatched.
/// Unmatched tracks are deleted, unmatched estimates open tracks with labels
/// drawn from `next_label`.
pub fn label_frame<T: Real>(
    tracks: &[Track<T>],
    estimates: &[TypedEstimate<T>],
    gate: T,
    frame: usize,
    next_label: &mut u64,
) -> Result<FrameLabels<T>, AssignmentError> {
    if let Some(first) = tracks
        .first()
        .map(|t| t.type_index)
        .or(estimates.first().map(|e| e.type_index))
    {
        let mismatch = tracks
            .iter()
            .map(|t| t.type_index)
            .chain(estimates.iter().map(|e| e.type_index))
            .find(|&k| k != first);
        if let Some(found) = mismatch {
            return Err(AssignmentError::TypeMismatch {
                expected: first,
                found,
            });
        }
    }

    let from: Vec<[T; 2]> = tracks.iter().map(Track::centroid).collect();
    let to: Vec<[T; 2]> = estimates.iter().map(|e| [e.mean[0], e.mean[1]]).collect();
    let costs = CostMatrix::euclidean(&from, &to)?;
    let assignment = solve_assignment(&costs);

    let mut owner: Vec<Option<usize>> = vec![None; estimates.len()];
    for &(r, c) in &assignment.pairs {
        if costs.get(r, c) <= gate {
            owner[c] = Some(r);
        }
    }
    let mut kept = vec![false; tracks.len()];
    let mut out_tracks = Vec::with_capacity(estimates.len());
    let mut labeled = Vec::with_capacity(estimates.len());
    let mut created = Vec::new();
    for (e, slot) in estimates.iter().zip(&owner) {
        let track = match slot {
            Some(r) => {
                kept[*r] = true;
                let prev = &tracks[*r];
                Track {
                    label: prev.label,
                    type_index: prev.type_index,
                    last_state: e.mean.clone(),
                    last_seen_frame: frame,
                    age: prev.age + 1,
                }
            }
            None => {
                let label = *next_label;
                *next_label += 1;
                created.push(label);
                Track {
                    label,
                    type_index: e.type_index,
                    last_state: e.mean.clone(),
                    last_seen_frame: frame,
                    age: 1,
                }
            }
        };
        labeled.push(LabeledEstimate {
            label: track.label,
            estimate: e.clone(),
        });
        out_tracks.push(track);
    }
    let deleted = tracks
        .iter()
        .zip(&kept)
        .filter(|(_, k)| !**k)
        .map(|(t, _)| t.label)
        .collect();
    Ok(FrameLabels {
        tracks: out_tracks,
        estimates: labeled,
        deleted,
        created,
    })
}

/// Per-type track store; owns the label counter.
#[derive(Debug, Clone)]
pub struct Labeler<T: Real> {
    type_index: usize,
    gate: T,
    next_label: u64,
    tracks: Vec<Track<T>>,
}

impl<T: Real> Labeler<T> {
    pub fn new(type_index: usize, gate: T) -> Self {
        Self {
            type_index,
            gate,
            next_label: 0,
            tracks: Vec::new(),
        }
    }

    pub fn type_index(&self) -> usize {
        self.type_index
    }

    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    pub fn label(
        &mut self,
        frame: usize,
        estimates: &[TypedEstimate<T>],
    ) -> Result<FrameLabels<T>, AssignmentError> {
        if let Some(e) = estimates.iter().find(|e| e.type_index != self.type_index) {
            return Err(AssignmentError::TypeMismatch {
                expected: self.type_index,
                found: e.type_index,
            });
        }
        let out = label_frame(
            &self.tracks,
            estimates,
            self.gate,
            frame,
            &mut self.next_label,
        )?;
        self.tracks = out.tracks.clone();
        Ok(out)
    }
}
