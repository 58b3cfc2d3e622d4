//! Dataset model: voxel geometry, labelled samples and their split tags.
//!
//! A [`Sample`] holds the `D x M` intensity matrix recorded during one stimulus
//! presentation (row `d` is the volume at time `t_d`, column `j` is voxel
//! `v_j`). All samples of a [`Dataset`] share the same geometry and `D`.

mod io;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use io::{load_dataset, save_dataset, DATA_FILE, MANIFEST_FILE};
pub use split::{split_by_rule, SplitRule};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {}: {source}", path.display())]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("size mismatch in {what}: expected {expected}, found {found}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at sample {sample}, time {time}, voxel {voxel}")]
    NonFinite {
        sample: usize,
        time: usize,
        voxel: usize,
    },
    #[error("voxels {first} and {second} share coordinate {coord:?}")]
    DuplicateCoordinate {
        first: usize,
        second: usize,
        coord: [i64; 3],
    },
    #[error("geometry has no voxels")]
    EmptyGeometry,
    #[error("spacing must be positive and finite, got {0:?}")]
    InvalidSpacing([f64; 3]),
    #[error("sample {sample} has label {label} but only {classes} classes are declared")]
    LabelOutOfRange {
        sample: usize,
        label: usize,
        classes: usize,
    },
    #[error("sample {sample} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    ShapeMismatch {
        sample: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("samples need at least one time point")]
    NoTimePoints,
    #[error("peak reduction needs at least 3 time points, sample has {0}")]
    PeakTooShort(usize),
    #[error("run {run}, class {class}: need {needed} samples, found {found}")]
    ClassImbalance {
        run: u32,
        class: usize,
        needed: usize,
        found: usize,
    },
    #[error("evaluation pool of class {class} has {count} samples, cannot halve it evenly")]
    UnevenEvalPool { class: usize, count: usize },
    #[error("no sample carries phase tag {0:?}")]
    UnknownPhase(String),
    #[error("no samples in the {0} split")]
    EmptySplit(Split),
}

/// Integer grid coordinates of the `M` voxels plus physical spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeGeometry {
    coords: Vec<[i64; 3]>,
    spacing: [f64; 3],
}

impl VolumeGeometry {
    pub fn new(coords: Vec<[i64; 3]>, spacing: [f64; 3]) -> Result<Self, DatasetError> {
        if coords.is_empty() {
            return Err(DatasetError::EmptyGeometry);
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(DatasetError::InvalidSpacing(spacing));
        }
        let mut seen: HashMap<[i64; 3], usize> = HashMap::with_capacity(coords.len());
        for (j, c) in coords.iter().enumerate() {
            if let Some(&first) = seen.get(c) {
                return Err(DatasetError::DuplicateCoordinate {
                    first,
                    second: j,
                    coord: *c,
                });
            }
            seen.insert(*c, j);
        }
        Ok(Self { coords, spacing })
    }

    /// Full `gx x gy x gz` box with unit spacing. Voxel index is
    /// `(x * gy + y) * gz + z`.
    pub fn grid(gx: usize, gy: usize, gz: usize) -> Result<Self, DatasetError> {
        let mut coords = Vec::with_capacity(gx * gy * gz);
        for x in 0..gx as i64 {
            for y in 0..gy as i64 {
                for z in 0..gz as i64 {
                    coords.push([x, y, z]);
                }
            }
        }
        Self::new(coords, [1.0; 3])
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self, DatasetError> {
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(DatasetError::InvalidSpacing(spacing));
        }
        self.spacing = spacing;
        Ok(self)
    }

    pub fn voxel_count(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[i64; 3]] {
        &self.coords
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
}

/// Partition tag of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One stimulus presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stimulus_id: u64,
    pub label: usize,
    pub run: u32,
    pub phase: Option<String>,
    pub split: Option<Split>,
    /// `D x M`, row `d` is the volume at time `t_{d+1}`.
    pub data: Array2<f64>,
}

impl Sample {
    pub fn new(stimulus_id: u64, label: usize, data: Array2<f64>) -> Self {
        Self {
            stimulus_id,
            label,
            run: 0,
            phase: None,
            split: None,
            data,
        }
    }

    pub fn time_points(&self) -> usize {
        self.data.nrows()
    }

    /// Time series of voxel `j` during this stimulus.
    pub fn response(&self, voxel: usize) -> ArrayView1<'_, f64> {
        self.data.column(voxel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    geometry: VolumeGeometry,
    time_points: usize,
    class_names: Vec<String>,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(
        geometry: VolumeGeometry,
        class_names: Vec<String>,
        samples: Vec<Sample>,
    ) -> Result<Self, DatasetError> {
        let m = geometry.voxel_count();
        let d = samples.first().map(Sample::time_points).unwrap_or(1);
        if d == 0 {
            return Err(DatasetError::NoTimePoints);
        }
        for (i, s) in samples.iter().enumerate() {
            let (rows, cols) = s.data.dim();
            if rows != d || cols != m {
                return Err(DatasetError::ShapeMismatch {
                    sample: i,
                    rows,
                    cols,
                    expected_rows: d,
                    expected_cols: m,
                });
            }
            if s.label >= class_names.len() {
                return Err(DatasetError::LabelOutOfRange {
                    sample: i,
                    label: s.label,
                    classes: class_names.len(),
                });
            }
            if let Some(((t, v), _)) = s.data.indexed_iter().find(|(_, x)| !x.is_finite()) {
                return Err(DatasetError::NonFinite {
                    sample: i,
                    time: t,
                    voxel: v,
                });
            }
        }
        Ok(Self {
            geometry,
            time_points: d,
            class_names,
            samples,
        })
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn voxel_count(&self) -> usize {
        self.geometry.voxel_count()
    }

    pub fn time_points(&self) -> usize {
        self.time_points
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Indices (manifest order) of the samples tagged with `split`.
    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    /// Like [`Dataset::indices_in`] but errors on an empty split.
    pub fn require_split(&self, split: Split) -> Result<Vec<usize>, DatasetError> {
        let idx = self.indices_in(split);
        if idx.is_empty() {
            Err(DatasetError::EmptySplit(split))
        } else {
            Ok(idx)
        }
    }

    /// Concatenated training responses: an `(N_tr * D) x M` matrix whose
    /// column `j` is `R(v_j)`, stacked in manifest order.
    pub fn train_responses(&self) -> Result<Array2<f64>, DatasetError> {
        let idx = self.require_split(Split::Train)?;
        let views: Vec<ArrayView2<'_, f64>> =
            idx.iter().map(|&i| self.samples[i].data.view()).collect();
        Ok(ndarray::concatenate(Axis(0), &views).expect("samples share shape"))
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [Sample] {
        &mut self.samples
    }
}

/// How the `D` volumes of a sample are reduced before use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalMode {
    /// The third volume, `t_3`.
    Peak,
    /// Per-voxel mean over all volumes.
    Mean,
    /// Every volume, unmodified.
    All,
}

impl TemporalMode {
    /// Number of rows the reduction produces for `d` time points.
    pub fn reduced_len(self, d: usize) -> usize {
        match self {
            TemporalMode::All => d,
            TemporalMode::Peak | TemporalMode::Mean => 1,
        }
    }
}

impl fmt::Display for TemporalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalMode::Peak => "peak",
            TemporalMode::Mean => "mean",
            TemporalMode::All => "all",
        })
    }
}

impl FromStr for TemporalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "peak" => Ok(TemporalMode::Peak),
            "mean" => Ok(TemporalMode::Mean),
            "all" => Ok(TemporalMode::All),
            other => Err(format!("unknown temporal mode {other:?}")),
        }
    }
}

/// Index of the peak volume (`t_3`, zero-based 2).
pub const PEAK_INDEX: usize = 2;

/// Reduces a `D x M` block to `D' x M` rows according to `mode`.
pub fn reduce_temporal(
    data: ArrayView2<'_, f64>,
    mode: TemporalMode,
) -> Result<Array2<f64>, DatasetError> {
    match mode {
        TemporalMode::All => Ok(data.to_owned()),
        TemporalMode::Peak => {
            if data.nrows() <= PEAK_INDEX {
                return Err(DatasetError::PeakTooShort(data.nrows()));
            }
            Ok(data.row(PEAK_INDEX).to_owned().insert_axis(Axis(0)))
        }
        TemporalMode::Mean => {
            if data.nrows() == 0 {
                return Err(DatasetError::NoTimePoints);
            }
            let n = data.nrows() as f64;
            let row = data.map_axis(Axis(0), |col| col.iter().sum::<f64>() / n);
            Ok(row.insert_axis(Axis(0)))
        }
    }
}
