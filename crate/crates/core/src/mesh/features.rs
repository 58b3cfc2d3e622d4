//! Feature matrices for every decoding method and their CSV form.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate_mesh, MeshError, MeshOptions};
use crate::dataset::{reduce_temporal, Dataset, TemporalMode};
use crate::neighborhood::{pearson_view, NeighborKind, NeighborhoodMap};

/// Feature construction method. The declaration order is the fixed report
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodTag {
    #[serde(rename = "FLM")]
    Flm,
    #[serde(rename = "SLM")]
    Slm,
    #[serde(rename = "FMM-mean")]
    FmmMean,
    #[serde(rename = "FMM-peak")]
    FmmPeak,
    #[serde(rename = "LMM-mean")]
    LmmMean,
    #[serde(rename = "LMM-peak")]
    LmmPeak,
    #[serde(rename = "LM-rand")]
    LmRand,
    #[serde(rename = "FC-mesh")]
    FcMesh,
    #[serde(rename = "MVPA-mean")]
    MvpaMean,
    #[serde(rename = "MVPA-peak")]
    MvpaPeak,
    #[serde(rename = "MVPA-all")]
    MvpaAll,
}

impl MethodTag {
    pub const ALL: [MethodTag; 11] = [
        MethodTag::Flm,
        MethodTag::Slm,
        MethodTag::FmmMean,
        MethodTag::FmmPeak,
        MethodTag::LmmMean,
        MethodTag::LmmPeak,
        MethodTag::LmRand,
        MethodTag::FcMesh,
        MethodTag::MvpaMean,
        MethodTag::MvpaPeak,
        MethodTag::MvpaAll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Flm => "FLM",
            MethodTag::Slm => "SLM",
            MethodTag::FmmMean => "FMM-mean",
            MethodTag::FmmPeak => "FMM-peak",
            MethodTag::LmmMean => "LMM-mean",
            MethodTag::LmmPeak => "LMM-peak",
            MethodTag::LmRand => "LM-rand",
            MethodTag::FcMesh => "FC-mesh",
            MethodTag::MvpaMean => "MVPA-mean",
            MethodTag::MvpaPeak => "MVPA-peak",
            MethodTag::MvpaAll => "MVPA-all",
        }
    }

    /// Neighbor map kind the method is defined over; `None` for MVPA.
    /// FC-mesh defaults to spatial meshes but also accepts functional ones.
    pub fn neighbor_kind(self) -> Option<NeighborKind> {
        match self {
            MethodTag::Flm | MethodTag::FmmMean | MethodTag::FmmPeak => {
                Some(NeighborKind::Functional)
            }
            MethodTag::Slm | MethodTag::LmmMean | MethodTag::LmmPeak | MethodTag::FcMesh => {
                Some(NeighborKind::Spatial)
            }
            MethodTag::LmRand => Some(NeighborKind::Random),
            MethodTag::MvpaMean | MethodTag::MvpaPeak | MethodTag::MvpaAll => None,
        }
    }

    pub fn uses_map(self) -> bool {
        self.neighbor_kind().is_some()
    }

    /// Temporal reduction implied by the method, if any.
    pub fn fixed_mode(self) -> Option<TemporalMode> {
        match self {
            MethodTag::FmmPeak | MethodTag::LmmPeak | MethodTag::MvpaPeak => Some(TemporalMode::Peak),
            MethodTag::FmmMean | MethodTag::LmmMean | MethodTag::MvpaMean => Some(TemporalMode::Mean),
            MethodTag::MvpaAll | MethodTag::FcMesh => Some(TemporalMode::All),
            MethodTag::Flm | MethodTag::Slm | MethodTag::LmRand => None,
        }
    }

    fn accepts(self, kind: NeighborKind) -> bool {
        match self {
            MethodTag::FcMesh => kind != NeighborKind::Random,
            _ => self.neighbor_kind() == Some(kind),
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// `N x F` features, one row per dataset sample in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub method: MethodTag,
    /// Column names; mesh features are `v{j}_n{rank}`, intensities `v{j}` or
    /// `t{d}_v{j}` (1-based time and rank).
    pub columns: Vec<String>,
    pub sample_ids: Vec<u64>,
    pub labels: Vec<usize>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    /// Human-readable description of the column ordering.
    pub fn column_spec(&self) -> String {
        match self.method {
            MethodTag::MvpaAll => "t{d}_v{j}: time-major, voxel-minor".into(),
            MethodTag::MvpaMean | MethodTag::MvpaPeak => "v{j}: ascending voxel".into(),
            _ => "v{j}_n{m}: ascending seed voxel, neighbor rank within".into(),
        }
    }

    /// Rows at `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            method: self.method,
            columns: self.columns.clone(),
            sample_ids: idx.iter().map(|&i| self.sample_ids[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            values: self.values.select(Axis(0), idx),
        }
    }

    /// `sample_id,label,<columns>`; floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "sample_id,label")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (i, row) in self.values.axis_iter(Axis(0)).enumerate() {
            write!(w, "{},{}", self.sample_ids[i], self.labels[i])?;
            for x in row {
                write!(w, ",{x:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, method: MethodTag) -> Result<Self, MeshError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(MeshError::Csv {
            line: 1,
            msg: "empty file".into(),
        })??;
        let mut fields = header.trim_end().split(',');
        if fields.next() != Some("sample_id") || fields.next() != Some("label") {
            return Err(MeshError::Csv {
                line: 1,
                msg: "header must start with sample_id,label".into(),
            });
        }
        let columns: Vec<String> = fields.map(str::to_string).collect();
        let f = columns.len();
        let (mut ids, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| MeshError::Csv { line: n + 2, msg };
            let mut parts = line.split(',');
            let id = parts.next().unwrap_or("");
            ids.push(id.parse::<u64>().map_err(|e| bad(format!("sample_id: {e}")))?);
            let label = parts.next().ok_or_else(|| bad("missing label".into()))?;
            labels.push(label.parse::<usize>().map_err(|e| bad(format!("label: {e}")))?);
            let before = values.len();
            for t in parts {
                values.push(t.parse::<f64>().map_err(|e| bad(format!("{e}")))?);
            }
            if values.len() - before != f {
                return Err(bad(format!("expected {f} values, found {}", values.len() - before)));
            }
        }
        let values = Array2::from_shape_vec((ids.len(), f), values).expect("row widths checked");
        Ok(Self {
            method,
            columns,
            sample_ids: ids,
            labels,
            values,
        })
    }
}

/// Extraction settings. `mode` only applies to FLM, SLM and LM-rand; the
/// other methods fix their own reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub lambda: f64,
    pub mode: Option<TemporalMode>,
    pub zscore: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            mode: None,
            zscore: false,
        }
    }
}

fn mesh_columns(m: usize, p: usize) -> Vec<String> {
    (0..m)
        .flat_map(|j| (1..=p).map(move |r| format!("v{j}_n{r}")))
        .collect()
}

fn check_map(
    method: MethodTag,
    map: Option<&NeighborhoodMap>,
    m: usize,
) -> Result<&NeighborhoodMap, MeshError> {
    let map = map.ok_or_else(|| MeshError::InconsistentMethod {
        method,
        reason: "requires a neighbor map".into(),
    })?;
    if !method.accepts(map.kind()) {
        return Err(MeshError::InconsistentMethod {
            method,
            reason: format!("cannot use a {} neighbor map", map.kind()),
        });
    }
    if map.voxel_count() != m {
        return Err(MeshError::MapSize {
            map: map.voxel_count(),
            data: m,
        });
    }
    Ok(map)
}

fn resolve_mode(method: MethodTag, requested: Option<TemporalMode>) -> Result<TemporalMode, MeshError> {
    match (method.fixed_mode(), requested) {
        (Some(fixed), Some(r)) if fixed != r => Err(MeshError::InconsistentMethod {
            method,
            reason: format!("fixes mode {fixed}, {r} requested"),
        }),
        (Some(fixed), _) => Ok(fixed),
        (None, r) => Ok(r.unwrap_or(TemporalMode::All)),
    }
}

/// Builds the feature matrix of `method` for every sample of `dataset`.
pub fn extract_features(
    dataset: &Dataset,
    method: MethodTag,
    map: Option<&NeighborhoodMap>,
    opts: &ExtractOptions,
) -> Result<FeatureMatrix, MeshError> {
    let m = dataset.voxel_count();
    let d = dataset.time_points();
    let n = dataset.len();
    let mode = resolve_mode(method, opts.mode)?;
    if method == MethodTag::FcMesh {
        let map = check_map(method, map, m)?;
        return fc_mesh_features(dataset, map);
    }

    let (columns, width) = match method {
        MethodTag::MvpaAll => (
            (1..=d)
                .flat_map(|t| (0..m).map(move |j| format!("t{t}_v{j}")))
                .collect::<Vec<_>>(),
            d * m,
        ),
        MethodTag::MvpaMean | MethodTag::MvpaPeak => ((0..m).map(|j| format!("v{j}")).collect(), m),
        _ => {
            let map = check_map(method, map, m)?;
            (mesh_columns(m, map.p()), m * map.p())
        }
    };

    let mut values = Array2::zeros((n, width));
    let mesh_opts = MeshOptions {
        lambda: opts.lambda,
        mode,
        zscore: opts.zscore,
    };
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(dataset.samples().par_iter())
        .enumerate()
        .try_for_each(|(i, (mut row, sample))| -> Result<(), MeshError> {
            let wrap = |e: MeshError| MeshError::Sample {
                sample: i,
                source: Box::new(e),
            };
            if method.uses_map() {
                let map = map.expect("checked above");
                let w = estimate_mesh(sample, map, &mesh_opts).map_err(wrap)?;
                row.assign(&ndarray::ArrayView1::from(
                    w.weights.as_slice().expect("standard layout"),
                ));
            } else {
                let reduced = reduce_temporal(sample.data.view(), mode).map_err(|e| wrap(e.into()))?;
                // row-major flattening: all voxels at t1, then t2, ...
                for (dst, src) in row.iter_mut().zip(reduced.iter()) {
                    *dst = *src;
                }
            }
            Ok(())
        })?;

    Ok(FeatureMatrix {
        method,
        columns,
        sample_ids: dataset.samples().iter().map(|s| s.stimulus_id).collect(),
        labels: dataset.labels(),
        values,
    })
}

/// Per-stimulus correlation between every seed and each of its neighbors,
/// laid out exactly like mesh edge weights.
pub fn fc_mesh_features(dataset: &Dataset, map: &NeighborhoodMap) -> Result<FeatureMatrix, MeshError> {
    let m = dataset.voxel_count();
    let d = dataset.time_points();
    if d < 2 {
        return Err(MeshError::TooFewTimePoints(d));
    }
    if map.voxel_count() != m {
        return Err(MeshError::MapSize {
            map: map.voxel_count(),
            data: m,
        });
    }
    let p = map.p();
    let mut values = Array2::zeros((dataset.len(), m * p));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(dataset.samples().par_iter())
        .try_for_each(|(mut row, sample)| -> Result<(), MeshError> {
            // column-major copy so each voxel series is contiguous
            let t = sample.data.t().as_standard_layout().into_owned();
            for j in 0..m {
                for (r, &k) in map.neighbors(j).iter().enumerate() {
                    row[j * p + r] = pearson_view(t.row(j), t.row(k))?;
                }
            }
            Ok(())
        })?;
    Ok(FeatureMatrix {
        method: MethodTag::FcMesh,
        columns: mesh_columns(m, p),
        sample_ids: dataset.samples().iter().map(|s| s.stimulus_id).collect(),
        labels: dataset.labels(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Sample, VolumeGeometry};
    use crate::neighborhood::{random_neighbors, spatial_knn, Provenance};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn ds() -> Dataset {
        let g = VolumeGeometry::grid(3, 1, 1).unwrap();
        let samples = vec![
            Sample::new(10, 0, array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]),
            Sample::new(11, 1, array![[0.5, -1.0, 2.0], [1.5, 3.0, -2.0]]),
        ];
        Dataset::new(g, vec!["a".into(), "b".into()], samples).unwrap()
    }

    #[test]
    fn mvpa_all_flattens_time_major() {
        let f = extract_features(&ds(), MethodTag::MvpaAll, None, &ExtractOptions::default()).unwrap();
        assert_eq!(f.cols(), 6);
        assert_eq!(f.values.row(0).to_vec(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(f.columns[3], "t2_v0");
        assert_eq!(f.sample_ids, vec![10, 11]);
        assert_eq!(f.labels, vec![0, 1]);
    }

    #[test]
    fn mvpa_mean_width_is_voxel_count() {
        let f = extract_features(&ds(), MethodTag::MvpaMean, None, &ExtractOptions::default()).unwrap();
        assert_eq!(f.values.row(0).to_vec(), vec![2.5, 3.5, 4.5]);
        let err = extract_features(&ds(), MethodTag::MvpaPeak, None, &ExtractOptions::default());
        assert!(matches!(err, Err(MeshError::Sample { .. })));
    }

    #[test]
    fn method_and_map_must_agree() {
        let spatial = spatial_knn(ds().geometry(), 1).unwrap();
        let opts = ExtractOptions::default();
        assert!(matches!(
            extract_features(&ds(), MethodTag::Flm, Some(&spatial), &opts),
            Err(MeshError::InconsistentMethod { .. })
        ));
        assert!(matches!(
            extract_features(&ds(), MethodTag::Slm, None, &opts),
            Err(MeshError::InconsistentMethod { .. })
        ));
        let rand = random_neighbors(3, 1, 0).unwrap();
        assert!(extract_features(&ds(), MethodTag::LmRand, Some(&rand), &opts).is_ok());
        assert!(matches!(
            extract_features(&ds(), MethodTag::FcMesh, Some(&rand), &opts),
            Err(MeshError::InconsistentMethod { .. })
        ));
        let conflicting = ExtractOptions {
            mode: Some(TemporalMode::All),
            ..opts
        };
        assert!(matches!(
            extract_features(&ds(), MethodTag::LmmPeak, Some(&spatial), &conflicting),
            Err(MeshError::InconsistentMethod { .. })
        ));
    }

    #[test]
    fn flm_and_slm_differ_only_through_the_map() {
        let lists = vec![vec![1, 2], vec![0, 2], vec![1, 0]];
        let f_map = NeighborhoodMap::from_lists(NeighborKind::Functional, lists.clone(), Provenance::Unknown).unwrap();
        let s_map = NeighborhoodMap::from_lists(NeighborKind::Spatial, lists, Provenance::Unknown).unwrap();
        let opts = ExtractOptions::default();
        let a = extract_features(&ds(), MethodTag::Flm, Some(&f_map), &opts).unwrap();
        let b = extract_features(&ds(), MethodTag::Slm, Some(&s_map), &opts).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.columns, b.columns);
        assert_eq!(a.cols(), 6);
    }

    #[test]
    fn fc_mesh_self_and_anti_correlation() {
        let g = VolumeGeometry::grid(3, 1, 1).unwrap();
        let seed = [1.0, 4.0, 2.0, 0.0];
        let data = Array2::from_shape_fn((4, 3), |(t, j)| match j {
            0 => seed[t],
            1 => seed[t],
            _ => 7.0 - 2.0 * seed[t],
        });
        let d = Dataset::new(g, vec!["a".into()], vec![Sample::new(0, 0, data)]).unwrap();
        let map = NeighborhoodMap::from_lists(
            NeighborKind::Spatial,
            vec![vec![1, 2], vec![0, 2], vec![0, 1]],
            Provenance::Unknown,
        )
        .unwrap();
        let f = fc_mesh_features(&d, &map).unwrap();
        assert_abs_diff_eq!(f.values[[0, 0]], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.values[[0, 1]], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = extract_features(&ds(), MethodTag::MvpaAll, None, &ExtractOptions::default()).unwrap();
        let mut f = f;
        f.values[[1, 2]] = 0.1 + 0.2;
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample_id,label,t1_v0,"));
        let back = FeatureMatrix::read_csv(&buf[..], MethodTag::MvpaAll).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn method_tag_parsing() {
        for t in MethodTag::ALL {
            assert_eq!(t.as_str().parse::<MethodTag>().unwrap(), t);
        }
        assert_eq!("lm-RAND".parse::<MethodTag>().unwrap(), MethodTag::LmRand);
    }
}
