//! Star-topology local meshes and their ridge-estimated edge weights.
//!
//! For sample `i` and seed voxel `j` with neighbors `k_1..k_p`, the seed
//! response `r` (length `D'`) is modeled as `r = Q a + e`, where column `m` of
//! `Q` is the response of neighbor `k_m`. The edge vector is the ridge
//! solution `a = (Q^T Q + lambda I)^{-1} Q^T r`. There is no intercept.

mod features;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::dataset::{reduce_temporal, DatasetError, Sample, TemporalMode};
use crate::linalg::Cholesky;
use crate::neighborhood::{NeighborhoodError, NeighborhoodMap};

pub use features::{extract_features, fc_mesh_features, ExtractOptions, FeatureMatrix, MethodTag};

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("regularization must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("normal equations are singular at lambda={lambda} ({rows}x{cols} design)")]
    Singular { lambda: f64, rows: usize, cols: usize },
    #[error("non-finite value in regression inputs")]
    NonFinite,
    #[error("response has {response} entries but design matrix has {rows} rows")]
    ShapeMismatch { response: usize, rows: usize },
    #[error("neighbor index {index} out of range for {voxels} voxels")]
    NeighborOutOfRange { index: usize, voxels: usize },
    #[error("neighbor map covers {map} voxels, data has {data}")]
    MapSize { map: usize, data: usize },
    #[error("voxel {voxel}: {source}")]
    Voxel {
        voxel: usize,
        #[source]
        source: Box<MeshError>,
    },
    #[error("sample {sample}: {source}")]
    Sample {
        sample: usize,
        #[source]
        source: Box<MeshError>,
    },
    #[error("method {method} {reason}")]
    InconsistentMethod { method: MethodTag, reason: String },
    #[error("per-stimulus correlation needs at least 2 time points, got {0}")]
    TooFewTimePoints(usize),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
    #[error("feature csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Settings shared by every mesh of one extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    pub lambda: f64,
    pub mode: TemporalMode,
    /// Standardize each voxel's series within the sample before regression.
    pub zscore: bool,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            mode: TemporalMode::All,
            zscore: false,
        }
    }
}

/// Edge weights and fit statistics of all `M` meshes of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshWeights {
    pub sample_id: u64,
    /// `M x p`; row `j` is the edge vector of the mesh seeded at `j`.
    pub weights: Array2<f64>,
    /// Sum of squared regression residuals per mesh.
    pub residual_ss: Vec<f64>,
    /// Uncentered sum of squares of the seed response per mesh.
    pub total_ss: Vec<f64>,
    /// Mean-centered sum of squares of the seed response per mesh.
    pub centered_total_ss: Vec<f64>,
}

/// `D' x p` matrix whose column `m` is the (reduced) response of the rank-`m`
/// neighbor.
pub fn design_matrix(
    sample: &Sample,
    neighbors: &[usize],
    mode: TemporalMode,
) -> Result<Array2<f64>, MeshError> {
    let reduced = reduce_temporal(sample.data.view(), mode)?;
    gather_columns(reduced.view(), neighbors)
}

fn gather_columns(data: ArrayView2<'_, f64>, cols: &[usize]) -> Result<Array2<f64>, MeshError> {
    let m = data.ncols();
    if let Some(&bad) = cols.iter().find(|&&k| k >= m) {
        return Err(MeshError::NeighborOutOfRange {
            index: bad,
            voxels: m,
        });
    }
    Ok(data.select(Axis(1), cols))
}

/// Ridge solution of `r ~ Q a`.
///
/// The smaller of the two equivalent SPD systems is factored with Cholesky:
/// `(Q^T Q + lambda I) a = Q^T r` when `D' >= p`, otherwise
/// `(Q Q^T + lambda I) u = r` with `a = Q^T u`. One step of iterative
/// refinement with residuals taken from `Q` itself follows.
pub fn ridge_weights(
    response: ArrayView1<'_, f64>,
    q: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<Array1<f64>, MeshError> {
    let (d, p) = q.dim();
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(MeshError::InvalidLambda(lambda));
    }
    if response.len() != d {
        return Err(MeshError::ShapeMismatch {
            response: response.len(),
            rows: d,
        });
    }
    if !response.iter().chain(q.iter()).all(|x| x.is_finite()) {
        return Err(MeshError::NonFinite);
    }
    let singular = || MeshError::Singular {
        lambda,
        rows: d,
        cols: p,
    };
    if p == 0 {
        return Ok(Array1::zeros(0));
    }
    if d == 0 {
        return if lambda > 0.0 {
            Ok(Array1::zeros(p))
        } else {
            Err(singular())
        };
    }

    if d >= p {
        let mut g = vec![0.0; p * p];
        for a in 0..p {
            let ca = q.column(a);
            for b in 0..=a {
                let v = ca.dot(&q.column(b));
                g[a * p + b] = v;
                g[b * p + a] = v;
            }
            g[a * p + a] += lambda;
        }
        let chol = Cholesky::factor(&g, p).ok_or_else(singular)?;
        let mut a = q.t().dot(&response).to_vec();
        chol.solve_in_place(&mut a);
        let mut a = Array1::from(a);
        // refinement: rho = Q^T (r - Q a) - lambda a
        let resid = &response - &q.dot(&a);
        let mut rho = (q.t().dot(&resid) - lambda * &a).to_vec();
        chol.solve_in_place(&mut rho);
        a += &Array1::from(rho);
        Ok(a)
    } else {
        if lambda == 0.0 {
            return Err(singular());
        }
        let mut k = vec![0.0; d * d];
        for s in 0..d {
            let rs = q.row(s);
            for t in 0..=s {
                let v = rs.dot(&q.row(t));
                k[s * d + t] = v;
                k[t * d + s] = v;
            }
            k[s * d + s] += lambda;
        }
        let chol = Cholesky::factor(&k, d).ok_or_else(singular)?;
        let mut u = response.to_vec();
        chol.solve_in_place(&mut u);
        let mut u = Array1::from(u);
        // refinement: rho = r - Q Q^T u - lambda u
        let fitted = q.dot(&q.t().dot(&u));
        let mut rho = (&response - &fitted - lambda * &u).to_vec();
        chol.solve_in_place(&mut rho);
        u += &Array1::from(rho);
        Ok(q.t().dot(&u))
    }
}

/// Per-voxel standardization of a `D x M` block; constant voxels become 0.
pub fn zscore_columns(data: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = data.to_owned();
    let n = data.nrows() as f64;
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        col.mapv_inplace(|x| x - mean);
        let sd = (col.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            col.mapv_inplace(|x| x / sd);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Estimates every mesh of `sample` under `map`.
pub fn estimate_mesh(
    sample: &Sample,
    map: &NeighborhoodMap,
    opts: &MeshOptions,
) -> Result<MeshWeights, MeshError> {
    let m = sample.data.ncols();
    if map.voxel_count() != m {
        return Err(MeshError::MapSize {
            map: map.voxel_count(),
            data: m,
        });
    }
    let prepared = if opts.zscore {
        zscore_columns(sample.data.view())
    } else {
        sample.data.clone()
    };
    let reduced = reduce_temporal(prepared.view(), opts.mode)?;
    let p = map.p();

    let per_voxel: Vec<(Array1<f64>, f64, f64, f64)> = (0..m)
        .into_par_iter()
        .map(|j| {
            let wrap = |e: MeshError| MeshError::Voxel {
                voxel: j,
                source: Box::new(e),
            };
            let r = reduced.column(j);
            let q = gather_columns(reduced.view(), map.neighbors(j)).map_err(wrap)?;
            let a = ridge_weights(r, q.view(), opts.lambda).map_err(wrap)?;
            let resid = &r - &q.dot(&a);
            let ss_r = resid.iter().map(|x| x * x).sum();
            let ss_t = r.iter().map(|x| x * x).sum();
            let mean = r.sum() / r.len() as f64;
            let ss_c = r.iter().map(|x| (x - mean) * (x - mean)).sum();
            Ok((a, ss_r, ss_t, ss_c))
        })
        .collect::<Result<_, MeshError>>()?;

    let mut weights = Array2::zeros((m, p));
    let mut residual_ss = Vec::with_capacity(m);
    let mut total_ss = Vec::with_capacity(m);
    let mut centered_total_ss = Vec::with_capacity(m);
    for (j, (a, ss_r, ss_t, ss_c)) in per_voxel.into_iter().enumerate() {
        weights.row_mut(j).assign(&a);
        residual_ss.push(ss_r);
        total_ss.push(ss_t);
        centered_total_ss.push(ss_c);
    }
    Ok(MeshWeights {
        sample_id: sample.stimulus_id,
        weights,
        residual_ss,
        total_ss,
        centered_total_ss,
    })
}
