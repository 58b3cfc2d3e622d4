//! Neighbor maps over voxels: spatial (Euclidean k-NN on the grid),
//! functional (highest Pearson correlation of the concatenated training
//! responses) and random.
//!
//! Every map stores, for each voxel, exactly `p` distinct neighbor indices
//! ordered by rank (nearest / most correlated first). Ties are broken by
//! ascending voxel index. A voxel is never its own neighbor.

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, DatasetError, VolumeGeometry};

#[derive(Debug, thiserror::Error)]
pub enum NeighborhoodError {
    #[error("mesh size p={p} out of range 1..={max}")]
    PRange { p: usize, max: usize },
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 2 values, got {0}")]
    TooShort(usize),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("neighbor map line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborKind {
    Spatial,
    Functional,
    Random,
}

impl fmt::Display for NeighborKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeighborKind::Spatial => "spatial",
            NeighborKind::Functional => "functional",
            NeighborKind::Random => "random",
        })
    }
}

impl FromStr for NeighborKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spatial" => Ok(NeighborKind::Spatial),
            "functional" => Ok(NeighborKind::Functional),
            "random" => Ok(NeighborKind::Random),
            other => Err(format!("unknown neighbor kind {other:?}")),
        }
    }
}

/// Where a map came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Geometry,
    Seed(u64),
    /// SHA-256 of the connectivity matrix bytes.
    Connectivity(String),
    Unknown,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Geometry => f.write_str("geometry"),
            Provenance::Seed(s) => write!(f, "seed:{s}"),
            Provenance::Connectivity(h) => write!(f, "connectivity:{h}"),
            Provenance::Unknown => f.write_str("unknown"),
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "geometry" {
            Ok(Provenance::Geometry)
        } else if let Some(v) = s.strip_prefix("seed:") {
            v.parse().map(Provenance::Seed).map_err(|e| format!("{e}"))
        } else if let Some(h) = s.strip_prefix("connectivity:") {
            Ok(Provenance::Connectivity(h.to_string()))
        } else {
            Ok(Provenance::Unknown)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodMap {
    kind: NeighborKind,
    p: usize,
    /// `M * p`, row-major by seed voxel.
    neighbors: Vec<usize>,
    provenance: Provenance,
}

impl NeighborhoodMap {
    /// Builds a map from explicit lists, checking the map invariants.
    pub fn from_lists(
        kind: NeighborKind,
        lists: Vec<Vec<usize>>,
        provenance: Provenance,
    ) -> Result<Self, NeighborhoodError> {
        let m = lists.len();
        let p = lists.first().map_or(0, Vec::len);
        if p == 0 || p >= m.max(1) {
            return Err(NeighborhoodError::PRange {
                p,
                max: m.saturating_sub(1),
            });
        }
        let mut flat = Vec::with_capacity(m * p);
        for (j, l) in lists.iter().enumerate() {
            let bad = |msg: String| NeighborhoodError::Parse { line: j + 1, msg };
            if l.len() != p {
                return Err(bad(format!("expected {p} neighbors, found {}", l.len())));
            }
            for (r, &k) in l.iter().enumerate() {
                if k >= m {
                    return Err(bad(format!("neighbor {k} out of range")));
                }
                if k == j {
                    return Err(bad("voxel lists itself".into()));
                }
                if l[..r].contains(&k) {
                    return Err(bad(format!("duplicate neighbor {k}")));
                }
            }
            flat.extend_from_slice(l);
        }
        Ok(Self {
            kind,
            p,
            neighbors: flat,
            provenance,
        })
    }

    pub fn kind(&self) -> NeighborKind {
        self.kind
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn voxel_count(&self) -> usize {
        self.neighbors.len() / self.p
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Neighbors of voxel `j`, rank order.
    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j * self.p..(j + 1) * self.p]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.neighbors.chunks_exact(self.p)
    }

    /// One line per voxel, `j: k1 k2 ... kp`, after a `#` header line.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# kind={} p={} provenance={}",
            self.kind, self.p, self.provenance
        )?;
        for (j, l) in self.iter().enumerate() {
            write!(w, "{j}:")?;
            for k in l {
                write!(w, " {k}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("ascii")
    }

    /// Parses [`NeighborhoodMap::write_text`] output. Without a header the
    /// kind defaults to spatial.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self, NeighborhoodError> {
        let mut kind = NeighborKind::Spatial;
        let mut provenance = Provenance::Unknown;
        let mut lists = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let bad = |msg: String| NeighborhoodError::Parse { line: n + 1, msg };
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    if let Some(v) = field.strip_prefix("kind=") {
                        kind = v.parse().map_err(bad)?;
                    } else if let Some(v) = field.strip_prefix("provenance=") {
                        provenance = v.parse().map_err(bad)?;
                    }
                }
                continue;
            }
            let (head, rest) = line
                .split_once(':')
                .ok_or_else(|| bad("missing ':'".into()))?;
            let j: usize = head.trim().parse().map_err(|e| bad(format!("{e}")))?;
            if j != lists.len() {
                return Err(bad(format!("expected voxel {}, found {j}", lists.len())));
            }
            let l = rest
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|e| bad(format!("{e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            lists.push(l);
        }
        Self::from_lists(kind, lists, provenance)
    }
}

fn check_p(p: usize, m: usize) -> Result<(), NeighborhoodError> {
    if p == 0 || p + 1 > m {
        Err(NeighborhoodError::PRange {
            p,
            max: m.saturating_sub(1),
        })
    } else {
        Ok(())
    }
}

/// Keeps the `p` smallest candidates under `cmp`, sorted.
fn top_p<T: Copy + Send>(mut cands: Vec<T>, p: usize, cmp: impl Fn(&T, &T) -> Ordering) -> Vec<T> {
    if p < cands.len() {
        cands.select_nth_unstable_by(p, &cmp);
        cands.truncate(p);
    }
    cands.sort_unstable_by(&cmp);
    cands
}

/// The `p` Euclidean-nearest voxels of every voxel.
///
/// With isotropic spacing distances are compared as exact integer squared
/// norms, so the map is invariant to translation and to uniform scaling of
/// the spacing.
pub fn spatial_knn(geometry: &VolumeGeometry, p: usize) -> Result<NeighborhoodMap, NeighborhoodError> {
    let m = geometry.voxel_count();
    check_p(p, m)?;
    let coords = geometry.coords();
    let sp = geometry.spacing();
    let isotropic = sp[0] == sp[1] && sp[1] == sp[2];
    let w = sp.map(|s| s * s);

    let lists: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let cj = coords[j];
            if isotropic {
                let cands: Vec<(i128, usize)> = (0..m)
                    .filter(|&k| k != j)
                    .map(|k| {
                        let c = coords[k];
                        let d: i128 = (0..3)
                            .map(|a| {
                                let t = (c[a] - cj[a]) as i128;
                                t * t
                            })
                            .sum();
                        (d, k)
                    })
                    .collect();
                top_p(cands, p, |a, b| a.cmp(b))
                    .into_iter()
                    .map(|(_, k)| k)
                    .collect()
            } else {
                let cands: Vec<(f64, usize)> = (0..m)
                    .filter(|&k| k != j)
                    .map(|k| {
                        let c = coords[k];
                        let d: f64 = (0..3)
                            .map(|a| {
                                let t = (c[a] - cj[a]) as f64;
                                w[a] * (t * t)
                            })
                            .sum();
                        (d, k)
                    })
                    .collect();
                top_p(cands, p, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .into_iter()
                    .map(|(_, k)| k)
                    .collect()
            }
        })
        .collect();
    NeighborhoodMap::from_lists(NeighborKind::Spatial, lists, Provenance::Geometry)
}

/// Pearson correlation with population (1/L) normalization of both the
/// covariance and the variances. Returns 0 if either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, NeighborhoodError> {
    if a.len() != b.len() {
        return Err(NeighborhoodError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(NeighborhoodError::TooShort(a.len()));
    }
    if is_constant(a) || is_constant(b) {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    let cov = sab / n;
    let r = cov / ((saa / n).sqrt() * (sbb / n).sqrt());
    Ok(r.clamp(-1.0, 1.0))
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|v| *v == x[0])
}

pub(crate) fn pearson_view(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64, NeighborhoodError> {
    match (a.as_slice(), b.as_slice()) {
        (Some(x), Some(y)) => pearson(x, y),
        _ => pearson(&a.to_vec(), &b.to_vec()),
    }
}

/// Symmetric `M x M` Pearson correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    values: Array2<f64>,
}

impl ConnectivityMatrix {
    pub fn from_values(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn voxel_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[[j, k]]
    }

    /// Little-endian float64, row-major `M x M`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

/// Correlation of every voxel pair over the concatenated training responses
/// `R(v_j)` (training samples in manifest order).
pub fn connectivity(train: &Dataset) -> Result<ConnectivityMatrix, NeighborhoodError> {
    let responses = train.train_responses()?;
    connectivity_from_responses(&responses)
}

/// Same as [`connectivity`] for an explicit `L x M` response matrix.
pub fn connectivity_from_responses(responses: &Array2<f64>) -> Result<ConnectivityMatrix, NeighborhoodError> {
    let (len, m) = responses.dim();
    if len < 2 {
        return Err(NeighborhoodError::TooShort(len));
    }
    let n = len as f64;
    // Row j holds the centered series of voxel j scaled to unit norm, or
    // zeros when the voxel is constant.
    let mut z = responses.t().to_owned();
    let mut constant = vec![false; m];
    for (j, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
        let first = row[0];
        let flat = row.iter().all(|v| *v == first);
        let mean = row.sum() / n;
        row.mapv_inplace(|x| x - mean);
        let ss: f64 = row.iter().map(|x| x * x).sum();
        if flat || ss == 0.0 {
            constant[j] = true;
            log::warn!("voxel {j} has zero variance over the training responses; its correlations are set to 0");
        } else {
            let norm = ss.sqrt();
            row.mapv_inplace(|x| x / norm);
        }
    }
    let z = z.as_standard_layout().into_owned();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let zj = z.row(j);
            let zj = zj.as_slice().expect("standard layout");
            let mut out = vec![0.0; m];
            for (k, o) in out.iter_mut().enumerate().skip(j + 1) {
                if constant[j] || constant[k] {
                    continue;
                }
                let zk = z.row(k);
                let zk = zk.as_slice().expect("standard layout");
                let dot: f64 = zj.iter().zip(zk).map(|(a, b)| a * b).sum();
                *o = dot.clamp(-1.0, 1.0);
            }
            out
        })
        .collect();
    let mut values = Array2::zeros((m, m));
    for (j, row) in rows.into_iter().enumerate() {
        values[[j, j]] = 1.0;
        for (k, v) in row.into_iter().enumerate().skip(j + 1) {
            values[[j, k]] = v;
            values[[k, j]] = v;
        }
    }
    Ok(ConnectivityMatrix { values })
}

/// The `p` most-correlated voxels of every voxel (diagonal excluded).
pub fn functional_knn(conn: &ConnectivityMatrix, p: usize) -> Result<NeighborhoodMap, NeighborhoodError> {
    let m = conn.voxel_count();
    check_p(p, m)?;
    let lists: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let row = conn.values.row(j);
            let cands: Vec<(f64, usize)> = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(k, &c)| (c, k))
                .collect();
            top_p(cands, p, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)))
                .into_iter()
                .map(|(_, k)| k)
                .collect()
        })
        .collect();
    NeighborhoodMap::from_lists(
        NeighborKind::Functional,
        lists,
        Provenance::Connectivity(conn.hash()),
    )
}

/// `p` distinct neighbors per voxel drawn uniformly (without replacement)
/// from the other `M - 1` voxels with a ChaCha8 stream seeded by `seed`.
/// Lists are stored in ascending index order.
pub fn random_neighbors(m: usize, p: usize, seed: u64) -> Result<NeighborhoodMap, NeighborhoodError> {
    check_p(p, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lists = (0..m)
        .map(|j| {
            let mut l: Vec<usize> = index::sample(&mut rng, m - 1, p)
                .into_iter()
                .map(|k| if k >= j { k + 1 } else { k })
                .collect();
            l.sort_unstable();
            l
        })
        .collect();
    NeighborhoodMap::from_lists(NeighborKind::Random, lists, Provenance::Seed(seed))
}
