//! Diagnostic statistics: neighbor-correlation and R² histograms and
//! accuracy robustness over mesh sizes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, TemporalMode};
use crate::mesh::{estimate_mesh, MeshError, MeshOptions, MethodTag};
use crate::neighborhood::{connectivity, NeighborhoodError, NeighborhoodMap};

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("R² is undefined when the total sum of squares is {0}")]
    ZeroTotal(f64),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("no values to summarize for {0}")]
    Empty(String),
    #[error("neighbor map covers {map} voxels, data has {data}")]
    MapSize { map: usize, data: usize },
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// `1 - SS_r / SS_t`.
pub fn r_squared(residual_ss: f64, total_ss: f64) -> Result<f64, AnalysisError> {
    if !(total_ss > 0.0) {
        return Err(AnalysisError::ZeroTotal(total_ss));
    }
    Ok(1.0 - residual_ss / total_ss)
}

/// Two-pass population mean and standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and sample (n - 1) standard deviation; the std of a single value is 0.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fixed-edge histogram. `mean` and `std` (population) come from the raw
/// values, not the bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    /// Values left out of the pool (undefined R²).
    pub excluded: usize,
}

impl Histogram {
    /// Bins `values` into `bins` equal-width bins over `[lo, hi]`; the last bin
    /// is closed on the right. Values outside the range are clamped to the
    /// end bins.
    pub fn from_values(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self, AnalysisError> {
        if bins == 0 {
            return Err(AnalysisError::NoBins);
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|b| lo + b as f64 * width).collect();
        edges.push(hi);
        let mut counts = vec![0usize; bins];
        for &v in values {
            let b = if width > 0.0 {
                ((v - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize
            } else {
                0
            };
            counts[b] += 1;
        }
        let (mean, std) = mean_and_std(values);
        Ok(Self {
            edges,
            counts,
            mean,
            std,
            n: values.len(),
            excluded: 0,
        })
    }

    /// `edge_low,edge_high,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("edge_low,edge_high,count\n");
        for (b, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.edges[b], self.edges[b + 1], c);
        }
        out
    }

    /// Standalone SVG bar chart.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, pad) = (640.0, 360.0, 40.0);
        let plot_w = w - 2.0 * pad;
        let plot_h = h - 2.0 * pad;
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let bar_w = plot_w / self.counts.len().max(1) as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{} (n={}, mean={:.4}, std={:.4})</text>"#,
            w / 2.0,
            escape(title),
            self.n,
            self.mean,
            self.std
        );
        for (b, &c) in self.counts.iter().enumerate() {
            let bh = plot_h * c as f64 / max;
            let _ = writeln!(
                s,
                r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#4a78b5" stroke="white" stroke-width="0.5"/>"##,
                pad + b as f64 * bar_w,
                pad + plot_h - bh,
                bar_w,
                bh
            );
        }
        let _ = writeln!(
            s,
            r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
            y = pad + plot_h,
            x2 = pad + plot_w
        );
        if let (Some(lo), Some(hi)) = (self.edges.first(), self.edges.last()) {
            let y = pad + plot_h + 16.0;
            let _ = writeln!(
                s,
                r#"<text x="{pad}" y="{y}" font-family="sans-serif" font-size="11">{lo:.3}</text>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end">{hi:.3}</text>"#,
                pad + plot_w
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Correlations between every voxel and each of its neighbors, computed over
/// the training responses. `M * p` values binned over `[-1, 1]`.
pub fn correlation_histogram(
    dataset: &Dataset,
    map: &NeighborhoodMap,
    bins: usize,
) -> Result<Histogram, AnalysisError> {
    let values = neighbor_correlations(dataset, map)?;
    Histogram::from_values(&values, -1.0, 1.0, bins)
}

/// The pooled values behind [`correlation_histogram`], voxel-major.
pub fn neighbor_correlations(dataset: &Dataset, map: &NeighborhoodMap) -> Result<Vec<f64>, AnalysisError> {
    if map.voxel_count() != dataset.voxel_count() {
        return Err(AnalysisError::MapSize {
            map: map.voxel_count(),
            data: dataset.voxel_count(),
        });
    }
    let conn = connectivity(dataset)?;
    Ok(map
        .iter()
        .enumerate()
        .flat_map(|(j, ks)| ks.iter().map(move |&k| (j, k)))
        .map(|(j, k)| conn.get(j, k))
        .collect())
}

/// Settings for [`r2_histogram`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct R2Options {
    pub lambda: f64,
    pub mode: TemporalMode,
    /// Use the mean-centered total sum of squares.
    pub centered: bool,
    pub bins: usize,
}

impl Default for R2Options {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            mode: TemporalMode::All,
            centered: false,
            bins: DEFAULT_BINS,
        }
    }
}

/// R² of every (sample, voxel) mesh. Meshes with a zero total sum of squares
/// are dropped and counted in `excluded`. Bins span `[min(0, lowest), 1]`.
pub fn r2_histogram(
    dataset: &Dataset,
    map: &NeighborhoodMap,
    opts: &R2Options,
) -> Result<Histogram, AnalysisError> {
    let (values, excluded) = r2_values(dataset, map, opts)?;
    let lo = values.iter().copied().fold(0.0_f64, f64::min);
    let mut h = Histogram::from_values(&values, lo, 1.0, opts.bins)?;
    h.excluded = excluded;
    Ok(h)
}

/// Pooled R² values (sample-major, then voxel) and the number of excluded
/// meshes.
pub fn r2_values(
    dataset: &Dataset,
    map: &NeighborhoodMap,
    opts: &R2Options,
) -> Result<(Vec<f64>, usize), AnalysisError> {
    let mesh_opts = MeshOptions {
        lambda: opts.lambda,
        mode: opts.mode,
        zscore: false,
    };
    let per_sample: Vec<(Vec<f64>, usize)> = dataset
        .samples()
        .par_iter()
        .map(|s| -> Result<_, AnalysisError> {
            let w = estimate_mesh(s, map, &mesh_opts)?;
            let totals = if opts.centered {
                &w.centered_total_ss
            } else {
                &w.total_ss
            };
            let mut vals = Vec::with_capacity(totals.len());
            let mut excluded = 0;
            for (&r, &t) in w.residual_ss.iter().zip(totals) {
                match r_squared(r, t) {
                    Ok(v) => vals.push(v),
                    Err(_) => excluded += 1,
                }
            }
            Ok((vals, excluded))
        })
        .collect::<Result<_, _>>()?;
    let excluded: usize = per_sample.iter().map(|(_, e)| e).sum();
    if excluded > 0 {
        log::warn!("{excluded} meshes have zero total sum of squares and were excluded");
    }
    Ok((per_sample.into_iter().flat_map(|(v, _)| v).collect(), excluded))
}

/// Mean and sample std of accuracy over the mesh-size grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub method: MethodTag,
    pub mean: f64,
    pub std: f64,
}

/// One row per method in the fixed method order.
pub fn robustness_summary(
    per_p: &BTreeMap<MethodTag, Vec<f64>>,
) -> Result<Vec<RobustnessRow>, AnalysisError> {
    per_p
        .iter()
        .map(|(&method, accs)| {
            if accs.is_empty() {
                return Err(AnalysisError::Empty(method.to_string()));
            }
            let (mean, std) = mean_and_sample_std(accs);
            Ok(RobustnessRow { method, mean, std })
        })
        .collect()
}

/// `method,mean,std` rows.
pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut out = String::from("method,mean,std\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.method, r.mean, r.std);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(0.0, 3.0).unwrap(), 1.0);
        assert_eq!(r_squared(3.0, 3.0).unwrap(), 0.0);
        // residuals [1, 1] against seed [2, 2]
        assert_eq!(r_squared(2.0, 8.0).unwrap(), 0.75);
        assert!(matches!(r_squared(1.0, 0.0), Err(AnalysisError::ZeroTotal(_))));
    }

    #[test]
    fn histogram_counts_and_edges() {
        let h = Histogram::from_values(&[-1.0, -0.2, 0.0, 0.99, 1.0], -1.0, 1.0, 4).unwrap();
        assert_eq!(h.edges, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(h.counts, vec![1, 1, 1, 2]);
        assert_eq!(h.n, 5);
        let csv = h.to_csv();
        assert!(csv.starts_with("edge_low,edge_high,count\n-1,-0.5,1\n"));
    }

    #[test]
    fn robustness_examples() {
        let mut m = BTreeMap::new();
        m.insert(MethodTag::Slm, vec![0.6, 0.7, 0.8]);
        m.insert(MethodTag::Flm, vec![0.5]);
        let rows = robustness_summary(&m).unwrap();
        assert_eq!(rows[0].method, MethodTag::Flm);
        assert_eq!(rows[0].std, 0.0);
        assert_abs_diff_eq!(rows[1].mean, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(rows[1].std, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn empty_list_is_rejected() {
        let mut m = BTreeMap::new();
        m.insert(MethodTag::Slm, vec![]);
        assert!(robustness_summary(&m).is_err());
    }

    #[test]
    fn svg_is_self_contained() {
        let h = Histogram::from_values(&[0.1, 0.2], 0.0, 1.0, 5).unwrap();
        let svg = h.to_svg("a < b");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<rect").count(), 6);
    }
}
