//! Validation-driven choice of the mesh size `p`.

use rayon::prelude::*;

use super::report::{evaluate, CurvePoint, EvalReport};
use super::{predict, train, ClassifyError, LinearModel, TrainConfig};
use crate::dataset::{Dataset, Split, TemporalMode};
use crate::mesh::{extract_features, ExtractOptions, FeatureMatrix, MethodTag};
use crate::neighborhood::{
    connectivity, functional_knn, random_neighbors, spatial_knn, ConnectivityMatrix, NeighborKind,
    NeighborhoodMap,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub lambda: f64,
    pub c: f64,
    pub seed: u64,
    /// Temporal mode for FLM, SLM and LM-rand (default: all).
    pub mode: Option<TemporalMode>,
    pub zscore: bool,
    pub standardize: bool,
    /// Meshes used by FC-mesh.
    pub fc_kind: NeighborKind,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            c: 1.0,
            seed: 0,
            mode: None,
            zscore: false,
            standardize: true,
            fc_kind: NeighborKind::Spatial,
        }
    }
}

impl SweepConfig {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            c: self.c,
            seed: self.seed,
            standardize: self.standardize,
            ..TrainConfig::default()
        }
    }

    fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            lambda: self.lambda,
            mode: self.mode,
            zscore: self.zscore,
        }
    }

    /// Map kind used by `method` under this configuration.
    pub fn map_kind(&self, method: MethodTag) -> Option<NeighborKind> {
        match method {
            MethodTag::FcMesh => Some(self.fc_kind),
            m => m.neighbor_kind(),
        }
    }
}

/// Result of a sweep: the test report plus the artifacts at the chosen size.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: EvalReport,
    pub model: LinearModel,
    pub features: FeatureMatrix,
    pub map: Option<NeighborhoodMap>,
}

/// Builds a `kind` map with mesh size `p`. Functional maps use connectivity
/// over the training split of `dataset`; random maps use `seed`.
pub fn build_map(
    dataset: &Dataset,
    kind: NeighborKind,
    p: usize,
    seed: u64,
) -> Result<NeighborhoodMap, ClassifyError> {
    let conn = match kind {
        NeighborKind::Functional => Some(connectivity(dataset)?),
        _ => None,
    };
    map_for(dataset, kind, p, seed, conn.as_ref())
}

fn map_for(
    dataset: &Dataset,
    kind: NeighborKind,
    p: usize,
    seed: u64,
    conn: Option<&ConnectivityMatrix>,
) -> Result<NeighborhoodMap, ClassifyError> {
    Ok(match kind {
        NeighborKind::Spatial => spatial_knn(dataset.geometry(), p)?,
        NeighborKind::Functional => functional_knn(conn.expect("connectivity computed"), p)?,
        NeighborKind::Random => random_neighbors(dataset.voxel_count(), p, seed)?,
    })
}

struct Trial {
    p: Option<usize>,
    map: Option<NeighborhoodMap>,
    features: FeatureMatrix,
    model: LinearModel,
    validation_accuracy: f64,
    test_accuracy: f64,
}

fn labels_of(dataset: &Dataset, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| dataset.samples()[i].label).collect()
}

fn split_accuracy(
    model: &LinearModel,
    features: &FeatureMatrix,
    idx: &[usize],
    truth: &[usize],
) -> Result<f64, ClassifyError> {
    let x = features.select_rows(idx);
    let pred = predict(model, x.values.view())?;
    Ok(super::accuracy(&pred, truth))
}

/// For every `p` in `p_grid`: build the map, extract features for all
/// samples, train on the train split and score validation and test. The
/// reported model is the one with the best validation accuracy (smallest `p`
/// on ties); its test accuracy is the headline number. Methods without a map
/// ignore the grid and run once.
pub fn select_mesh_size(
    dataset: &Dataset,
    method: MethodTag,
    p_grid: &[usize],
    cfg: &SweepConfig,
) -> Result<SweepOutcome, ClassifyError> {
    let train_idx = dataset.require_split(Split::Train)?;
    let val_idx = dataset.require_split(Split::Validation)?;
    let test_idx = dataset.require_split(Split::Test)?;
    let train_y = labels_of(dataset, &train_idx);
    let val_y = labels_of(dataset, &val_idx);
    let test_y = labels_of(dataset, &test_idx);
    let k = dataset.class_count();
    let kind = cfg.map_kind(method);
    let tcfg = cfg.train_config();
    let xopts = cfg.extract_options();

    let conn = match kind {
        Some(NeighborKind::Functional) => Some(connectivity(dataset)?),
        _ => None,
    };

    let grid: Vec<Option<usize>> = match kind {
        Some(_) if p_grid.is_empty() => return Err(ClassifyError::EmptyGrid),
        Some(_) => p_grid.iter().copied().map(Some).collect(),
        None => vec![None],
    };

    let trials: Vec<Trial> = grid
        .par_iter()
        .map(|&p| -> Result<Trial, ClassifyError> {
            let map = match (kind, p) {
                (Some(kind), Some(p)) => Some(map_for(dataset, kind, p, cfg.seed, conn.as_ref())?),
                _ => None,
            };
            let features = extract_features(dataset, method, map.as_ref(), &xopts)?;
            let xtr = features.select_rows(&train_idx);
            let model = train(xtr.values.view(), &train_y, k, &tcfg)?;
            let validation_accuracy = split_accuracy(&model, &features, &val_idx, &val_y)?;
            let test_accuracy = split_accuracy(&model, &features, &test_idx, &test_y)?;
            Ok(Trial {
                p,
                map,
                features,
                model,
                validation_accuracy,
                test_accuracy,
            })
        })
        .collect::<Result<_, _>>()?;

    let best = (0..trials.len())
        .max_by(|&a, &b| {
            let (ta, tb) = (&trials[a], &trials[b]);
            ta.validation_accuracy
                .total_cmp(&tb.validation_accuracy)
                .then(tb.p.cmp(&ta.p))
        })
        .expect("grid is non-empty");

    let curve: Vec<CurvePoint> = trials
        .iter()
        .map(|t| CurvePoint {
            p: t.p,
            validation_accuracy: t.validation_accuracy,
            test_accuracy: t.test_accuracy,
        })
        .collect();
    let accs: Vec<f64> = curve.iter().map(|c| c.test_accuracy).collect();
    let (curve_mean, curve_std) = crate::analysis::mean_and_sample_std(&accs);

    let chosen = trials.into_iter().nth(best).expect("index in range");
    let xte = chosen.features.select_rows(&test_idx);
    let mut report = evaluate(&chosen.model, xte.values.view(), &test_y)?;
    report.method = Some(method);
    report.chosen_p = chosen.p;
    report.curve = curve;
    report.curve_mean = Some(curve_mean);
    report.curve_std = Some(curve_std);

    Ok(SweepOutcome {
        report,
        model: chosen.model,
        features: chosen.features,
        map: chosen.map,
    })
}
