//! Linear max-margin classification of feature matrices.
//!
//! Each class gets a binary hinge-loss SVM against the rest, trained with
//! dual coordinate descent. Prediction takes the class with the largest
//! decision value; ties go to the lowest class index.

mod report;
mod sweep;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{evaluate, evaluate_predictions, CurvePoint, EvalReport};
pub use sweep::{build_map, select_mesh_size, SweepConfig, SweepOutcome};

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("training set needs at least 2 classes, found {0}")]
    SingleClass(usize),
    #[error("regularization C must be positive and finite, got {0}")]
    InvalidC(f64),
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("feature width {found} does not match model width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("{rows} feature rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("nothing to evaluate: empty split")]
    EmptySplit,
    #[error("mesh size grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Neighborhood(#[from] crate::neighborhood::NeighborhoodError),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: f64,
    pub seed: u64,
    pub max_epochs: usize,
    /// Stop when the relative change of the dual objective over one epoch
    /// falls below this.
    pub tol: f64,
    /// Standardize columns with training mean and std before fitting.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            seed: 0,
            max_epochs: 1000,
            tol: 1e-6,
            standardize: true,
        }
    }
}

/// Per-column affine map `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
        let scale = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// One weight vector and bias per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub standardizer: Option<Standardizer>,
    pub c: f64,
    pub seed: u64,
    /// Epochs run per one-vs-rest problem.
    pub epochs: Vec<usize>,
    /// Final primal objective per one-vs-rest problem.
    pub objectives: Vec<f64>,
}

impl LinearModel {
    pub fn class_count(&self) -> usize {
        self.weights.len()
    }

    pub fn width(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// `N x K` decision values `w_c . x + b_c`.
    pub fn decision_values(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, ClassifyError> {
        if x.ncols() != self.width() {
            return Err(ClassifyError::WidthMismatch {
                expected: self.width(),
                found: x.ncols(),
            });
        }
        let x = match &self.standardizer {
            Some(s) => s.apply(x),
            None => x.to_owned(),
        };
        let k = self.class_count();
        let mut out = Array2::zeros((x.nrows(), k));
        for (c, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let w = ArrayView1::from(w.as_slice());
            let scores = x.dot(&w) + *b;
            out.column_mut(c).assign(&scores);
        }
        Ok(out)
    }
}

struct BinaryFit {
    w: Vec<f64>,
    b: f64,
    epochs: usize,
    objective: f64,
}

/// Dual coordinate descent for `min 1/2 |w|^2 + 1/2 b^2 + C sum hinge(y (w.x + b))`
/// (bias handled as an extra constant feature).
fn fit_binary(x: &Array2<f64>, y: &[f64], cfg: &TrainConfig, seed: u64) -> BinaryFit {
    let (n, f) = x.dim();
    let mut w = vec![0.0; f];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    let qii: Vec<f64> = x
        .axis_iter(Axis(0))
        .map(|r| r.dot(&r) + 1.0)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev_dual = f64::NAN;
    let mut epochs = 0;

    for epoch in 0..cfg.max_epochs {
        epochs = epoch + 1;
        order.shuffle(&mut rng);
        for &i in &order {
            let xi = x.row(i);
            let xi = xi.as_slice().expect("standard layout");
            let margin = xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let g = y[i] * margin - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == cfg.c {
                g.max(0.0)
            } else {
                g
            };
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, cfg.c);
                let step = (alpha[i] - old) * y[i];
                for (wk, xk) in w.iter_mut().zip(xi) {
                    *wk += step * xk;
                }
                b += step;
            }
        }
        let wnorm: f64 = w.iter().map(|v| v * v).sum::<f64>() + b * b;
        let dual = alpha.iter().sum::<f64>() - 0.5 * wnorm;
        if epoch > 0 && (dual - prev_dual).abs() <= cfg.tol * dual.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        prev_dual = dual;
    }

    let hinge: f64 = x
        .axis_iter(Axis(0))
        .zip(y)
        .map(|(r, yi)| (1.0 - yi * (r.dot(&ArrayView1::from(w.as_slice())) + b)).max(0.0))
        .sum();
    let objective = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b) + cfg.c * hinge;
    BinaryFit {
        w,
        b,
        epochs,
        objective,
    }
}

/// Trains one-vs-rest separators for `n_classes` classes.
pub fn train(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<LinearModel, ClassifyError> {
    if x.nrows() != labels.len() {
        return Err(ClassifyError::LabelCount {
            rows: x.nrows(),
            labels: labels.len(),
        });
    }
    if !(cfg.c.is_finite() && cfg.c > 0.0) {
        return Err(ClassifyError::InvalidC(cfg.c));
    }
    if let Some(((row, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(ClassifyError::NonFinite { row, col });
    }
    let k = n_classes.max(labels.iter().map(|l| l + 1).max().unwrap_or(0));
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(ClassifyError::SingleClass(present.len()));
    }

    let standardizer = cfg.standardize.then(|| Standardizer::fit(x));
    let xs = match &standardizer {
        Some(s) => s.apply(x),
        None => x.as_standard_layout().into_owned(),
    };

    let fits: Vec<BinaryFit> = (0..k)
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            fit_binary(&xs, &y, cfg, cfg.seed.wrapping_add(c as u64))
        })
        .collect();

    Ok(LinearModel {
        weights: fits.iter().map(|f| f.w.clone()).collect(),
        biases: fits.iter().map(|f| f.b).collect(),
        standardizer,
        c: cfg.c,
        seed: cfg.seed,
        epochs: fits.iter().map(|f| f.epochs).collect(),
        objectives: fits.iter().map(|f| f.objective).collect(),
    })
}

/// Arg-max class per row; ties break toward the lowest class index.
pub fn predict(model: &LinearModel, x: ArrayView2<'_, f64>) -> Result<Vec<usize>, ClassifyError> {
    let scores = model.decision_values(x)?;
    Ok(scores
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

/// Training accuracy helper used by the toy examples.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}
