//! Seeded synthetic datasets whose class information lives in local coupling.
//!
//! Voxels on one parity of the grid checkerboard (`x + y + z` even) are
//! drivers: each carries a random per-stimulus baseline level, an HRF-shaped
//! response with a random amplitude, and intrinsic Gaussian variation. Every
//! other voxel is a weighted sum of the drivers among its `coupling_p` spatial nearest neighbors, with a weight
//! table that depends on the class. Measurement noise is added on top.
//!
//! With amplitude matching on, each class's weights are rescaled per voxel so
//! that their sum and sum of squares agree with class 0. Per-voxel means and
//! variances are then identical across classes and single-voxel intensities
//! carry no label information.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dataset::{Dataset, DatasetError, Sample, Split, VolumeGeometry};
use crate::neighborhood::{spatial_knn, NeighborhoodError, NeighborhoodMap};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid HRF parameters: {0}")]
    Hrf(String),
    #[error("degenerate grid: {0}")]
    Grid(String),
    #[error("invalid coupling table: {0}")]
    Coupling(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read config {path}: {msg}")]
    ConfigFile { path: String, msg: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
}

/// Double-gamma hemodynamic response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HrfParams {
    pub peak_shape: f64,
    pub peak_scale: f64,
    pub undershoot_shape: f64,
    pub undershoot_scale: f64,
    pub undershoot_ratio: f64,
    /// Seconds between volumes.
    pub tr: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self {
            peak_shape: 6.0,
            peak_scale: 1.0,
            undershoot_shape: 16.0,
            undershoot_scale: 1.0,
            undershoot_ratio: 1.0 / 6.0,
            tr: 2.0,
        }
    }
}

fn gamma_pdf(t: f64, shape: f64, scale: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    ((shape - 1.0) * t.ln() - t / scale - ln_gamma(shape) - shape * scale.ln()).exp()
}

/// HRF sampled at `t_d = d * tr` for `d = 1..=D`, scaled so its maximum is 1.
pub fn hrf_curve(d: usize, params: &HrfParams) -> Result<Vec<f64>, SynthError> {
    let positive = [
        params.peak_shape,
        params.peak_scale,
        params.undershoot_shape,
        params.undershoot_scale,
        params.tr,
    ];
    if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(SynthError::Hrf("shapes, scales and tr must be positive".into()));
    }
    if !(params.undershoot_ratio.is_finite() && params.undershoot_ratio >= 0.0) {
        return Err(SynthError::Hrf("undershoot ratio must be >= 0".into()));
    }
    if d == 0 {
        return Err(SynthError::Hrf("need at least one time point".into()));
    }
    let raw: Vec<f64> = (1..=d)
        .map(|i| {
            let t = i as f64 * params.tr;
            gamma_pdf(t, params.peak_shape, params.peak_scale)
                - params.undershoot_ratio * gamma_pdf(t, params.undershoot_shape, params.undershoot_scale)
        })
        .collect();
    let peak = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(SynthError::Hrf("curve has no positive sample".into()));
    }
    Ok(raw.into_iter().map(|v| v / peak).collect())
}

/// Generator settings; every field has a default so a config file only
/// needs the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub grid: [usize; 3],
    pub classes: usize,
    pub train_per_class: usize,
    pub validation_per_class: usize,
    pub test_per_class: usize,
    pub time_points: usize,
    pub hrf: HrfParams,
    /// Number of spatial neighbors each coupled voxel mixes.
    pub coupling_p: usize,
    /// Class 0 mixing weights by neighbor rank.
    pub base_coupling: Vec<f64>,
    /// Explicit per-class tables. When empty, class `c` uses `base_coupling`
    /// rotated right by `c` positions.
    pub coupling: Vec<Vec<f64>>,
    /// Only coupled voxels within this Euclidean distance of the grid center
    /// use class-specific tables; the rest use the class 0 table for every
    /// class. `None` makes every coupled voxel class-specific.
    pub signal_radius: Option<f64>,
    /// Per-stimulus baseline level of each driver voxel.
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub amplitude_mean: f64,
    pub amplitude_std: f64,
    pub intrinsic_std: f64,
    pub noise_std: f64,
    pub amplitude_matching: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            grid: [6, 6, 6],
            classes: 2,
            train_per_class: 40,
            validation_per_class: 20,
            test_per_class: 20,
            time_points: 6,
            hrf: HrfParams::default(),
            coupling_p: 4,
            base_coupling: vec![0.5, 0.3, 0.15, 0.05],
            coupling: Vec::new(),
            signal_radius: Some(1.7),
            baseline_mean: 0.0,
            baseline_std: 40.0,
            amplitude_mean: 40.0,
            amplitude_std: 20.0,
            intrinsic_std: 12.0,
            noise_std: 1.0,
            amplitude_matching: true,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::ConfigFile {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn tables(&self) -> Result<Vec<Vec<f64>>, SynthError> {
        let tables: Vec<Vec<f64>> = if self.coupling.is_empty() {
            let n = self.base_coupling.len();
            (0..self.classes)
                .map(|c| {
                    let mut row = self.base_coupling.clone();
                    if n > 0 {
                        row.rotate_right(c % n);
                    }
                    row
                })
                .collect()
        } else {
            self.coupling.clone()
        };
        if tables.len() != self.classes {
            return Err(SynthError::Coupling(format!(
                "{} tables for {} classes",
                tables.len(),
                self.classes
            )));
        }
        for (c, row) in tables.iter().enumerate() {
            if row.len() != self.coupling_p {
                return Err(SynthError::Coupling(format!(
                    "class {c} has {} weights, coupling_p is {}",
                    row.len(),
                    self.coupling_p
                )));
            }
            if row.iter().any(|w| !w.is_finite()) {
                return Err(SynthError::Coupling(format!("class {c} has a non-finite weight")));
            }
        }
        Ok(tables)
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.classes < 2 {
            return Err(SynthError::Config("need at least 2 classes".into()));
        }
        if self.train_per_class == 0 {
            return Err(SynthError::Config("train_per_class must be positive".into()));
        }
        for (name, v) in [
            ("baseline_std", self.baseline_std),
            ("amplitude_std", self.amplitude_std),
            ("intrinsic_std", self.intrinsic_std),
            ("noise_std", self.noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.amplitude_mean.is_finite() && self.baseline_mean.is_finite()) {
            return Err(SynthError::Config("amplitude and baseline means must be finite".into()));
        }
        let m: usize = self.grid.iter().product();
        if m == 0 {
            return Err(SynthError::Grid(format!("{:?} has no voxels", self.grid)));
        }
        if self.coupling_p == 0 || self.coupling_p >= m {
            return Err(SynthError::Grid(format!(
                "coupling_p={} needs 1 <= p < M={m}",
                self.coupling_p
            )));
        }
        Ok(())
    }
}

/// Ground-truth coupling of a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCoupling {
    /// Spatial map with `coupling_p` neighbors; weight `m` of a voxel applies
    /// to its rank-`m` neighbor here.
    pub map: NeighborhoodMap,
    /// Whether a voxel is a driver (no planted weights).
    pub driver: Vec<bool>,
    /// Per class, `M x coupling_p` weights. Driver rows and slots pointing at
    /// non-driver voxels are 0.
    pub weights: Vec<Array2<f64>>,
    /// Coupled voxels whose weights differ between classes.
    pub informative: Vec<bool>,
}

impl PlantedCoupling {
    pub fn coupled_voxels(&self) -> impl Iterator<Item = usize> + '_ {
        self.driver.iter().enumerate().filter(|(_, d)| !**d).map(|(j, _)| j)
    }
}

/// Rescales `row` affinely on the `active` slots so that its sum and sum of
/// squares match `reference` on the same slots.
fn match_moments(row: &mut [f64], reference: &[f64], active: &[usize]) -> Result<(), SynthError> {
    if active.is_empty() {
        return Ok(());
    }
    let n = active.len() as f64;
    let moments = |v: &[f64]| {
        let mean = active.iter().map(|&m| v[m]).sum::<f64>() / n;
        let var = active.iter().map(|&m| (v[m] - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    };
    let mut a: Vec<f64> = active.iter().map(|&m| row[m]).collect();
    let mut b: Vec<f64> = active.iter().map(|&m| reference[m]).collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a == b {
        return Ok(());
    }
    let (mean_w, var_w) = moments(row);
    let (mean_r, var_r) = moments(reference);
    let alpha = if var_w > 0.0 {
        (var_r / var_w).sqrt()
    } else if var_r == 0.0 {
        1.0
    } else {
        return Err(SynthError::Coupling(
            "constant weights cannot match a non-constant reference".into(),
        ));
    };
    let beta = mean_r - alpha * mean_w;
    for &m in active {
        row[m] = alpha * row[m] + beta;
    }
    Ok(())
}

/// The coupling weights `generate` plants for `config`.
pub fn planted_coupling(config: &SynthConfig) -> Result<PlantedCoupling, SynthError> {
    config.validate()?;
    let tables = config.tables()?;
    let [gx, gy, gz] = config.grid;
    let geometry = VolumeGeometry::grid(gx, gy, gz)?;
    let map = spatial_knn(&geometry, config.coupling_p)?;
    let m = geometry.voxel_count();
    let p = config.coupling_p;
    let driver: Vec<bool> = geometry
        .coords()
        .iter()
        .map(|c| (c[0] + c[1] + c[2]) % 2 == 0)
        .collect();
    if driver.iter().all(|d| *d) || driver.iter().all(|d| !*d) {
        return Err(SynthError::Grid("grid needs both driver and coupled voxels".into()));
    }
    let center: Vec<f64> = config.grid.iter().map(|&g| (g as f64 - 1.0) / 2.0).collect();
    let informative: Vec<bool> = geometry
        .coords()
        .iter()
        .zip(&driver)
        .map(|(c, &d)| {
            let r2: f64 = c.iter().zip(&center).map(|(&x, &o)| (x as f64 - o).powi(2)).sum();
            !d && config.signal_radius.is_none_or(|r| r2.sqrt() <= r)
        })
        .collect();
    let mut weights = vec![Array2::zeros((m, p)); config.classes];
    for j in (0..m).filter(|&j| !driver[j]) {
        let active: Vec<usize> = map
            .neighbors(j)
            .iter()
            .enumerate()
            .filter(|(_, &k)| driver[k])
            .map(|(r, _)| r)
            .collect();
        for (c, table) in tables.iter().enumerate() {
            let table = if informative[j] { table } else { &tables[0] };
            let mut row = vec![0.0; p];
            for &r in &active {
                row[r] = table[r];
            }
            if config.amplitude_matching && c > 0 {
                let mut reference = vec![0.0; p];
                for &r in &active {
                    reference[r] = tables[0][r];
                }
                match_moments(&mut row, &reference, &active)?;
            }
            weights[c].row_mut(j).assign(&ndarray::ArrayView1::from(&row[..]));
        }
    }
    Ok(PlantedCoupling {
        map,
        driver,
        weights,
        informative,
    })
}

/// Draws one sample's `D x M` data.
fn draw_sample(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    hrf: &[f64],
    truth: &PlantedCoupling,
    class: usize,
) -> Array2<f64> {
    let d = hrf.len();
    let m = truth.driver.len();
    let mut latent = Array2::<f64>::zeros((d, m));
    for j in (0..m).filter(|&j| truth.driver[j]) {
        let z: f64 = rng.sample(StandardNormal);
        let base = config.baseline_mean + config.baseline_std * z;
        let z: f64 = rng.sample(StandardNormal);
        let amp = config.amplitude_mean + config.amplitude_std * z;
        for t in 0..d {
            let e: f64 = rng.sample(StandardNormal);
            latent[[t, j]] = base + amp * hrf[t] + config.intrinsic_std * e;
        }
    }
    let w = &truth.weights[class];
    for j in (0..m).filter(|&j| !truth.driver[j]) {
        for t in 0..d {
            let mut s = 0.0;
            for (r, &k) in truth.map.neighbors(j).iter().enumerate() {
                if truth.driver[k] {
                    s += w[[j, r]] * latent[[t, k]];
                }
            }
            latent[[t, j]] = s;
        }
    }
    if config.noise_std > 0.0 {
        for v in latent.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += config.noise_std * e;
        }
    }
    latent
}

/// Generates the dataset described by `config`. Samples are ordered by split
/// (train, validation, test) and alternate classes within a split; sample `i`
/// draws from its own ChaCha8 stream so generation is order-independent.
pub fn generate(config: &SynthConfig) -> Result<Dataset, SynthError> {
    let truth = planted_coupling(config)?;
    let hrf = hrf_curve(config.time_points, &config.hrf)?;
    let [gx, gy, gz] = config.grid;
    let geometry = VolumeGeometry::grid(gx, gy, gz)?;

    let mut plan: Vec<(usize, Split)> = Vec::new();
    for (split, per_class) in [
        (Split::Train, config.train_per_class),
        (Split::Validation, config.validation_per_class),
        (Split::Test, config.test_per_class),
    ] {
        for _ in 0..per_class {
            for c in 0..config.classes {
                plan.push((c, split));
            }
        }
    }

    let samples: Vec<Sample> = plan
        .par_iter()
        .enumerate()
        .map(|(i, &(class, split))| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            let data = draw_sample(&mut rng, config, &hrf, &truth, class);
            let mut s = Sample::new(i as u64, class, data);
            s.split = Some(split);
            s.phase = Some(if split == Split::Train { "encoding" } else { "retrieval" }.to_string());
            s
        })
        .collect();

    let names = (0..config.classes).map(|c| format!("class{c}")).collect();
    Ok(Dataset::new(geometry, names, samples)?)
}
