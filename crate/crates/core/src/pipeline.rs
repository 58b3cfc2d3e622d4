//! End-to-end runs: load, sweep mesh sizes, evaluate, analyze, and write
//! every artifact plus a run manifest.
//!
//! Artifacts go to a fresh directory next to the requested output and are
//! moved into place only after every stage succeeded.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{correlation_histogram, r2_histogram, R2Options, DEFAULT_BINS};
use crate::classify::{select_mesh_size, ClassifyError, SweepConfig};
use crate::dataset::{load_dataset, TemporalMode, DATA_FILE, MANIFEST_FILE};
use crate::mesh::MethodTag;
use crate::neighborhood::NeighborKind;

pub const RUN_MANIFEST: &str = "run_manifest.toml";

/// Pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Neighbors,
    Extract,
    Train,
    Analyze,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Neighbors => "neighbors",
            Stage::Extract => "extract",
            Stage::Train => "train",
            Stage::Analyze => "analyze",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl PipelineError {
    pub fn new(stage: Stage, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        Self {
            stage,
            source: source.into(),
        }
    }
}

fn at<E: Into<Box<dyn std::error::Error + Send + Sync>>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

fn classify_stage(e: ClassifyError) -> PipelineError {
    let stage = match &e {
        ClassifyError::Dataset(_) => Stage::Load,
        ClassifyError::Neighborhood(_) => Stage::Neighbors,
        ClassifyError::Mesh(_) => Stage::Extract,
        _ => Stage::Train,
    };
    PipelineError::new(stage, e)
}

/// Parses `a..b` (inclusive), `a,b,c` or a single size.
pub fn parse_p_grid(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    let bad = |_| format!("invalid mesh size grid {s:?}");
    let grid: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(bad)?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(bad)?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(bad)?
    };
    if grid.is_empty() {
        return Err(format!("mesh size grid {s:?} is empty"));
    }
    Ok(grid)
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub method: MethodTag,
    pub p_grid: Vec<usize>,
    pub lambda: f64,
    pub c: f64,
    /// Temporal mode for FLM, SLM and LM-rand.
    pub mode: Option<TemporalMode>,
    pub zscore: bool,
    pub standardize: bool,
    /// Neighbor maps for FC-mesh.
    pub fc_kind: NeighborKind,
    /// Mean-centered total sum of squares in the R² histogram.
    pub centered: bool,
    pub bins: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            method: MethodTag::Flm,
            p_grid: (2..=30).collect(),
            lambda: 0.5,
            c: 1.0,
            mode: None,
            zscore: false,
            standardize: true,
            fc_kind: NeighborKind::Spatial,
            centered: false,
            bins: DEFAULT_BINS,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    #[serde(flatten)]
    config: PipelineConfig,
    #[serde(default)]
    inputs: BTreeMap<String, String>,
}

impl PipelineConfig {
    /// Reads a config file. A run manifest written by [`run_pipeline`] is
    /// also accepted; its input hashes are ignored here.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path.as_ref()).map_err(at(Stage::Config))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let m: RunManifest = toml::from_str(text).map_err(at(Stage::Config))?;
        Ok(m.config)
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            lambda: self.lambda,
            c: self.c,
            seed: self.seed,
            mode: self.mode,
            zscore: self.zscore,
            standardize: self.standardize,
            fc_kind: self.fc_kind,
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: &str| Err(PipelineError::new(Stage::Config, m.to_string()));
        if self.p_grid.is_empty() {
            return err("p_grid is empty");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return err("lambda must be finite and >= 0");
        }
        if self.bins == 0 {
            return err("bins must be positive");
        }
        Ok(())
    }
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub out: PathBuf,
    pub accuracy: f64,
    pub chosen_p: Option<usize>,
    pub files: Vec<String>,
}

fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(at(Stage::Load))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Runs every stage and writes the artifacts into `out`, replacing it.
pub fn run_pipeline(config: &PipelineConfig, out: &Path) -> Result<PipelineSummary, PipelineError> {
    config.validate()?;
    let dataset = load_dataset(&config.dataset).map_err(at(Stage::Load))?;
    let mut inputs = BTreeMap::new();
    for name in [MANIFEST_FILE, DATA_FILE] {
        inputs.insert(name.to_string(), sha256_file(&config.dataset.join(name))?);
    }

    let outcome = select_mesh_size(&dataset, config.method, &config.p_grid, &config.sweep_config())
        .map_err(classify_stage)?;

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    if let Some(map) = &outcome.map {
        files.push(("neighbors.txt".into(), map.to_text().into_bytes()));
    }
    let mut csv = Vec::new();
    outcome
        .features
        .write_csv(&mut csv)
        .map_err(at(Stage::Write))?;
    files.push(("features.csv".into(), csv));
    let mut model = serde_json::to_string_pretty(&outcome.model).map_err(at(Stage::Write))?;
    model.push('\n');
    files.push(("model.json".into(), model.into_bytes()));
    files.push(("report.json".into(), outcome.report.to_json().into_bytes()));
    files.push(("curve.csv".into(), outcome.report.curve_csv().into_bytes()));

    if let Some(map) = &outcome.map {
        let corr = correlation_histogram(&dataset, map, config.bins).map_err(at(Stage::Analyze))?;
        let r2_opts = R2Options {
            lambda: config.lambda,
            mode: mesh_mode(config),
            centered: config.centered,
            bins: config.bins,
        };
        let r2 = r2_histogram(&dataset, map, &r2_opts).map_err(at(Stage::Analyze))?;
        files.push(("corr_hist.csv".into(), corr.to_csv().into_bytes()));
        files.push((
            "corr_hist.svg".into(),
            corr.to_svg(&format!("{} neighbor correlation", config.method)).into_bytes(),
        ));
        files.push(("r2_hist.csv".into(), r2.to_csv().into_bytes()));
        files.push(("r2_hist.svg".into(), r2.to_svg(&format!("{} mesh R²", config.method)).into_bytes()));
    }

    let manifest = RunManifest {
        config: config.clone(),
        inputs,
    };
    let manifest = toml::to_string(&manifest).map_err(at(Stage::Write))?;
    files.push((RUN_MANIFEST.into(), manifest.into_bytes()));

    write_atomically(out, &files)?;
    Ok(PipelineSummary {
        out: out.to_path_buf(),
        accuracy: outcome.report.accuracy,
        chosen_p: outcome.report.chosen_p,
        files: files.into_iter().map(|(n, _)| n).collect(),
    })
}

/// Temporal mode the method's meshes are estimated under.
fn mesh_mode(config: &PipelineConfig) -> TemporalMode {
    config
        .method
        .fixed_mode()
        .or(config.mode)
        .unwrap_or(TemporalMode::All)
}

/// Writes `files` into a sibling temp directory, then swaps it in for `out`.
pub fn write_atomically(out: &Path, files: &[(String, Vec<u8>)]) -> Result<(), PipelineError> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(at(Stage::Write))?;
    let tmp = tempfile::Builder::new()
        .prefix(".voxmesh-")
        .tempdir_in(&parent)
        .map_err(at(Stage::Write))?;
    for (name, bytes) in files {
        fs::write(tmp.path().join(name), bytes).map_err(at(Stage::Write))?;
    }
    if out.exists() {
        fs::remove_dir_all(out).map_err(at(Stage::Write))?;
    }
    let staged = tmp.keep();
    fs::rename(&staged, out).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        PipelineError::new(Stage::Write, e)
    })?;
    Ok(())
}
