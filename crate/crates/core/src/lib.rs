//! Local mesh features for decoding cognitive states from voxel time series.
//!
//! A sample is the sequence of brain volumes recorded during one stimulus
//! presentation. Around every voxel a star-shaped mesh is formed from its `p`
//! nearest neighbors, where "nearest" is either spatial (Euclidean distance on
//! the voxel grid), functional (Pearson correlation over the training
//! responses) or random. The seed voxel's response is regressed on its
//! neighbors' responses with ridge regression and the resulting edge weights,
//! concatenated over all meshes, form the feature vector of the sample. A
//! linear max-margin classifier is then trained on those features.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`dataset`]: dataset model, on-disk format, splits and temporal reductions.
//! - [`neighborhood`]: spatial, functional and random neighbor maps.
//! - [`mesh`]: ridge estimation of mesh edge weights and feature matrices.
//! - [`classify`]: one-vs-rest linear SVM, evaluation and mesh-size selection.
//! - [`analysis`]: correlation and R² histograms, robustness summaries.
//! - [`synth`]: seeded synthetic datasets with planted local coupling.
//! - [`pipeline`]: end-to-end runs with reproducible artifacts.

pub mod analysis;
pub mod classify;
pub mod dataset;
mod linalg;
pub mod mesh;
pub mod neighborhood;
pub mod pipeline;
pub mod synth;

pub use analysis::Histogram;
pub use classify::{EvalReport, LinearModel};
pub use dataset::{Dataset, Sample, Split, TemporalMode, VolumeGeometry};
pub use mesh::{FeatureMatrix, MeshWeights, MethodTag};
pub use neighborhood::{ConnectivityMatrix, NeighborKind, NeighborhoodMap};
