//! Directory format: `manifest.json` plus a headerless `data.f64` holding
//! little-endian float64 values at index `((i * D) + d) * M + j`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, Sample, Split, VolumeGeometry};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.f64";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    #[serde(rename = "M")]
    voxel_count: usize,
    #[serde(rename = "D")]
    time_points: usize,
    #[serde(rename = "N")]
    sample_count: usize,
    class_names: Vec<String>,
    spacing: [f64; 3],
    coords: Vec<[i64; 3]>,
    samples: Vec<SampleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleEntry {
    stimulus_id: u64,
    label: usize,
    #[serde(default)]
    run: u32,
    #[serde(default)]
    phase: Option<String>,
    #[serde(default)]
    split: Option<Split>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(DatasetError::MissingFile(path.to_path_buf()))
        }
        Err(e) => Err(io_err(path)(e)),
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let data_path = dir.join(DATA_FILE);
    let manifest_bytes = read_file(&manifest_path)?;
    let manifest: Manifest =
        serde_json::from_slice(&manifest_bytes).map_err(|source| DatasetError::Manifest {
            path: manifest_path.clone(),
            source,
        })?;
    let bytes = read_file(&data_path)?;

    let (m, d, n) = (
        manifest.voxel_count,
        manifest.time_points,
        manifest.sample_count,
    );
    if manifest.coords.len() != m {
        return Err(DatasetError::SizeMismatch {
            what: "coords",
            expected: m,
            found: manifest.coords.len(),
        });
    }
    if manifest.samples.len() != n {
        return Err(DatasetError::SizeMismatch {
            what: "sample entries",
            expected: n,
            found: manifest.samples.len(),
        });
    }
    if d == 0 {
        return Err(DatasetError::NoTimePoints);
    }
    let expected = n * d * m * 8;
    if bytes.len() != expected {
        return Err(DatasetError::SizeMismatch {
            what: "data.f64 bytes",
            expected,
            found: bytes.len(),
        });
    }
    let geometry = VolumeGeometry::new(manifest.coords, manifest.spacing)?;

    let block = d * m;
    let mut samples = Vec::with_capacity(n);
    for (i, entry) in manifest.samples.into_iter().enumerate() {
        let raw = &bytes[i * block * 8..(i + 1) * block * 8];
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if let Some(k) = values.iter().position(|x| !x.is_finite()) {
            return Err(DatasetError::NonFinite {
                sample: i,
                time: k / m,
                voxel: k % m,
            });
        }
        let data = Array2::from_shape_vec((d, m), values).expect("block size checked");
        samples.push(Sample {
            stimulus_id: entry.stimulus_id,
            label: entry.label,
            run: entry.run,
            phase: entry.phase,
            split: entry.split,
            data,
        });
    }
    Dataset::new(geometry, manifest.class_names, samples)
}

pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), DatasetError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        voxel_count: dataset.voxel_count(),
        time_points: dataset.time_points(),
        sample_count: dataset.len(),
        class_names: dataset.class_names().to_vec(),
        spacing: dataset.geometry().spacing(),
        coords: dataset.geometry().coords().to_vec(),
        samples: dataset
            .samples()
            .iter()
            .map(|s| SampleEntry {
                stimulus_id: s.stimulus_id,
                label: s.label,
                run: s.run,
                phase: s.phase.clone(),
                split: s.split,
            })
            .collect(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;

    let data_path = dir.join(DATA_FILE);
    let file = fs::File::create(&data_path).map_err(io_err(&data_path))?;
    let mut w = BufWriter::new(file);
    for s in dataset.samples() {
        // Standard layout arrays iterate row-major: time-major then voxel.
        for x in s.data.iter() {
            w.write_all(&x.to_le_bytes()).map_err(io_err(&data_path))?;
        }
    }
    w.flush().map_err(io_err(&data_path))?;
    Ok(())
}
