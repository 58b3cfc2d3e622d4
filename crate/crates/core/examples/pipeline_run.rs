//! A full run: dataset on disk, sweep, artifacts and run manifest, then a
//! rerun from the manifest alone.

use std::fs;

use voxmesh::dataset::save_dataset;
use voxmesh::pipeline::{run_pipeline, PipelineConfig, RUN_MANIFEST};
use voxmesh::synth::{generate, SynthConfig};
use voxmesh::MethodTag;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("data");
    save_dataset(&generate(&SynthConfig::default())?, &data)?;

    let cfg = PipelineConfig {
        dataset: data,
        method: MethodTag::Flm,
        p_grid: (2..=10).collect(),
        ..PipelineConfig::default()
    };
    let first = dir.path().join("run1");
    let summary = run_pipeline(&cfg, &first)?;
    println!("accuracy {:.3} at p={:?}", summary.accuracy, summary.chosen_p);
    for f in &summary.files {
        println!("  {f}");
    }

    let again = PipelineConfig::load(first.join(RUN_MANIFEST))?;
    let second = dir.path().join("run2");
    run_pipeline(&again, &second)?;
    for f in &summary.files {
        assert_eq!(fs::read(first.join(f))?, fs::read(second.join(f))?, "{f}");
    }
    println!("rerun from {RUN_MANIFEST} is byte-identical");
    Ok(())
}
