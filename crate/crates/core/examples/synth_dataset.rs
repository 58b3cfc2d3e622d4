//! Generate a synthetic dataset, save it, and look at what was planted.
//!
//! cargo run --release --example synth_dataset -- [out_dir]

use voxmesh::dataset::{load_dataset, save_dataset};
use voxmesh::synth::{generate, hrf_curve, planted_coupling, SynthConfig};
use voxmesh::Split;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("voxmesh-synth"));
    let cfg = SynthConfig::default();
    println!("{}", cfg.to_toml());

    let hrf = hrf_curve(cfg.time_points, &cfg.hrf)?;
    println!("hrf: {hrf:.3?}");

    let ds = generate(&cfg)?;
    for split in [Split::Train, Split::Validation, Split::Test] {
        println!("{split}: {} samples", ds.indices_in(split).len());
    }

    let truth = planted_coupling(&cfg)?;
    let informative = truth.informative.iter().filter(|&&b| b).count();
    println!(
        "{} voxels, {} coupled, {} carry class signal",
        ds.voxel_count(),
        truth.coupled_voxels().count(),
        informative
    );
    if let Some(j) = (0..ds.voxel_count()).find(|&j| truth.informative[j]) {
        for (c, w) in truth.weights.iter().enumerate() {
            println!("voxel {j} class {c}: neighbors {:?} weights {:.3}", truth.map.neighbors(j), w.row(j));
        }
    }

    save_dataset(&ds, &out)?;
    let back = load_dataset(&out)?;
    assert_eq!(back.len(), ds.len());
    println!("saved to {}", out.display());
    Ok(())
}
