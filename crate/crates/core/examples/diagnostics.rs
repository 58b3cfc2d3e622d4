//! Neighbor-correlation and mesh R² histograms per map kind, written as CSV
//! and SVG, plus the robustness table over mesh sizes.
//!
//! cargo run --release --example diagnostics -- [out_dir]

use std::collections::BTreeMap;
use std::fs;

use voxmesh::analysis::{correlation_histogram, r2_histogram, robustness_csv, robustness_summary, R2Options};
use voxmesh::classify::{build_map, select_mesh_size, SweepConfig};
use voxmesh::synth::{generate, SynthConfig};
use voxmesh::{MethodTag, NeighborKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("voxmesh-diagnostics"));
    fs::create_dir_all(&out)?;
    let ds = generate(&SynthConfig::default())?;

    for kind in [NeighborKind::Spatial, NeighborKind::Functional, NeighborKind::Random] {
        let map = build_map(&ds, kind, 6, 0)?;
        let corr = correlation_histogram(&ds, &map, 50)?;
        let r2 = r2_histogram(&ds, &map, &R2Options::default())?;
        println!(
            "{:<10} corr mean {:.3} std {:.3} | R² mean {:.3} std {:.3}",
            kind.to_string(), corr.mean, corr.std, r2.mean, r2.std
        );
        fs::write(out.join(format!("{kind}_corr.csv")), corr.to_csv())?;
        fs::write(out.join(format!("{kind}_corr.svg")), corr.to_svg(&format!("{kind} correlation")))?;
        fs::write(out.join(format!("{kind}_r2.svg")), r2.to_svg(&format!("{kind} R²")))?;
    }

    let grid: Vec<usize> = (2..=10).collect();
    let mut per_p = BTreeMap::new();
    for m in [MethodTag::Flm, MethodTag::Slm, MethodTag::FmmPeak, MethodTag::LmmPeak] {
        let o = select_mesh_size(&ds, m, &grid, &SweepConfig::default())?;
        per_p.insert(m, o.report.curve.iter().map(|c| c.test_accuracy).collect::<Vec<_>>());
    }
    print!("{}", robustness_csv(&robustness_summary(&per_p)?));
    println!("histograms in {}", out.display());
    Ok(())
}
