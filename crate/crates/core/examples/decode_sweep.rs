//! Mesh-size selection on validation and test accuracy for every method.
//!
//! cargo run --release --example decode_sweep -- [seed]

use voxmesh::classify::{select_mesh_size, SweepConfig};
use voxmesh::synth::{generate, SynthConfig};
use voxmesh::MethodTag;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let ds = generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;
    let grid: Vec<usize> = (2..=10).collect();
    let cfg = SweepConfig {
        seed,
        ..SweepConfig::default()
    };

    println!("{:<10} {:>8} {:>4} {:>10}", "method", "accuracy", "p", "std over p");
    for method in MethodTag::ALL {
        let o = select_mesh_size(&ds, method, &grid, &cfg)?;
        let r = &o.report;
        println!(
            "{:<10} {:>8.3} {:>4} {:>10.3}",
            method.as_str(),
            r.accuracy,
            r.chosen_p.map_or("-".into(), |p| p.to_string()),
            r.curve_std.unwrap_or(0.0)
        );
    }
    Ok(())
}
