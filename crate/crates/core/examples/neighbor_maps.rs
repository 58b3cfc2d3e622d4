//! Spatial, functional and random neighbor maps of the same dataset, and how
//! strongly each kind of neighbor correlates with its seed.

use voxmesh::analysis::neighbor_correlations;
use voxmesh::neighborhood::{connectivity, functional_knn, random_neighbors, spatial_knn};
use voxmesh::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SynthConfig::default())?;
    let p = 6;

    let spatial = spatial_knn(ds.geometry(), p)?;
    let conn = connectivity(&ds)?;
    let functional = functional_knn(&conn, p)?;
    let random = random_neighbors(ds.voxel_count(), p, 7)?;

    // a voxel away from the faces: its 6 spatial neighbors are the face-adjacent ones
    let j = (2 * 6 + 2) * 6 + 2;
    println!("voxel {j} at {:?}", ds.geometry().coords()[j]);
    for (name, map) in [("spatial", &spatial), ("functional", &functional), ("random", &random)] {
        let ks = map.neighbors(j);
        let r: Vec<f64> = ks.iter().map(|&k| conn.get(j, k)).collect();
        println!("  {name:<10} {ks:?} r={r:.2?}");
    }

    for (name, map) in [("spatial", &spatial), ("functional", &functional), ("random", &random)] {
        let r = neighbor_correlations(&ds, map)?;
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        println!("{name:<10} mean neighbor correlation {mean:.3}");
    }

    print!("{}", spatial.to_text().lines().take(3).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
