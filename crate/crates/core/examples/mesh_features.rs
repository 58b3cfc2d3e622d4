//! Ridge-estimated mesh weights: recover planted coupling from noiseless
//! data, then build feature matrices for several methods.

use voxmesh::mesh::{estimate_mesh, extract_features, ridge_weights, ExtractOptions, MeshOptions};
use voxmesh::neighborhood::spatial_knn;
use voxmesh::synth::{generate, planted_coupling, SynthConfig};
use voxmesh::{MethodTag, TemporalMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // one tiny system by hand
    let q = ndarray::array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let r = ndarray::array![1.0, 2.0, 3.0];
    println!("ridge lambda=0: {:.6}", ridge_weights(r.view(), q.view(), 0.0)?);
    println!("ridge lambda=4: {:.6}", ridge_weights(r.view(), q.view(), 4.0)?);

    let cfg = SynthConfig {
        noise_std: 0.0,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg)?;
    let truth = planted_coupling(&cfg)?;
    let opts = MeshOptions {
        lambda: 1e-10,
        mode: TemporalMode::All,
        zscore: false,
    };
    let mut worst = 0.0_f64;
    for s in ds.samples() {
        let w = estimate_mesh(s, &truth.map, &opts)?;
        for j in truth.coupled_voxels() {
            let planted = truth.weights[s.label].row(j);
            for (a, b) in w.weights.row(j).iter().zip(planted) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    println!("noiseless recovery, max abs error {worst:.2e}");

    let ds = generate(&SynthConfig::default())?;
    let map = spatial_knn(ds.geometry(), 6)?;
    for method in [MethodTag::Slm, MethodTag::LmmPeak, MethodTag::FcMesh] {
        let fm = extract_features(&ds, method, Some(&map), &ExtractOptions::default())?;
        println!("{method}: {} x {} ({})", fm.rows(), fm.cols(), fm.column_spec());
    }
    let fm = extract_features(&ds, MethodTag::MvpaMean, None, &ExtractOptions::default())?;
    println!("{}: {} x {}", fm.method, fm.rows(), fm.cols());
    Ok(())
}
