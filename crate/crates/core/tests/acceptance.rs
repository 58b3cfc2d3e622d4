//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use voxmesh::analysis::{neighbor_correlations, r2_values, R2Options};
use voxmesh::classify::{
    build_map, evaluate, evaluate_predictions, select_mesh_size, train, SweepConfig, TrainConfig,
};
use voxmesh::dataset::save_dataset;
use voxmesh::mesh::{estimate_mesh, ridge_weights, MeshOptions};
use voxmesh::neighborhood::{connectivity, spatial_knn};
use voxmesh::pipeline::{run_pipeline, PipelineConfig};
use voxmesh::synth::{generate, planted_coupling, SynthConfig};
use voxmesh::{Dataset, MethodTag, NeighborKind, Sample, Split, TemporalMode, VolumeGeometry};

use common::{connectivity_oracle, knn_oracle, relative_error, ridge_oracle};

const SEEDS: u64 = 10;
const P_GRID: std::ops::RangeInclusive<usize> = 2..=10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn ridge_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lambdas = [1e-10, 0.5, 4.0];
    let t0 = Instant::now();
    let mut worst = 0.0_f64;
    let mut worst_case = (0, 0, 0.0);
    for i in 0..1000 {
        let d = rng.random_range(1..=12);
        let p = rng.random_range(1..=30);
        let lambda = lambdas[i % 3];
        let q = Array2::from_shape_fn((d, p), |_| rng.sample::<f64, _>(StandardNormal));
        let r: ndarray::Array1<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let got = match ridge_weights(r.view(), q.view(), lambda) {
            Ok(a) => a,
            Err(e) => return outcome(false, format!("system {i} ({d}x{p}, lambda={lambda}): {e}")),
        };
        let want = ridge_oracle(r.view(), q.view(), lambda);
        let err = relative_error(got.view(), want.view());
        if err > worst {
            worst = err;
            worst_case = (d, p, lambda);
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        format!(
            "max relative error {worst:.2e} (D'={}, p={}, lambda={}) over 1000 systems in {}",
            worst_case.0,
            worst_case.1,
            worst_case.2,
            secs(elapsed)
        ),
    )
}

fn connectivity_oracle_equivalence() -> Outcome {
    // 40 training samples of 5 volumes: N*D = 200 rows over 50 voxels
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let geometry = VolumeGeometry::grid(5, 5, 2).unwrap();
    let shared: Vec<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
    let mut samples = Vec::new();
    for i in 0..40 {
        let data = Array2::from_shape_fn((5, 50), |(d, j)| {
            let z: f64 = rng.sample(StandardNormal);
            (j as f64 / 50.0) * shared[i * 5 + d] + z
        });
        let mut s = Sample::new(i as u64, i % 2, data);
        s.split = Some(Split::Train);
        samples.push(s);
    }
    let ds = Dataset::new(geometry, vec!["a".into(), "b".into()], samples).unwrap();
    let conn = connectivity(&ds).unwrap();
    let oracle = connectivity_oracle(&ds.train_responses().unwrap());
    let diff = conn
        .values()
        .iter()
        .zip(oracle.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let diag_exact = (0..50).all(|j| conn.get(j, j) == 1.0);
    outcome(
        diff <= 1e-12 && diag_exact,
        format!("max abs diff {diff:.2e} on 50 voxels, diagonal exactly 1: {diag_exact}"),
    )
}

fn spatial_knn_geometry() -> Outcome {
    let g = VolumeGeometry::grid(7, 7, 7).unwrap();
    let coords = g.coords().to_vec();
    let index = |c: [i64; 3]| ((c[0] * 7 + c[1]) * 7 + c[2]) as usize;
    let six = spatial_knn(&g, 6).unwrap();
    let mut interior = 0;
    let mut face_ok = 0;
    for (j, c) in coords.iter().enumerate() {
        if c.iter().any(|&x| x == 0 || x == 6) {
            continue;
        }
        interior += 1;
        let want: BTreeSet<usize> = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
            .iter()
            .map(|o| index([c[0] + o[0], c[1] + o[1], c[2] + o[2]]))
            .collect();
        let got: BTreeSet<usize> = six.neighbors(j).iter().copied().collect();
        face_ok += usize::from(got == want);
    }
    let eighteen = spatial_knn(&g, 18).unwrap();
    let sort_ok = (0..coords.len())
        .filter(|&j| eighteen.neighbors(j) == knn_oracle(&coords, g.spacing(), j, 18).as_slice())
        .count();
    outcome(
        face_ok == interior && sort_ok == coords.len(),
        format!(
            "p=6 face-adjacent on {face_ok}/{interior} interior voxels; p=18 equals sort oracle on {sort_ok}/{}",
            coords.len()
        ),
    )
}

fn generator_inversion() -> Outcome {
    let cfg = SynthConfig {
        noise_std: 0.0,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg).unwrap();
    let truth = planted_coupling(&cfg).unwrap();
    let opts = MeshOptions {
        lambda: 1e-10,
        mode: TemporalMode::All,
        zscore: false,
    };
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for s in ds.samples() {
        let w = estimate_mesh(s, &truth.map, &opts).unwrap();
        for j in truth.coupled_voxels() {
            for (a, b) in w.weights.row(j).iter().zip(truth.weights[s.label].row(j)) {
                worst = worst.max((a - b).abs());
                checked += 1;
            }
        }
    }
    outcome(
        worst <= 1e-8,
        format!("max abs error {worst:.2e} over {checked} planted weights"),
    )
}

/// Test accuracy and std over p of every method of interest, per seed.
struct SeedRun {
    acc: std::collections::BTreeMap<MethodTag, f64>,
    std: std::collections::BTreeMap<MethodTag, f64>,
}

fn sweep_seeds(methods: &[MethodTag]) -> Vec<SeedRun> {
    let grid: Vec<usize> = P_GRID.collect();
    (0..SEEDS)
        .map(|seed| {
            let ds = generate(&SynthConfig {
                seed,
                ..SynthConfig::default()
            })
            .unwrap();
            let cfg = SweepConfig {
                seed,
                ..SweepConfig::default()
            };
            let mut run = SeedRun {
                acc: Default::default(),
                std: Default::default(),
            };
            for &m in methods {
                let o = select_mesh_size(&ds, m, &grid, &cfg).unwrap();
                run.acc.insert(m, o.report.accuracy);
                run.std.insert(m, o.report.curve_std.unwrap_or(0.0));
            }
            run
        })
        .collect()
}

fn count(runs: &[SeedRun], f: impl Fn(&SeedRun) -> bool) -> usize {
    runs.iter().filter(|r| f(r)).count()
}

fn mean_acc(runs: &[SeedRun], m: MethodTag) -> f64 {
    runs.iter().map(|r| r.acc[&m]).sum::<f64>() / runs.len() as f64
}

fn qualitative_ordering() -> Outcome {
    use MethodTag::*;
    let t0 = Instant::now();
    let runs = sweep_seeds(&[Flm, Slm, FcMesh, LmRand, MvpaMean, MvpaPeak]);
    let elapsed = t0.elapsed();
    let need = 8;
    let checks = [
        ("FLM>=0.90", mean_acc(&runs, Flm) >= 0.90, count(&runs, |r| r.acc[&Flm] >= 0.90)),
        ("SLM>=0.90", mean_acc(&runs, Slm) >= 0.90, count(&runs, |r| r.acc[&Slm] >= 0.90)),
        (
            "MVPA-mean<=0.60",
            mean_acc(&runs, MvpaMean) <= 0.60,
            count(&runs, |r| r.acc[&MvpaMean] <= 0.60),
        ),
        (
            "MVPA-peak<=0.60",
            mean_acc(&runs, MvpaPeak) <= 0.60,
            count(&runs, |r| r.acc[&MvpaPeak] <= 0.60),
        ),
        ("FC-mesh<FLM", true, count(&runs, |r| r.acc[&FcMesh] < r.acc[&Flm])),
        ("FC-mesh<SLM", true, count(&runs, |r| r.acc[&FcMesh] < r.acc[&Slm])),
        ("LM-rand<SLM", true, count(&runs, |r| r.acc[&LmRand] < r.acc[&Slm])),
    ];
    let pass = checks.iter().all(|(_, mean_ok, n)| *mean_ok && *n >= need) && elapsed < Duration::from_secs(300);
    let means = [Flm, Slm, FcMesh, LmRand, MvpaMean, MvpaPeak]
        .iter()
        .map(|&m| format!("{m}={:.3}", mean_acc(&runs, m)))
        .collect::<Vec<_>>()
        .join(" ");
    let seeds = checks
        .iter()
        .map(|(name, _, n)| format!("{name}:{n}/{SEEDS}"))
        .collect::<Vec<_>>()
        .join(" ");
    outcome(pass, format!("means {means}; seeds {seeds}; {}", secs(elapsed)))
}

fn robustness_over_p() -> Outcome {
    use MethodTag::*;
    let runs = sweep_seeds(&[Flm, FmmPeak, Slm, LmmPeak]);
    let functional = count(&runs, |r| r.std[&Flm] <= r.std[&FmmPeak]);
    let spatial = count(&runs, |r| r.std[&Slm] <= r.std[&LmmPeak]);
    let pair = |a, b| {
        runs.iter()
            .map(|r| format!("{:.3}/{:.3}", r.std[&a], r.std[&b]))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        functional >= 8 && spatial >= 8,
        format!(
            "std FLM<=FMM-peak {functional}/{SEEDS} [{}]; std SLM<=LMM-peak {spatial}/{SEEDS} [{}]",
            pair(Flm, FmmPeak),
            pair(Slm, LmmPeak)
        ),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn r2_and_correlation_orderings() -> Outcome {
    let p = 4;
    let opts = R2Options::default();
    let mut r2_ok = 0;
    let mut corr_ok = 0;
    let mut lines = Vec::new();
    for seed in 0..SEEDS {
        let ds = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let stats = |kind| {
            let map = build_map(&ds, kind, p, seed).unwrap();
            let r2 = mean(&r2_values(&ds, &map, &opts).unwrap().0);
            let corr = mean(&neighbor_correlations(&ds, &map).unwrap());
            (r2, corr)
        };
        let (sr2, sc) = stats(NeighborKind::Spatial);
        let (fr2, fc) = stats(NeighborKind::Functional);
        let (rr2, rc) = stats(NeighborKind::Random);
        r2_ok += usize::from(sr2 > rr2 && fr2 > rr2);
        corr_ok += usize::from(sc > rc && fc > rc);
        if seed == 0 {
            lines.push(format!(
                "seed 0: R² s/f/r {sr2:.4}/{fr2:.4}/{rr2:.4}, corr s/f/r {sc:.3}/{fc:.3}/{rc:.3}"
            ));
        }
    }

    // exact fits: noiseless coupled voxels regressed on their true drivers
    let cfg = SynthConfig {
        noise_std: 0.0,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg).unwrap();
    let truth = planted_coupling(&cfg).unwrap();
    let exact = R2Options {
        lambda: 0.0,
        ..R2Options::default()
    };
    let (values, _) = r2_values(&ds, &truth.map, &exact).unwrap();
    let m = ds.voxel_count();
    let coupled: Vec<usize> = truth.coupled_voxels().collect();
    let perfect_dev = (0..ds.len())
        .flat_map(|i| coupled.iter().map(move |&j| i * m + j))
        .map(|k| (values[k] - 1.0).abs())
        .fold(0.0, f64::max);

    outcome(
        r2_ok == SEEDS as usize && corr_ok == SEEDS as usize && perfect_dev <= 1e-12,
        format!(
            "R² above random {r2_ok}/{SEEDS}, correlation above random {corr_ok}/{SEEDS}, perfect-fit |R²-1| <= {perfect_dev:.1e}; {}",
            lines.join("")
        ),
    )
}

fn pipeline_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    save_dataset(&generate(&SynthConfig::default()).unwrap(), &data).unwrap();
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for method in [MethodTag::Flm, MethodTag::LmRand] {
        let cfg = PipelineConfig {
            dataset: data.clone(),
            method,
            p_grid: (2..=6).collect(),
            ..PipelineConfig::default()
        };
        let mut outputs = Vec::new();
        for threads in [1, 4, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let out = dir.path().join(format!("{method}-{threads}"));
            let summary = pool.install(|| run_pipeline(&cfg, &out)).unwrap();
            let files: Vec<(String, Vec<u8>)> = summary
                .files
                .iter()
                .map(|f| (f.clone(), fs::read(out.join(f)).unwrap()))
                .collect();
            outputs.push((threads, files));
        }
        let (_, reference) = &outputs[0];
        for (threads, files) in &outputs[1..] {
            for ((name, a), (_, b)) in reference.iter().zip(files) {
                compared += 1;
                if a != b {
                    mismatches.push(format!("{method}/{name}@{threads}"));
                }
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{compared} file comparisons at 1/4/8 threads, mismatches: {mismatches:?}"),
    )
}

fn classifier_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut toy = |centers: &[[f64; 2]], n: usize| {
        let k = centers.len();
        let x = Array2::from_shape_fn((n, 2), |(i, a)| centers[i % k][a] + rng.random_range(-1.0..1.0));
        let y: Vec<usize> = (0..n).map(|i| i % k).collect();
        (x, y)
    };
    let mut accs = Vec::new();
    for centers in [&[[3.0, 0.0], [-3.0, 0.0]][..], &[[4.0, 0.0], [0.0, 4.0], [-4.0, 0.0], [0.0, -4.0]][..]] {
        let (x, y) = toy(centers, 200);
        let (xt, yt) = toy(centers, 200);
        let model = train(x.view(), &y, centers.len(), &TrainConfig::default()).unwrap();
        let train_acc = evaluate(&model, x.view(), &y).unwrap().accuracy;
        let test_acc = evaluate(&model, xt.view(), &yt).unwrap().accuracy;
        accs.push((centers.len(), train_acc, test_acc));
    }
    let truth: Vec<usize> = (0..100).map(|i| i % 2).collect();
    let constant = evaluate_predictions(&[0; 100], &truth, 2).unwrap().accuracy;
    outcome(
        accs.iter().all(|&(_, a, b)| a == 1.0 && b == 1.0) && constant == 0.5,
        format!(
            "{}; constant predictor {constant}",
            accs.iter()
                .map(|(k, a, b)| format!("{k}-class train {a} test {b}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("ridge oracle equivalence", ridge_oracle_equivalence),
        ("connectivity oracle", connectivity_oracle_equivalence),
        ("spatial k-NN geometry", spatial_knn_geometry),
        ("generator inversion", generator_inversion),
        ("qualitative method ordering", qualitative_ordering),
        ("robustness over mesh size", robustness_over_p),
        ("R² and correlation orderings", r2_and_correlation_orderings),
        ("pipeline determinism", pipeline_determinism),
        ("classifier sanity", classifier_sanity),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{verdict} {} {name}: {} [{}]", i + 1, o.detail, secs(t0.elapsed()));
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
