use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use voxmesh::analysis::{correlation_histogram, r2_histogram, robustness_csv, robustness_summary, R2Options};
use voxmesh::classify::{build_map, evaluate, select_mesh_size, train, TrainConfig};
use voxmesh::dataset::{load_dataset, save_dataset};
use voxmesh::mesh::{extract_features, ExtractOptions};
use voxmesh::pipeline::{parse_p_grid, run_pipeline, write_atomically, PipelineConfig, PipelineError, Stage};
use voxmesh::synth::{generate, SynthConfig};
use voxmesh::{Dataset, FeatureMatrix, LinearModel, MethodTag, NeighborKind, NeighborhoodMap, Split, TemporalMode};

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Parser)]
#[command(name = "voxmesh", version, about = "Local mesh features and decoding for voxel time series")]
struct Cli {
    /// Dataset directory (manifest.json + data.f64).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML config. `synth` reads a generator config, every other command a
    /// pipeline config (a run manifest works too). Flags win over the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset into --out.
    Synth,
    /// Write a neighbor map (`j: k1 .. kp` per line).
    Neighbors {
        #[arg(long)]
        kind: Option<NeighborKind>,
        #[arg(long)]
        p: usize,
    },
    /// Write the feature CSV of one method at one mesh size.
    Extract {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        p: Option<usize>,
        /// Use this map instead of building one.
        #[arg(long)]
        neighbors: Option<PathBuf>,
    },
    /// Fit the classifier on the train split of a feature CSV.
    Train {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        features: PathBuf,
    },
    /// Score a model on one split of a feature CSV.
    Eval {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Select the mesh size on validation and report test accuracy.
    Sweep {
        #[command(flatten)]
        opts: Opts,
    },
    /// Diagnostic histograms or the robustness table.
    Analyze {
        #[command(flatten)]
        opts: Opts,
        #[arg(long, value_enum)]
        what: What,
        #[arg(long)]
        p: Option<usize>,
        /// Map kind for corr and r2 (default: the method's).
        #[arg(long)]
        kind: Option<NeighborKind>,
        /// Methods for the robustness table.
        #[arg(long, value_delimiter = ',', default_value = "FLM,SLM,FMM-peak,LMM-peak")]
        methods: Vec<MethodTag>,
    },
    /// Every stage end to end, written atomically into --out.
    Pipeline {
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Corr,
    R2,
    Robustness,
}

/// Pipeline settings that may override the config file.
#[derive(Args, Default)]
struct Opts {
    #[arg(long)]
    method: Option<MethodTag>,
    /// `a..b`, `a,b,c` or a single size.
    #[arg(long)]
    p_grid: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    mode: Option<TemporalMode>,
    #[arg(long)]
    zscore: bool,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long)]
    fc_kind: Option<NeighborKind>,
    /// Mean-centered total sum of squares for R².
    #[arg(long)]
    centered: bool,
    #[arg(long)]
    bins: Option<usize>,
}

fn at<E: Into<Box<dyn std::error::Error + Send + Sync>>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

fn config_error(msg: impl Into<String>) -> PipelineError {
    PipelineError::new(Stage::Config, msg.into())
}

impl Cli {
    fn pipeline_config(&self, opts: &Opts) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = opts.method {
            cfg.method = m;
        }
        if let Some(g) = &opts.p_grid {
            cfg.p_grid = parse_p_grid(g).map_err(config_error)?;
        }
        if let Some(l) = opts.lambda {
            cfg.lambda = l;
        }
        if let Some(c) = opts.c {
            cfg.c = c;
        }
        if opts.mode.is_some() {
            cfg.mode = opts.mode;
        }
        cfg.zscore |= opts.zscore;
        if opts.no_standardize {
            cfg.standardize = false;
        }
        if let Some(k) = opts.fc_kind {
            cfg.fc_kind = k;
        }
        cfg.centered |= opts.centered;
        if let Some(b) = opts.bins {
            cfg.bins = b;
        }
        if cfg.dataset.as_os_str().is_empty() {
            return Err(config_error("no dataset given (--dataset or config file)"));
        }
        Ok(cfg)
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| config_error("this command needs --out"))
    }
}

/// Writes to `out` or, without one, to stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(at(Stage::Write))?;
            }
            fs::write(path, bytes).map_err(at(Stage::Write))
        }
        None => std::io::stdout().write_all(bytes).map_err(at(Stage::Write)),
    }
}

fn load(cfg: &PipelineConfig) -> Result<Dataset> {
    load_dataset(&cfg.dataset).map_err(at(Stage::Load))
}

fn read_features(path: &Path, method: MethodTag) -> Result<FeatureMatrix> {
    let file = fs::File::open(path).map_err(at(Stage::Load))?;
    FeatureMatrix::read_csv(BufReader::new(file), method).map_err(at(Stage::Load))
}

fn read_map(path: &Path) -> Result<NeighborhoodMap> {
    let file = fs::File::open(path).map_err(at(Stage::Load))?;
    NeighborhoodMap::read_text(BufReader::new(file)).map_err(at(Stage::Neighbors))
}

fn single_p(p: Option<usize>, cfg: &PipelineConfig) -> usize {
    p.unwrap_or(cfg.p_grid[0])
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth => {
            let mut cfg = match &cli.config {
                Some(path) => SynthConfig::load(path).map_err(at(Stage::Config))?,
                None => SynthConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = cli.out()?;
            let dataset = generate(&cfg).map_err(at(Stage::Load))?;
            save_dataset(&dataset, out).map_err(at(Stage::Write))?;
            fs::write(out.join("synth.toml"), cfg.to_toml()).map_err(at(Stage::Write))?;
            eprintln!("wrote {} samples to {}", dataset.len(), out.display());
        }
        Command::Neighbors { kind, p } => {
            let cfg = cli.pipeline_config(&Opts::default())?;
            let dataset = load(&cfg)?;
            let kind = kind.unwrap_or(NeighborKind::Spatial);
            let map = build_map(&dataset, kind, *p, cfg.seed).map_err(at(Stage::Neighbors))?;
            emit(cli.out.as_deref(), map.to_text().as_bytes())?;
        }
        Command::Extract { opts, p, neighbors } => {
            let cfg = cli.pipeline_config(opts)?;
            let dataset = load(&cfg)?;
            let map = match (neighbors, cfg.sweep_config().map_kind(cfg.method)) {
                (Some(path), _) => Some(read_map(path)?),
                (None, Some(kind)) => Some(
                    build_map(&dataset, kind, single_p(*p, &cfg), cfg.seed).map_err(at(Stage::Neighbors))?,
                ),
                (None, None) => None,
            };
            let xopts = ExtractOptions {
                lambda: cfg.lambda,
                mode: cfg.mode,
                zscore: cfg.zscore,
            };
            let features =
                extract_features(&dataset, cfg.method, map.as_ref(), &xopts).map_err(at(Stage::Extract))?;
            let mut csv = Vec::new();
            features.write_csv(&mut csv).map_err(at(Stage::Write))?;
            emit(cli.out.as_deref(), &csv)?;
        }
        Command::Train { opts, features } => {
            let cfg = cli.pipeline_config(opts)?;
            let dataset = load(&cfg)?;
            let fm = read_features(features, cfg.method)?;
            check_rows(&fm, &dataset)?;
            let idx = dataset.require_split(Split::Train).map_err(at(Stage::Load))?;
            let xtr = fm.select_rows(&idx);
            let tcfg = TrainConfig {
                c: cfg.c,
                seed: cfg.seed,
                standardize: cfg.standardize,
                ..TrainConfig::default()
            };
            let model = train(xtr.values.view(), &xtr.labels, dataset.class_count(), &tcfg)
                .map_err(at(Stage::Train))?;
            let mut json = serde_json::to_string_pretty(&model).map_err(at(Stage::Write))?;
            json.push('\n');
            emit(cli.out.as_deref(), json.as_bytes())?;
        }
        Command::Eval {
            opts,
            features,
            model,
            split,
        } => {
            let cfg = cli.pipeline_config(opts)?;
            let dataset = load(&cfg)?;
            let fm = read_features(features, cfg.method)?;
            check_rows(&fm, &dataset)?;
            let text = fs::read_to_string(model).map_err(at(Stage::Load))?;
            let model: LinearModel = serde_json::from_str(&text).map_err(at(Stage::Load))?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Validation => Split::Validation,
                SplitArg::Test => Split::Test,
            };
            let idx = dataset.require_split(split).map_err(at(Stage::Load))?;
            let x = fm.select_rows(&idx);
            let mut report = evaluate(&model, x.values.view(), &x.labels).map_err(at(Stage::Train))?;
            report.method = Some(cfg.method);
            emit(cli.out.as_deref(), report.to_json().as_bytes())?;
        }
        Command::Sweep { opts } => {
            let cfg = cli.pipeline_config(opts)?;
            let dataset = load(&cfg)?;
            let outcome = select_mesh_size(&dataset, cfg.method, &cfg.p_grid, &cfg.sweep_config())
                .map_err(at(Stage::Train))?;
            let r = &outcome.report;
            eprintln!(
                "{}: test accuracy {:.4} at p={}",
                cfg.method,
                r.accuracy,
                r.chosen_p.map_or("-".into(), |p| p.to_string())
            );
            match &cli.out {
                Some(out) => write_atomically(
                    out,
                    &[
                        ("report.json".into(), r.to_json().into_bytes()),
                        ("curve.csv".into(), r.curve_csv().into_bytes()),
                    ],
                )?,
                None => emit(None, r.to_json().as_bytes())?,
            }
        }
        Command::Analyze {
            opts,
            what,
            p,
            kind,
            methods,
        } => {
            let cfg = cli.pipeline_config(opts)?;
            let dataset = load(&cfg)?;
            let out = cli.out()?;
            let files = match what {
                What::Corr | What::R2 => {
                    let kind = kind
                        .or(cfg.sweep_config().map_kind(cfg.method))
                        .ok_or_else(|| config_error(format!("{} has no neighbor map; pass --kind", cfg.method)))?;
                    let map = build_map(&dataset, kind, single_p(*p, &cfg), cfg.seed)
                        .map_err(at(Stage::Neighbors))?;
                    let (name, hist, title) = if matches!(what, What::Corr) {
                        let h = correlation_histogram(&dataset, &map, cfg.bins).map_err(at(Stage::Analyze))?;
                        ("corr_hist", h, format!("{kind} neighbor correlation"))
                    } else {
                        let mode = cfg.method.fixed_mode().or(cfg.mode).unwrap_or(TemporalMode::All);
                        let r2opts = R2Options {
                            lambda: cfg.lambda,
                            mode,
                            centered: cfg.centered,
                            bins: cfg.bins,
                        };
                        let h = r2_histogram(&dataset, &map, &r2opts).map_err(at(Stage::Analyze))?;
                        ("r2_hist", h, format!("{kind} mesh R²"))
                    };
                    eprintln!("{name}: n={} mean={:.4} std={:.4}", hist.n, hist.mean, hist.std);
                    vec![
                        (format!("{name}.csv"), hist.to_csv().into_bytes()),
                        (format!("{name}.svg"), hist.to_svg(&title).into_bytes()),
                    ]
                }
                What::Robustness => {
                    let scfg = cfg.sweep_config();
                    let mut per_p = BTreeMap::new();
                    for &m in methods {
                        let o = select_mesh_size(&dataset, m, &cfg.p_grid, &scfg).map_err(at(Stage::Train))?;
                        per_p.insert(m, o.report.curve.iter().map(|c| c.test_accuracy).collect::<Vec<_>>());
                    }
                    let rows = robustness_summary(&per_p).map_err(at(Stage::Analyze))?;
                    let csv = robustness_csv(&rows);
                    eprint!("{csv}");
                    vec![("robustness.csv".to_string(), csv.into_bytes())]
                }
            };
            write_atomically(out, &files)?;
        }
        Command::Pipeline { opts } => {
            let cfg = cli.pipeline_config(opts)?;
            let out = cli.out()?;
            let summary = run_pipeline(&cfg, out)?;
            eprintln!(
                "{}: test accuracy {:.4} at p={}; {} files in {}",
                cfg.method,
                summary.accuracy,
                summary.chosen_p.map_or("-".into(), |p| p.to_string()),
                summary.files.len(),
                summary.out.display()
            );
        }
    }
    Ok(())
}

fn check_rows(fm: &FeatureMatrix, dataset: &Dataset) -> Result<()> {
    let ids: Vec<u64> = dataset.samples().iter().map(|s| s.stimulus_id).collect();
    if fm.sample_ids != ids {
        return Err(PipelineError::new(
            Stage::Load,
            "feature rows do not match the dataset samples".to_string(),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: [config] {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
