use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ocirloc::ann::{evaluate_rmse, read_checkpoint, train, write_checkpoint};
use ocirloc::baselines::trilateration_rmse;
use ocirloc::channel::{build_patch_table, ocir};
use ocirloc::dataset::{
    read_dataset, split, standardize, write_dataset, write_dataset_csv, DatasetHeader, FingerprintRecord, Sampling,
};
use ocirloc::experiments::{
    render_learning_curves, render_sweep, rerun, run_job, trace_field, write_outputs, Axis, DetectorSet,
    ExperimentConfig, Job, LearningCurvePlan, LearningCurveResult, Manifest, Seeds, SweepPlan, SweepResult,
};
use ocirloc::signal::NoiseSpec;
use ocirloc::{Error, Result};

/// Fingerprint localization from sampled optical channel impulse responses.
#[derive(Parser)]
#[command(name = "ocirloc", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment config; starts from the profile when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in profile: fast or paper.
    #[arg(long, global = true, default_value = "fast")]
    profile: String,
    /// Experiment seed. Required for the paper profile.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override, `dotted.key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective config as TOML.
    Config,
    /// Binned impulse response of one detector at one location, as CSV.
    Ocir {
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        /// Detector index in the combined scene (0 one-PD, 1-2 two-PD, 3-5 anchors).
        #[arg(long, default_value_t = 0)]
        pd: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a noisy fingerprint dataset over the grid.
    Dataset {
        #[command(flatten)]
        features: Features,
        /// Binary dataset file.
        #[arg(long)]
        out: PathBuf,
        /// Also write a CSV copy.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train a network on a dataset file and report test RMSE.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output.
        #[arg(long)]
        model: PathBuf,
        /// Per-epoch learning curve CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset file.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// RSS baselines on the anchor detectors.
    Baseline {
        #[arg(value_enum)]
        kind: BaselineKind,
        /// Pulse energy, uJ.
        #[arg(long)]
        energy: Option<f64>,
    },
    /// Sweep one axis and write tables, a plot and a manifest.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Axis values in table units (uJ, Msps or ns), comma separated.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        repeats: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learning curves for one and two detectors at low and high energy.
    LearningCurve {
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render the SVG plots of a finished run from its tables.
    Plot { manifest: PathBuf },
    /// Re-execute a manifest into a new directory.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Features {
    #[arg(long, value_enum, default_value = "two-pd")]
    detectors: DetectorArg,
    /// Sampling rate in Msps, or `dc` for one window-averaged value per detector.
    #[arg(long, default_value = "500")]
    rate: String,
    /// Pulse energy, uJ.
    #[arg(long)]
    energy: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    OnePd,
    TwoPd,
    Anchors,
}

impl From<DetectorArg> for DetectorSet {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::OnePd => DetectorSet::OnePd,
            DetectorArg::TwoPd => DetectorSet::TwoPd,
            DetectorArg::Anchors => DetectorSet::Anchors,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Trilateration,
    DcRssAnn,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Energy,
    Rate,
    Width,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Energy => Axis::PulseEnergy,
            AxisArg::Rate => Axis::SamplingRate,
            AxisArg::Width => Axis::PulseWidth,
        }
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let base = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::profile(&g.profile)?,
    };
    let mut cfg = base.with_overrides(&g.sets)?;
    match g.seed {
        Some(seed) => cfg.seed = seed,
        None if cfg.profile == "paper" => {
            return Err(Error::Config("the paper profile needs an explicit --seed".into()));
        }
        None => {}
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.into(), source: e }
}

fn parse_sampling(rate: &str) -> Result<Sampling> {
    if rate.eq_ignore_ascii_case("dc") {
        return Ok(Sampling::Dc);
    }
    let msps: f64 = rate.parse().map_err(|_| Error::Config(format!("rate '{rate}' is neither Msps nor dc")))?;
    Ok(Sampling::Rate(msps * 1e6))
}

fn records(cfg: &ExperimentConfig, f: &Features) -> Result<(DatasetHeader, Vec<FingerprintRecord>)> {
    let mut pulse = cfg.pulse;
    if let Some(e) = f.energy {
        pulse.energy = e * 1e-6;
    }
    let sampling = parse_sampling(&f.rate)?;
    let field = trace_field(cfg, pulse.width)?;
    let set = field.unit_samples(&cfg.detectors(f.detectors.into()), &pulse, sampling)?;
    let seeds = Seeds::derive(cfg.seed, 1);
    let recs = set.realize(&field, &pulse, &NoiseSpec { psd: cfg.noise_psd, seed: seeds.noise });
    let header = DatasetHeader {
        q: set.pds.len() as u32,
        samples_per_pd: (set.feature_len() / set.pds.len()) as u32,
        rate: sampling.rate_label(),
        grid_spacing: cfg.grid.spacing,
        grid_margin: cfg.grid.margin,
    };
    Ok((header, recs))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let seeds = Seeds::derive(cfg.seed, cfg.repeats);
    match cli.command {
        Command::Config => print!("{}", cfg.to_toml()),
        Command::Ocir { x, y, pd, out } => {
            let scene = cfg.scene()?;
            let det = scene
                .pds
                .get(pd)
                .ok_or_else(|| Error::Config(format!("detector {pd} out of range (0..{})", scene.pds.len())))?;
            let table = build_patch_table(&scene, det)?;
            let profile = ocir(&scene, &cfg.ue().at(x, y), det, &table, &cfg.ocir)?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    profile.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_at(&path))?;
                }
                None => match profile.write_csv(std::io::stdout().lock()) {
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                    other => other.map_err(io_at(Path::new("<stdout>")))?,
                },
            }
        }
        Command::Dataset { features, out, csv } => {
            let (header, recs) = records(&cfg, &features)?;
            let mut w = create(&out)?;
            write_dataset(&mut w, &header, &recs)?;
            w.flush().map_err(io_at(&out))?;
            if let Some(path) = csv {
                let mut w = create(&path)?;
                write_dataset_csv(&mut w, &recs).and_then(|_| w.flush()).map_err(io_at(&path))?;
            }
            eprintln!("{} records, {} features each -> {}", recs.len(), header.record_len(), out.display());
        }
        Command::Train { data, model, report } => {
            let (_, recs) = read_dataset(open(&data)?)?;
            let ds = standardize(split(recs, seeds.split)?, cfg.standardize)?;
            let tc = ocirloc::ann::TrainConfig { seed: seeds.train[0], ..cfg.train.clone() };
            let (net, rep) = train(&ds, &tc)?;
            let mut w = create(&model)?;
            write_checkpoint(&mut w, &net, ds.standardizer.as_ref())?;
            w.flush().map_err(io_at(&model))?;
            if let Some(path) = report {
                let mut w = create(&path)?;
                rep.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_at(&path))?;
            }
            println!(
                "best epoch {} of {}, validation {:.4} cm, test {:.4} cm",
                rep.best_epoch,
                rep.stopped_epoch,
                rep.best_val_rmse_cm(),
                evaluate_rmse(&net, &ds.test)?
            );
        }
        Command::Evaluate { data, model } => {
            let (_, mut recs) = read_dataset(open(&data)?)?;
            let (net, st) = read_checkpoint(open(&model)?)?;
            if let Some(st) = st {
                recs.iter_mut().for_each(|r| st.apply_record(r));
            }
            println!("{:.4} cm over {} records", evaluate_rmse(&net, &recs)?, recs.len());
        }
        Command::Baseline { kind, energy } => {
            let mut pulse = cfg.pulse;
            if let Some(e) = energy {
                pulse.energy = e * 1e-6;
            }
            let rmse = match kind {
                BaselineKind::Trilateration => {
                    let field = trace_field(&cfg, pulse.width)?;
                    let noise = NoiseSpec { psd: cfg.noise_psd, seed: seeds.noise };
                    trilateration_rmse(&field, &cfg.detectors(DetectorSet::Anchors), &pulse, &noise, cfg.edge_exclusion)?
                }
                BaselineKind::DcRssAnn => {
                    let f = Features { detectors: DetectorArg::Anchors, rate: "dc".into(), energy };
                    let (_, recs) = records(&cfg, &f)?;
                    let tc = ocirloc::ann::TrainConfig { seed: seeds.train[0], ..cfg.train.clone() };
                    ocirloc::baselines::ann_rmse(recs, seeds.split, cfg.standardize, &tc)?.0
                }
            };
            println!("{rmse:.4} cm");
        }
        Command::Sweep { axis, values, repeats, out } => {
            let axis: Axis = axis.into();
            let mut plan = SweepPlan::for_axis(axis, &cfg);
            if let Some(v) = values {
                plan.values = v.iter().map(|x| x / axis.display_scale()).collect();
            }
            if let Some(r) = repeats {
                plan.repeats = r;
            }
            finish(&cfg, Job::Sweep(plan), &out)?;
        }
        Command::LearningCurve { out } => finish(&cfg, Job::LearningCurve(LearningCurvePlan::new(&cfg)), &out)?,
        Command::Plot { manifest } => replot(&manifest)?,
        Command::Rerun { manifest, out } => {
            let path = rerun(&manifest, &out)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn finish(cfg: &ExperimentConfig, job: Job, out: &Path) -> Result<()> {
    let output = run_job(cfg, &job)?;
    let path = write_outputs(out, cfg, &job, &output)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn replot(manifest: &Path) -> Result<()> {
    let m = Manifest::load(manifest)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let (table, svg_name, svg) = match &m.job {
        Job::Sweep(plan) => {
            let name = format!("{}_sweep.csv", plan.axis.name());
            let res = SweepResult::read_csv(open(&dir.join(&name))?, plan.clone())?;
            (name, format!("{}_sweep.svg", plan.axis.name()), render_sweep(&res)?)
        }
        Job::LearningCurve(_) => {
            let name = "learning_curve.csv".to_string();
            let res = LearningCurveResult::read_csv(open(&dir.join(&name))?)?;
            (name, "learning_curve.svg".to_string(), render_learning_curves(&res)?)
        }
    };
    let path = dir.join(&svg_name);
    std::fs::write(&path, svg).map_err(io_at(&path))?;
    eprintln!("{table} -> {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
