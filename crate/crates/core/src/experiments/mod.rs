//! Configuration-driven sweeps, learning curves, result tables, plots and
//! replayable run manifests.

mod config;
mod plot;
mod sweep;

pub use config::{DetectorSet, DetectorTemplate, ExperimentConfig, Layouts, SceneConfig, NOISE_PSD, SCHEMA_VERSION};
pub use plot::{render_learning_curves, render_sweep};
pub use sweep::{
    run_energy_sweep, run_learning_curve, run_rate_sweep, run_sweep, run_sweep_on, run_width_sweep, trace_field, Axis,
    LearningCurve, LearningCurvePlan, LearningCurveResult, Method, Seeds, SummaryRow, SweepPlan, SweepResult, SweepRow,
    SWEEP_CSV_HEADER,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Job {
    Sweep(SweepPlan),
    LearningCurve(LearningCurvePlan),
}

/// Hex SHA-256 of the canonical JSON encoding of config and job.
pub fn config_hash(cfg: &ExperimentConfig, job: &Job) -> String {
    let text = serde_json::to_string(&(cfg, job)).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub config: ExperimentConfig,
    pub job: Job,
    /// Output file names, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, job: &Job) -> Self {
        let repeats = match job {
            Job::Sweep(p) => p.repeats,
            Job::LearningCurve(_) => 1,
        };
        Manifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(cfg, job),
            seeds: Seeds::derive(cfg.seed, repeats),
            config: cfg.clone(),
            job: job.clone(),
            outputs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("manifest schema version {} is not supported", m.schema_version)));
        }
        let hash = config_hash(&m.config, &m.job);
        if hash != m.config_hash {
            return Err(Error::Config("manifest hash does not match its config".into()));
        }
        Ok(m)
    }
}

/// Outcome of a job, before it is written out.
#[derive(Debug, Clone)]
pub enum JobOutput {
    Sweep(SweepResult),
    LearningCurve(LearningCurveResult),
}

pub fn run_job(cfg: &ExperimentConfig, job: &Job) -> Result<JobOutput> {
    match job {
        Job::Sweep(plan) => run_sweep(cfg, plan).map(JobOutput::Sweep),
        Job::LearningCurve(plan) => run_learning_curve(cfg, plan).map(JobOutput::LearningCurve),
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

fn render<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(f: F) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

/// Writes tables, plots and the manifest into `dir` and returns the
/// manifest path.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, job: &Job, output: &JobOutput) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::new(cfg, job);
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    match output {
        JobOutput::Sweep(res) => {
            let stem = res.plan.axis.name();
            files.push((format!("{stem}_sweep.csv"), render(|b| res.write_csv(b))));
            files.push((format!("{stem}_summary.csv"), render(|b| res.write_summary_csv(b))));
            if let Ok(svg) = render_sweep(res) {
                files.push((format!("{stem}_sweep.svg"), svg.into_bytes()));
            }
        }
        JobOutput::LearningCurve(res) => {
            files.push(("learning_curve.csv".into(), render(|b| res.write_csv(b))));
            files.push(("learning_curve_summary.csv".into(), render(|b| res.write_summary_csv(b))));
            if let Ok(svg) = render_learning_curves(res) {
                files.push(("learning_curve.svg".into(), svg.into_bytes()));
            }
        }
    }
    for (name, bytes) in &files {
        write_file(dir, name, bytes)?;
        manifest.outputs.push(name.clone());
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(dir, "manifest.json", json.as_bytes())?;
    Ok(dir.join("manifest.json"))
}

/// Re-executes a manifest's job and writes the outputs into `dir`.
pub fn rerun(manifest_path: &Path, dir: &Path) -> Result<PathBuf> {
    let m = Manifest::load(manifest_path)?;
    let out = run_job(&m.config, &m.job)?;
    write_outputs(dir, &m.config, &m.job, &out)
}

/// Rounds to 12 significant digits so unit conversions print cleanly.
pub(crate) fn tidy(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let cfg = ExperimentConfig::fast();
        let job = Job::Sweep(SweepPlan::energy(&cfg));
        let h = config_hash(&cfg, &job);
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash(&cfg.clone(), &job.clone()));
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(h, config_hash(&other, &job));
    }

    #[test]
    fn manifest_round_trip_and_tamper_check() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::fast();
        let job = Job::LearningCurve(LearningCurvePlan::new(&cfg));
        let m = Manifest::new(&cfg, &job);
        let path = dir.path().join("m.json");
        std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(Manifest::load(&path).unwrap(), m);
        let mut bad = m.clone();
        bad.config.seed = 99;
        std::fs::write(&path, serde_json::to_string(&bad).unwrap()).unwrap();
        assert!(matches!(Manifest::load(&path), Err(Error::Config(_))));
    }

    #[test]
    fn tidy_rounds_conversions() {
        assert_eq!(tidy(0.01e-6 * 1e6), 0.01);
        assert_eq!(tidy(500e6 * 1e-6), 500.0);
        assert_eq!(tidy(0.0), 0.0);
    }
}
