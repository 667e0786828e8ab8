use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::config::{DetectorSet, ExperimentConfig};
use super::tidy;
use crate::ann::{TrainConfig, TrainReport};
use crate::baselines::{ann_rmse, trilateration_rmse};
use crate::dataset::{generate_grid, FingerprintField, SampleSet, Sampling};
use crate::error::{Error, Result};
use crate::signal::{mix_seed, NoiseSpec, PulseSpec};

const NOISE_TAG: u64 = 0x6e6f697365;
const SPLIT_TAG: u64 = 0x73706c6974;
const TRAIN_TAG: u64 = 0x747261696e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    PulseEnergy,
    SamplingRate,
    PulseWidth,
}

impl Axis {
    /// Factor from SI units to the unit written in result tables.
    pub fn display_scale(&self) -> f64 {
        match self {
            Axis::PulseEnergy => 1e6,
            Axis::SamplingRate => 1e-6,
            Axis::PulseWidth => 1e9,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Axis::PulseEnergy => "Pulse energy (uJ)",
            Axis::SamplingRate => "Sampling rate (Msps)",
            Axis::PulseWidth => "Pulse width (ns)",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Axis::PulseEnergy => "energy",
            Axis::SamplingRate => "rate",
            Axis::PulseWidth => "width",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    /// Network over sampled impulse-response waveforms. `rate` is ignored
    /// on the sampling-rate axis.
    OcirAnn { detectors: DetectorSet, rate: f64 },
    /// Network over one DC value per anchor.
    DcRssAnn,
    Trilateration,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::OcirAnn { .. } => "ocir-ann",
            Method::DcRssAnn => "dc-rss-ann",
            Method::Trilateration => "trilateration",
        }
    }

    fn detectors(&self) -> DetectorSet {
        match *self {
            Method::OcirAnn { detectors, .. } => detectors,
            Method::DcRssAnn | Method::Trilateration => DetectorSet::Anchors,
        }
    }
}

/// One swept axis with every other parameter held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub axis: Axis,
    /// Axis values in SI units, ascending.
    pub values: Vec<f64>,
    /// Adds the DC point to a sampling-rate sweep.
    #[serde(default)]
    pub include_dc: bool,
    pub methods: Vec<Method>,
    pub repeats: u32,
    pub pulse: PulseSpec,
}

impl SweepPlan {
    /// 0.01 to 10 μJ with every method.
    pub fn energy(cfg: &ExperimentConfig) -> Self {
        SweepPlan {
            axis: Axis::PulseEnergy,
            values: [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0].iter().map(|e| e * 1e-6).collect(),
            include_dc: false,
            methods: vec![
                Method::OcirAnn { detectors: DetectorSet::OnePd, rate: 50e6 },
                Method::OcirAnn { detectors: DetectorSet::OnePd, rate: 500e6 },
                Method::OcirAnn { detectors: DetectorSet::TwoPd, rate: 50e6 },
                Method::OcirAnn { detectors: DetectorSet::TwoPd, rate: 500e6 },
                Method::Trilateration,
                Method::DcRssAnn,
            ],
            repeats: cfg.repeats,
            pulse: cfg.pulse,
        }
    }

    /// 50 to 1000 Msps plus the DC point, one and two detectors.
    pub fn rate(cfg: &ExperimentConfig) -> Self {
        SweepPlan {
            axis: Axis::SamplingRate,
            values: [50.0, 100.0, 200.0, 500.0, 1000.0].iter().map(|r| r * 1e6).collect(),
            include_dc: true,
            methods: vec![
                Method::OcirAnn { detectors: DetectorSet::OnePd, rate: cfg.sampling_rate },
                Method::OcirAnn { detectors: DetectorSet::TwoPd, rate: cfg.sampling_rate },
            ],
            repeats: cfg.repeats,
            pulse: cfg.pulse,
        }
    }

    /// 1 to 32 ns at the configured sampling rate.
    pub fn width(cfg: &ExperimentConfig) -> Self {
        SweepPlan {
            axis: Axis::PulseWidth,
            values: [1.0, 2.0, 4.0, 6.0, 8.0, 16.0, 32.0].iter().map(|w| w * 1e-9).collect(),
            include_dc: false,
            methods: vec![
                Method::OcirAnn { detectors: DetectorSet::OnePd, rate: cfg.sampling_rate },
                Method::OcirAnn { detectors: DetectorSet::TwoPd, rate: cfg.sampling_rate },
            ],
            repeats: cfg.repeats,
            pulse: cfg.pulse,
        }
    }

    pub fn for_axis(axis: Axis, cfg: &ExperimentConfig) -> Self {
        match axis {
            Axis::PulseEnergy => Self::energy(cfg),
            Axis::SamplingRate => Self::rate(cfg),
            Axis::PulseWidth => Self::width(cfg),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() && !self.include_dc {
            return Err(Error::invalid("sweep", "no axis values"));
        }
        if self.values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("sweep", "axis values must be positive"));
        }
        if self.values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("sweep", "axis values must be strictly ascending"));
        }
        if self.include_dc && self.axis != Axis::SamplingRate {
            return Err(Error::invalid("sweep", "the DC point belongs to the sampling-rate axis"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("sweep", "no methods"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("sweep", "repeats must be at least 1"));
        }
        Ok(())
    }

    /// Axis points as sampling choices, pulses and table values.
    fn points(&self) -> Vec<Point> {
        let mut pts: Vec<Point> = Vec::new();
        if self.include_dc {
            pts.push(Point { value: 0.0, pulse: self.pulse, rate: None });
        }
        for &v in &self.values {
            let mut pulse = self.pulse;
            let mut rate = None;
            match self.axis {
                Axis::PulseEnergy => pulse.energy = v,
                Axis::PulseWidth => pulse.width = v,
                Axis::SamplingRate => rate = Some(v),
            }
            pts.push(Point { value: tidy(v * self.axis.display_scale()), pulse, rate });
        }
        pts
    }

    fn narrowest_pulse(&self) -> f64 {
        match self.axis {
            Axis::PulseWidth => self.values.iter().cloned().fold(self.pulse.width, f64::min),
            _ => self.pulse.width,
        }
    }
}

struct Point {
    value: f64,
    pulse: PulseSpec,
    /// Axis-imposed sampling rate; `None` on other axes or for DC.
    rate: Option<f64>,
}

/// One (point, method, repeat) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// In the axis's display unit (μJ, Msps or ns).
    pub axis_value: f64,
    pub method: &'static str,
    pub pd_count: usize,
    /// Msps; 0 for DC features.
    pub f_s: f64,
    pub pulse_width_ns: f64,
    pub repeat: u32,
    /// `None` marks a failed point.
    pub rmse_cm: Option<f64>,
    pub error: Option<String>,
    pub report: Option<TrainReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub axis_value: f64,
    pub method: &'static str,
    pub pd_count: usize,
    pub f_s: f64,
    pub pulse_width_ns: f64,
    pub mean_rmse_cm: Option<f64>,
    pub std_rmse_cm: Option<f64>,
    pub repeats: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub plan: SweepPlan,
    pub config_hash: String,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "axis_value,method,pd_count,f_s,pulse_width_ns,repeat,rmse_cm,config_hash";

impl SweepResult {
    /// Rows in the fixed column order; failures carry `FAILED` as RMSE.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{SWEEP_CSV_HEADER}")?;
        for r in &self.rows {
            let rmse = r.rmse_cm.map_or_else(|| "FAILED".to_string(), |v| v.to_string());
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.axis_value, r.method, r.pd_count, r.f_s, r.pulse_width_ns, r.repeat, rmse, self.config_hash
            )?;
        }
        Ok(())
    }

    /// Mean and sample standard deviation per curve point, in first-seen
    /// order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out: Vec<(SummaryRow, Vec<f64>)> = Vec::new();
        for r in &self.rows {
            let key = |s: &SummaryRow| {
                s.axis_value == r.axis_value
                    && s.method == r.method
                    && s.pd_count == r.pd_count
                    && s.f_s == r.f_s
                    && s.pulse_width_ns == r.pulse_width_ns
            };
            let idx = match out.iter().position(|(s, _)| key(s)) {
                Some(i) => i,
                None => {
                    out.push((
                        SummaryRow {
                            axis_value: r.axis_value,
                            method: r.method,
                            pd_count: r.pd_count,
                            f_s: r.f_s,
                            pulse_width_ns: r.pulse_width_ns,
                            mean_rmse_cm: None,
                            std_rmse_cm: None,
                            repeats: 0,
                            failed: 0,
                        },
                        Vec::new(),
                    ));
                    out.len() - 1
                }
            };
            let (s, vals) = &mut out[idx];
            s.repeats += 1;
            match r.rmse_cm {
                Some(v) => vals.push(v),
                None => s.failed += 1,
            }
        }
        out.into_iter()
            .map(|(mut s, vals)| {
                if !vals.is_empty() {
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let var = if vals.len() > 1 {
                        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                    } else {
                        0.0
                    };
                    s.mean_rmse_cm = Some(mean);
                    s.std_rmse_cm = Some(var.sqrt());
                }
                s
            })
            .collect()
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "axis_value,method,pd_count,f_s,pulse_width_ns,mean_rmse_cm,std_rmse_cm,repeats,failed,config_hash")?;
        let opt = |v: Option<f64>| v.map_or_else(|| "FAILED".to_string(), |v| v.to_string());
        for s in self.summary() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                s.axis_value,
                s.method,
                s.pd_count,
                s.f_s,
                s.pulse_width_ns,
                opt(s.mean_rmse_cm),
                opt(s.std_rmse_cm),
                s.repeats,
                s.failed,
                self.config_hash
            )?;
        }
        Ok(())
    }

    /// Mean RMSE of one curve point, if present and successful.
    pub fn mean_rmse(&self, axis_value: f64, method: &str, pd_count: usize, f_s: f64) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| {
                (s.axis_value - axis_value).abs() <= 1e-9 * axis_value.abs().max(1.0)
                    && s.method == method
                    && s.pd_count == pd_count
                    && (s.f_s - f_s).abs() <= 1e-9 * f_s.abs().max(1.0)
            })
            .and_then(|s| s.mean_rmse_cm)
    }

    /// Reads rows written by [`SweepResult::write_csv`]. Training reports
    /// and error messages are not stored in the table and come back empty.
    pub fn read_csv<R: BufRead>(r: R, plan: SweepPlan) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose().map_err(csv_err)?.unwrap_or_default();
        if header.trim() != SWEEP_CSV_HEADER {
            return Err(table_err(format!("unexpected sweep header '{header}'")));
        }
        let mut rows = Vec::new();
        let mut hash = String::new();
        for line in lines {
            let line = line.map_err(csv_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(table_err(format!("bad sweep row '{line}'")));
            }
            let method = method_label(f[1]).ok_or_else(|| table_err(format!("unknown method '{}'", f[1])))?;
            let rmse_cm = if f[6] == "FAILED" { None } else { Some(num(f[6])?) };
            rows.push(SweepRow {
                axis_value: num(f[0])?,
                method,
                pd_count: num(f[2])? as usize,
                f_s: num(f[3])?,
                pulse_width_ns: num(f[4])?,
                repeat: num(f[5])? as u32,
                rmse_cm,
                error: rmse_cm.is_none().then(|| "FAILED".to_string()),
                report: None,
            });
            hash = f[7].to_string();
        }
        Ok(SweepResult { plan, config_hash: hash, rows })
    }
}

fn csv_err(e: std::io::Error) -> Error {
    table_err(format!("reading table: {e}"))
}

fn table_err(reason: String) -> Error {
    Error::Format { kind: "result table", reason }
}

fn num(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| table_err(format!("'{s}' is not a number")))
}

fn method_label(s: &str) -> Option<&'static str> {
    ["ocir-ann", "dc-rss-ann", "trilateration"].into_iter().find(|m| *m == s)
}

/// Seeds derived from the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub noise: u64,
    pub split: u64,
    pub train: Vec<u64>,
}

impl Seeds {
    pub fn derive(seed: u64, repeats: u32) -> Self {
        Seeds {
            noise: mix_seed(seed, NOISE_TAG),
            split: mix_seed(seed, SPLIT_TAG),
            train: (0..repeats as u64).map(|r| mix_seed(seed, TRAIN_TAG + r)).collect(),
        }
    }
}

/// Traces the configured grid once at a bin width fine enough for the
/// narrowest pulse.
pub fn trace_field(cfg: &ExperimentConfig, narrowest_pulse: f64) -> Result<FingerprintField> {
    cfg.validate()?;
    let scene = cfg.scene()?;
    let opts = cfg.binning(narrowest_pulse);
    let positions = generate_grid(&scene, &cfg.grid)?;
    Ok(FingerprintField::trace(&scene, &cfg.ue(), &positions, &opts)?.with_sample_start(cfg.sample_start))
}

type CacheKey = (DetectorSet, u64, u64);

/// Memoized unit-amplitude samples across sweep points.
struct SampleCache<'a> {
    field: &'a FingerprintField,
    cfg: &'a ExperimentConfig,
    sets: HashMap<CacheKey, SampleSet>,
}

impl<'a> SampleCache<'a> {
    fn get(&mut self, set: DetectorSet, sampling: Sampling, pulse: &PulseSpec) -> Result<&SampleSet> {
        let rate_key = match sampling {
            Sampling::Rate(r) => r.to_bits(),
            Sampling::Dc => 0,
        };
        let key = (set, rate_key, pulse.width.to_bits());
        if !self.sets.contains_key(&key) {
            let s = self.field.unit_samples(&self.cfg.detectors(set), pulse, sampling)?;
            self.sets.insert(key, s);
        }
        Ok(&self.sets[&key])
    }
}

/// Runs every (point, method, repeat) of the plan on an already traced
/// field. Failures become rows without an RMSE.
pub fn run_sweep_on(field: &FingerprintField, cfg: &ExperimentConfig, plan: &SweepPlan, hash: &str) -> Result<SweepResult> {
    plan.validate()?;
    let seeds = Seeds::derive(cfg.seed, plan.repeats);
    let noise = NoiseSpec { psd: cfg.noise_psd, seed: seeds.noise };
    let mut cache = SampleCache { field, cfg, sets: HashMap::new() };
    let mut rows = Vec::new();
    for point in plan.points() {
        for method in &plan.methods {
            let sampling = match (method, point.rate, plan.axis) {
                (Method::DcRssAnn | Method::Trilateration, _, _) => Sampling::Dc,
                (_, None, Axis::SamplingRate) => Sampling::Dc,
                (_, Some(r), _) => Sampling::Rate(r),
                (Method::OcirAnn { rate, .. }, None, _) => Sampling::Rate(*rate),
            };
            let set = method.detectors();
            let pd_count = cfg.detectors(set).len();
            let mut push = |repeat: u32, outcome: std::result::Result<(f64, Option<TrainReport>), String>| {
                let (rmse_cm, error, report) = match outcome {
                    Ok((v, rep)) => (Some(v), None, rep),
                    Err(e) => (None, Some(e), None),
                };
                rows.push(SweepRow {
                    axis_value: point.value,
                    method: method.label(),
                    pd_count,
                    f_s: tidy(sampling.rate_label() * 1e-6),
                    pulse_width_ns: tidy(point.pulse.width * 1e9),
                    repeat,
                    rmse_cm,
                    error,
                    report,
                });
            };
            if let Method::Trilateration = method {
                let outcome = trilateration_rmse(field, &cfg.detectors(set), &point.pulse, &noise, cfg.edge_exclusion)
                    .map(|v| (v, None))
                    .map_err(|e| e.to_string());
                for r in 0..plan.repeats {
                    push(r, outcome.clone());
                }
                continue;
            }
            let records = cache
                .get(set, sampling, &point.pulse)
                .map(|s| s.realize(field, &point.pulse, &noise))
                .map_err(|e| e.to_string());
            for (r, &train_seed) in seeds.train.iter().enumerate() {
                let train_cfg = TrainConfig { seed: train_seed, ..cfg.train.clone() };
                let outcome = match &records {
                    Ok(recs) => ann_rmse(recs.clone(), seeds.split, cfg.standardize, &train_cfg)
                        .map(|(v, rep)| (v, Some(rep)))
                        .map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                };
                push(r as u32, outcome);
            }
        }
    }
    Ok(SweepResult { plan: plan.clone(), config_hash: hash.to_string(), rows })
}

/// Traces the field and runs the plan.
pub fn run_sweep(cfg: &ExperimentConfig, plan: &SweepPlan) -> Result<SweepResult> {
    plan.validate()?;
    let field = trace_field(cfg, plan.narrowest_pulse())?;
    let hash = super::config_hash(cfg, &super::Job::Sweep(plan.clone()));
    run_sweep_on(&field, cfg, plan, &hash)
}

pub fn run_energy_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep(cfg, &SweepPlan::energy(cfg))
}

pub fn run_rate_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep(cfg, &SweepPlan::rate(cfg))
}

pub fn run_width_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep(cfg, &SweepPlan::width(cfg))
}

/// Learning curves for one and two detectors at a low and a high pulse
/// energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurvePlan {
    pub low_energy: f64,
    pub high_energy: f64,
    pub pulse: PulseSpec,
    pub sampling_rate: f64,
}

impl LearningCurvePlan {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        LearningCurvePlan { low_energy: 0.01e-6, high_energy: 10e-6, pulse: cfg.pulse, sampling_rate: cfg.sampling_rate }
    }

    fn as_sweep(&self) -> SweepPlan {
        SweepPlan {
            axis: Axis::PulseEnergy,
            values: vec![self.low_energy, self.high_energy],
            include_dc: false,
            methods: vec![
                Method::OcirAnn { detectors: DetectorSet::OnePd, rate: self.sampling_rate },
                Method::OcirAnn { detectors: DetectorSet::TwoPd, rate: self.sampling_rate },
            ],
            repeats: 1,
            pulse: self.pulse,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub pd_count: usize,
    pub energy_uj: f64,
    pub report: TrainReport,
}

#[derive(Debug, Clone)]
pub struct LearningCurveResult {
    pub config_hash: String,
    pub curves: Vec<LearningCurve>,
}

impl LearningCurveResult {
    fn from_sweep(sweep: SweepResult) -> Result<Self> {
        let mut curves = Vec::new();
        for row in sweep.rows {
            match row.report {
                Some(report) => curves.push(LearningCurve { pd_count: row.pd_count, energy_uj: row.axis_value, report }),
                None => {
                    return Err(Error::EmptyResult(format!(
                        "learning curve for {} PD at {} uJ failed: {}",
                        row.pd_count,
                        row.axis_value,
                        row.error.unwrap_or_default()
                    )))
                }
            }
        }
        Ok(LearningCurveResult { config_hash: sweep.config_hash, curves })
    }

    /// One row per curve and epoch.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "pd_count,energy_uj,epoch,train_rmse_cm,val_rmse_cm,best_val_rmse_cm,config_hash")?;
        for c in &self.curves {
            let best = c.report.best_so_far();
            for (i, ((t, v), b)) in c.report.train_rmse_cm.iter().zip(&c.report.val_rmse_cm).zip(&best).enumerate() {
                writeln!(w, "{},{},{},{t},{v},{b},{}", c.pd_count, c.energy_uj, i + 1, self.config_hash)?;
            }
        }
        Ok(())
    }

    /// Reads curves written by [`LearningCurveResult::write_csv`]. The
    /// objective and wall-clock columns are not stored and come back empty.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose().map_err(csv_err)?.unwrap_or_default();
        if !header.starts_with("pd_count,energy_uj,epoch,") {
            return Err(table_err(format!("unexpected learning-curve header '{header}'")));
        }
        let mut curves: Vec<LearningCurve> = Vec::new();
        let mut hash = String::new();
        for line in lines {
            let line = line.map_err(csv_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(table_err(format!("bad learning-curve row '{line}'")));
            }
            let (pd_count, energy_uj) = (num(f[0])? as usize, num(f[1])?);
            let fresh = curves.last().map_or(true, |c| c.pd_count != pd_count || c.energy_uj != energy_uj);
            if fresh {
                curves.push(LearningCurve {
                    pd_count,
                    energy_uj,
                    report: TrainReport {
                        train_rmse_cm: Vec::new(),
                        val_rmse_cm: Vec::new(),
                        objective: Vec::new(),
                        best_epoch: 0,
                        stopped_epoch: 0,
                        wall_clock_secs: 0.0,
                    },
                });
            }
            let rep = &mut curves.last_mut().expect("pushed above").report;
            rep.train_rmse_cm.push(num(f[3])?);
            rep.val_rmse_cm.push(num(f[4])?);
            hash = f[6].to_string();
        }
        for c in &mut curves {
            let rep = &mut c.report;
            rep.stopped_epoch = rep.val_rmse_cm.len();
            rep.best_epoch = rep
                .val_rmse_cm
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
                .0
                + 1;
        }
        Ok(LearningCurveResult { config_hash: hash, curves })
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "pd_count,energy_uj,best_epoch,stopped_epoch,best_val_rmse_cm,config_hash")?;
        for c in &self.curves {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.pd_count,
                c.energy_uj,
                c.report.best_epoch,
                c.report.stopped_epoch,
                c.report.best_val_rmse_cm(),
                self.config_hash
            )?;
        }
        Ok(())
    }
}

pub fn run_learning_curve(cfg: &ExperimentConfig, plan: &LearningCurvePlan) -> Result<LearningCurveResult> {
    let sweep = plan.as_sweep();
    let field = trace_field(cfg, sweep.narrowest_pulse())?;
    let hash = super::config_hash(cfg, &super::Job::LearningCurve(plan.clone()));
    LearningCurveResult::from_sweep(run_sweep_on(&field, cfg, &sweep, &hash)?)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::experiments::{config_hash, Job};

    /// Coarse grid, small network, few epochs.
    pub(crate) fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::fast();
        c.grid.spacing = 0.5;
        c.scene.patch_area = 0.25 * 0.25;
        c.train.hidden_units = 8;
        c.train.batch_size = 16;
        c.train.batches_per_epoch = 2;
        c.train.max_epochs = 20;
        c.train.patience = 5;
        c.repeats = 2;
        c
    }

    fn tiny_plan(cfg: &ExperimentConfig) -> SweepPlan {
        let mut p = SweepPlan::energy(cfg);
        p.values = vec![0.1e-6, 10e-6];
        p.methods = vec![Method::OcirAnn { detectors: DetectorSet::TwoPd, rate: 100e6 }, Method::Trilateration];
        p
    }

    #[test]
    fn every_point_is_present() {
        let cfg = tiny();
        let plan = tiny_plan(&cfg);
        let res = run_sweep(&cfg, &plan).unwrap();
        assert_eq!(res.rows.len(), 2 * 2 * 2);
        assert!(res.rows.iter().all(|r| r.rmse_cm.is_some()));
        assert_eq!(res.rows[0].axis_value, 0.1);
        assert_eq!(res.rows[0].f_s, 100.0);
        assert_eq!(res.rows[0].pulse_width_ns, 10.0);
        let tri: Vec<_> = res.rows.iter().filter(|r| r.method == "trilateration").collect();
        assert_eq!(tri[0].rmse_cm, tri[1].rmse_cm);
        assert_eq!(tri[0].f_s, 0.0);
    }

    #[test]
    fn first_repeat_does_not_depend_on_repeat_count() {
        let cfg = tiny();
        let mut plan = tiny_plan(&cfg);
        plan.values = vec![10e-6];
        plan.methods.truncate(1);
        let two = run_sweep(&cfg, &plan).unwrap();
        plan.repeats = 1;
        let one = run_sweep(&cfg, &plan).unwrap();
        assert_eq!(one.rows[0].rmse_cm, two.rows[0].rmse_cm);
        assert_ne!(two.rows[0].rmse_cm, two.rows[1].rmse_cm);
    }

    #[test]
    fn failures_are_recorded_not_dropped() {
        let cfg = tiny();
        let mut plan = tiny_plan(&cfg);
        // A window shorter than one sample period leaves nothing to sample.
        plan.methods = vec![Method::OcirAnn { detectors: DetectorSet::OnePd, rate: 1e6 }, Method::Trilateration];
        let res = run_sweep(&cfg, &plan).unwrap();
        let failed: Vec<_> = res.rows.iter().filter(|r| r.method == "ocir-ann").collect();
        assert_eq!(failed.len(), 4);
        assert!(failed.iter().all(|r| r.rmse_cm.is_none() && r.error.is_some()));
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.contains(",FAILED,")).count(), 4);
        let summary = res.summary();
        assert_eq!(summary.iter().filter(|s| s.failed == 2).count(), 2);
    }

    #[test]
    fn rate_axis_dc_point_matches_dc_pipeline() {
        let cfg = tiny();
        let mut plan = SweepPlan::rate(&cfg);
        plan.values = vec![100e6];
        plan.methods = vec![Method::OcirAnn { detectors: DetectorSet::TwoPd, rate: 0.0 }];
        plan.repeats = 1;
        let res = run_sweep(&cfg, &plan).unwrap();
        let dc = &res.rows[0];
        assert_eq!((dc.axis_value, dc.f_s), (0.0, 0.0));

        let field = trace_field(&cfg, plan.pulse.width).unwrap();
        let seeds = Seeds::derive(cfg.seed, 1);
        let noise = NoiseSpec { psd: cfg.noise_psd, seed: seeds.noise };
        let train = TrainConfig { seed: seeds.train[0], ..cfg.train.clone() };
        let recs = field.unit_samples(&cfg.detectors(DetectorSet::TwoPd), &plan.pulse, Sampling::Dc).unwrap();
        let recs = recs.realize(&field, &plan.pulse, &noise);
        assert_eq!(recs[0].features.len(), 2);
        let direct = ann_rmse(recs, seeds.split, cfg.standardize, &train).unwrap();
        assert_eq!(dc.rmse_cm, Some(direct.0));
    }

    #[test]
    fn summary_is_mean_and_sample_std() {
        let cfg = tiny();
        let mut plan = tiny_plan(&cfg);
        plan.values = vec![10e-6];
        plan.methods.truncate(1);
        plan.repeats = 3;
        let res = run_sweep(&cfg, &plan).unwrap();
        let v: Vec<f64> = res.rows.iter().map(|r| r.rmse_cm.unwrap()).collect();
        let mean = v.iter().sum::<f64>() / 3.0;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        let s = &res.summary()[0];
        assert_eq!(s.repeats, 3);
        assert!((s.mean_rmse_cm.unwrap() - mean).abs() < 1e-12);
        assert!((s.std_rmse_cm.unwrap() - std).abs() < 1e-12);
        assert_eq!(res.mean_rmse(10.0, "ocir-ann", 2, 100.0), s.mean_rmse_cm);
    }

    #[test]
    fn csv_round_trip() {
        let cfg = tiny();
        let plan = tiny_plan(&cfg);
        let hash = config_hash(&cfg, &Job::Sweep(plan.clone()));
        let res = run_sweep(&cfg, &plan).unwrap();
        assert_eq!(res.config_hash, hash);
        let mut a = Vec::new();
        res.write_csv(&mut a).unwrap();
        let back = SweepResult::read_csv(&a[..], plan).unwrap();
        let mut b = Vec::new();
        back.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.config_hash, hash);
    }

    #[test]
    fn learning_curves_cover_both_energies_and_round_trip() {
        let cfg = tiny();
        let plan = LearningCurvePlan::new(&cfg);
        let res = run_learning_curve(&cfg, &plan).unwrap();
        let keys: Vec<_> = res.curves.iter().map(|c| (c.pd_count, c.energy_uj)).collect();
        assert_eq!(keys, vec![(1, 0.01), (2, 0.01), (1, 10.0), (2, 10.0)]);
        for c in &res.curves {
            assert!(c.report.best_so_far().windows(2).all(|w| w[1] <= w[0]));
        }
        let mut a = Vec::new();
        res.write_csv(&mut a).unwrap();
        let back = LearningCurveResult::read_csv(&a[..]).unwrap();
        let mut b = Vec::new();
        back.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        for (x, y) in res.curves.iter().zip(&back.curves) {
            assert_eq!(x.report.best_epoch, y.report.best_epoch);
        }
    }

    #[test]
    fn rejects_bad_plans() {
        let cfg = tiny();
        let mut p = tiny_plan(&cfg);
        p.values = vec![1e-6, 0.5e-6];
        assert!(p.validate().is_err());
        let mut p = tiny_plan(&cfg);
        p.repeats = 0;
        assert!(p.validate().is_err());
        let mut p = tiny_plan(&cfg);
        p.include_dc = true;
        assert!(p.validate().is_err());
    }
}
