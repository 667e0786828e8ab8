use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::ann::TrainConfig;
use crate::channel::{OcirOptions, PdSpec, RoomScene, Surfaces, UeSpec};
use crate::dataset::{GridSpec, StandardizeMode};
use crate::error::{Error, Result};
use crate::signal::PulseSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Receiver parameters shared by every ceiling detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorTemplate {
    pub area: f64,
    pub fov_deg: f64,
    pub responsivity: f64,
    pub bandwidth: f64,
}

impl DetectorTemplate {
    pub fn at(&self, x: f64, y: f64, ceiling: f64) -> PdSpec {
        PdSpec {
            position: [x, y, ceiling],
            area: self.area,
            fov: self.fov_deg.to_radians(),
            responsivity: self.responsivity,
            bandwidth: self.bandwidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub ue_height: f64,
    pub surfaces: Surfaces,
    pub patch_area: f64,
    pub ue_half_angle_deg: f64,
    pub led_bandwidth: f64,
    pub detector: DetectorTemplate,
}

/// Horizontal detector positions, meters from the room center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layouts {
    pub one_pd: Vec<[f64; 2]>,
    pub two_pd: Vec<[f64; 2]>,
    /// Anchors of the trilateration and DC-RSS baselines.
    pub anchors: Vec<[f64; 2]>,
}

/// Which detectors of the combined scene each method sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorSet {
    OnePd,
    TwoPd,
    Anchors,
}

/// Everything that defines an experiment except the swept axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub profile: String,
    pub seed: u64,
    pub scene: SceneConfig,
    pub layouts: Layouts,
    pub grid: GridSpec,
    pub ocir: OcirOptions,
    /// Instant of the first receiver sample, s, relative to the peak of
    /// the emitted pulse. Negative values start sampling before emission.
    pub sample_start: f64,
    /// Defaults for the parameters a sweep does not vary.
    pub pulse: PulseSpec,
    pub sampling_rate: f64,
    pub noise_psd: f64,
    pub standardize: StandardizeMode,
    pub train: TrainConfig,
    pub repeats: u32,
    /// Edge excluded from the trilateration test region.
    pub edge_exclusion: f64,
}

impl ExperimentConfig {
    /// Desk-scale profile: 4×4×3 m room, 10 cm grid, (5 cm)² reflecting
    /// elements, 100 hidden units and a one-pass epoch.
    pub fn fast() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            profile: "fast".into(),
            seed: 1,
            scene: SceneConfig {
                length: 4.0,
                width: 4.0,
                height: 3.0,
                ue_height: 0.85,
                surfaces: Surfaces::walls(0.8),
                patch_area: 0.05 * 0.05,
                ue_half_angle_deg: 60.0,
                led_bandwidth: 500e6,
                detector: DetectorTemplate { area: 1e-4, fov_deg: 85.0, responsivity: 0.54, bandwidth: 500e6 },
            },
            layouts: Layouts::for_room(4.0, 4.0),
            grid: GridSpec { spacing: 0.1, margin: 0.0, seed: 0 },
            ocir: OcirOptions::default(),
            sample_start: -10e-9,
            pulse: PulseSpec { energy: 1e-6, width: 10e-9, repetition_rate: 1e5, num_pulses: 1000 },
            sampling_rate: 500e6,
            noise_psd: NOISE_PSD,
            standardize: StandardizeMode::AllRecords,
            train: TrainConfig {
                hidden_units: 100,
                batches_per_epoch: 30,
                max_epochs: 5000,
                ..TrainConfig::default()
            },
            repeats: 3,
            edge_exclusion: 0.5,
        }
    }

    /// Full-fidelity profile: 5×5×3 m room, 2 cm grid, 1 mm² reflecting
    /// elements, 400 hidden units and the full training budget.
    pub fn paper() -> Self {
        let mut c = Self::fast();
        c.profile = "paper".into();
        c.scene.length = 5.0;
        c.scene.width = 5.0;
        c.scene.patch_area = 1e-6;
        c.layouts = Layouts::for_room(5.0, 5.0);
        c.grid.spacing = 0.02;
        c.train = TrainConfig::default();
        c.repeats = 5;
        c
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "fast" | "desk" => Ok(Self::fast()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!("unknown profile '{other}' (expected fast or paper)"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Applies `dotted.key=value` overrides. Values are read as TOML
    /// literals and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for set in sets {
            let set = set.as_ref();
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{set}' is not key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let mut node = &mut root;
            let parts: Vec<&str> = key.trim().split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("'{key}': '{}' is not a table", parts[..i].join("."))))?;
                if i + 1 == parts.len() {
                    if !table.contains_key(*part) {
                        return Err(Error::Config(format!("unknown key '{key}'")));
                    }
                    table.insert(part.to_string(), value.clone());
                    break;
                }
                node = table.get_mut(*part).ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
            }
        }
        let c: Self = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !(self.noise_psd >= 0.0 && self.noise_psd.is_finite()) {
            return Err(Error::Config("noise_psd must be finite and non-negative".into()));
        }
        if !self.sample_start.is_finite() || self.sample_start > self.ocir.t_start {
            return Err(Error::Config("sample_start must not be later than the first impulse-response bin".into()));
        }
        if !(self.sampling_rate > 0.0) {
            return Err(Error::Config("sampling_rate must be positive".into()));
        }
        if self.layouts.one_pd.len() != 1 || self.layouts.two_pd.len() != 2 || self.layouts.anchors.len() != 3 {
            return Err(Error::Config("layouts need 1, 2 and 3 detectors".into()));
        }
        self.train.validate()?;
        self.scene()?.validate()?;
        self.ue().lambertian_order()?;
        Ok(())
    }

    /// The room with every layout's detectors: one-PD, then two-PD, then
    /// the anchors.
    pub fn scene(&self) -> Result<RoomScene> {
        let s = &self.scene;
        let pds = self
            .layouts
            .one_pd
            .iter()
            .chain(&self.layouts.two_pd)
            .chain(&self.layouts.anchors)
            .map(|p| s.detector.at(p[0], p[1], s.height))
            .collect();
        Ok(RoomScene {
            length: s.length,
            width: s.width,
            height: s.height,
            surfaces: s.surfaces,
            patch_area: s.patch_area,
            pds,
            ue_height: s.ue_height,
        })
    }

    pub fn ue(&self) -> UeSpec {
        UeSpec {
            position: [0.0, 0.0],
            half_angle: self.scene.ue_half_angle_deg.to_radians(),
            led_bandwidth: self.scene.led_bandwidth,
        }
    }

    /// Impulse-response binning fine enough for a pulse of the given width.
    pub fn binning(&self, narrowest_pulse: f64) -> OcirOptions {
        let mut opts = self.ocir;
        opts.bin_width = opts.bin_width.min(narrowest_pulse / 4.0);
        opts
    }

    /// Indices into [`ExperimentConfig::scene`]'s detector list.
    pub fn detectors(&self, set: DetectorSet) -> Vec<usize> {
        match set {
            DetectorSet::OnePd => vec![0],
            DetectorSet::TwoPd => vec![1, 2],
            DetectorSet::Anchors => vec![3, 4, 5],
        }
    }
}

/// Default receiver noise density, A²/Hz.
pub const NOISE_PSD: f64 = 2e-8;

impl Layouts {
    /// Detectors placed off every mirror axis of the room. The line through
    /// the two-detector pair runs close to a wall, so few locations have a
    /// mirror image with the same LOS distances. Anchors sit on a centered
    /// equilateral triangle.
    pub fn for_room(length: f64, width: f64) -> Self {
        let r = length.min(width) / 4.0;
        let anchors = (0..3)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_2 + k as f64 * 2.0 * std::f64::consts::PI / 3.0;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        Layouts {
            one_pd: vec![[-0.15 * length, -0.1 * width]],
            two_pd: vec![[-0.3 * length, -0.2 * width], [0.2 * length, -0.4 * width]],
            anchors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        ExperimentConfig::fast().validate().unwrap();
        ExperimentConfig::paper().validate().unwrap();
        assert!(ExperimentConfig::profile("bogus").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::fast();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = ExperimentConfig::fast()
            .with_overrides(&["seed=7", "train.hidden_units=12", "scene.detector.fov_deg=70.5", "profile=mine"])
            .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.train.hidden_units, 12);
        assert_eq!(c.scene.detector.fov_deg, 70.5);
        assert_eq!(c.profile, "mine");
        assert!(ExperimentConfig::fast().with_overrides(&["nope=1"]).is_err());
        assert!(ExperimentConfig::fast().with_overrides(&["train.hidden_units"]).is_err());
        assert!(ExperimentConfig::fast().with_overrides(&["repeats=0"]).is_err());
        assert!(ExperimentConfig::fast().with_overrides(&["seed=\"x\""]).is_err());
    }

    #[test]
    fn schema_version_is_checked() {
        let mut c = ExperimentConfig::fast();
        c.schema_version = 99;
        assert!(matches!(ExperimentConfig::from_toml(&c.to_toml()), Err(Error::Config(_))));
    }

    #[test]
    fn scene_orders_detectors_by_layout() {
        let c = ExperimentConfig::fast();
        let s = c.scene().unwrap();
        assert_eq!(s.pds.len(), 6);
        assert_eq!(s.pds[0].position[..2], c.layouts.one_pd[0]);
        assert_eq!(s.pds[2].position[..2], c.layouts.two_pd[1]);
        assert_eq!(s.pds[5].position[..2], c.layouts.anchors[2]);
        for set in [DetectorSet::OnePd, DetectorSet::TwoPd, DetectorSet::Anchors] {
            assert!(c.detectors(set).iter().all(|&i| i < 6));
        }
    }

    #[test]
    fn anchors_match_baseline_layout() {
        let c = ExperimentConfig::fast();
        let s = c.scene().unwrap();
        let expect = crate::baselines::default_anchor_layout(&s);
        for (a, b) in c.layouts.anchors.iter().zip(&expect) {
            assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
        }
    }
}
