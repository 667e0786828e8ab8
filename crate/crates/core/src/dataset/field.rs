//! Impulse responses traced once over a grid and turned into fingerprint
//! records for any pulse, sampling and noise setting.

use serde::{Deserialize, Serialize};

use super::FingerprintRecord;
use crate::channel::{build_patch_table, ocir_all, OcirOptions, OcirProfile, RoomScene, UeSpec};
use crate::error::{Error, Result};
use crate::signal::{add_noise, dc_feature, noise_stream, sample, NoiseSpec, PulseSpec, SamplerSpec, ShapingKernel};

/// How each photodetector's waveform becomes features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// `round(window·f_s)` samples at the given rate.
    Rate(f64),
    /// One window-averaged value per detector, taken over the waveform grid.
    Dc,
}

impl Sampling {
    /// Rate recorded in result tables; `0` for the DC feature.
    pub fn rate_label(&self) -> f64 {
        match *self {
            Sampling::Rate(r) => r,
            Sampling::Dc => 0.0,
        }
    }
}

/// Binned impulse responses of every scene detector at every grid point.
#[derive(Debug, Clone)]
pub struct FingerprintField {
    pub scene: RoomScene,
    pub ue: UeSpec,
    pub positions: Vec<[f64; 2]>,
    pub opts: OcirOptions,
    /// Instant of the first sample. Defaults to the first bin; may be
    /// earlier, where the waveform reads zero.
    pub sample_start: f64,
    /// Location-major: entry `loc·Q + q`.
    profiles: Vec<OcirProfile>,
}

impl FingerprintField {
    pub fn trace(scene: &RoomScene, ue: &UeSpec, positions: &[[f64; 2]], opts: &OcirOptions) -> Result<Self> {
        scene.validate()?;
        if scene.pds.is_empty() {
            return Err(Error::invalid("scene", "no photodetectors"));
        }
        if positions.is_empty() {
            return Err(Error::EmptyGrid("no positions to trace".into()));
        }
        let tables = scene.pds.iter().map(|pd| build_patch_table(scene, pd)).collect::<Result<Vec<_>>>()?;
        let mut profiles = Vec::with_capacity(positions.len() * scene.pds.len());
        for p in positions {
            profiles.extend(ocir_all(scene, &ue.at(p[0], p[1]), &tables, opts)?);
        }
        Ok(FingerprintField {
            scene: scene.clone(),
            ue: *ue,
            positions: positions.to_vec(),
            opts: *opts,
            sample_start: opts.t_start,
            profiles,
        })
    }

    /// Wraps already traced profiles, location-major with one entry per
    /// scene detector.
    pub fn from_profiles(
        scene: &RoomScene,
        ue: &UeSpec,
        positions: &[[f64; 2]],
        opts: &OcirOptions,
        profiles: Vec<OcirProfile>,
    ) -> Result<Self> {
        if profiles.len() != positions.len() * scene.pds.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len() * scene.pds.len(),
                actual: profiles.len(),
            });
        }
        if let Some(p) = profiles.iter().find(|p| (p.bin_width - opts.bin_width).abs() > 1e-6 * opts.bin_width) {
            return Err(Error::invalid("profiles", format!("bin width {} differs from {}", p.bin_width, opts.bin_width)));
        }
        Ok(FingerprintField {
            scene: scene.clone(),
            ue: *ue,
            positions: positions.to_vec(),
            opts: *opts,
            sample_start: opts.t_start,
            profiles,
        })
    }

    pub fn with_sample_start(mut self, t: f64) -> Self {
        self.sample_start = t;
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn pd_count(&self) -> usize {
        self.scene.pds.len()
    }

    pub fn profile(&self, location: usize, pd: usize) -> &OcirProfile {
        &self.profiles[location * self.pd_count() + pd]
    }

    fn sampler(&self, sampling: Sampling) -> Result<SamplerSpec> {
        let rate = match sampling {
            Sampling::Rate(r) => r,
            Sampling::Dc => 1.0 / self.opts.bin_width,
        };
        let s = SamplerSpec { rate, window: self.opts.window, t_start: self.sample_start };
        s.validate()?;
        Ok(s)
    }

    /// Noiseless sample vectors for a unit amplitude factor
    /// (`ρ·N_p·R_p·E_p = 1`) at the locations `subset` (all if `None`).
    pub fn unit_samples(&self, pds: &[usize], pulse: &PulseSpec, sampling: Sampling) -> Result<SampleSet> {
        self.unit_samples_at(pds, pulse, sampling, None)
    }

    pub fn unit_samples_at(
        &self,
        pds: &[usize],
        pulse: &PulseSpec,
        sampling: Sampling,
        subset: Option<&[usize]>,
    ) -> Result<SampleSet> {
        if pds.is_empty() {
            return Err(Error::invalid("detector selection", "empty"));
        }
        if let Some(&bad) = pds.iter().find(|&&q| q >= self.pd_count()) {
            return Err(Error::invalid("detector selection", format!("index {bad} out of range")));
        }
        let sampler = self.sampler(sampling)?;
        pulse.validate(sampler.window)?;
        let kernels = pds
            .iter()
            .map(|&q| ShapingKernel::new(pulse, self.ue.led_bandwidth, self.scene.pds[q].bandwidth, self.opts.bin_width))
            .collect::<Result<Vec<_>>>()?;
        let locations: Vec<usize> = match subset {
            Some(s) => s.to_vec(),
            None => (0..self.len()).collect(),
        };
        let per_pd = sampler.num_samples();
        let mut values = Vec::with_capacity(locations.len() * pds.len() * per_pd);
        for &loc in &locations {
            for (&q, kernel) in pds.iter().zip(&kernels) {
                let w = kernel.apply(self.profile(loc, q))?;
                values.extend(sample(&w, &sampler)?);
            }
        }
        Ok(SampleSet {
            pds: pds.to_vec(),
            sampling,
            sampler,
            per_pd,
            locations,
            values,
            responsivity: pds.iter().map(|&q| self.scene.pds[q].responsivity).collect(),
            labels: Vec::new(),
        }
        .with_labels(&self.positions))
    }
}

/// Noiseless unit-amplitude samples ready to be scaled and made noisy.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub pds: Vec<usize>,
    pub sampling: Sampling,
    pub sampler: SamplerSpec,
    /// Samples per detector before any DC reduction.
    pub per_pd: usize,
    /// Field location index of each entry.
    pub locations: Vec<usize>,
    values: Vec<f64>,
    responsivity: Vec<f64>,
    labels: Vec<[f64; 2]>,
}

impl SampleSet {
    fn with_labels(mut self, positions: &[[f64; 2]]) -> Self {
        self.labels = self.locations.iter().map(|&l| positions[l]).collect();
        self
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Features per record.
    pub fn feature_len(&self) -> usize {
        match self.sampling {
            Sampling::Rate(_) => self.pds.len() * self.per_pd,
            Sampling::Dc => self.pds.len(),
        }
    }

    /// Records for the given pulse: every unit sample scaled by
    /// `ρ·N_p·R_p·E_p`, plus receiver noise drawn per location and
    /// detector. DC records average the noisy grid-rate samples.
    pub fn realize(&self, field: &FingerprintField, pulse: &PulseSpec, noise: &NoiseSpec) -> Vec<FingerprintRecord> {
        let stride = self.pds.len() * self.per_pd;
        let mut out = Vec::with_capacity(self.len());
        let mut seg = vec![0.0; self.per_pd];
        for (i, (&loc, label)) in self.locations.iter().zip(&self.labels).enumerate() {
            let row = &self.values[i * stride..(i + 1) * stride];
            let mut features = Vec::with_capacity(self.feature_len());
            for (k, &q) in self.pds.iter().enumerate() {
                let a = pulse.amplitude(self.responsivity[k]);
                for (s, &u) in seg.iter_mut().zip(&row[k * self.per_pd..(k + 1) * self.per_pd]) {
                    *s = a * u;
                }
                let stream = noise_stream(loc as u64, &field.scene.pds[q]);
                add_noise(&mut seg, self.sampler.rate, noise, pulse.num_pulses, stream);
                match self.sampling {
                    Sampling::Rate(_) => features.extend_from_slice(&seg),
                    Sampling::Dc => features.push(dc_feature(&seg).expect("non-empty segment")),
                }
            }
            out.push(FingerprintRecord { features, label: *label });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PdSpec;
    use crate::signal::{received_waveform, sample_and_noise};
    use approx::assert_relative_eq;

    fn small_field() -> FingerprintField {
        let mut scene = RoomScene::representative();
        scene.length = 3.0;
        scene.width = 3.0;
        scene.patch_area = 0.25 * 0.25;
        scene.pds = vec![PdSpec::representative(-0.5, 0.3, 3.0), PdSpec::representative(0.6, -0.4, 3.0)];
        let positions = [[0.0, 0.0], [1.0, -0.5], [-1.2, 1.1]];
        FingerprintField::trace(&scene, &UeSpec::representative(0.0, 0.0), &positions, &OcirOptions::default()).unwrap()
    }

    fn pulse() -> PulseSpec {
        PulseSpec { energy: 1e-6, width: 10e-9, repetition_rate: 1e5, num_pulses: 1000 }
    }

    #[test]
    fn records_match_direct_signal_chain() {
        let f = small_field();
        let set = f.unit_samples(&[1, 0], &pulse(), Sampling::Rate(500e6)).unwrap();
        let noise = NoiseSpec { psd: 1e-9, seed: 4 };
        let recs = set.realize(&f, &pulse(), &noise);
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].features.len(), 60);
        for (loc, r) in recs.iter().enumerate() {
            let mut expect = Vec::new();
            for q in [1, 0] {
                let pd = &f.scene.pds[q];
                let w = received_waveform(f.profile(loc, q), &pulse(), f.ue.led_bandwidth, pd.bandwidth, pd.responsivity).unwrap();
                let s = SamplerSpec { rate: 500e6, window: 60e-9, t_start: 0.0 };
                expect.extend(sample_and_noise(&w, &s, &noise, 1000, noise_stream(loc as u64, pd)).unwrap());
            }
            for (a, b) in r.features.iter().zip(&expect) {
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-9);
            }
            assert_eq!(r.label, f.positions[loc]);
        }
    }

    #[test]
    fn dc_records_average_the_window() {
        let f = small_field();
        let set = f.unit_samples(&[0, 1], &pulse(), Sampling::Dc).unwrap();
        assert_eq!(set.per_pd, 120);
        let recs = set.realize(&f, &pulse(), &NoiseSpec::silent());
        assert_eq!(recs[2].features.len(), 2);
        let pd = &f.scene.pds[0];
        let w = received_waveform(f.profile(2, 0), &pulse(), f.ue.led_bandwidth, pd.bandwidth, pd.responsivity).unwrap();
        let inside: f64 = (0..120).map(|k| w.at(k as f64 * 0.5e-9)).sum::<f64>() * 0.5e-9;
        assert_relative_eq!(recs[2].features[0] * 60e-9, inside, max_relative = 1e-12);
    }

    #[test]
    fn dc_noise_has_window_inverse_variance() {
        let f = small_field();
        let set = f.unit_samples(&[0], &pulse(), Sampling::Dc).unwrap();
        let p = pulse();
        let quiet = set.realize(&f, &p, &NoiseSpec::silent());
        let n = 4000;
        let mut acc = 0.0;
        for seed in 0..n {
            let noisy = set.realize(&f, &p, &NoiseSpec { psd: 1e-9, seed });
            acc += (noisy[0].features[0] - quiet[0].features[0]).powi(2);
        }
        let var = acc / n as f64;
        let expect = 1000.0 * 1e-9 / 60e-9;
        assert!((var / expect - 1.0).abs() < 0.08, "{var} vs {expect}");
    }

    #[test]
    fn bad_selection_is_rejected() {
        let f = small_field();
        assert!(f.unit_samples(&[], &pulse(), Sampling::Dc).is_err());
        assert!(f.unit_samples(&[2], &pulse(), Sampling::Dc).is_err());
        let narrow = PulseSpec { width: 1e-9, ..pulse() };
        assert!(f.unit_samples(&[0], &narrow, Sampling::Dc).is_err());
    }
}
