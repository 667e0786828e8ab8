//! Pulsed transmission through the channel: pulse shaping, LED and
//! photodetector low-pass responses, sampling and additive receiver noise.
//!
//! The received electrical signal for `N_p` accumulated pulses is
//!
//! ```text
//! r(t) = ρ·N_p·R_p·E_p·(G ⊛ h_LED ⊛ h_ch ⊛ h_PD)(t) + √N_p·n(t)
//! ```
//!
//! with `G` a unit-area Gaussian whose FWHM is the pulse width, first-order
//! low-pass `h_LED`/`h_PD`, and white Gaussian `n` of per-sample variance
//! `N0·f_s`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::f64::consts::{PI, SQRT_2};

use crate::channel::{ocir_all, OcirOptions, OcirProfile, PatchTable, PdSpec, RoomScene, UeSpec};
use crate::error::{Error, Result};

/// Largest mass a truncated filter tail may carry.
pub const MAX_FILTER_TAIL: f64 = 1e-6;
const KERNEL_TAIL: f64 = 1e-9;
const MAX_KERNEL_LEN: usize = 1 << 20;
/// FWHM / σ of a Gaussian.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Energy per pulse, J.
    pub energy: f64,
    /// Full width at half maximum, s.
    pub width: f64,
    /// Pulse repetition rate, Hz.
    pub repetition_rate: f64,
    pub num_pulses: u32,
}

impl PulseSpec {
    pub fn sigma(&self) -> f64 {
        self.width / FWHM_PER_SIGMA
    }

    /// `ρ·N_p·R_p·E_p`, the factor applied to the channel convolution.
    pub fn amplitude(&self, responsivity: f64) -> f64 {
        responsivity * self.num_pulses as f64 * self.repetition_rate * self.energy
    }

    pub fn validate(&self, window: f64) -> Result<()> {
        if !(self.energy > 0.0) {
            return Err(Error::invalid("pulse", "energy must be positive"));
        }
        if !(self.width > 0.0) {
            return Err(Error::invalid("pulse", "width must be positive"));
        }
        if !(self.repetition_rate > 0.0) || self.num_pulses == 0 {
            return Err(Error::invalid("pulse", "repetition rate and pulse count must be positive"));
        }
        if self.repetition_rate * self.width >= 1e-2 {
            return Err(Error::invalid("pulse", "pulses overlap: R_p·width must be well below 1"));
        }
        if 1.0 / self.repetition_rate < window {
            return Err(Error::invalid("pulse", "repetition period is shorter than the impulse response window"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    /// Samples per second.
    pub rate: f64,
    pub window: f64,
    /// Time of the first sample.
    #[serde(default)]
    pub t_start: f64,
}

impl SamplerSpec {
    pub fn new(rate: f64, window: f64) -> Result<Self> {
        let s = SamplerSpec { rate, window, t_start: 0.0 };
        s.validate()?;
        Ok(s)
    }

    /// `round(window · f_s)`.
    pub fn num_samples(&self) -> usize {
        (self.window * self.rate).round() as usize
    }

    pub fn sample_time(&self, k: usize) -> f64 {
        self.t_start + k as f64 / self.rate
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.window > 0.0) {
            return Err(Error::invalid("sampler", "rate and window must be positive"));
        }
        if self.num_samples() == 0 {
            return Err(Error::invalid("sampler", "window holds no samples at this rate"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Two-sided noise power spectral density at the receiver output, A²/Hz.
    pub psd: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn silent() -> Self {
        NoiseSpec { psd: 0.0, seed: 0 }
    }

    /// Per-sample variance `N_p·N0·f_s` after accumulating `num_pulses`.
    pub fn sample_variance(&self, rate: f64, num_pulses: u32) -> f64 {
        num_pulses as f64 * self.psd * rate
    }
}

/// Everything between the channel and the sampled receiver vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalChain {
    pub pulse: PulseSpec,
    pub sampler: SamplerSpec,
    pub noise: NoiseSpec,
}

/// A waveform on a uniform grid `t0 + n·dt`, linearly interpolated between
/// grid points and zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl Waveform {
    pub fn end(&self) -> f64 {
        self.t0 + (self.values.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn at(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        let n = self.values.len();
        if x < -1e-9 || n == 0 {
            return 0.0;
        }
        let x = x.max(0.0);
        let i = x.floor() as usize;
        let frac = x - i as f64;
        if i + 1 >= n {
            return if i < n && frac < 1e-9 { self.values[i] } else { 0.0 };
        }
        if frac < 1e-9 {
            return self.values[i];
        }
        if frac > 1.0 - 1e-9 {
            return self.values[i + 1];
        }
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Grid values are bin densities, so the integral is their sum times `dt`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dt
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2))
}

/// Unit-mass Gaussian pulse on the grid; index `i` sits at `(i - offset)·dt`.
fn gaussian_kernel(sigma: f64, dt: f64) -> (usize, Vec<f64>) {
    let half = (8.0 * sigma / dt).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let c = (i as f64 - half as f64) * dt;
            std_normal_cdf((c + dt / 2.0) / sigma) - std_normal_cdf((c - dt / 2.0) / sigma)
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    (half, k)
}

/// First-order low-pass impulse response integrated over each bin
/// `[n·dt, (n+1)·dt)` and renormalized to unit mass.
pub fn lowpass_kernel(bandwidth: f64, dt: f64) -> Result<Vec<f64>> {
    lowpass_kernel_capped(bandwidth, dt, MAX_KERNEL_LEN)
}

pub fn lowpass_kernel_capped(bandwidth: f64, dt: f64, max_len: usize) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0 && dt > 0.0) {
        return Err(Error::invalid("filter", "bandwidth and grid step must be positive"));
    }
    let tau = 1.0 / (2.0 * PI * bandwidth);
    let decay = (-dt / tau).exp();
    let len = if decay <= KERNEL_TAIL {
        1
    } else {
        (KERNEL_TAIL.ln() / decay.ln()).ceil() as usize
    };
    let len = if len > max_len {
        let tail = decay.powi(max_len as i32);
        if tail > MAX_FILTER_TAIL {
            return Err(Error::FilterTruncated { tail });
        }
        max_len
    } else {
        len
    };
    let mut k: Vec<f64> = (0..len).map(|n| (1.0 - decay) * decay.powi(n as i32)).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

/// Combined pulse and filter response on a grid of step `dt`; index `i`
/// sits at `(i - offset)·dt`.
#[derive(Debug, Clone)]
pub struct ShapingKernel {
    pub offset: usize,
    pub dt: f64,
    pub mass: Vec<f64>,
}

impl ShapingKernel {
    pub fn new(pulse: &PulseSpec, led_bandwidth: f64, pd_bandwidth: f64, dt: f64) -> Result<Self> {
        if dt > pulse.width / 4.0 * (1.0 + 1e-9) {
            return Err(Error::invalid(
                "waveform grid",
                format!(
                    "step {:.3} ns is coarser than a quarter of the {:.3} ns pulse",
                    dt * 1e9,
                    pulse.width * 1e9
                ),
            ));
        }
        let (offset, g) = gaussian_kernel(pulse.sigma(), dt);
        let led = lowpass_kernel(led_bandwidth, dt)?;
        let pd = lowpass_kernel(pd_bandwidth, dt)?;
        Ok(ShapingKernel {
            offset,
            dt,
            mass: convolve(&convolve(&g, &led), &pd),
        })
    }

    /// Noiseless waveform for a unit amplitude factor.
    pub fn apply(&self, profile: &OcirProfile) -> Result<Waveform> {
        if (profile.bin_width - self.dt).abs() > 1e-6 * self.dt {
            return Err(Error::invalid("waveform grid", "profile bin width differs from the kernel grid"));
        }
        let dense = convolve(&profile.bins, &self.mass);
        Ok(Waveform {
            t0: profile.t_start - self.offset as f64 * self.dt,
            dt: self.dt,
            values: dense.into_iter().map(|m| m / self.dt).collect(),
        })
    }
}

/// Noiseless received waveform at the impulse-response bin resolution.
pub fn received_waveform(
    profile: &OcirProfile,
    pulse: &PulseSpec,
    led_bandwidth: f64,
    pd_bandwidth: f64,
    responsivity: f64,
) -> Result<Waveform> {
    let kernel = ShapingKernel::new(pulse, led_bandwidth, pd_bandwidth, profile.bin_width)?;
    let mut w = kernel.apply(profile)?;
    let a = pulse.amplitude(responsivity);
    w.values.iter_mut().for_each(|v| *v *= a);
    Ok(w)
}

/// Reads the waveform at the sampler's instants. Instants before the
/// waveform's first grid point read zero; the response is causal.
pub fn sample(waveform: &Waveform, sampler: &SamplerSpec) -> Result<Vec<f64>> {
    sampler.validate()?;
    let n = sampler.num_samples();
    let tol = 1e-6 * waveform.dt;
    if sampler.sample_time(n - 1) > waveform.end() + tol {
        return Err(Error::invalid("sampler", "window extends beyond the waveform"));
    }
    Ok((0..n).map(|k| waveform.at(sampler.sample_time(k))).collect())
}

/// SplitMix64 finalizer, used to derive independent RNG seeds.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise stream of one photodetector at one fingerprint location. Keyed by
/// the detector's position so reordering detectors keeps each one's noise.
pub fn noise_stream(location: u64, pd: &PdSpec) -> u64 {
    let key = mix_seed(pd.position[0].to_bits(), pd.position[1].to_bits());
    mix_seed(location, key)
}

/// Adds `√N_p·g_k`, `g_k ~ N(0, N0·f_s)`, drawn from `stream` of the
/// noise seed.
pub fn add_noise(samples: &mut [f64], rate: f64, noise: &NoiseSpec, num_pulses: u32, stream: u64) {
    if noise.psd == 0.0 {
        return;
    }
    let sigma = noise.sample_variance(rate, num_pulses).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(noise.seed, stream));
    for s in samples {
        let g: f64 = StandardNormal.sample(&mut rng);
        *s += sigma * g;
    }
}

/// Samples the waveform and adds accumulated receiver noise.
pub fn sample_and_noise(
    waveform: &Waveform,
    sampler: &SamplerSpec,
    noise: &NoiseSpec,
    num_pulses: u32,
    stream: u64,
) -> Result<Vec<f64>> {
    let mut v = sample(waveform, sampler)?;
    add_noise(&mut v, sampler.rate, noise, num_pulses, stream);
    Ok(v)
}

/// Window-averaged value of a sample vector, the DC received signal
/// strength.
pub fn dc_feature(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("sample vector", "empty"));
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Fingerprint input: per-photodetector sample vectors concatenated in
/// detector order.
#[derive(Debug, Clone, PartialEq)]
pub struct Supervector {
    pub values: Vec<f64>,
    pub label: [f64; 2],
}

/// Sample vectors of one location from already-traced impulse responses.
pub fn supervector_from_profiles(
    profiles: &[OcirProfile],
    pds: &[PdSpec],
    ue: &UeSpec,
    chain: &SignalChain,
    location: u64,
) -> Result<Supervector> {
    if profiles.len() != pds.len() {
        return Err(Error::DimensionMismatch { expected: pds.len(), actual: profiles.len() });
    }
    chain.pulse.validate(chain.sampler.window)?;
    let mut values = Vec::with_capacity(pds.len() * chain.sampler.num_samples());
    for (profile, pd) in profiles.iter().zip(pds) {
        let w = received_waveform(profile, &chain.pulse, ue.led_bandwidth, pd.bandwidth, pd.responsivity)?;
        let v = sample_and_noise(&w, &chain.sampler, &chain.noise, chain.pulse.num_pulses, noise_stream(location, pd))?;
        values.extend(v);
    }
    Ok(Supervector { values, label: ue.position })
}

/// Traces every detector of the scene and assembles the supervector of
/// one location.
pub fn build_supervector(
    scene: &RoomScene,
    ue: &UeSpec,
    tables: &[PatchTable],
    chain: &SignalChain,
    ocir_opts: &OcirOptions,
    location: u64,
) -> Result<Supervector> {
    if tables.len() != scene.pds.len() {
        return Err(Error::DimensionMismatch { expected: scene.pds.len(), actual: tables.len() });
    }
    let profiles = ocir_all(scene, ue, tables, ocir_opts)?;
    supervector_from_profiles(&profiles, &scene.pds, ue, chain, location)
}
