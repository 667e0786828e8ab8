//! C interface: scenes built from experiment configs, impulse responses,
//! fingerprint features and trained-network inference.
//!
//! Every fallible call returns an [`OcirStatus`]; on failure the message is
//! kept per thread and read with [`ocir_last_error`]. Handles are opaque and
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ocirloc::ann::{read_checkpoint, MlpModel};
use ocirloc::channel::{build_patch_table, ocir, OcirOptions, PatchTable, RoomScene};
use ocirloc::dataset::{FingerprintField, Sampling, Standardizer};
use ocirloc::experiments::{DetectorSet, ExperimentConfig};
use ocirloc::signal::NoiseSpec;
use ocirloc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcirStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Numerical = 4,
    Config = 5,
    Format = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcirDetectorSet {
    OnePd = 0,
    TwoPd = 1,
    Anchors = 2,
}

impl From<OcirDetectorSet> for DetectorSet {
    fn from(d: OcirDetectorSet) -> Self {
        match d {
            OcirDetectorSet::OnePd => DetectorSet::OnePd,
            OcirDetectorSet::TwoPd => DetectorSet::TwoPd,
            OcirDetectorSet::Anchors => DetectorSet::Anchors,
        }
    }
}

/// Room, detectors and signal parameters of one experiment config.
pub struct OcirScene {
    cfg: ExperimentConfig,
    scene: RoomScene,
    tables: Vec<Option<PatchTable>>,
}

/// Trained network with the input standardization it was fitted with.
pub struct OcirModel {
    model: MlpModel,
    standardizer: Option<Standardizer>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> OcirStatus {
    match e {
        Error::InvalidInput { .. }
        | Error::DimensionMismatch { .. }
        | Error::PatchCapExceeded { .. }
        | Error::DelayOutsideWindow { .. }
        | Error::FilterTruncated { .. }
        | Error::EmptyGrid(_)
        | Error::TooFewRecords { .. }
        | Error::SingularGeometry(_)
        | Error::EmptyResult(_) => OcirStatus::InvalidArgument,
        Error::Domain { .. } | Error::NonPositivePower(_) => OcirStatus::Domain,
        Error::DegenerateData(_) | Error::Diverged { .. } => OcirStatus::Numerical,
        Error::Config(_) => OcirStatus::Config,
        Error::Format { .. } => OcirStatus::Format,
        Error::Io { .. } => OcirStatus::Io,
    }
}

fn fail(status: OcirStatus, msg: impl Into<String>) -> OcirStatus {
    set_error(msg);
    status
}

fn guard<F: FnOnce() -> Result<(), OcirStatus>>(f: F) -> OcirStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            OcirStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(OcirStatus::Panic, "internal panic"),
    }
}

fn check(r: ocirloc::Result<()>) -> Result<(), OcirStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn lift<T>(r: ocirloc::Result<T>) -> Result<T, OcirStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, OcirStatus> {
    if s.is_null() {
        return Err(fail(OcirStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(OcirStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copies `values` into `out` when it fits; `len` always receives the
/// required length.
unsafe fn emit(values: &[f64], out: *mut f64, capacity: usize, len: *mut usize) -> Result<(), OcirStatus> {
    if len.is_null() {
        return Err(fail(OcirStatus::NullPointer, "len is null"));
    }
    *len = values.len();
    if out.is_null() || capacity < values.len() {
        return Err(fail(
            OcirStatus::BufferTooSmall,
            format!("need {} values, buffer holds {capacity}", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

fn new_scene(cfg: ExperimentConfig) -> Result<Box<OcirScene>, OcirStatus> {
    check(cfg.validate())?;
    let scene = lift(cfg.scene())?;
    let tables = vec![None; scene.pds.len()];
    Ok(Box::new(OcirScene { cfg, scene, tables }))
}

impl OcirScene {
    fn table(&mut self, pd: usize) -> ocirloc::Result<&PatchTable> {
        if self.tables[pd].is_none() {
            self.tables[pd] = Some(build_patch_table(&self.scene, &self.scene.pds[pd])?);
        }
        Ok(self.tables[pd].as_ref().expect("filled above"))
    }

    fn field(&mut self, x: f64, y: f64, pds: &[usize], opts: &OcirOptions) -> ocirloc::Result<FingerprintField> {
        let ue = self.cfg.ue();
        let mut profiles = Vec::with_capacity(pds.len());
        for &q in pds {
            let det = self.scene.pds[q];
            let scene = self.scene.clone();
            profiles.push(ocir(&scene, &ue.at(x, y), &det, self.table(q)?, opts)?);
        }
        let sub = self.scene.clone().with_pds(pds.iter().map(|&q| self.scene.pds[q]).collect());
        Ok(FingerprintField::from_profiles(&sub, &ue, &[[x, y]], opts, profiles)?.with_sample_start(self.cfg.sample_start))
    }
}

/// Scene of a built-in profile (`"fast"` or `"paper"`) with the given seed.
///
/// # Safety
/// `profile` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ocir_scene_new(profile: *const c_char, seed: u64, out: *mut *mut OcirScene) -> OcirStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(OcirStatus::NullPointer, "out is null"));
        }
        let mut cfg = lift(ExperimentConfig::profile(text(profile, "profile")?))?;
        cfg.seed = seed;
        *out = Box::into_raw(new_scene(cfg)?);
        Ok(())
    })
}

/// Scene of a TOML experiment config.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ocir_scene_from_toml(toml: *const c_char, out: *mut *mut OcirScene) -> OcirStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(OcirStatus::NullPointer, "out is null"));
        }
        let cfg = lift(ExperimentConfig::from_toml(text(toml, "toml")?))?;
        *out = Box::into_raw(new_scene(cfg)?);
        Ok(())
    })
}

/// # Safety
/// `scene` must come from a scene constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ocir_scene_free(scene: *mut OcirScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of ceiling detectors: one-PD, two-PD and anchor layouts in order.
///
/// # Safety
/// `scene` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ocir_scene_detector_count(scene: *const OcirScene) -> usize {
    scene.as_ref().map_or(0, |s| s.scene.pds.len())
}

/// Impulse response bins of detector `pd` for a transmitter at `(x, y)`.
/// Bins are `bin_width` seconds wide; the config's bin width is used.
///
/// # Safety
/// `scene` must be a live handle, `bins` must hold `capacity` values and
/// `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ocir_scene_impulse_response(
    scene: *mut OcirScene,
    x: f64,
    y: f64,
    pd: usize,
    bins: *mut f64,
    capacity: usize,
    len: *mut usize,
    bin_width: *mut f64,
) -> OcirStatus {
    guard(|| {
        let s = scene.as_mut().ok_or_else(|| fail(OcirStatus::NullPointer, "scene is null"))?;
        if pd >= s.scene.pds.len() {
            return Err(fail(OcirStatus::InvalidArgument, format!("detector {pd} out of range")));
        }
        let opts = s.cfg.ocir;
        let det = s.scene.pds[pd];
        let ue = s.cfg.ue().at(x, y);
        let room = s.scene.clone();
        let profile = lift(ocir(&room, &ue, &det, lift(s.table(pd))?, &opts))?;
        if !bin_width.is_null() {
            *bin_width = profile.bin_width;
        }
        emit(&profile.bins, bins, capacity, len)
    })
}

/// Fingerprint features of one transmitter location: the sampled received
/// waveform of each detector in `set`, concatenated, or one window-averaged
/// value per detector when `rate_hz` is 0. The config's pulse is used with
/// `energy_j` per pulse. Noise with `noise_psd` (A²/Hz, 0 for none) is drawn
/// from `noise_seed`.
///
/// # Safety
/// `scene` must be a live handle, `out` must hold `capacity` values and
/// `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ocir_scene_features(
    scene: *mut OcirScene,
    x: f64,
    y: f64,
    set: OcirDetectorSet,
    rate_hz: f64,
    energy_j: f64,
    noise_psd: f64,
    noise_seed: u64,
    out: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> OcirStatus {
    guard(|| {
        let s = scene.as_mut().ok_or_else(|| fail(OcirStatus::NullPointer, "scene is null"))?;
        let sampling = if rate_hz == 0.0 { Sampling::Dc } else { Sampling::Rate(rate_hz) };
        let mut pulse = s.cfg.pulse;
        pulse.energy = energy_j;
        let pds = s.cfg.detectors(set.into());
        let opts = s.cfg.binning(pulse.width);
        let field = lift(s.field(x, y, &pds, &opts))?;
        let local: Vec<usize> = (0..pds.len()).collect();
        let samples = lift(field.unit_samples(&local, &pulse, sampling))?;
        let noise = NoiseSpec { psd: noise_psd, seed: noise_seed };
        let rec = samples.realize(&field, &pulse, &noise).pop().expect("one location");
        emit(&rec.features, out, capacity, len)
    })
}

/// Loads a network checkpoint from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ocir_model_load(path: *const c_char, out: *mut *mut OcirModel) -> OcirStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(OcirStatus::NullPointer, "out is null"));
        }
        let path = text(path, "path")?;
        let file = std::fs::File::open(path).map_err(|e| fail(OcirStatus::Io, format!("{path}: {e}")))?;
        let (model, standardizer) = lift(read_checkpoint(std::io::BufReader::new(file)))?;
        *out = Box::into_raw(Box::new(OcirModel { model, standardizer }));
        Ok(())
    })
}

/// Loads a network checkpoint from memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ocir_model_load_bytes(data: *const u8, len: usize, out: *mut *mut OcirModel) -> OcirStatus {
    guard(|| {
        if out.is_null() || data.is_null() {
            return Err(fail(OcirStatus::NullPointer, "data or out is null"));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        let (model, standardizer) = lift(read_checkpoint(bytes))?;
        *out = Box::into_raw(Box::new(OcirModel { model, standardizer }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from a model loader and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ocir_model_free(model: *mut OcirModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature count the network expects.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ocir_model_input_len(model: *const OcirModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.n_in())
}

/// Estimated position in meters from raw features; the stored
/// standardization is applied first.
///
/// # Safety
/// `model` must be a live handle, `features` must hold `n` values and
/// `xy` must hold two.
#[no_mangle]
pub unsafe extern "C" fn ocir_model_predict(
    model: *const OcirModel,
    features: *const f64,
    n: usize,
    xy: *mut f64,
) -> OcirStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(OcirStatus::NullPointer, "model is null"))?;
        if features.is_null() || xy.is_null() {
            return Err(fail(OcirStatus::NullPointer, "features or xy is null"));
        }
        let mut x = std::slice::from_raw_parts(features, n).to_vec();
        if let Some(st) = &m.standardizer {
            x.iter_mut().for_each(|v| *v = st.apply(*v));
        }
        let p = lift(m.model.predict_position(&x))?;
        *xy = p[0];
        *xy.add(1) = p[1];
        Ok(())
    })
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `capacity`. Returns the full message length without the
/// terminator.
///
/// # Safety
/// `buf` must hold `capacity` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn ocir_last_error(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && capacity > 0 {
            let n = e.len().min(capacity - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ocir_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
