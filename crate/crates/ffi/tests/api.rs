use std::ffi::{c_char, CStr, CString};
use std::ptr;

use ocirloc::ann::{write_checkpoint, MlpModel};
use ocirloc_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        ocir_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn scene() -> *mut OcirScene {
    let profile = CString::new("fast").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ocir_scene_new(profile.as_ptr(), 7, &mut s) }, OcirStatus::Ok);
    assert!(!s.is_null());
    s
}

#[test]
fn scene_lifecycle_and_detector_count() {
    let s = scene();
    assert_eq!(unsafe { ocir_scene_detector_count(s) }, 6);
    unsafe { ocir_scene_free(s) };
    unsafe { ocir_scene_free(ptr::null_mut()) };
    assert_eq!(unsafe { ocir_scene_detector_count(ptr::null()) }, 0);
}

#[test]
fn unknown_profile_is_a_config_error() {
    let profile = CString::new("nope").unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { ocir_scene_new(profile.as_ptr(), 0, &mut s) };
    assert_eq!(st, OcirStatus::Config);
    assert!(s.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_are_reported() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ocir_scene_new(ptr::null(), 0, &mut s) }, OcirStatus::NullPointer);
    assert!(last_error().contains("profile"));
    let mut len = 0;
    let st = unsafe { ocir_scene_impulse_response(ptr::null_mut(), 0.0, 0.0, 0, ptr::null_mut(), 0, &mut len, ptr::null_mut()) };
    assert_eq!(st, OcirStatus::NullPointer);
}

#[test]
fn impulse_response_reports_required_length() {
    let s = scene();
    let mut len = 0;
    let st = unsafe { ocir_scene_impulse_response(s, 0.3, -0.2, 1, ptr::null_mut(), 0, &mut len, ptr::null_mut()) };
    assert_eq!(st, OcirStatus::BufferTooSmall);
    assert!(len > 0);
    let mut bins = vec![0.0; len];
    let mut width = 0.0;
    let st = unsafe { ocir_scene_impulse_response(s, 0.3, -0.2, 1, bins.as_mut_ptr(), bins.len(), &mut len, &mut width) };
    assert_eq!(st, OcirStatus::Ok);
    assert!(width > 0.0);
    assert!(bins.iter().all(|b| *b >= 0.0));
    assert!(bins.iter().sum::<f64>() > 0.0);
    let st = unsafe { ocir_scene_impulse_response(s, 0.3, -0.2, 6, bins.as_mut_ptr(), bins.len(), &mut len, &mut width) };
    assert_eq!(st, OcirStatus::InvalidArgument);
    unsafe { ocir_scene_free(s) };
}

#[test]
fn features_are_deterministic_and_shaped() {
    let s = scene();
    let mut out = vec![0.0; 4096];
    let mut len = 0;
    let st = unsafe { ocir_scene_features(s, 0.1, 0.2, OcirDetectorSet::Anchors, 0.0, 1e-5, 0.0, 1, out.as_mut_ptr(), out.len(), &mut len) };
    assert_eq!(st, OcirStatus::Ok, "{}", last_error());
    assert_eq!(len, 3);
    assert!(out[..3].iter().all(|v| *v > 0.0));

    let st = unsafe { ocir_scene_features(s, 0.1, 0.2, OcirDetectorSet::TwoPd, 500e6, 1e-5, 2e-8, 9, out.as_mut_ptr(), out.len(), &mut len) };
    assert_eq!(st, OcirStatus::Ok, "{}", last_error());
    assert_eq!(len % 2, 0);
    let first = out[..len].to_vec();
    let st = unsafe { ocir_scene_features(s, 0.1, 0.2, OcirDetectorSet::TwoPd, 500e6, 1e-5, 2e-8, 9, out.as_mut_ptr(), out.len(), &mut len) };
    assert_eq!(st, OcirStatus::Ok);
    assert_eq!(first, out[..len]);

    let st = unsafe { ocir_scene_features(s, 0.1, 0.2, OcirDetectorSet::OnePd, 500e6, -1.0, 0.0, 1, out.as_mut_ptr(), out.len(), &mut len) };
    assert_ne!(st, OcirStatus::Ok);
    unsafe { ocir_scene_free(s) };
}

#[test]
fn model_prediction_matches_library() {
    let model = MlpModel::init(3, 5, 11);
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model, None).unwrap();

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ocir_model_load_bytes(bytes.as_ptr(), bytes.len(), &mut m) }, OcirStatus::Ok);
    assert_eq!(unsafe { ocir_model_input_len(m) }, 3);
    let x = [0.2, -1.0, 0.7];
    let mut xy = [0.0; 2];
    assert_eq!(unsafe { ocir_model_predict(m, x.as_ptr(), 3, xy.as_mut_ptr()) }, OcirStatus::Ok);
    assert_eq!(xy, model.predict_position(&x).unwrap());
    assert_ne!(unsafe { ocir_model_predict(m, x.as_ptr(), 2, xy.as_mut_ptr()) }, OcirStatus::Ok);
    unsafe { ocir_model_free(m) };
}

#[test]
fn model_loads_from_file_and_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let model = MlpModel::init(4, 6, 2);
    write_checkpoint(std::fs::File::create(&path).unwrap(), &model, None).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ocir_model_load(cpath.as_ptr(), &mut m) }, OcirStatus::Ok);
    assert_eq!(unsafe { ocir_model_input_len(m) }, 4);
    unsafe { ocir_model_free(m) };

    let junk = b"not a checkpoint";
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ocir_model_load_bytes(junk.as_ptr(), junk.len(), &mut m) }, OcirStatus::Format);
    let missing = CString::new(dir.path().join("none").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ocir_model_load(missing.as_ptr(), &mut m) }, OcirStatus::Io);
}

#[test]
fn error_message_truncates_and_reports_length() {
    let mut s = ptr::null_mut();
    unsafe { ocir_scene_new(ptr::null(), 0, &mut s) };
    let full = unsafe { ocir_last_error(ptr::null_mut(), 0) };
    let mut buf = [0 as c_char; 4];
    let n = unsafe { ocir_last_error(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 3);
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(ocir_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header = include_str!("../include/ocirloc.h");
    for f in [
        "ocir_scene_new", "ocir_scene_from_toml", "ocir_scene_free", "ocir_scene_detector_count",
        "ocir_scene_impulse_response", "ocir_scene_features", "ocir_model_load", "ocir_model_load_bytes",
        "ocir_model_free", "ocir_model_input_len", "ocir_model_predict", "ocir_last_error", "ocir_version",
    ] {
        assert!(header.contains(f), "{f}");
    }
}
