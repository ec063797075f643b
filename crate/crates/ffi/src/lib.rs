//! C ABI for the imgnilm classifier.
//!
//! The surface is deliberately small: load a trained checkpoint into an
//! opaque handle, ask it to classify raw RGB pixels or an in-memory PNG,
//! encode a power window into heatmap pixels, and free the handle. Every
//! fallible call returns a status code and, when given a buffer, a
//! nul-terminated error message; nothing unwinds across the boundary.
//!
//! The generated header lands in `include/imgnilm.h` at build time.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use imgnilm::checkpoint::{load_checkpoint_file, CheckpointError};
use imgnilm::dataset::Label;
use imgnilm::heatmap::{encode_window, read_png_bytes, HeatmapSpec, RgbImage, Window};
use imgnilm::nn::Network;
use imgnilm::trainer::{image_to_tensor, predict};

/// The call succeeded.
pub const IMGNILM_OK: i32 = 0;
/// A required pointer argument was null.
pub const IMGNILM_ERR_NULL_ARGUMENT: i32 = 1;
/// The file could not be read.
pub const IMGNILM_ERR_IO: i32 = 2;
/// The arguments or file contents failed validation.
pub const IMGNILM_ERR_INVALID: i32 = 3;
/// An internal invariant broke; the library state is still sound.
pub const IMGNILM_ERR_PANIC: i32 = 4;

/// A loaded classifier. Create with `imgnilm_model_load`, destroy with
/// `imgnilm_model_free`; safe to share across threads for prediction.
pub struct ImgnilmModel {
    net: Network,
}

/// Copy `message` into the caller's buffer, truncated and nul-terminated.
unsafe fn fill_error(buf: *mut c_char, cap: usize, message: &str) {
    if buf.is_null() || cap == 0 {
        return;
    }
    let bytes = message.as_bytes();
    let n = bytes.len().min(cap - 1);
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
    *buf.add(n) = 0;
}

/// The library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn imgnilm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load a model checkpoint from `path` (UTF-8) into `*out_model`.
///
/// On failure `*out_model` is untouched and the error message is written
/// to `err` (up to `err_cap` bytes including the terminator).
///
/// # Safety
/// `path` must point to a nul-terminated string; `out_model` must be a
/// valid pointer; `err` may be null.
#[no_mangle]
pub unsafe extern "C" fn imgnilm_model_load(
    path: *const c_char,
    out_model: *mut *mut ImgnilmModel,
    err: *mut c_char,
    err_cap: usize,
) -> i32 {
    if path.is_null() || out_model.is_null() {
        fill_error(err, err_cap, "path and out_model must not be null");
        return IMGNILM_ERR_NULL_ARGUMENT;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(p) => p.to_owned(),
        Err(_) => {
            fill_error(err, err_cap, "path is not valid UTF-8");
            return IMGNILM_ERR_INVALID;
        }
    };
    match catch_unwind(|| load_checkpoint_file(&path)) {
        Ok(Ok((net, _meta))) => {
            *out_model = Box::into_raw(Box::new(ImgnilmModel { net }));
            IMGNILM_OK
        }
        Ok(Err(e)) => {
            fill_error(err, err_cap, &e.to_string());
            match e {
                CheckpointError::Io(_) => IMGNILM_ERR_IO,
                _ => IMGNILM_ERR_INVALID,
            }
        }
        Err(_) => {
            fill_error(err, err_cap, "internal panic while loading the checkpoint");
            IMGNILM_ERR_PANIC
        }
    }
}

/// Release a model returned by `imgnilm_model_load`. A null pointer is a
/// no-op.
///
/// # Safety
/// `model` must be a pointer from `imgnilm_model_load` that has not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn imgnilm_model_free(model: *mut ImgnilmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side length of the square RGB input the model expects, or 0 if `model`
/// is null.
///
/// # Safety
/// `model` must be null or a live pointer from `imgnilm_model_load`.
#[no_mangle]
pub unsafe extern "C" fn imgnilm_model_input_side(model: *const ImgnilmModel) -> usize {
    if model.is_null() {
        0
    } else {
        (*model).net.config().input_side
    }
}

unsafe fn finish_prediction(
    model: &ImgnilmModel,
    image: RgbImage,
    out_label: *mut i32,
    out_probs: *mut f64,
    err: *mut c_char,
    err_cap: usize,
) -> i32 {
    match catch_unwind(AssertUnwindSafe(|| predict(&model.net, &image_to_tensor(&image)))) {
        Ok(Ok((label, probs))) => {
            if !out_label.is_null() {
                *out_label = match label {
                    Label::ClassI => 0,
                    Label::ClassII => 1,
                };
            }
            if !out_probs.is_null() {
                *out_probs = probs[0];
                *out_probs.add(1) = probs[1];
            }
            IMGNILM_OK
        }
        Ok(Err(e)) => {
            fill_error(err, err_cap, &e.to_string());
            IMGNILM_ERR_INVALID
        }
        Err(_) => {
            fill_error(err, err_cap, "internal panic during prediction");
            IMGNILM_ERR_PANIC
        }
    }
}

/// Classify a raw RGB8 image of exactly side × side × 3 bytes, row-major.
///
/// Writes 0 (appliance absent) or 1 (appliance active) to `out_label` and
/// the two class probabilities to `out_probs` (length 2); either output
/// pointer may be null to skip it.
///
/// # Safety
/// `model` must be live; `pixels` must point to `pixels_len` readable
/// bytes; `out_probs`, when non-null, must have room for two doubles.
#[no_mangle]
pub unsafe extern "C" fn imgnilm_predict_rgb(
    model: *const ImgnilmModel,
    pixels: *const u8,
    pixels_len: usize,
    out_label: *mut i32,
    out_probs: *mut f64,
    err: *mut c_char,
    err_cap: usize,
) -> i32 {
    if model.is_null() || pixels.is_null() {
        fill_error(err, err_cap, "model and pixels must not be null");
        return IMGNILM_ERR_NULL_ARGUMENT;
    }
    let model = &*model;
    let side = model.net.config().input_side;
    let needed = side * side * 3;
    if pixels_len != needed {
        fill_error(
            err,
            err_cap,
            &format!("expected {needed} bytes ({side}×{side} RGB), got {pixels_len}"),
        );
        return IMGNILM_ERR_INVALID;
    }
    let data = std::slice::from_raw_parts(pixels, pixels_len).to_vec();
    finish_prediction(model, RgbImage::new(side, side, data), out_label, out_probs, err, err_cap)
}

/// Classify a PNG held in memory. The decoded image must match the
/// model's input side; outputs are as in `imgnilm_predict_rgb`.
///
/// # Safety
/// `model` must be live; `png` must point to `png_len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn imgnilm_predict_png(
    model: *const ImgnilmModel,
    png: *const u8,
    png_len: usize,
    out_label: *mut i32,
    out_probs: *mut f64,
    err: *mut c_char,
    err_cap: usize,
) -> i32 {
    if model.is_null() || png.is_null() {
        fill_error(err, err_cap, "model and png must not be null");
        return IMGNILM_ERR_NULL_ARGUMENT;
    }
    let bytes = std::slice::from_raw_parts(png, png_len);
    let image = match catch_unwind(AssertUnwindSafe(|| read_png_bytes(bytes))) {
        Ok(Ok(image)) => image,
        Ok(Err(e)) => {
            fill_error(err, err_cap, &e.to_string());
            return IMGNILM_ERR_INVALID;
        }
        Err(_) => {
            fill_error(err, err_cap, "internal panic while decoding the PNG");
            return IMGNILM_ERR_PANIC;
        }
    };
    finish_prediction(&*model, image, out_label, out_probs, err, err_cap)
}

/// Pixel dimensions of a heatmap with the given window and step: one
/// column per hour, one row per step within the hour.
///
/// # Safety
/// `out_rows` and `out_cols` must be valid pointers; `err` may be null.
#[no_mangle]
pub unsafe extern "C" fn imgnilm_heatmap_dims(
    window_hours: u32,
    step_seconds: u32,
    out_rows: *mut usize,
    out_cols: *mut usize,
    err: *mut c_char,
    err_cap: usize,
) -> i32 {
    if out_rows.is_null() || out_cols.is_null() {
        fill_error(err, err_cap, "out_rows and out_cols must not be null");
        return IMGNILM_ERR_NULL_ARGUMENT;
    }
    let spec = HeatmapSpec { window_hours, step_seconds, ..HeatmapSpec::default() };
    if let Err(e) = spec.validate() {
        fill_error(err, err_cap, &e.to_string());
        return IMGNILM_ERR_INVALID;
    }
    *out_rows = spec.rows();
    *out_cols = spec.cols();
    IMGNILM_OK
}

/// Encode one window of power samples (watts, `period_seconds` apart) as
/// heatmap pixels: z-score normalized, clamped, and colormapped. Writes
/// rows × cols × 3 RGB bytes (see `imgnilm_heatmap_dims`) to `out_rgb`.
///
/// `values_len` must equal the window's sample count,
/// `window_hours · 3600 / period_seconds`.
///
/// # Safety
/// `values` must point to `values_len` readable doubles; `out_rgb` must
/// have room for `out_cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn imgnilm_encode_heatmap(
    values: *const f64,
    values_len: usize,
    period_seconds: i64,
    window_hours: u32,
    step_seconds: u32,
    out_rgb: *mut u8,
    out_cap: usize,
    err: *mut c_char,
    err_cap: usize,
) -> i32 {
    if values.is_null() || out_rgb.is_null() {
        fill_error(err, err_cap, "values and out_rgb must not be null");
        return IMGNILM_ERR_NULL_ARGUMENT;
    }
    let spec = HeatmapSpec { window_hours, step_seconds, ..HeatmapSpec::default() };
    if let Err(e) = spec.validate() {
        fill_error(err, err_cap, &e.to_string());
        return IMGNILM_ERR_INVALID;
    }
    if period_seconds <= 0 || spec.window_seconds() % period_seconds != 0 {
        fill_error(
            err,
            err_cap,
            &format!("period of {period_seconds}s does not divide the window evenly"),
        );
        return IMGNILM_ERR_INVALID;
    }
    let needed_samples = spec.window_samples(period_seconds);
    if values_len != needed_samples {
        fill_error(
            err,
            err_cap,
            &format!("window needs {needed_samples} samples, got {values_len}"),
        );
        return IMGNILM_ERR_INVALID;
    }
    let needed_out = spec.rows() * spec.cols() * 3;
    if out_cap < needed_out {
        fill_error(err, err_cap, &format!("out_rgb needs {needed_out} bytes, got {out_cap}"));
        return IMGNILM_ERR_INVALID;
    }
    let samples = std::slice::from_raw_parts(values, values_len);
    match catch_unwind(AssertUnwindSafe(|| {
        encode_window(&Window::from_values(0, period_seconds, samples), &spec)
    })) {
        Ok(Ok(image)) => {
            std::ptr::copy_nonoverlapping(image.data().as_ptr(), out_rgb, needed_out);
            IMGNILM_OK
        }
        Ok(Err(e)) => {
            fill_error(err, err_cap, &e.to_string());
            IMGNILM_ERR_INVALID
        }
        Err(_) => {
            fill_error(err, err_cap, "internal panic while encoding the heatmap");
            IMGNILM_ERR_PANIC
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::path::Path;
    use std::ptr;

    use imgnilm::checkpoint::{save_checkpoint_file, CheckpointMeta};
    use imgnilm::heatmap::write_png;
    use imgnilm::nn::{HeadInit, NetworkConfig};

    fn test_config() -> NetworkConfig {
        NetworkConfig {
            input_side: 8,
            conv_filters: [2, 2, 2],
            fc_widths: [4, 4, 2],
            ..NetworkConfig::default()
        }
    }

    fn write_test_checkpoint(path: &Path) -> Network {
        let net = Network::with_head(test_config(), 11, HeadInit::Random).unwrap();
        save_checkpoint_file(&net, CheckpointMeta { seed: 11, epochs: 0 }, path).unwrap();
        net
    }

    fn load(path: &Path, err: &mut [c_char]) -> (i32, *mut ImgnilmModel) {
        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        let mut model: *mut ImgnilmModel = ptr::null_mut();
        let status = unsafe {
            imgnilm_model_load(c_path.as_ptr(), &mut model, err.as_mut_ptr(), err.len())
        };
        (status, model)
    }

    fn error_text(err: &[c_char]) -> String {
        unsafe { CStr::from_ptr(err.as_ptr()) }.to_string_lossy().into_owned()
    }

    fn patterned_pixels(n: usize) -> Vec<u8> {
        (0..n).map(|i| (i * 37 % 251) as u8).collect()
    }

    #[test]
    fn version_is_a_nul_terminated_string() {
        let version = unsafe { CStr::from_ptr(imgnilm_version()) };
        assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn load_predict_free_roundtrip_matches_the_library() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = write_test_checkpoint(&path);

        let mut err = [0 as c_char; 256];
        let (status, model) = load(&path, &mut err);
        assert_eq!(status, IMGNILM_OK, "{}", error_text(&err));
        assert_eq!(unsafe { imgnilm_model_input_side(model) }, 8);

        let pixels = patterned_pixels(8 * 8 * 3);
        let mut label = -1i32;
        let mut probs = [0.0f64; 2];
        let status = unsafe {
            imgnilm_predict_rgb(
                model,
                pixels.as_ptr(),
                pixels.len(),
                &mut label,
                probs.as_mut_ptr(),
                err.as_mut_ptr(),
                err.len(),
            )
        };
        assert_eq!(status, IMGNILM_OK, "{}", error_text(&err));

        let image = RgbImage::new(8, 8, pixels);
        let (expected_label, expected_probs) = predict(&net, &image_to_tensor(&image)).unwrap();
        assert_eq!(label, if expected_label == Label::ClassII { 1 } else { 0 });
        assert_eq!(probs, expected_probs, "probabilities must match the library bitwise");

        unsafe { imgnilm_model_free(model) };
    }

    #[test]
    fn png_and_rgb_predictions_agree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_test_checkpoint(&path);
        let mut err = [0 as c_char; 256];
        let (status, model) = load(&path, &mut err);
        assert_eq!(status, IMGNILM_OK);

        let pixels = patterned_pixels(8 * 8 * 3);
        let mut png = Vec::new();
        write_png(&RgbImage::new(8, 8, pixels.clone()), &mut png).unwrap();

        let mut rgb_probs = [0.0f64; 2];
        let mut png_probs = [9.0f64; 2];
        unsafe {
            assert_eq!(
                imgnilm_predict_rgb(
                    model,
                    pixels.as_ptr(),
                    pixels.len(),
                    ptr::null_mut(),
                    rgb_probs.as_mut_ptr(),
                    err.as_mut_ptr(),
                    err.len(),
                ),
                IMGNILM_OK
            );
            assert_eq!(
                imgnilm_predict_png(
                    model,
                    png.as_ptr(),
                    png.len(),
                    ptr::null_mut(),
                    png_probs.as_mut_ptr(),
                    err.as_mut_ptr(),
                    err.len(),
                ),
                IMGNILM_OK
            );
            imgnilm_model_free(model);
        }
        assert_eq!(rgb_probs, png_probs);
    }

    #[test]
    fn wrong_pixel_count_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_test_checkpoint(&path);
        let mut err = [0 as c_char; 256];
        let (_, model) = load(&path, &mut err);

        let pixels = patterned_pixels(8 * 8 * 3 - 1);
        let status = unsafe {
            imgnilm_predict_rgb(
                model,
                pixels.as_ptr(),
                pixels.len(),
                ptr::null_mut(),
                ptr::null_mut(),
                err.as_mut_ptr(),
                err.len(),
            )
        };
        assert_eq!(status, IMGNILM_ERR_INVALID);
        assert!(error_text(&err).contains("expected 192 bytes"), "{}", error_text(&err));
        unsafe { imgnilm_model_free(model) };
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut err = [0 as c_char; 64];
        let status = unsafe {
            imgnilm_model_load(ptr::null(), ptr::null_mut(), err.as_mut_ptr(), err.len())
        };
        assert_eq!(status, IMGNILM_ERR_NULL_ARGUMENT);
        assert!(!error_text(&err).is_empty());

        let status = unsafe {
            imgnilm_predict_rgb(
                ptr::null(),
                ptr::null(),
                0,
                ptr::null_mut(),
                ptr::null_mut(),
                err.as_mut_ptr(),
                err.len(),
            )
        };
        assert_eq!(status, IMGNILM_ERR_NULL_ARGUMENT);
        unsafe { imgnilm_model_free(ptr::null_mut()) };
    }

    #[test]
    fn missing_and_corrupt_files_report_distinct_codes() {
        let dir = tempfile::tempdir().unwrap();
        let mut err = [0 as c_char; 256];

        let (status, _) = load(&dir.path().join("absent.ckpt"), &mut err);
        assert_eq!(status, IMGNILM_ERR_IO);
        assert!(!error_text(&err).is_empty());

        let garbage = dir.path().join("garbage.ckpt");
        std::fs::write(&garbage, b"XXXXnot a checkpoint").unwrap();
        let (status, _) = load(&garbage, &mut err);
        assert_eq!(status, IMGNILM_ERR_INVALID);
        assert!(error_text(&err).contains("magic"), "{}", error_text(&err));
    }

    #[test]
    fn heatmap_dims_and_encoding_match_the_library() {
        let mut rows = 0usize;
        let mut cols = 0usize;
        let mut err = [0 as c_char; 256];
        let status = unsafe {
            imgnilm_heatmap_dims(24, 60, &mut rows, &mut cols, err.as_mut_ptr(), err.len())
        };
        assert_eq!(status, IMGNILM_OK);
        assert_eq!((rows, cols), (60, 24));

        let period = 60i64;
        let values: Vec<f64> = (0..24 * 60).map(|i| (i % 97) as f64 * 10.0).collect();
        let mut out = vec![0u8; rows * cols * 3];
        let status = unsafe {
            imgnilm_encode_heatmap(
                values.as_ptr(),
                values.len(),
                period,
                24,
                60,
                out.as_mut_ptr(),
                out.len(),
                err.as_mut_ptr(),
                err.len(),
            )
        };
        assert_eq!(status, IMGNILM_OK, "{}", error_text(&err));

        let spec = HeatmapSpec { window_hours: 24, step_seconds: 60, ..HeatmapSpec::default() };
        let expected = encode_window(&Window::from_values(0, period, &values), &spec).unwrap();
        assert_eq!(out, expected.data());
    }

    #[test]
    fn encode_rejects_bad_shapes() {
        let mut err = [0 as c_char; 256];
        let mut rows = 0usize;
        let mut cols = 0usize;
        let status = unsafe {
            imgnilm_heatmap_dims(24, 7, &mut rows, &mut cols, err.as_mut_ptr(), err.len())
        };
        assert_eq!(status, IMGNILM_ERR_INVALID, "7s steps do not divide an hour");

        let values = [0.0f64; 10];
        let mut out = vec![0u8; 60 * 24 * 3];
        let status = unsafe {
            imgnilm_encode_heatmap(
                values.as_ptr(),
                values.len(),
                60,
                24,
                60,
                out.as_mut_ptr(),
                out.len(),
                err.as_mut_ptr(),
                err.len(),
            )
        };
        assert_eq!(status, IMGNILM_ERR_INVALID);
        assert!(error_text(&err).contains("1440 samples"), "{}", error_text(&err));

        let values = vec![0.0f64; 1440];
        let mut short = vec![0u8; 10];
        let status = unsafe {
            imgnilm_encode_heatmap(
                values.as_ptr(),
                values.len(),
                60,
                24,
                60,
                short.as_mut_ptr(),
                short.len(),
                err.as_mut_ptr(),
                err.len(),
            )
        };
        assert_eq!(status, IMGNILM_ERR_INVALID);
        assert!(error_text(&err).contains("out_rgb needs"), "{}", error_text(&err));
    }
}
