//! Window-to-heatmap encoding.
//!
//! A window of `w` hours is laid out as a grid with one column per hour and
//! one row per `s`-second step inside the hour, each pixel holding the mean
//! power over its step. The grid is z-score normalized per window, clamped,
//! and mapped through a piecewise-linear colormap to an 8-bit RGB image.
//! Because the z-score is invariant to positive affine rescaling, the same
//! consumption pattern encodes to the same image regardless of overall
//! level, which is what lets one classifier serve different houses.

use std::io::{BufRead, Seek, Write};

use image::ImageDecoder;
use thiserror::Error;

use crate::series::RegularSeries;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("step of {step}s is not a multiple of the sample period {period}s")]
    StepMismatch { step: u32, period: i64 },
    #[error("invalid heatmap spec: {0}")]
    BadSpec(String),
    #[error("png decode failed: {0}")]
    DecodeError(String),
    #[error("unsupported png: {0} (need 8-bit RGB without alpha)")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Piecewise-linear colormap over `t` in [0, 1].
///
/// Stops are `(t, rgb)` with strictly increasing positions, the first at 0
/// and the last at 1. Sampling interpolates each channel linearly between
/// the surrounding stops and rounds half away from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Colormap {
    stops: Vec<(f64, [u8; 3])>,
}

impl Colormap {
    pub fn new(stops: Vec<(f64, [u8; 3])>) -> Result<Self, HeatmapError> {
        if stops.len() < 2 {
            return Err(HeatmapError::BadSpec("colormap needs at least two stops".into()));
        }
        if stops[0].0 != 0.0 || stops[stops.len() - 1].0 != 1.0 {
            return Err(HeatmapError::BadSpec(
                "colormap stops must span t=0 to t=1".into(),
            ));
        }
        if stops.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(HeatmapError::BadSpec(
                "colormap stop positions must be strictly increasing".into(),
            ));
        }
        Ok(Self { stops })
    }

    /// Dark blue through light blue into red: cold pixels are low power,
    /// hot pixels high.
    pub fn blue_red() -> Self {
        Self {
            stops: vec![
                (0.0, [0, 0, 139]),
                (0.5, [173, 216, 230]),
                (1.0, [255, 0, 0]),
            ],
        }
    }

    pub fn stops(&self) -> &[(f64, [u8; 3])] {
        &self.stops
    }

    pub fn sample(&self, t: f64) -> [u8; 3] {
        let t = t.clamp(0.0, 1.0);
        let mut i = 0;
        while i + 2 < self.stops.len() && t > self.stops[i + 1].0 {
            i += 1;
        }
        let (t0, a) = self.stops[i];
        let (t1, b) = self.stops[i + 1];
        let u = (t - t0) / (t1 - t0);
        let mut rgb = [0u8; 3];
        for c in 0..3 {
            let lo = a[c] as f64;
            let hi = b[c] as f64;
            rgb[c] = (lo + u * (hi - lo)).round() as u8;
        }
        rgb
    }
}

/// Encoding parameters for one heatmap.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSpec {
    /// Window size `w` in hours (one column per hour).
    pub window_hours: u32,
    /// Aggregation step `s` in seconds (one row per step); must divide 3600.
    pub step_seconds: u32,
    /// Z-scores are clamped to ±`z_clamp` before colormapping.
    pub z_clamp: f64,
    pub colormap: Colormap,
}

impl Default for HeatmapSpec {
    fn default() -> Self {
        Self {
            window_hours: 24,
            step_seconds: 6,
            z_clamp: 3.0,
            colormap: Colormap::blue_red(),
        }
    }
}

impl HeatmapSpec {
    pub fn validate(&self) -> Result<(), HeatmapError> {
        if self.window_hours == 0 {
            return Err(HeatmapError::BadSpec("window must be at least one hour".into()));
        }
        if self.step_seconds == 0 || 3600 % self.step_seconds != 0 {
            return Err(HeatmapError::BadSpec(format!(
                "step of {}s does not divide 3600",
                self.step_seconds
            )));
        }
        if self.z_clamp.is_nan() || self.z_clamp <= 0.0 {
            return Err(HeatmapError::BadSpec("z-clamp must be > 0".into()));
        }
        Ok(())
    }

    /// Grid rows: steps per hour.
    pub fn rows(&self) -> usize {
        (3600 / self.step_seconds) as usize
    }

    /// Grid columns: hours per window.
    pub fn cols(&self) -> usize {
        self.window_hours as usize
    }

    /// Window length in seconds.
    pub fn window_seconds(&self) -> i64 {
        self.window_hours as i64 * 3600
    }

    /// Samples per window at the given period.
    pub fn window_samples(&self, period: i64) -> usize {
        (self.window_seconds() / period) as usize
    }
}

/// A borrowed view of one window of a regular series.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    start: i64,
    period: i64,
    values: &'a [f64],
}

impl<'a> Window<'a> {
    pub fn from_values(start: i64, period: i64, values: &'a [f64]) -> Self {
        assert!(period > 0, "window period must be positive");
        Self { start, period, values }
    }

    /// Epoch seconds of the first sample.
    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn period(&self) -> i64 {
        self.period
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Row-major grid of per-pixel values, rows × cols.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ValueGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "grid dimensions do not match value count");
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// 8-bit RGB image, row-major from the top-left, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3, "pixel buffer does not match dimensions");
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Every complete window `[t, t + w·3600)` with `t = start + k·stride`.
/// Partial trailing windows are dropped; a series shorter than one window
/// yields no windows at all.
///
/// Panics if the stride or window length is not sample-aligned; callers
/// validate specs up front.
pub fn slice_windows<'a>(
    series: &'a RegularSeries,
    spec: &HeatmapSpec,
    stride: i64,
) -> Vec<Window<'a>> {
    let period = series.period();
    assert!(stride > 0 && stride % period == 0, "stride must be a positive multiple of the period");
    assert_eq!(
        spec.window_seconds() % period,
        0,
        "window length must be a multiple of the period"
    );
    let window_len = spec.window_samples(period);
    let stride_samples = (stride / period) as usize;
    let mut windows = Vec::new();
    let mut offset = 0usize;
    while offset + window_len <= series.len() {
        windows.push(Window {
            start: series.start() + offset as i64 * period,
            period,
            values: &series.values()[offset..offset + window_len],
        });
        offset += stride_samples;
    }
    windows
}

/// Mean power per `s`-second step, laid out as one column per hour and one
/// row per step within the hour.
pub fn aggregate_window(window: &Window, spec: &HeatmapSpec) -> Result<ValueGrid, HeatmapError> {
    let period = window.period();
    if spec.step_seconds as i64 % period != 0 {
        return Err(HeatmapError::StepMismatch { step: spec.step_seconds, period });
    }
    assert_eq!(
        window.len(),
        spec.window_samples(period),
        "window sample count does not match the grid dimensions"
    );
    let rows = spec.rows();
    let cols = spec.cols();
    let per_step = (spec.step_seconds as i64 / period) as usize;
    let mut values = vec![0.0f64; rows * cols];
    for col in 0..cols {
        for row in 0..rows {
            let begin = (col * 3600 + row * spec.step_seconds as usize) / period as usize;
            let step = &window.values()[begin..begin + per_step];
            let sum: f64 = step.iter().sum();
            values[row * cols + col] = sum / per_step as f64;
        }
    }
    Ok(ValueGrid { rows, cols, values })
}

/// Z-score normalize a grid in place of its statistics: subtract the grid
/// mean and divide by the population standard deviation. A constant grid
/// (zero spread) maps to all zeros.
pub fn zscore_normalize(grid: &ValueGrid) -> ValueGrid {
    let n = grid.values.len();
    if n == 0 {
        return grid.clone();
    }
    let first = grid.values[0];
    if grid.values.iter().all(|v| *v == first) {
        return ValueGrid { rows: grid.rows, cols: grid.cols, values: vec![0.0; n] };
    }
    let mean = grid.values.iter().sum::<f64>() / n as f64;
    let var = grid.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std == 0.0 {
        return ValueGrid { rows: grid.rows, cols: grid.cols, values: vec![0.0; n] };
    }
    let values = grid.values.iter().map(|v| (v - mean) / std).collect();
    ValueGrid { rows: grid.rows, cols: grid.cols, values }
}

/// Map a grid of z-scores to an RGB image: clamp to ±z_clamp, rescale to
/// [0, 1], and sample the colormap. Pixel (row, col) holds grid (row, col).
pub fn colorize(grid: &ValueGrid, spec: &HeatmapSpec) -> RgbImage {
    let span = 2.0 * spec.z_clamp;
    let mut data = Vec::with_capacity(grid.values.len() * 3);
    for z in &grid.values {
        debug_assert!(z.is_finite(), "colorize expects finite z-scores");
        let clamped = z.clamp(-spec.z_clamp, spec.z_clamp);
        let t = (clamped + spec.z_clamp) / span;
        data.extend_from_slice(&spec.colormap.sample(t));
    }
    RgbImage { width: grid.cols, height: grid.rows, data }
}

/// Full window-to-image pipeline: per-step means, z-score normalization,
/// colormapping.
pub fn encode_window(window: &Window, spec: &HeatmapSpec) -> Result<RgbImage, HeatmapError> {
    let grid = aggregate_window(window, spec)?;
    Ok(colorize(&zscore_normalize(&grid), spec))
}

/// Write an image as an 8-bit RGB PNG without alpha or interlacing.
pub fn write_png<W: Write>(image: &RgbImage, writer: W) -> Result<(), HeatmapError> {
    let encoder = image::codecs::png::PngEncoder::new(writer);
    image::ImageEncoder::write_image(
        encoder,
        &image.data,
        image.width as u32,
        image.height as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| HeatmapError::DecodeError(e.to_string()))?;
    Ok(())
}

/// Read an 8-bit RGB PNG. Any other color layout is rejected rather than
/// converted, so a write/read trip is always bit-exact.
pub fn read_png<R: BufRead + Seek>(reader: R) -> Result<RgbImage, HeatmapError> {
    let decoder = image::codecs::png::PngDecoder::new(reader)
        .map_err(|e| HeatmapError::DecodeError(e.to_string()))?;
    if decoder.color_type() != image::ColorType::Rgb8 {
        return Err(HeatmapError::UnsupportedFormat(format!("{:?}", decoder.color_type())));
    }
    let (width, height) = decoder.dimensions();
    let mut data = vec![0u8; decoder.total_bytes() as usize];
    decoder
        .read_image(&mut data)
        .map_err(|e| HeatmapError::DecodeError(e.to_string()))?;
    Ok(RgbImage { width: width as usize, height: height as usize, data })
}

/// `read_png` over an in-memory buffer.
pub fn read_png_bytes(bytes: &[u8]) -> Result<RgbImage, HeatmapError> {
    read_png(std::io::Cursor::new(bytes))
}
