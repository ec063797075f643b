//! Labeled dataset construction.
//!
//! For an appliance of interest, every window where it ran yields a pair of
//! images: Class II encodes the aggregate as-is (signature present) and
//! Class I encodes the aggregate with the appliance's channel subtracted
//! (signature removed). Pairing both classes from the same window keeps the
//! classes balanced and stops the classifier from keying on anything except
//! the appliance itself. Windows where the appliance stayed off can
//! optionally be added as extra Class I examples.
//!
//! Splits are stratified per class with a seeded shuffle, so the same seed
//! always reproduces the same train/val/test assignment.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heatmap::{
    self, encode_window, slice_windows, HeatmapError, HeatmapSpec, RgbImage, Window,
};
use crate::series::{subtract_appliance, HouseRecording, SeriesError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("house has no appliance channel named {0:?}")]
    UnknownAppliance(String),
    #[error("cannot split: no {0} images")]
    EmptyClass(Label),
    #[error("invalid dataset spec: {0}")]
    BadSpec(String),
    #[error("duplicate image path {0:?}")]
    DuplicatePath(String),
    #[error("malformed manifest line {line}: {message}")]
    BadManifest { line: usize, message: String },
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Class I: the appliance left no signature in the window.
/// Class II: the appliance was running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "classI")]
    ClassI,
    #[serde(rename = "classII")]
    ClassII,
}

impl Label {
    /// The token used in file names and the manifest.
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::ClassI => "classI",
            Label::ClassII => "classII",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One encoded window with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: RgbImage,
    pub label: Label,
    pub house: String,
    pub appliance: String,
    /// Epoch seconds of the window's first sample.
    pub window_start: i64,
}

impl LabeledImage {
    /// Canonical file name: `<house>_<appliance>_<label>_<window_start>.png`.
    pub fn file_name(&self) -> String {
        format!(
            "{}_{}_{}_{}.png",
            self.house, self.appliance, self.label, self.window_start
        )
    }
}

/// When an appliance counts as "on" within a window: some run of at least
/// `min_consecutive` per-step means strictly above `on_threshold` watts.
/// The threshold rejects standby draw and meter noise; the run length
/// rejects single-step glitches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityRule {
    pub on_threshold: f64,
    pub min_consecutive: usize,
}

impl Default for ActivityRule {
    fn default() -> Self {
        Self { on_threshold: 10.0, min_consecutive: 5 }
    }
}

impl ActivityRule {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.on_threshold.is_nan() || self.on_threshold <= 0.0 {
            return Err(DatasetError::BadSpec("activity threshold must be > 0 W".into()));
        }
        if self.min_consecutive == 0 {
            return Err(DatasetError::BadSpec("activity run length must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which windows produce images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmissionPolicy {
    /// Active windows emit a Class I / Class II pair; inactive windows emit
    /// nothing, so the classes stay exactly balanced.
    #[default]
    BalancedPairs,
    /// As above, plus one Class I image per inactive window.
    WithInactiveClassI,
}

/// Train/val/test proportions. The test set takes `test_fraction` of each
/// class; the validation set then takes `val_fraction_of_train` of what
/// remains; floors round down and leftovers stay in train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction_of_train: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self { test_fraction: 0.2, val_fraction_of_train: 0.2, seed }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for (name, f) in [
            ("test fraction", self.test_fraction),
            ("validation fraction", self.val_fraction_of_train),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(DatasetError::BadSpec(format!("{name} must lie in (0, 1), got {f}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: Label,
    pub house: String,
    pub appliance: String,
    pub window_start: i64,
    pub split: Split,
}

/// Index of a written dataset: one entry per image, in emission order,
/// serialized as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn save<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut writer = BufWriter::new(writer);
        for entry in &self.entries {
            serde_json::to_writer(&mut writer, entry)
                .map_err(|e| DatasetError::BadSpec(e.to_string()))?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self, DatasetError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| DatasetError::BadManifest { line: i + 1, message: e.to_string() })?;
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn save_path(&self, path: &Path) -> Result<(), DatasetError> {
        self.save(fs::File::create(path)?)
    }

    pub fn load_path(path: &Path) -> Result<Self, DatasetError> {
        Self::load(BufReader::new(fs::File::open(path)?))
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// True iff the appliance's per-step mean power stays strictly above the
/// threshold for at least `min_consecutive` consecutive steps somewhere in
/// the window. Steps run in time order, so a qualifying run may cross an
/// hour boundary.
pub fn appliance_active(window: &Window, spec: &HeatmapSpec, rule: &ActivityRule) -> bool {
    let period = window.period();
    assert_eq!(
        spec.step_seconds as i64 % period,
        0,
        "window must be aligned to the heatmap step"
    );
    let per_step = (spec.step_seconds as i64 / period) as usize;
    assert_eq!(window.len() % per_step, 0, "window must hold whole steps");
    let mut run = 0usize;
    for step in window.values().chunks(per_step) {
        let mean = step.iter().sum::<f64>() / per_step as f64;
        if mean > rule.on_threshold {
            run += 1;
            if run >= rule.min_consecutive {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// Build labeled images for one appliance.
///
/// Every window of the aggregate is checked against the appliance channel.
/// Active windows emit Class II from the aggregate and Class I from the
/// aggregate minus the appliance; inactive windows follow the emission
/// policy. The output order is window order, Class I before Class II within
/// a pair.
pub fn build_classes(
    house_id: &str,
    house: &HouseRecording,
    appliance: &str,
    spec: &HeatmapSpec,
    rule: &ActivityRule,
    stride: i64,
    policy: EmissionPolicy,
) -> Result<Vec<LabeledImage>, DatasetError> {
    spec.validate()?;
    rule.validate()?;
    let channel = house
        .appliances()
        .get(appliance)
        .ok_or_else(|| DatasetError::UnknownAppliance(appliance.to_string()))?;
    let background = subtract_appliance(house.aggregate(), channel)?;

    let agg_windows = slice_windows(house.aggregate(), spec, stride);
    let app_windows = slice_windows(channel, spec, stride);
    let bg_windows = slice_windows(&background, spec, stride);

    let mut images = Vec::new();
    for ((agg, app), bg) in agg_windows.iter().zip(&app_windows).zip(&bg_windows) {
        let emit = |image: RgbImage, label: Label| LabeledImage {
            image,
            label,
            house: house_id.to_string(),
            appliance: appliance.to_string(),
            window_start: agg.start(),
        };
        if appliance_active(app, spec, rule) {
            images.push(emit(encode_window(bg, spec)?, Label::ClassI));
            images.push(emit(encode_window(agg, spec)?, Label::ClassII));
        } else if policy == EmissionPolicy::WithInactiveClassI {
            images.push(emit(encode_window(agg, spec)?, Label::ClassI));
        }
    }
    Ok(images)
}

/// Nearest-neighbor resize to a square image: output pixel (i, j) copies
/// input pixel (floor(i·H/side), floor(j·W/side)).
pub fn resize_nearest(image: &RgbImage, side: usize) -> RgbImage {
    assert!(side >= 1, "resize target must be at least 1 pixel");
    assert!(image.width() > 0 && image.height() > 0, "cannot resize an empty image");
    if image.width() == side && image.height() == side {
        return image.clone();
    }
    let mut data = Vec::with_capacity(side * side * 3);
    for i in 0..side {
        let src_row = i * image.height() / side;
        for j in 0..side {
            let src_col = j * image.width() / side;
            data.extend_from_slice(&image.pixel(src_row, src_col));
        }
    }
    RgbImage::new(side, side, data)
}

/// Assign every image to train, val, or test.
///
/// Each class is shuffled independently with its own seeded stream; the
/// last `test_fraction` of the shuffle becomes test, the last
/// `val_fraction_of_train` of the remainder becomes val, and the rest
/// train. Manifest entries keep the input order.
pub fn stratified_split(
    images: &[LabeledImage],
    spec: &SplitSpec,
) -> Result<DatasetManifest, DatasetError> {
    spec.validate()?;
    let mut splits = vec![Split::Train; images.len()];
    for (stream, label) in [(0u64, Label::ClassI), (1u64, Label::ClassII)] {
        let mut indices: Vec<usize> =
            (0..images.len()).filter(|&i| images[i].label == label).collect();
        if indices.is_empty() {
            return Err(DatasetError::EmptyClass(label));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        indices.shuffle(&mut rng);

        let n = indices.len();
        let n_test = (n as f64 * spec.test_fraction).floor() as usize;
        let n_rest = n - n_test;
        let n_val = (n_rest as f64 * spec.val_fraction_of_train).floor() as usize;
        for &i in &indices[n - n_test..] {
            splits[i] = Split::Test;
        }
        for &i in &indices[n_rest - n_val..n_rest] {
            splits[i] = Split::Val;
        }
    }

    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(images.len());
    for (img, split) in images.iter().zip(splits) {
        let path = img.file_name();
        if !seen.insert(path.clone()) {
            return Err(DatasetError::DuplicatePath(path));
        }
        entries.push(ManifestEntry {
            path,
            label: img.label,
            house: img.house.clone(),
            appliance: img.appliance.clone(),
            window_start: img.window_start,
            split,
        });
    }
    Ok(DatasetManifest { entries })
}

/// Split the images, optionally resize them, and write the PNGs plus a
/// `manifest.jsonl` index into `dir`.
pub fn write_dataset(
    dir: &Path,
    images: &[LabeledImage],
    split: &SplitSpec,
    resize_to: Option<usize>,
) -> Result<DatasetManifest, DatasetError> {
    let manifest = stratified_split(images, split)?;
    fs::create_dir_all(dir)?;
    for (img, entry) in images.iter().zip(&manifest.entries) {
        let out = match resize_to {
            Some(side) => resize_nearest(&img.image, side),
            None => img.image.clone(),
        };
        let file = fs::File::create(dir.join(&entry.path))?;
        heatmap::write_png(&out, BufWriter::new(file))?;
    }
    manifest.save_path(&dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

/// Load the images of one split back from disk, in manifest order.
pub fn load_split(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<Vec<(RgbImage, Label)>, DatasetError> {
    let mut out = Vec::new();
    for entry in manifest.split_entries(split) {
        let file = fs::File::open(dir.join(&entry.path))?;
        let image = heatmap::read_png(BufReader::new(file))?;
        out.push((image, entry.label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::RegularSeries;
    use crate::synth::{synth_house, ApplianceModel};
    use proptest::prelude::*;

    fn test_spec() -> HeatmapSpec {
        HeatmapSpec { window_hours: 1, step_seconds: 60, ..HeatmapSpec::default() }
    }

    #[test]
    fn silent_appliance_is_inactive() {
        let spec = test_spec();
        let values = vec![0.0; spec.window_samples(60)];
        let w = Window::from_values(0, 60, &values);
        assert!(!appliance_active(&w, &spec, &ActivityRule::default()));
    }

    #[test]
    fn sustained_load_is_active() {
        let spec = test_spec();
        let mut values = vec![0.0; spec.window_samples(60)];
        for v in values.iter_mut().take(5) {
            *v = 1000.0;
        }
        let w = Window::from_values(0, 60, &values);
        assert!(appliance_active(&w, &spec, &ActivityRule::default()));
    }

    #[test]
    fn single_spike_is_not_active() {
        let spec = test_spec();
        let mut values = vec![0.0; spec.window_samples(60)];
        values[17] = 1000.0;
        let w = Window::from_values(0, 60, &values);
        assert!(!appliance_active(&w, &spec, &ActivityRule::default()));
    }

    #[test]
    fn run_of_four_misses_rule_of_five() {
        let spec = test_spec();
        let mut values = vec![0.0; spec.window_samples(60)];
        for v in values.iter_mut().skip(10).take(4) {
            *v = 1000.0;
        }
        let w = Window::from_values(0, 60, &values);
        assert!(!appliance_active(&w, &spec, &ActivityRule::default()));
    }

    #[test]
    fn exactly_at_threshold_does_not_count() {
        let spec = test_spec();
        let values = vec![10.0; spec.window_samples(60)];
        let w = Window::from_values(0, 60, &values);
        assert!(!appliance_active(&w, &spec, &ActivityRule::default()));
        let values = vec![10.01; spec.window_samples(60)];
        let w = Window::from_values(0, 60, &values);
        assert!(appliance_active(&w, &spec, &ActivityRule::default()));
    }

    #[test]
    fn run_may_cross_hour_boundary() {
        let spec = HeatmapSpec { window_hours: 2, step_seconds: 60, ..HeatmapSpec::default() };
        let mut values = vec![0.0; spec.window_samples(60)];
        // Three steps before the hour mark, two after.
        for v in values.iter_mut().skip(57).take(5) {
            *v = 500.0;
        }
        let w = Window::from_values(0, 60, &values);
        assert!(appliance_active(&w, &spec, &ActivityRule::default()));
    }

    fn two_channel_house(aggregate: Vec<f64>, appliance: Vec<f64>) -> HouseRecording {
        let agg = RegularSeries::new(0, 60, aggregate).unwrap();
        let app = RegularSeries::new(0, 60, appliance).unwrap();
        HouseRecording::new(agg, [("fridge".to_string(), app)].into_iter().collect()).unwrap()
    }

    #[test]
    fn dead_appliance_emits_nothing_under_balanced_pairs() {
        let spec = test_spec();
        let n = spec.window_samples(60) * 3;
        let house = two_channel_house(vec![100.0; n], vec![0.0; n]);
        let images = build_classes(
            "h1",
            &house,
            "fridge",
            &spec,
            &ActivityRule::default(),
            3600,
            EmissionPolicy::BalancedPairs,
        )
        .unwrap();
        assert!(images.is_empty());
    }

    #[test]
    fn unknown_appliance_is_an_error() {
        let spec = test_spec();
        let n = spec.window_samples(60);
        let house = two_channel_house(vec![100.0; n], vec![0.0; n]);
        let err = build_classes(
            "h1",
            &house,
            "kettle",
            &spec,
            &ActivityRule::default(),
            3600,
            EmissionPolicy::BalancedPairs,
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::UnknownAppliance(name) if name == "kettle"));
    }

    #[test]
    fn active_windows_emit_balanced_pairs() {
        let spec = test_spec();
        let per_window = spec.window_samples(60);
        let n = per_window * 4;
        let mut appliance = vec![0.0; n];
        // Active in windows 1 and 3 only.
        for w in [1usize, 3] {
            for v in appliance.iter_mut().skip(w * per_window + 5).take(10) {
                *v = 900.0;
            }
        }
        let aggregate: Vec<f64> = appliance.iter().map(|a| a + 150.0).collect();
        let house = two_channel_house(aggregate, appliance);
        let images = build_classes(
            "h1",
            &house,
            "fridge",
            &spec,
            &ActivityRule::default(),
            3600,
            EmissionPolicy::BalancedPairs,
        )
        .unwrap();
        assert_eq!(images.len(), 4, "two active windows give two pairs");
        let class_i = images.iter().filter(|i| i.label == Label::ClassI).count();
        assert_eq!(class_i, 2);
        assert_eq!(images[0].window_start, 3600);
        assert_eq!(images[0].label, Label::ClassI);
        assert_eq!(images[1].label, Label::ClassII);
        assert_eq!(images[2].window_start, 3 * 3600);
    }

    #[test]
    fn inactive_windows_become_class_i_under_optional_policy() {
        let spec = test_spec();
        let per_window = spec.window_samples(60);
        let n = per_window * 4;
        let mut appliance = vec![0.0; n];
        for v in appliance.iter_mut().skip(per_window + 5).take(10) {
            *v = 900.0;
        }
        let aggregate: Vec<f64> = appliance.iter().map(|a| a + 150.0).collect();
        let house = two_channel_house(aggregate, appliance);
        let images = build_classes(
            "h1",
            &house,
            "fridge",
            &spec,
            &ActivityRule::default(),
            3600,
            EmissionPolicy::WithInactiveClassI,
        )
        .unwrap();
        // One active window (a pair) + three inactive Class I images.
        assert_eq!(images.len(), 5);
        let class_ii: Vec<_> = images.iter().filter(|i| i.label == Label::ClassII).collect();
        assert_eq!(class_ii.len(), 1);
        assert_eq!(class_ii[0].window_start, 3600);
    }

    #[test]
    fn zero_appliance_window_gives_identical_pair_images() {
        // When the appliance is exactly zero over a window, subtracting it
        // changes nothing, so a forced Class I equals the aggregate encoding.
        let spec = test_spec();
        let per_window = spec.window_samples(60);
        let appliance = vec![0.0; per_window];
        let aggregate: Vec<f64> = (0..per_window).map(|i| 100.0 + (i % 7) as f64).collect();
        let house = two_channel_house(aggregate.clone(), appliance);
        let images = build_classes(
            "h1",
            &house,
            "fridge",
            &spec,
            &ActivityRule::default(),
            3600,
            EmissionPolicy::WithInactiveClassI,
        )
        .unwrap();
        assert_eq!(images.len(), 1);
        let direct =
            encode_window(&Window::from_values(0, 60, &aggregate), &spec).unwrap();
        assert_eq!(images[0].image, direct);
    }

    #[test]
    fn pair_images_differ_even_where_appliance_was_off() {
        // The appliance runs for part of the window; removing it shifts the
        // window statistics, so pixels outside the run change too.
        let spec = test_spec();
        let per_window = spec.window_samples(60);
        let mut appliance = vec![0.0; per_window];
        for v in appliance.iter_mut().take(20) {
            *v = 2000.0;
        }
        let aggregate: Vec<f64> =
            (0..per_window).map(|i| appliance[i] + 100.0 + 10.0 * ((i % 5) as f64)).collect();
        let house = two_channel_house(aggregate, appliance);
        let images = build_classes(
            "h1",
            &house,
            "fridge",
            &spec,
            &ActivityRule::default(),
            3600,
            EmissionPolicy::BalancedPairs,
        )
        .unwrap();
        let class_i = &images[0].image;
        let class_ii = &images[1].image;
        // Rows 30.. of the single column cover minutes the appliance was off.
        let differing = (30..spec.rows()).any(|r| class_i.pixel(r, 0) != class_ii.pixel(r, 0));
        assert!(differing, "z-score shift should alter appliance-free pixels");
    }

    #[test]
    fn synthetic_recording_pairs_match_active_day_count() {
        let models = vec![(
            "washer".to_string(),
            ApplianceModel::two_state(1800.0, 0.8, 2400.0),
        )];
        let house = synth_house(&models, 200.0, 0.0, 10, 6, 99).unwrap();
        let spec = HeatmapSpec::default();
        let rule = ActivityRule::default();
        let channel = &house.appliances()["washer"];
        let active_days = slice_windows(channel, &spec, 86400)
            .iter()
            .filter(|w| appliance_active(w, &spec, &rule))
            .count();
        assert!(active_days > 0 && active_days < 10, "seed should give a mixed run");
        let images = build_classes(
            "synth",
            &house,
            "washer",
            &spec,
            &rule,
            86400,
            EmissionPolicy::BalancedPairs,
        )
        .unwrap();
        assert_eq!(images.len(), active_days * 2);
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = RgbImage::new(3, 2, (0..18).collect());
        assert_eq!(resize_nearest(&img, 3), RgbImage::new(3, 3, {
            // Height 2 → 3 repeats the source rows 0,0,1.
            let mut d = Vec::new();
            for i in [0usize, 0, 1] {
                d.extend_from_slice(&img.data()[i * 9..(i + 1) * 9]);
            }
            d
        }));
        let square = RgbImage::new(2, 2, (0..12).collect());
        assert_eq!(resize_nearest(&square, 2), square);
    }

    #[test]
    fn resize_doubling_replicates_blocks() {
        let img = RgbImage::new(2, 2, vec![
            10, 11, 12, 20, 21, 22, //
            30, 31, 32, 40, 41, 42,
        ]);
        let up = resize_nearest(&img, 4);
        assert_eq!(up.pixel(0, 0), [10, 11, 12]);
        assert_eq!(up.pixel(0, 1), [10, 11, 12]);
        assert_eq!(up.pixel(1, 1), [10, 11, 12]);
        assert_eq!(up.pixel(0, 2), [20, 21, 22]);
        assert_eq!(up.pixel(2, 0), [30, 31, 32]);
        assert_eq!(up.pixel(3, 3), [40, 41, 42]);
    }

    #[test]
    fn resize_heatmap_to_square() {
        let img = RgbImage::new(24, 600, vec![5; 24 * 600 * 3]);
        let out = resize_nearest(&img, 300);
        assert_eq!(out.width(), 300);
        assert_eq!(out.height(), 300);
    }

    fn dummy_images(class_i: usize, class_ii: usize) -> Vec<LabeledImage> {
        let mk = |label, i| LabeledImage {
            image: RgbImage::new(1, 1, vec![0, 0, 0]),
            label,
            house: "h1".into(),
            appliance: "dw".into(),
            window_start: i as i64 * 86400,
        };
        let mut v: Vec<LabeledImage> = (0..class_i).map(|i| mk(Label::ClassI, i)).collect();
        v.extend((0..class_ii).map(|i| mk(Label::ClassII, class_i + i)));
        v
    }

    #[test]
    fn split_counts_match_floor_arithmetic() {
        let manifest = stratified_split(&dummy_images(100, 100), &SplitSpec::new(7)).unwrap();
        for label in [Label::ClassI, Label::ClassII] {
            let of = |s| {
                manifest
                    .entries
                    .iter()
                    .filter(|e| e.label == label && e.split == s)
                    .count()
            };
            assert_eq!(of(Split::Test), 20);
            assert_eq!(of(Split::Val), 16);
            assert_eq!(of(Split::Train), 64);
        }
    }

    #[test]
    fn split_is_deterministic_under_seed() {
        let images = dummy_images(33, 41);
        let a = stratified_split(&images, &SplitSpec::new(123)).unwrap();
        let b = stratified_split(&images, &SplitSpec::new(123)).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&images, &SplitSpec::new(124)).unwrap();
        assert_ne!(a, c, "a different seed should reshuffle some assignment");
    }

    #[test]
    fn split_keeps_emission_order() {
        let images = dummy_images(5, 5);
        let manifest = stratified_split(&images, &SplitSpec::new(1)).unwrap();
        let starts: Vec<i64> = manifest.entries.iter().map(|e| e.window_start).collect();
        let expected: Vec<i64> = images.iter().map(|i| i.window_start).collect();
        assert_eq!(starts, expected);
    }

    #[test]
    fn split_rejects_missing_class() {
        let err = stratified_split(&dummy_images(4, 0), &SplitSpec::new(0)).unwrap_err();
        assert!(matches!(err, DatasetError::EmptyClass(Label::ClassII)));
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let images = dummy_images(4, 4);
        for bad in [0.0, 1.0, -0.1, 1.5] {
            let spec = SplitSpec { test_fraction: bad, ..SplitSpec::new(0) };
            assert!(stratified_split(&images, &spec).is_err(), "fraction {bad} accepted");
        }
    }

    #[test]
    fn duplicate_paths_are_rejected() {
        let mut images = dummy_images(2, 2);
        images[1].window_start = images[0].window_start;
        let err = stratified_split(&images, &SplitSpec::new(0)).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicatePath(_)));
    }

    #[test]
    fn manifest_roundtrips_through_jsonl() {
        let manifest = stratified_split(&dummy_images(10, 10), &SplitSpec::new(5)).unwrap();
        let mut buf = Vec::new();
        manifest.save(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 20, "one record per line");
        assert!(text.lines().next().unwrap().contains("\"classI\""));
        let back = DatasetManifest::load(&buf[..]).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn manifest_load_reports_bad_line() {
        let text = "{\"path\":\"a.png\",\"label\":\"classI\",\"house\":\"h\",\"appliance\":\"d\",\"window_start\":0,\"split\":\"train\"}\nnot json\n";
        let err = DatasetManifest::load(text.as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::BadManifest { line: 2, .. }));
    }

    #[test]
    fn dataset_write_and_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = test_spec();
        let per_window = spec.window_samples(60);
        let n = per_window * 6;
        let mut appliance = vec![0.0; n];
        for w in 0..6 {
            if w % 2 == 0 {
                for v in appliance.iter_mut().skip(w * per_window).take(10) {
                    *v = 700.0;
                }
            }
        }
        let aggregate: Vec<f64> =
            appliance.iter().enumerate().map(|(i, a)| a + 120.0 + (i % 11) as f64).collect();
        let house = two_channel_house(aggregate, appliance);
        let images = build_classes(
            "h1",
            &house,
            "fridge",
            &spec,
            &ActivityRule::default(),
            3600,
            EmissionPolicy::BalancedPairs,
        )
        .unwrap();
        assert_eq!(images.len(), 6);

        let spec60 = SplitSpec {
            test_fraction: 0.34,
            val_fraction_of_train: 0.5,
            seed: 11,
        };
        let manifest = write_dataset(dir.path(), &images, &spec60, Some(32)).unwrap();
        assert!(dir.path().join("manifest.jsonl").exists());
        assert_eq!(
            DatasetManifest::load_path(&dir.path().join("manifest.jsonl")).unwrap(),
            manifest
        );

        let mut total = 0;
        for split in [Split::Train, Split::Val, Split::Test] {
            let loaded = load_split(dir.path(), &manifest, split).unwrap();
            for (img, _) in &loaded {
                assert_eq!(img.width(), 32);
                assert_eq!(img.height(), 32);
            }
            total += loaded.len();
        }
        assert_eq!(total, images.len());
    }

    proptest! {
        // Splits partition each class with floor-rule counts and per-class
        // proportions.
        #[test]
        fn split_partition_law(class_i in 1usize..60, class_ii in 1usize..60, seed in 0u64..500) {
            let images = dummy_images(class_i, class_ii);
            let manifest = stratified_split(&images, &SplitSpec::new(seed)).unwrap();
            prop_assert_eq!(manifest.entries.len(), images.len());
            for (label, n) in [(Label::ClassI, class_i), (Label::ClassII, class_ii)] {
                let count = |s| manifest.entries.iter()
                    .filter(|e| e.label == label && e.split == s).count();
                let n_test = (n as f64 * 0.2).floor() as usize;
                let n_val = ((n - n_test) as f64 * 0.2).floor() as usize;
                prop_assert_eq!(count(Split::Test), n_test);
                prop_assert_eq!(count(Split::Val), n_val);
                prop_assert_eq!(count(Split::Train), n - n_test - n_val);
            }
        }

        // Resizing twice to the same side equals resizing once.
        #[test]
        fn resize_idempotent(w in 1usize..8, h in 1usize..8, side in 1usize..10) {
            let data: Vec<u8> = (0..w * h * 3).map(|i| (i * 31 % 256) as u8).collect();
            let img = RgbImage::new(w, h, data);
            let once = resize_nearest(&img, side);
            let twice = resize_nearest(&once, side);
            prop_assert_eq!(once, twice);
        }

        // Swapping color channels commutes with resizing.
        #[test]
        fn resize_commutes_with_channel_swap(w in 1usize..8, h in 1usize..8, side in 1usize..10) {
            let data: Vec<u8> = (0..w * h * 3).map(|i| (i * 17 % 256) as u8).collect();
            let img = RgbImage::new(w, h, data);
            let swap = |img: &RgbImage| {
                let mut d = img.data().to_vec();
                d.chunks_mut(3).for_each(|px| px.swap(0, 2));
                RgbImage::new(img.width(), img.height(), d)
            };
            prop_assert_eq!(swap(&resize_nearest(&img, side)), resize_nearest(&swap(&img), side));
        }
    }

    #[test]
    fn thousand_class_split_matches_table_scale_arithmetic() {
        let manifest = stratified_split(&dummy_images(1995, 1995), &SplitSpec::new(3)).unwrap();
        let of = |label, s| {
            manifest.entries.iter().filter(|e| e.label == label && e.split == s).count()
        };
        for label in [Label::ClassI, Label::ClassII] {
            assert_eq!(of(label, Split::Test), 399);
            assert_eq!(of(label, Split::Val), 319);
            assert_eq!(of(label, Split::Train), 1277);
        }
    }
}
