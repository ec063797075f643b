//! Household power time series: channel file parsing, resampling onto a
//! fixed grid, and per-appliance channel arithmetic.
//!
//! A channel file is ASCII, one sample per line, `<epoch_seconds> <watts>`,
//! LF-terminated. A house directory pairs several channel files with a
//! `labels.dat` file mapping channel numbers to appliance names; channel 1
//! is always the aggregate.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("line {0}: malformed channel line (expected \"<epoch_seconds> <watts>\")")]
    MalformedLine(usize),
    #[error("line {0}: timestamp not strictly increasing")]
    NonMonotonicTimestamp(usize),
    #[error("bad window: end must exceed start and the span must be divisible by the period")]
    BadWindow,
    #[error("grid mismatch: series must share start, period, and length")]
    GridMismatch,
    #[error("period {0} does not divide 86400")]
    BadPeriod(i64),
    #[error("negative value {value} at sample {index}")]
    NegativeValue { index: usize, value: f64 },
    #[error("timestamps and values differ in length ({timestamps} vs {values})")]
    LengthMismatch { timestamps: usize, values: usize },
    #[error("invalid appliance model: {0}")]
    BadModel(String),
    #[error("labels file line {0}: expected \"<channel_number> <name>\"")]
    MalformedLabel(usize),
    #[error("house directory has no aggregate channel (channel 1)")]
    MissingAggregate,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Irregularly sampled power readings straight from a channel file.
///
/// Timestamps are strictly increasing epoch seconds; values are watts ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl RawSeries {
    pub fn new(timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self, SeriesError> {
        if timestamps.len() != values.len() {
            return Err(SeriesError::LengthMismatch {
                timestamps: timestamps.len(),
                values: values.len(),
            });
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(SeriesError::NonMonotonicTimestamp(i + 2));
            }
        }
        for (index, &value) in values.iter().enumerate() {
            if value < 0.0 || value.is_nan() {
                return Err(SeriesError::NegativeValue { index, value });
            }
        }
        Ok(Self { timestamps, values })
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Uniformly sampled power readings. Sample `k` is implicitly at
/// `start + k * period`; only the grid origin and period are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularSeries {
    start: i64,
    period: i64,
    values: Vec<f64>,
}

impl RegularSeries {
    pub fn new(start: i64, period: i64, values: Vec<f64>) -> Result<Self, SeriesError> {
        if period <= 0 {
            return Err(SeriesError::BadWindow);
        }
        for (index, &value) in values.iter().enumerate() {
            if value < 0.0 || value.is_nan() {
                return Err(SeriesError::NegativeValue { index, value });
            }
        }
        Ok(Self { start, period, values })
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn period(&self) -> i64 {
        self.period
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// End of the covered span, exclusive: timestamp one period past the
    /// last sample.
    pub fn end(&self) -> i64 {
        self.start + self.period * self.values.len() as i64
    }

    pub fn same_grid(&self, other: &RegularSeries) -> bool {
        self.start == other.start
            && self.period == other.period
            && self.values.len() == other.values.len()
    }
}

/// Parse a channel file: one `<epoch_seconds> <watts>` pair per non-empty
/// line, timestamps strictly increasing.
pub fn parse_channel<R: BufRead>(reader: R) -> Result<RawSeries, SeriesError> {
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (ts_text, value_text) =
            line.split_once(' ').ok_or(SeriesError::MalformedLine(line_no))?;
        let ts: i64 = ts_text.parse().map_err(|_| SeriesError::MalformedLine(line_no))?;
        let value: f64 =
            value_text.parse().map_err(|_| SeriesError::MalformedLine(line_no))?;
        if !value.is_finite() || value < 0.0 {
            return Err(SeriesError::MalformedLine(line_no));
        }
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(SeriesError::NonMonotonicTimestamp(line_no));
            }
        }
        timestamps.push(ts);
        values.push(value);
    }
    Ok(RawSeries { timestamps, values })
}

/// Write a channel file. `parse_channel` of the output reproduces the
/// series exactly; f64 values print in shortest round-trip form.
pub fn write_channel<W: Write>(series: &RawSeries, mut writer: W) -> Result<(), SeriesError> {
    for (ts, value) in series.timestamps.iter().zip(&series.values) {
        writeln!(writer, "{ts} {value}")?;
    }
    Ok(())
}

/// Resample an irregular series onto the fixed grid covering
/// `[window_start, window_end)` with the given period.
///
/// Each grid slot takes the last raw value at or before the slot time
/// (forward fill); slots before the first raw sample are 0.
pub fn resample(
    raw: &RawSeries,
    period: i64,
    window_start: i64,
    window_end: i64,
) -> Result<RegularSeries, SeriesError> {
    if period <= 0 || window_end <= window_start || (window_end - window_start) % period != 0 {
        return Err(SeriesError::BadWindow);
    }
    let len = ((window_end - window_start) / period) as usize;
    let mut values = Vec::with_capacity(len);
    let mut j = 0usize;
    for k in 0..len {
        let slot_time = window_start + k as i64 * period;
        while j < raw.timestamps.len() && raw.timestamps[j] <= slot_time {
            j += 1;
        }
        values.push(if j == 0 { 0.0 } else { raw.values[j - 1] });
    }
    Ok(RegularSeries { start: window_start, period, values })
}

/// Remove an appliance channel from the aggregate, clamping each
/// difference at 0 so measurement noise cannot produce negative power.
pub fn subtract_appliance(
    aggregate: &RegularSeries,
    appliance: &RegularSeries,
) -> Result<RegularSeries, SeriesError> {
    if !aggregate.same_grid(appliance) {
        return Err(SeriesError::GridMismatch);
    }
    let values = aggregate
        .values
        .iter()
        .zip(&appliance.values)
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    Ok(RegularSeries { start: aggregate.start, period: aggregate.period, values })
}

/// One house's aggregate meter plus per-appliance channels, all on the
/// same sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseRecording {
    aggregate: RegularSeries,
    appliances: BTreeMap<String, RegularSeries>,
}

impl HouseRecording {
    pub fn new(
        aggregate: RegularSeries,
        appliances: BTreeMap<String, RegularSeries>,
    ) -> Result<Self, SeriesError> {
        for series in appliances.values() {
            if !series.same_grid(&aggregate) {
                return Err(SeriesError::GridMismatch);
            }
        }
        Ok(Self { aggregate, appliances })
    }

    pub fn aggregate(&self) -> &RegularSeries {
        &self.aggregate
    }

    pub fn appliances(&self) -> &BTreeMap<String, RegularSeries> {
        &self.appliances
    }

    pub fn appliance(&self, name: &str) -> Option<&RegularSeries> {
        self.appliances.get(name)
    }

    /// Write the recording as a house directory: `channel_1.dat` holds the
    /// aggregate, `channel_2.dat` onwards the appliances in map order, and
    /// `labels.dat` names each channel.
    pub fn save_dir(&self, dir: &Path) -> Result<(), SeriesError> {
        fs::create_dir_all(dir)?;
        let mut labels = String::new();
        labels.push_str("1 aggregate\n");
        write_regular_channel(&self.aggregate, &dir.join("channel_1.dat"))?;
        for (i, (name, series)) in self.appliances.iter().enumerate() {
            let channel = i + 2;
            labels.push_str(&format!("{channel} {name}\n"));
            write_regular_channel(series, &dir.join(format!("channel_{channel}.dat")))?;
        }
        fs::write(dir.join("labels.dat"), labels)?;
        Ok(())
    }

    /// Load a house directory, resampling every channel onto the grid of
    /// the aggregate channel at the given period.
    pub fn load_dir(dir: &Path, period: i64) -> Result<Self, SeriesError> {
        let labels = read_labels(&dir.join("labels.dat"))?;
        let agg_name = labels.get(&1).ok_or(SeriesError::MissingAggregate)?;
        debug_assert_eq!(agg_name, "aggregate");
        let raw_agg = read_raw_channel(&dir.join("channel_1.dat"))?;
        if raw_agg.is_empty() {
            return Err(SeriesError::MissingAggregate);
        }
        let start = raw_agg.timestamps[0];
        let last = *raw_agg.timestamps.last().unwrap();
        let spans = (last - start) / period + 1;
        let end = start + spans * period;
        let aggregate = resample(&raw_agg, period, start, end)?;
        let mut appliances = BTreeMap::new();
        for (channel, name) in &labels {
            if *channel == 1 {
                continue;
            }
            let raw = read_raw_channel(&dir.join(format!("channel_{channel}.dat")))?;
            appliances.insert(name.clone(), resample(&raw, period, start, end)?);
        }
        Self::new(aggregate, appliances)
    }
}

fn write_regular_channel(series: &RegularSeries, path: &Path) -> Result<(), SeriesError> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for (k, value) in series.values.iter().enumerate() {
        let ts = series.start + k as i64 * series.period;
        writeln!(out, "{ts} {value}")?;
    }
    Ok(())
}

fn read_raw_channel(path: &Path) -> Result<RawSeries, SeriesError> {
    parse_channel(BufReader::new(fs::File::open(path)?))
}

fn read_labels(path: &Path) -> Result<BTreeMap<u32, String>, SeriesError> {
    let text = fs::read_to_string(path)?;
    let mut labels = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (number, name) =
            line.split_once(' ').ok_or(SeriesError::MalformedLabel(i + 1))?;
        let number: u32 = number.parse().map_err(|_| SeriesError::MalformedLabel(i + 1))?;
        labels.insert(number, name.to_string());
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_two_samples() {
        let raw = parse_channel("1303132964 85\n1303132970 86".as_bytes()).unwrap();
        assert_eq!(raw.timestamps(), &[1303132964, 1303132970]);
        assert_eq!(raw.values(), &[85.0, 86.0]);
    }

    #[test]
    fn parse_empty_input() {
        let raw = parse_channel("".as_bytes()).unwrap();
        assert!(raw.is_empty());
    }

    #[test]
    fn parse_rejects_duplicate_timestamp() {
        let err = parse_channel("10 5\n10 6".as_bytes()).unwrap_err();
        assert!(matches!(err, SeriesError::NonMonotonicTimestamp(2)));
    }

    #[test]
    fn parse_rejects_garbage_with_line_number() {
        let err = parse_channel("10 5\nnot a sample\n30 7".as_bytes()).unwrap_err();
        assert!(matches!(err, SeriesError::MalformedLine(2)));
        let err = parse_channel("10 5 6".as_bytes()).unwrap_err();
        assert!(matches!(err, SeriesError::MalformedLine(1)));
        let err = parse_channel("10 -4".as_bytes()).unwrap_err();
        assert!(matches!(err, SeriesError::MalformedLine(1)));
    }

    #[test]
    fn parse_skips_blank_lines() {
        let raw = parse_channel("10 5\n\n20 6\n".as_bytes()).unwrap();
        assert_eq!(raw.len(), 2);
    }

    #[test]
    fn resample_on_grid_is_identity() {
        let raw = RawSeries::new(vec![0, 6, 12], vec![1.0, 2.0, 3.0]).unwrap();
        let regular = resample(&raw, 6, 0, 18).unwrap();
        assert_eq!(regular.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(regular.start(), 0);
        assert_eq!(regular.period(), 6);
    }

    #[test]
    fn resample_forward_fills_interior_gap() {
        let raw = RawSeries::new(vec![0, 12], vec![1.0, 3.0]).unwrap();
        let regular = resample(&raw, 6, 0, 18).unwrap();
        assert_eq!(regular.values(), &[1.0, 1.0, 3.0]);
    }

    #[test]
    fn resample_zero_fills_leading_gap() {
        let raw = RawSeries::new(vec![12], vec![5.0]).unwrap();
        let regular = resample(&raw, 6, 0, 18).unwrap();
        assert_eq!(regular.values(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn resample_rejects_bad_window() {
        let raw = RawSeries::new(vec![0], vec![1.0]).unwrap();
        assert!(matches!(resample(&raw, 6, 0, 17), Err(SeriesError::BadWindow)));
        assert!(matches!(resample(&raw, 6, 18, 18), Err(SeriesError::BadWindow)));
        assert!(matches!(resample(&raw, 0, 0, 18), Err(SeriesError::BadWindow)));
    }

    #[test]
    fn subtract_silent_appliance_is_identity() {
        let agg = RegularSeries::new(0, 6, vec![100.0, 200.0]).unwrap();
        let app = RegularSeries::new(0, 6, vec![0.0, 0.0]).unwrap();
        assert_eq!(subtract_appliance(&agg, &app).unwrap(), agg);
    }

    #[test]
    fn subtract_self_cancels() {
        let agg = RegularSeries::new(0, 6, vec![100.0, 200.0]).unwrap();
        let diff = subtract_appliance(&agg, &agg).unwrap();
        assert_eq!(diff.values(), &[0.0, 0.0]);
    }

    #[test]
    fn subtract_clamps_overshoot_at_zero() {
        let agg = RegularSeries::new(0, 6, vec![100.0]).unwrap();
        let app = RegularSeries::new(0, 6, vec![120.0]).unwrap();
        let diff = subtract_appliance(&agg, &app).unwrap();
        assert_eq!(diff.values(), &[0.0]);
    }

    #[test]
    fn subtract_rejects_grid_mismatch() {
        let a = RegularSeries::new(0, 6, vec![1.0, 2.0]).unwrap();
        let b = RegularSeries::new(6, 6, vec![1.0, 2.0]).unwrap();
        assert!(matches!(subtract_appliance(&a, &b), Err(SeriesError::GridMismatch)));
        let c = RegularSeries::new(0, 5, vec![1.0, 2.0]).unwrap();
        assert!(matches!(subtract_appliance(&a, &c), Err(SeriesError::GridMismatch)));
        let d = RegularSeries::new(0, 6, vec![1.0]).unwrap();
        assert!(matches!(subtract_appliance(&a, &d), Err(SeriesError::GridMismatch)));
    }

    #[test]
    fn house_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let agg = RegularSeries::new(0, 6, vec![50.0, 60.0, 70.0]).unwrap();
        let mut appliances = BTreeMap::new();
        appliances
            .insert("tv".to_string(), RegularSeries::new(0, 6, vec![0.0, 10.0, 20.0]).unwrap());
        let house = HouseRecording::new(agg, appliances).unwrap();
        house.save_dir(dir.path()).unwrap();
        let loaded = HouseRecording::load_dir(dir.path(), 6).unwrap();
        assert_eq!(loaded, house);
    }

    proptest! {
        #[test]
        fn channel_roundtrip_is_identity(
            samples in proptest::collection::vec((0i64..1_000_000, 0.0f64..10_000.0), 0..50)
        ) {
            let mut ts: Vec<i64> = samples.iter().map(|(t, _)| *t).collect();
            ts.sort_unstable();
            ts.dedup();
            let values: Vec<f64> =
                samples.iter().take(ts.len()).map(|(_, v)| *v).collect();
            let raw = RawSeries::new(ts, values).unwrap();
            let mut buf = Vec::new();
            write_channel(&raw, &mut buf).unwrap();
            let parsed = parse_channel(buf.as_slice()).unwrap();
            prop_assert_eq!(parsed, raw);
        }

        #[test]
        fn resample_output_length_and_sign(
            period in 1i64..20,
            slots in 1i64..50,
            raw_ts in proptest::collection::vec(0i64..500, 0..30),
        ) {
            let mut ts = raw_ts;
            ts.sort_unstable();
            ts.dedup();
            let values: Vec<f64> = ts.iter().map(|t| (*t % 97) as f64).collect();
            let raw = RawSeries::new(ts, values).unwrap();
            let out = resample(&raw, period, 0, slots * period).unwrap();
            prop_assert_eq!(out.len() as i64, slots);
            prop_assert!(out.values().iter().all(|v| *v >= 0.0));
        }
    }
}
