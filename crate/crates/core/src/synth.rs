//! Seeded synthetic household recordings.
//!
//! Generates a base load, per-appliance channels for the three appliance
//! behaviours (two-state, multi-state, always-on cycling), and an aggregate
//! with optional Gaussian meter noise. The same seed always produces a
//! bit-identical recording, so downstream tests can pin exact expectations
//! without shipping real meter data.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::series::{HouseRecording, RegularSeries, SeriesError};

/// Appliance behaviour class.
///
/// `TwoState` switches between off and a single rated power. `MultiState`
/// steps through several rated powers per activation (dishwasher-like).
/// `AlwaysOnCycling` runs a fixed compressor cycle all day (fridge-like).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplianceKind {
    TwoState,
    MultiState,
    AlwaysOnCycling,
}

/// Parameters for one synthetic appliance channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceModel {
    pub kind: ApplianceKind,
    /// Watts per state: exactly 1 entry for `TwoState` and
    /// `AlwaysOnCycling`, at least 2 for `MultiState`.
    pub rated_watts: Vec<f64>,
    /// Mean activations per day (ignored by `AlwaysOnCycling`).
    pub events_per_day: f64,
    /// Mean seconds an activation lasts; for `AlwaysOnCycling` the on
    /// portion of each cycle.
    pub mean_on_secs: f64,
    /// Full compressor cycle length in seconds (`AlwaysOnCycling` only).
    pub cycle_secs: f64,
    /// Std of Gaussian jitter applied to on-state samples.
    pub noise_std: f64,
}

impl ApplianceModel {
    pub fn two_state(watts: f64, events_per_day: f64, mean_on_secs: f64) -> Self {
        Self {
            kind: ApplianceKind::TwoState,
            rated_watts: vec![watts],
            events_per_day,
            mean_on_secs,
            cycle_secs: 0.0,
            noise_std: 0.0,
        }
    }

    pub fn multi_state(watts: Vec<f64>, events_per_day: f64, mean_on_secs: f64) -> Self {
        Self {
            kind: ApplianceKind::MultiState,
            rated_watts: watts,
            events_per_day,
            mean_on_secs,
            cycle_secs: 0.0,
            noise_std: 0.0,
        }
    }

    pub fn always_on_cycling(watts: f64, cycle_secs: f64, on_secs: f64) -> Self {
        Self {
            kind: ApplianceKind::AlwaysOnCycling,
            rated_watts: vec![watts],
            events_per_day: 0.0,
            mean_on_secs: on_secs,
            cycle_secs,
            noise_std: 0.0,
        }
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        if self.rated_watts.is_empty() || self.rated_watts.iter().any(|w| *w <= 0.0) {
            return Err(SeriesError::BadModel("rated watts must all be > 0".into()));
        }
        match self.kind {
            ApplianceKind::TwoState | ApplianceKind::AlwaysOnCycling => {
                if self.rated_watts.len() != 1 {
                    return Err(SeriesError::BadModel(
                        "two-state and cycling appliances take exactly one rated power".into(),
                    ));
                }
            }
            ApplianceKind::MultiState => {
                if self.rated_watts.len() < 2 {
                    return Err(SeriesError::BadModel(
                        "multi-state appliances need at least two rated powers".into(),
                    ));
                }
            }
        }
        if self.noise_std < 0.0 {
            return Err(SeriesError::BadModel("noise std must be >= 0".into()));
        }
        if self.mean_on_secs <= 0.0 {
            return Err(SeriesError::BadModel("on duration must be > 0".into()));
        }
        if self.kind == ApplianceKind::AlwaysOnCycling && self.cycle_secs <= 0.0 {
            return Err(SeriesError::BadModel("cycle length must be > 0".into()));
        }
        if self.kind != ApplianceKind::AlwaysOnCycling && self.events_per_day <= 0.0 {
            return Err(SeriesError::BadModel("events per day must be > 0".into()));
        }
        Ok(())
    }
}

/// Synthesize a house recording starting at epoch 0.
///
/// The aggregate is `base_load + sum of appliance channels + N(0, noise_std)`
/// clamped at 0. Each appliance draws from its own ChaCha stream keyed by
/// position, so adding a model never disturbs the channels before it.
pub fn synth_house(
    models: &[(String, ApplianceModel)],
    base_load: f64,
    noise_std: f64,
    days: u32,
    period: i64,
    seed: u64,
) -> Result<HouseRecording, SeriesError> {
    if period <= 0 || 86400 % period != 0 {
        return Err(SeriesError::BadPeriod(period));
    }
    if days == 0 {
        return Err(SeriesError::BadWindow);
    }
    if base_load < 0.0 || noise_std < 0.0 {
        return Err(SeriesError::BadModel("base load and noise std must be >= 0".into()));
    }
    for (_, model) in models {
        model.validate()?;
    }

    let samples_per_day = (86400 / period) as usize;
    let n = samples_per_day * days as usize;

    let mut channels = Vec::with_capacity(models.len());
    for (k, (name, model)) in models.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        channels.push((name.clone(), synth_channel(model, days, period, n, &mut rng)));
    }

    let mut aggregate = vec![base_load; n];
    for (_, channel) in &channels {
        for (agg, value) in aggregate.iter_mut().zip(channel) {
            *agg += *value;
        }
    }
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let normal = Normal::new(0.0, noise_std).expect("validated std");
        for agg in &mut aggregate {
            *agg = (*agg + normal.sample(&mut rng)).max(0.0);
        }
    }

    let aggregate = RegularSeries::new(0, period, aggregate)?;
    let mut appliances = BTreeMap::new();
    for (name, values) in channels {
        appliances.insert(name, RegularSeries::new(0, period, values)?);
    }
    HouseRecording::new(aggregate, appliances)
}

fn synth_channel(
    model: &ApplianceModel,
    days: u32,
    period: i64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut channel = vec![0.0f64; n];
    match model.kind {
        ApplianceKind::TwoState => {
            let watts = model.rated_watts[0];
            for_each_event(model, days, rng, |rng, event_start| {
                let duration = sample_duration(model.mean_on_secs, period, rng);
                paint(&mut channel, period, event_start, duration, watts);
            });
        }
        ApplianceKind::MultiState => {
            let per_state = model.mean_on_secs / model.rated_watts.len() as f64;
            let watts = model.rated_watts.clone();
            for_each_event(model, days, rng, |rng, event_start| {
                let mut cursor = event_start;
                for &w in &watts {
                    let duration = sample_duration(per_state, period, rng);
                    paint(&mut channel, period, cursor, duration, w);
                    cursor += duration;
                }
            });
        }
        ApplianceKind::AlwaysOnCycling => {
            let watts = model.rated_watts[0];
            let phase: f64 = rng.random_range(0.0..model.cycle_secs);
            for (k, value) in channel.iter_mut().enumerate() {
                let t = k as f64 * period as f64;
                if (t - phase).rem_euclid(model.cycle_secs) < model.mean_on_secs {
                    *value = watts;
                }
            }
        }
    }
    if model.noise_std > 0.0 {
        let normal = Normal::new(0.0, model.noise_std).expect("validated std");
        for value in &mut channel {
            if *value > 0.0 {
                *value = (*value + normal.sample(rng)).max(0.0);
            }
        }
    }
    channel
}

fn for_each_event(
    model: &ApplianceModel,
    days: u32,
    rng: &mut ChaCha8Rng,
    mut emit: impl FnMut(&mut ChaCha8Rng, f64),
) {
    let poisson = Poisson::new(model.events_per_day).expect("validated rate");
    for day in 0..days {
        let events = poisson.sample(rng) as u64;
        for _ in 0..events {
            let offset: f64 = rng.random_range(0.0..86400.0);
            emit(rng, day as f64 * 86400.0 + offset);
        }
    }
}

fn sample_duration(mean_secs: f64, period: i64, rng: &mut ChaCha8Rng) -> f64 {
    let exp = Exp::new(1.0 / mean_secs).expect("validated mean");
    exp.sample(rng).max(period as f64)
}

/// Set `watts` on every grid sample whose timestamp falls in
/// `[start, start + duration)`, leaving overlaps at the rated level.
fn paint(channel: &mut [f64], period: i64, start: f64, duration: f64, watts: f64) {
    let lo = (start / period as f64).ceil().max(0.0) as usize;
    let hi = (((start + duration) / period as f64).ceil() as usize).min(channel.len());
    for value in &mut channel[lo..hi.max(lo)] {
        *value = watts;
    }
}
