//! Synthetic dimictic lake.
//!
//! Air temperature is an annual sinusoid plus a per-year offset and AR(1)
//! weather. Surface water relaxes toward air temperature (bounded to 0..30 °C),
//! the hypolimnion warms slowly while stratified and overturns when the
//! surface cools to it. The vertical profile is a logistic thermocline
//! between the two, whose depth deepens through summer and whose width
//! shrinks as stratification strengthens. Observation noise is added in
//! temperature space and the profile is then clipped so that density never
//! decreases with depth.

use std::f64::consts::TAU;

use chrono::{Datelike, Days, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{CsvSchema, DataError, LakeDataset, DEPTH_COLUMN};
use crate::math::Rng;
use crate::physics::density_unchecked;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub years: u32,
    pub depth_count: usize,
    pub max_depth_m: f64,
    /// Standard deviation of temperature observation noise (°C).
    pub noise_sd: f64,
    /// A temperature profile is observed every this many days.
    pub obs_interval_days: usize,
    /// Probability that a given depth is observed on an observation day.
    pub obs_depth_fraction: f64,
    /// Mean summer thermocline depth (m).
    pub thermocline_depth_m: f64,
    pub start: NaiveDate,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            years: 5,
            depth_count: 28,
            max_depth_m: 9.0,
            noise_sd: 0.25,
            obs_interval_days: 4,
            obs_depth_fraction: 0.9,
            thermocline_depth_m: 3.5,
            start: NaiveDate::from_ymd_opt(2009, 1, 1).unwrap(),
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.years == 0 {
            return bad("years must be positive");
        }
        if self.depth_count < 2 {
            return bad("depth count must be at least 2");
        }
        if self.max_depth_m.is_nan() || self.max_depth_m <= 0.0 {
            return bad("maximum depth must be positive");
        }
        if self.noise_sd.is_nan() || self.noise_sd < 0.0 {
            return bad("noise must be >= 0");
        }
        if self.obs_interval_days == 0 {
            return bad("observation interval must be positive");
        }
        if !(0.0..=1.0).contains(&self.obs_depth_fraction) || self.obs_depth_fraction == 0.0 {
            return bad("observed depth fraction must be in (0, 1]");
        }
        if self.thermocline_depth_m.is_nan() || self.thermocline_depth_m <= 0.0 {
            return bad("thermocline depth must be positive");
        }
        Ok(())
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Temperature at `depth` between surface `ts` and bottom `tb`.
fn profile_temperature(depth: f64, ts: f64, tb: f64, thermocline: f64, width: f64) -> f64 {
    let at = |z: f64| logistic((thermocline - z) / width);
    tb + (ts - tb) * at(depth) / at(0.0)
}

pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<LakeDataset, DataError> {
    cfg.validate()?;
    let end = cfg
        .start
        .checked_add_months(Months::new(12 * cfg.years))
        .ok_or_else(|| DataError::InvalidConfig("date overflow".into()))?;
    let n_days = (end - cfg.start).num_days() as usize;
    let nd = cfg.depth_count;
    let spacing = cfg.max_depth_m / (nd - 1) as f64;
    let depths: Vec<f64> = (0..nd).map(|d| d as f64 * spacing).collect();

    let mut weather = Rng::new(Rng::derive(seed, 1));
    let mut noise = Rng::new(Rng::derive(seed, 2));
    let mut sampling = Rng::new(Rng::derive(seed, 3));

    let schema = CsvSchema::standard();
    let mut names = vec![DEPTH_COLUMN.to_string()];
    names.extend(schema.required.iter().cloned());
    let nf = names.len();

    let mut dates = Vec::with_capacity(n_days);
    let mut features = Vec::with_capacity(n_days * nd * nf);
    let mut temperature = Vec::with_capacity(n_days * nd);

    let mut surface = 2.0;
    let mut bottom = 4.0;
    let mut anomaly = 0.0;
    let mut frozen = false;
    let mut gdd = 0.0;
    let mut year = cfg.start.year() - 1;
    let mut year_offset = 0.0;
    let mut year_thermocline = 0.0;

    for k in 0..n_days {
        let date = cfg.start + Days::new(k as u64);
        if date.year() != year {
            year = date.year();
            year_offset = weather.normal();
            year_thermocline = 0.1 * cfg.thermocline_depth_m * weather.normal();
            gdd = 0.0;
        }
        let doy = date.ordinal() as f64;
        let season = (TAU * (doy - 15.0) / 365.25).cos();

        anomaly = 0.8 * anomaly + 1.5 * weather.normal();
        let air = 8.0 - 15.0 * season + year_offset + anomaly;
        let equilibrium = (air + 3.0).clamp(0.0, 31.0);
        surface = (surface + 0.12 * (equilibrium - surface)).clamp(0.0, 30.0);
        if surface <= bottom {
            bottom = surface.max(4.0);
        } else {
            let rate = if surface - bottom < 2.0 { 0.03 } else { 0.003 };
            bottom += rate * (surface - bottom);
        }
        if frozen && surface > 1.5 {
            frozen = false;
        } else if !frozen && surface < 0.5 && air < 0.0 {
            frozen = true;
        }

        let clouds = weather.next_f64();
        let shortwave =
            (180.0 - 130.0 * (TAU * (doy + 10.0) / 365.25).cos()) * (1.0 - 0.5 * clouds);
        let longwave = 300.0 + 3.5 * air + 10.0 * weather.normal() + 20.0 * clouds;
        let humidity =
            (75.0 + 8.0 * weather.normal() + 10.0 * clouds - 0.3 * (air - 8.0)).clamp(30.0, 100.0);
        let wind = (3.5 + 1.5 * weather.normal()).abs() + if frozen { 0.0 } else { 0.5 };
        let rain = if weather.bernoulli(0.3) {
            -5.0 * (1.0 - weather.next_f64()).ln()
        } else {
            0.0
        };
        gdd += (air - 10.0).max(0.0);
        let snowing = if rain > 0.0 && air < 0.0 { 1.0 } else { 0.0 };
        let date_features = [
            doy,
            air,
            shortwave,
            longwave,
            humidity,
            wind,
            rain,
            gdd,
            if frozen { 1.0 } else { 0.0 },
            snowing,
        ];

        let deepening = ((doy - 120.0) / 180.0).clamp(0.0, 1.0);
        let thermocline =
            (cfg.thermocline_depth_m * (0.7 + 0.6 * deepening) + year_thermocline).max(0.1);
        let strength = ((surface - bottom).abs() / 10.0).clamp(0.0, 1.0);
        let width = 0.06 * cfg.max_depth_m * (1.0 + 1.5 * (1.0 - strength));

        let mut profile: Vec<f64> = depths
            .iter()
            .map(|&z| {
                profile_temperature(z, surface, bottom, thermocline, width)
                    + cfg.noise_sd * noise.normal()
            })
            .collect();
        for d in 1..nd {
            if density_unchecked(profile[d]) < density_unchecked(profile[d - 1]) {
                profile[d] = profile[d - 1];
            }
        }
        let observe_day = k % cfg.obs_interval_days == 0;
        for (d, &z) in depths.iter().enumerate() {
            features.push(z);
            features.extend_from_slice(&date_features);
            let seen = observe_day && sampling.bernoulli(cfg.obs_depth_fraction);
            temperature.push(seen.then_some(profile[d]));
        }
        dates.push(date);
    }
    LakeDataset::from_grid(names, dates, depths, features, temperature)
}
