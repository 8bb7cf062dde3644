use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// MC dropout predictions for one date: `n_samples × n_depths` temperatures
/// (°C) and densities (kg/m³), real depths only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSampleSet {
    pub date: NaiveDate,
    pub date_index: usize,
    pub n_samples: usize,
    pub n_depths: usize,
    /// Row-major `[n_samples, n_depths]`.
    pub temperature: Vec<f64>,
    /// Row-major `[n_samples, n_depths]`.
    pub density: Vec<f64>,
    pub dropout: f64,
    /// Seed of the mask stream; row `i` uses stream `i`.
    pub mask_seed: u64,
}

impl McSampleSet {
    pub fn temperature_row(&self, i: usize) -> &[f64] {
        &self.temperature[i * self.n_depths..(i + 1) * self.n_depths]
    }

    pub fn density_row(&self, i: usize) -> &[f64] {
        &self.density[i * self.n_depths..(i + 1) * self.n_depths]
    }

    pub fn temperature_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.temperature.chunks(self.n_depths)
    }

    pub fn density_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.density.chunks(self.n_depths)
    }

    /// Samples at one depth.
    pub fn temperature_column(&self, d: usize) -> Vec<f64> {
        (0..self.n_samples)
            .map(|i| self.temperature[i * self.n_depths + d])
            .collect()
    }

    /// Average over samples at each depth.
    pub fn mean_temperature(&self) -> Vec<f64> {
        column_means(&self.temperature, self.n_samples, self.n_depths)
    }

    pub fn mean_density(&self) -> Vec<f64> {
        column_means(&self.density, self.n_samples, self.n_depths)
    }
}

fn column_means(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(&data[r * cols..(r + 1) * cols]) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= rows as f64);
    out
}
