//! Lake observations: ingestion, normalization, splitting, windowing and a
//! synthetic stratified-lake generator.

mod csv_io;
mod normalize;
mod sequences;
mod split;
mod synthetic;

pub use csv_io::{load_csv, read_csv, write_csv, CsvSchema};
pub use normalize::{fit_and_apply_normalization, NormalizationStats, STD_FLOOR};
pub use sequences::{
    build_depth_sequences, build_windows, DepthSequence, DepthSequenceBatch, DropReport,
    TemporalWindow,
};
pub use split::{split_train_test, DataSplit};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use chrono::NaiveDate;
use thiserror::Error;

use crate::physics;

pub const DEPTH_COLUMN: &str = "depth_m";
pub const GLM_COLUMN: &str = "glm_temperature";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: column `{column}`: cannot parse {value:?}")]
    MalformedRow {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: depth grid: {detail}")]
    DepthGrid { line: u64, detail: String },
    #[error("line {line}: dates must be ascending and grouped")]
    DateOrder { line: u64 },
    #[error("date {date}: feature `{column}` varies across depths")]
    FeatureNotConstant { date: NaiveDate, column: String },
    #[error("line {line}: temperature {value} outside the density equation's domain")]
    TemperatureDomain { line: u64, value: f64 },
    #[error("empty dataset")]
    Empty,
    #[error("no training data for `{0}`")]
    NoTrainingData(String),
    #[error("split: {0}")]
    Split(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct LakeObservation {
    pub date: NaiveDate,
    pub depth_index: usize,
    pub depth_m: f64,
    pub features: Vec<f64>,
    pub temperature: Option<f64>,
}

/// Observations on a dense (date × depth) grid. Feature vectors exist for
/// every cell; temperature and density labels only where observed.
#[derive(Debug, Clone, PartialEq)]
pub struct LakeDataset {
    feature_names: Vec<String>,
    dates: Vec<NaiveDate>,
    depths_m: Vec<f64>,
    features: Vec<f64>,
    temperature: Vec<f64>,
    density: Vec<f64>,
    observed: Vec<bool>,
    normalization: Option<NormalizationStats>,
}

impl LakeDataset {
    /// Assembles a dataset; densities are derived from the temperatures.
    pub fn from_grid(
        feature_names: Vec<String>,
        dates: Vec<NaiveDate>,
        depths_m: Vec<f64>,
        features: Vec<f64>,
        temperature: Vec<Option<f64>>,
    ) -> Result<Self, DataError> {
        let (t, d, f) = (dates.len(), depths_m.len(), feature_names.len());
        if t == 0 || d == 0 {
            return Err(DataError::Empty);
        }
        if features.len() != t * d * f || temperature.len() != t * d {
            return Err(DataError::InvalidConfig("grid dimensions disagree".into()));
        }
        if depths_m.windows(2).any(|w| w[1] <= w[0]) || depths_m[0] < 0.0 {
            return Err(DataError::DepthGrid {
                line: 0,
                detail: "depths must be >= 0 and strictly increasing".into(),
            });
        }
        let mut temps = Vec::with_capacity(t * d);
        let mut density = Vec::with_capacity(t * d);
        let mut observed = Vec::with_capacity(t * d);
        for (i, y) in temperature.into_iter().enumerate() {
            match y {
                Some(y) => {
                    let z = physics::density_from_temperature(y).map_err(|_| {
                        DataError::TemperatureDomain {
                            line: (i + 2) as u64,
                            value: y,
                        }
                    })?;
                    temps.push(y);
                    density.push(z);
                    observed.push(true);
                }
                None => {
                    temps.push(0.0);
                    density.push(0.0);
                    observed.push(false);
                }
            }
        }
        Ok(Self {
            feature_names,
            dates,
            depths_m,
            features,
            temperature: temps,
            density,
            observed,
            normalization: None,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn depths_m(&self) -> &[f64] {
        &self.depths_m
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_depths(&self) -> usize {
        self.depths_m.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn cell(&self, t: usize, d: usize) -> usize {
        t * self.n_depths() + d
    }

    pub fn features(&self, t: usize, d: usize) -> &[f64] {
        let f = self.n_features();
        let c = self.cell(t, d);
        &self.features[c * f..(c + 1) * f]
    }

    pub fn is_observed(&self, t: usize, d: usize) -> bool {
        self.observed[self.cell(t, d)]
    }

    pub fn temperature(&self, t: usize, d: usize) -> Option<f64> {
        let c = self.cell(t, d);
        self.observed[c].then(|| self.temperature[c])
    }

    /// Density label, normalized when the dataset is normalized.
    pub fn density(&self, t: usize, d: usize) -> Option<f64> {
        let c = self.cell(t, d);
        self.observed[c].then(|| self.density[c])
    }

    pub fn observations_on(&self, t: usize) -> usize {
        (0..self.n_depths())
            .filter(|&d| self.is_observed(t, d))
            .count()
    }

    pub fn observation_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn normalization(&self) -> Option<&NormalizationStats> {
        self.normalization.as_ref()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Features that vary with depth (depth itself, simulator temperature).
    pub fn is_depth_feature(name: &str) -> bool {
        name == DEPTH_COLUMN || name == GLM_COLUMN
    }

    /// Indices of the date-level (depth-independent) features.
    pub fn date_level_features(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&i| !Self::is_depth_feature(&self.feature_names[i]))
            .collect()
    }

    /// Row view for iteration and CSV output.
    pub fn observation(&self, t: usize, d: usize) -> LakeObservation {
        LakeObservation {
            date: self.dates[t],
            depth_index: d,
            depth_m: self.depths_m[d],
            features: self.features(t, d).to_vec(),
            temperature: self.temperature(t, d),
        }
    }

    /// Copy with every label on the given dates removed.
    pub fn without_labels_on(&self, dates: &[usize]) -> Self {
        let mut out = self.clone();
        for &t in dates {
            for d in 0..self.n_depths() {
                let c = self.cell(t, d);
                out.observed[c] = false;
                out.temperature[c] = 0.0;
                out.density[c] = 0.0;
            }
        }
        out
    }

    /// Copy keeping only the labels listed as `(date, depth)` cells.
    pub fn keep_labels(&self, cells: &[(usize, usize)]) -> Self {
        let mut out = self.clone();
        out.observed.iter_mut().for_each(|o| *o = false);
        for &(t, d) in cells {
            let c = self.cell(t, d);
            out.observed[c] = self.observed[c];
        }
        for c in 0..out.observed.len() {
            if !out.observed[c] {
                out.temperature[c] = 0.0;
                out.density[c] = 0.0;
            }
        }
        out
    }
}
