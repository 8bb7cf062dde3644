use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{McSampleSet, UqError};
use crate::data::{DepthSequenceBatch, NormalizationStats};
use crate::math::{Rng, Tape};
use crate::models::{DepthModel, Dropout};
use crate::physics::density_from_temperature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            dropout: 0.2,
            seed: 0,
        }
    }
}

/// `n_samples` forward passes of a frozen model, each under its own dropout
/// masks. Row `i` draws its masks from stream `i` of `seed`, so the result
/// does not depend on how rows are scheduled across threads.
///
/// Densities are in kg/m³: the denormalized density channel for PGA, and the
/// predicted temperatures mapped through the density equation otherwise.
pub fn mc_sample(
    model: &DepthModel,
    batch: &DepthSequenceBatch,
    dates: &[NaiveDate],
    norm: &NormalizationStats,
    cfg: &McConfig,
) -> Result<Vec<McSampleSet>, UqError> {
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(UqError::InvalidDropout(cfg.dropout));
    }
    if cfg.n_samples == 0 {
        return Err(UqError::Empty("samples"));
    }
    let b = batch.batch_size();
    if dates.len() != b {
        return Err(UqError::Mismatch(format!(
            "{} dates for a batch of {b}",
            dates.len()
        )));
    }
    let nd = batch.n_depths();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| -> Result<_, UqError> {
            let mut dropout = if cfg.dropout > 0.0 {
                Dropout::new(cfg.dropout, Rng::with_stream(cfg.seed, i as u64))
            } else {
                Dropout::off()
            };
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, batch, &mut dropout)?;
            let y = tape.value(out.temperature).data().to_vec();
            let z = match out.density {
                Some(z) => tape
                    .value(z)
                    .data()
                    .iter()
                    .map(|&v| norm.denormalize_density(v))
                    .collect(),
                None => y
                    .iter()
                    .map(|&t| density_from_temperature(t))
                    .collect::<Result<Vec<f64>, _>>()?,
            };
            Ok((y, z))
        })
        .collect::<Result<_, _>>()?;

    Ok((0..b)
        .map(|r| {
            let mut temperature = Vec::with_capacity(cfg.n_samples * nd);
            let mut density = Vec::with_capacity(cfg.n_samples * nd);
            for (y, z) in &rows {
                temperature.extend_from_slice(&y[r * nd..(r + 1) * nd]);
                density.extend_from_slice(&z[r * nd..(r + 1) * nd]);
            }
            McSampleSet {
                date: dates[r],
                date_index: batch.date_indices[r],
                n_samples: cfg.n_samples,
                n_depths: nd,
                temperature,
                density,
                dropout: cfg.dropout,
                mask_seed: cfg.seed,
            }
        })
        .collect())
}
