use chrono::{Days, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{DataError, LakeDataset};
use crate::math::Rng;

/// Date indices of a contiguous-time split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    /// Selected training dates, ascending.
    pub train: Vec<usize>,
    /// Labeled dates after the training block, ascending.
    pub test: Vec<usize>,
    /// First date index after the training block.
    pub block_end: usize,
}

impl DataSplit {
    /// Splits the training dates into (fit, validation): the validation set is
    /// the chronologically last `fraction` of the training dates.
    pub fn holdout_validation(&self, fraction: f64) -> (Vec<usize>, Vec<usize>) {
        let n_val = ((self.train.len() as f64) * fraction).round() as usize;
        let n_val = n_val.min(self.train.len().saturating_sub(1));
        let cut = self.train.len() - n_val;
        (self.train[..cut].to_vec(), self.train[cut..].to_vec())
    }
}

fn add_years(d: NaiveDate, years: u32) -> Option<NaiveDate> {
    d.checked_add_months(Months::new(12 * years))
}

/// The first `train_years` of the timeline form the training block; within
/// it, whole labeled dates are drawn at random and accumulated until their
/// observation count reaches `train_fraction` of the block's observations.
/// Every labeled date after the block is test data.
pub fn split_train_test(
    dataset: &LakeDataset,
    train_years: u32,
    train_fraction: f64,
    seed: u64,
) -> Result<DataSplit, DataError> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(DataError::Split(format!(
            "training fraction {train_fraction} outside (0, 1]"
        )));
    }
    let dates = dataset.dates();
    let first = *dates.first().ok_or(DataError::Empty)?;
    let last = *dates.last().unwrap();
    let block_end_date =
        add_years(first, train_years).ok_or_else(|| DataError::Split("date overflow".into()))?;
    let needed_last = add_years(first, train_years + 1)
        .and_then(|d| d.checked_sub_days(Days::new(1)))
        .ok_or_else(|| DataError::Split("date overflow".into()))?;
    if last < needed_last {
        return Err(DataError::Split(format!(
            "dataset spans {first}..{last}; need at least {} years",
            train_years + 1
        )));
    }
    let block_end = dates.partition_point(|&d| d < block_end_date);

    let mut candidates: Vec<usize> = (0..block_end)
        .filter(|&t| dataset.observations_on(t) > 0)
        .collect();
    let total: usize = candidates.iter().map(|&t| dataset.observations_on(t)).sum();
    if total == 0 {
        return Err(DataError::NoTrainingData("temperature".into()));
    }
    let target = (train_fraction * total as f64).ceil() as usize;
    let mut rng = Rng::new(seed);
    rng.shuffle(&mut candidates);
    let mut train = Vec::new();
    let mut count = 0;
    for t in candidates {
        if count >= target {
            break;
        }
        count += dataset.observations_on(t);
        train.push(t);
    }
    train.sort_unstable();
    let test = (block_end..dates.len())
        .filter(|&t| dataset.observations_on(t) > 0)
        .collect();
    Ok(DataSplit {
        train,
        test,
        block_end,
    })
}
