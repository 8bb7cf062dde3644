use serde::{Deserialize, Serialize};

use super::{McSampleSet, UqError};

/// Mean and unbiased standard deviation of a set of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std: 0.0,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        Self {
            mean,
            std: sample_variance(values).sqrt(),
            n,
        }
    }
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Observed temperatures of one date, aligned with the set's depths.
pub type Truth = Vec<Option<f64>>;

fn check(sets: &[McSampleSet], truth: &[Truth]) -> Result<usize, UqError> {
    let first = sets.first().ok_or(UqError::Empty("sample sets"))?;
    if sets.len() != truth.len() {
        return Err(UqError::Mismatch(format!(
            "{} sample sets but {} truth profiles",
            sets.len(),
            truth.len()
        )));
    }
    for (s, t) in sets.iter().zip(truth) {
        if s.n_depths != t.len() || s.n_samples != first.n_samples {
            return Err(UqError::Mismatch(
                "sample sets and truth disagree in shape".into(),
            ));
        }
    }
    let n_obs: usize = truth.iter().map(|t| t.iter().flatten().count()).sum();
    if n_obs == 0 {
        return Err(UqError::Empty("observations"));
    }
    Ok(first.n_samples)
}

fn rmse_of(pred: impl Fn(usize, usize) -> f64, truth: &[Truth]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, t) in truth.iter().enumerate() {
        for (d, y) in t.iter().enumerate() {
            if let Some(y) = y {
                let e = pred(k, d) - y;
                sum += e * e;
                n += 1;
            }
        }
    }
    (sum / n as f64).sqrt()
}

/// RMSE of each sample row over every observation of every date, then the
/// mean and spread of those RMSEs.
pub fn rmse_per_sample(sets: &[McSampleSet], truth: &[Truth]) -> Result<Summary, UqError> {
    let n = check(sets, truth)?;
    let per_row: Vec<f64> = (0..n)
        .map(|i| rmse_of(|k, d| sets[k].temperature_row(i)[d], truth))
        .collect();
    Ok(Summary::of(&per_row))
}

/// RMSE of the sample mean.
pub fn rmse_mean(sets: &[McSampleSet], truth: &[Truth]) -> Result<f64, UqError> {
    check(sets, truth)?;
    let means: Vec<Vec<f64>> = sets.iter().map(McSampleSet::mean_temperature).collect();
    Ok(rmse_of(|k, d| means[k][d], truth))
}

/// Unbiased between-sample variance at each depth, averaged over dates.
pub fn depth_variance(sets: &[McSampleSet]) -> Result<Vec<f64>, UqError> {
    let first = sets.first().ok_or(UqError::Empty("sample sets"))?;
    let nd = first.n_depths;
    let mut out = vec![0.0; nd];
    for s in sets {
        if s.n_depths != nd {
            return Err(UqError::Mismatch(
                "sample sets differ in depth count".into(),
            ));
        }
        for (d, o) in out.iter_mut().enumerate() {
            *o += sample_variance(&s.temperature_column(d));
        }
    }
    out.iter_mut().for_each(|v| *v /= sets.len() as f64);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;
    use chrono::NaiveDate;

    pub(crate) fn set(rows: &[&[f64]]) -> McSampleSet {
        let nd = rows[0].len();
        let temperature: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        McSampleSet {
            date: NaiveDate::from_ymd_opt(2012, 6, 1).unwrap(),
            date_index: 0,
            n_samples: rows.len(),
            n_depths: nd,
            density: temperature
                .iter()
                .map(|&t| crate::physics::density_unchecked(t))
                .collect(),
            temperature,
            dropout: 0.2,
            mask_seed: 0,
        }
    }

    #[test]
    fn exact_rows_have_zero_error() {
        let s = set(&[&[1.0, 2.0], &[1.0, 2.0]]);
        let t = vec![Some(1.0), Some(2.0)];
        assert_eq!(
            rmse_per_sample(std::slice::from_ref(&s), std::slice::from_ref(&t))
                .unwrap()
                .mean,
            0.0
        );
        assert_eq!(rmse_mean(&[s], &[t]).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_errors_cancel_in_the_mean() {
        let s = set(&[&[11.0], &[9.0]]);
        let t = vec![Some(10.0)];
        let per = rmse_per_sample(std::slice::from_ref(&s), std::slice::from_ref(&t)).unwrap();
        assert_eq!(per.mean, 1.0);
        assert_eq!(per.std, 0.0);
        assert_eq!(rmse_mean(&[s], &[t]).unwrap(), 0.0);
    }

    #[test]
    fn unobserved_depths_are_ignored() {
        let s = set(&[&[10.0, 500.0]]);
        let t = vec![Some(12.0), None];
        assert_eq!(rmse_mean(&[s], &[t]).unwrap(), 2.0);
    }

    #[test]
    fn empty_truth_is_an_error() {
        let s = set(&[&[10.0]]);
        assert!(matches!(
            rmse_mean(&[s], &[vec![None]]),
            Err(UqError::Empty(_))
        ));
    }

    #[test]
    fn mean_error_never_exceeds_per_sample_error() {
        let mut rng = Rng::new(31);
        for _ in 0..100 {
            let truth: Vec<f64> = (0..6).map(|_| 10.0 * rng.next_f64()).collect();
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|_| truth.iter().map(|t| t + rng.uniform(-3.0, 3.0)).collect())
                .collect();
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let s = set(&refs);
            let t: Truth = truth.iter().map(|&v| Some(v)).collect();
            let per = rmse_per_sample(std::slice::from_ref(&s), std::slice::from_ref(&t))
                .unwrap()
                .mean;
            let mean = rmse_mean(&[s], &[t]).unwrap();
            assert!(mean <= per, "{mean} > {per}");
        }
    }

    #[test]
    fn depth_variance_uses_unbiased_estimator() {
        let s = set(&[&[1.0, 5.0], &[3.0, 5.0]]);
        assert_eq!(depth_variance(&[s]).unwrap(), vec![2.0, 0.0]);
    }
}
