use std::io::Write;

use serde::{Deserialize, Serialize};

use super::calibration::{calibration_curve, two_tailed_percentile, CalibrationCurve, Percentile};
use super::metrics::{depth_variance, rmse_mean, rmse_per_sample, Summary, Truth};
use super::{McSampleSet, UqError};
use crate::physics::{inconsistency_of_profiles, InconsistencyCount, ToleranceSpec};

/// Metrics of one trained model's sample sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub rmse_per_sample: Summary,
    pub rmse_mean: f64,
    /// Violation fraction of each sample row over all test dates.
    pub inconsistency_per_sample: Summary,
    /// Violation fraction of the per-date mean density profiles.
    pub inconsistency_mean: f64,
    pub violations: InconsistencyCount,
    /// Dates where the mean prediction beat the average sample, out of all.
    pub mean_beats_samples: usize,
    pub n_dates: usize,
}

/// Statistics pooled over runs: sample-level quantities over every sample
/// row of every run, mean-level quantities over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledMetrics {
    pub rmse_per_sample: Summary,
    pub rmse_mean: Summary,
    pub inconsistency_per_sample: Summary,
    pub inconsistency_mean: Summary,
    pub violations: InconsistencyCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub n_runs: usize,
    pub n_test_dates: usize,
    pub n_observations: usize,
    pub n_samples: usize,
    pub dropout: f64,
    pub tolerance_kg_m3: f64,
    pub runs: Vec<RunMetrics>,
    pub pooled: PooledMetrics,
    pub calibration: CalibrationCurve,
    /// Between-sample temperature variance per depth, averaged over dates and runs.
    pub depth_variance: Vec<f64>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Whether the mean prediction's RMSE is at most the per-sample RMSE on
    /// every date of every run.
    pub fn mean_never_worse(&self) -> bool {
        self.runs.iter().all(|r| r.mean_beats_samples == r.n_dates)
    }
}

fn per_row_inconsistency(sets: &[McSampleSet], tol: ToleranceSpec) -> Result<Vec<f64>, UqError> {
    let n = sets[0].n_samples;
    (0..n)
        .map(|i| {
            let c = inconsistency_of_profiles(sets.iter().map(|s| s.density_row(i)), tol)?;
            Ok(c.fraction())
        })
        .collect()
}

fn run_metrics(
    run: usize,
    sets: &[McSampleSet],
    truth: &[Truth],
    tol: ToleranceSpec,
) -> Result<RunMetrics, UqError> {
    let per_sample = rmse_per_sample(sets, truth)?;
    let mean = rmse_mean(sets, truth)?;
    let violations = inconsistency_of_profiles(sets.iter().flat_map(|s| s.density_rows()), tol)?;
    let mean_profiles: Vec<Vec<f64>> = sets.iter().map(McSampleSet::mean_density).collect();
    let mean_count = inconsistency_of_profiles(mean_profiles.iter().map(Vec::as_slice), tol)?;
    let mut mean_beats_samples = 0;
    let mut n_dates = 0;
    for (s, t) in sets.iter().zip(truth) {
        if t.iter().all(Option::is_none) {
            continue;
        }
        n_dates += 1;
        let one = std::slice::from_ref(s);
        let truth_one = std::slice::from_ref(t);
        if rmse_mean(one, truth_one)? <= rmse_per_sample(one, truth_one)?.mean {
            mean_beats_samples += 1;
        }
    }
    Ok(RunMetrics {
        run,
        rmse_per_sample: per_sample,
        rmse_mean: mean,
        inconsistency_per_sample: Summary::of(&per_row_inconsistency(sets, tol)?),
        inconsistency_mean: mean_count.fraction(),
        violations,
        mean_beats_samples,
        n_dates,
    })
}

/// Metrics over the sample sets of one or more training runs of one model.
/// `runs[r][k]` holds run `r`'s samples for test date `k`, aligned with
/// `truth[k]`.
pub fn evaluate(
    model: &str,
    runs: &[Vec<McSampleSet>],
    truth: &[Truth],
    tol: ToleranceSpec,
) -> Result<MetricsReport, UqError> {
    let first = runs
        .first()
        .and_then(|r| r.first())
        .ok_or(UqError::Empty("test dates"))?;
    let mut per_run = Vec::with_capacity(runs.len());
    let mut all_rows = Vec::new();
    let mut all_incons = Vec::new();
    let mut percentiles: Vec<Percentile> = Vec::new();
    let mut variance = vec![0.0; first.n_depths];
    let mut violations = InconsistencyCount::default();
    for (r, sets) in runs.iter().enumerate() {
        if sets.len() != truth.len() {
            return Err(UqError::Mismatch(format!(
                "run {r} has {} dates, truth has {}",
                sets.len(),
                truth.len()
            )));
        }
        let m = run_metrics(r, sets, truth, tol)?;
        violations.merge(m.violations);
        for i in 0..first.n_samples {
            let one_row: Vec<f64> = sets
                .iter()
                .zip(truth)
                .flat_map(|(s, t)| {
                    let row = s.temperature_row(i);
                    t.iter()
                        .zip(row)
                        .filter_map(|(y, p)| y.map(|y| (p - y) * (p - y)))
                })
                .collect();
            all_rows.push((one_row.iter().sum::<f64>() / one_row.len() as f64).sqrt());
        }
        all_incons.extend(per_row_inconsistency(sets, tol)?);
        for (s, t) in sets.iter().zip(truth) {
            for (d, y) in t.iter().enumerate() {
                if let Some(y) = y {
                    percentiles.push(two_tailed_percentile(&s.temperature_column(d), *y)?);
                }
            }
        }
        for (v, add) in variance.iter_mut().zip(depth_variance(sets)?) {
            *v += add / runs.len() as f64;
        }
        per_run.push(m);
    }
    let pooled = PooledMetrics {
        rmse_per_sample: Summary::of(&all_rows),
        rmse_mean: Summary::of(&per_run.iter().map(|m| m.rmse_mean).collect::<Vec<_>>()),
        inconsistency_per_sample: Summary::of(&all_incons),
        inconsistency_mean: Summary::of(
            &per_run
                .iter()
                .map(|m| m.inconsistency_mean)
                .collect::<Vec<_>>(),
        ),
        violations,
    };
    Ok(MetricsReport {
        model: model.to_string(),
        n_runs: runs.len(),
        n_test_dates: truth.len(),
        n_observations: truth.iter().map(|t| t.iter().flatten().count()).sum(),
        n_samples: first.n_samples,
        dropout: first.dropout,
        tolerance_kg_m3: tol.kg_per_m3(),
        runs: per_run,
        pooled,
        calibration: calibration_curve(&percentiles),
        depth_variance: variance,
    })
}

/// Per date and depth: sample mean, μ ± 2s band and the observation.
pub fn write_profiles_csv<W: Write>(
    mut w: W,
    sets: &[McSampleSet],
    truth: &[Truth],
    depths_m: &[f64],
) -> std::io::Result<()> {
    writeln!(w, "date,depth_m,mean,lower,upper,observed")?;
    for (s, t) in sets.iter().zip(truth) {
        for d in 0..s.n_depths {
            let Summary { mean, std, .. } = Summary::of(&s.temperature_column(d));
            let obs = t[d].map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.date,
                depths_m[d],
                mean,
                mean - 2.0 * std,
                mean + 2.0 * std,
                obs
            )?;
        }
    }
    Ok(())
}
