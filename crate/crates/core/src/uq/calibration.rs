use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::Summary;
use super::UqError;

/// Position of an observation within the Gaussian fitted to its samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentile {
    /// In `[0, 100]`.
    pub value: f64,
    /// The samples had zero spread.
    pub degenerate: bool,
}

/// `100 · P(|X − μ| ≤ |y − μ|)` for `X ~ N(μ, s²)`, with `μ` and `s` the
/// sample mean and unbiased standard deviation.
pub fn two_tailed_percentile(samples: &[f64], y: f64) -> Result<Percentile, UqError> {
    if samples.len() < 2 {
        return Err(UqError::Empty("at least two samples"));
    }
    let Summary { mean, std, .. } = Summary::of(samples);
    if std == 0.0 {
        return Ok(Percentile {
            value: if y == mean { 0.0 } else { 100.0 },
            degenerate: true,
        });
    }
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let k = (y - mean).abs() / std;
    let value = (100.0 * (2.0 * standard.cdf(k) - 1.0)).clamp(0.0, 100.0);
    Ok(Percentile {
        value,
        degenerate: false,
    })
}

/// Cumulative share of observations (in %) whose percentile is at most `x`,
/// for `x = 0, 1, ..., 100`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub points: Vec<(f64, f64)>,
    /// Observations used.
    pub n_observations: usize,
    /// Zero-spread observations left out.
    pub n_degenerate: usize,
}

impl CalibrationCurve {
    /// Largest vertical distance from the diagonal.
    pub fn max_deviation(&self) -> f64 {
        self.points
            .iter()
            .map(|(x, y)| (y - x).abs())
            .fold(0.0, f64::max)
    }

    /// Mean signed distance `y − x`; negative means over-confident.
    pub fn mean_signed_deviation(&self) -> f64 {
        let n = self.points.len() as f64;
        self.points.iter().map(|(x, y)| y - x).sum::<f64>() / n
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "percentile,cumulative_pct")?;
        for (x, y) in &self.points {
            writeln!(w, "{x},{y}")?;
        }
        Ok(())
    }
}

pub fn calibration_curve(percentiles: &[Percentile]) -> CalibrationCurve {
    let mut kept: Vec<f64> = percentiles
        .iter()
        .filter(|p| !p.degenerate)
        .map(|p| p.value)
        .collect();
    kept.sort_by(f64::total_cmp);
    let n = kept.len();
    let points = (0..=100)
        .map(|x| {
            let x = x as f64;
            let y = if x == 0.0 {
                0.0
            } else if x == 100.0 {
                100.0
            } else if n == 0 {
                0.0
            } else {
                100.0 * kept.partition_point(|&p| p <= x) as f64 / n as f64
            };
            (x, y)
        })
        .collect();
    CalibrationCurve {
        points,
        n_observations: n,
        n_degenerate: percentiles.len() - n,
    }
}
