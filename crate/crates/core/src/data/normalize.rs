use serde::{Deserialize, Serialize};

use super::{DataError, LakeDataset};
use crate::math::{Checkpoint, Tensor};

/// Lower bound on a fitted standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Z-score statistics fitted on training rows only. Temperature is never
/// normalized, so it has no entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub density_mean: f64,
    pub density_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let n = values.clone().count();
    if n == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    // population variance
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Some((mean, var.sqrt().max(STD_FLOOR)))
}

impl NormalizationStats {
    /// Fits statistics on every depth row of `train_dates`; density uses only
    /// the observed labels on those dates.
    pub fn fit(dataset: &LakeDataset, train_dates: &[usize]) -> Result<Self, DataError> {
        if train_dates.is_empty() {
            return Err(DataError::NoTrainingData("rows".into()));
        }
        let n_depths = dataset.n_depths();
        let cells = || {
            train_dates
                .iter()
                .flat_map(move |&t| (0..n_depths).map(move |d| (t, d)))
        };
        let mut feature_mean = Vec::new();
        let mut feature_std = Vec::new();
        for f in 0..dataset.n_features() {
            let (m, s) = mean_std(cells().map(|(t, d)| dataset.features(t, d)[f]))
                .ok_or_else(|| DataError::NoTrainingData(dataset.feature_names()[f].clone()))?;
            feature_mean.push(m);
            feature_std.push(s);
        }
        let (density_mean, density_std) =
            mean_std(cells().filter_map(|(t, d)| dataset.density(t, d)))
                .ok_or_else(|| DataError::NoTrainingData("temperature".into()))?;
        Ok(Self {
            feature_mean,
            feature_std,
            density_mean,
            density_std,
        })
    }

    pub fn normalize_feature(&self, f: usize, x: f64) -> f64 {
        (x - self.feature_mean[f]) / self.feature_std[f]
    }

    pub fn denormalize_feature(&self, f: usize, x: f64) -> f64 {
        x * self.feature_std[f] + self.feature_mean[f]
    }

    pub fn normalize_density(&self, z: f64) -> f64 {
        (z - self.density_mean) / self.density_std
    }

    /// Positive-scale affine map, so it preserves ordering exactly.
    pub fn denormalize_density(&self, z: f64) -> f64 {
        z * self.density_std + self.density_mean
    }

    /// Normalized copy: features and density z-scored, temperature untouched.
    pub fn apply(&self, dataset: &LakeDataset) -> LakeDataset {
        let mut out = dataset.clone();
        let nf = dataset.n_features();
        for (i, v) in out.features.iter_mut().enumerate() {
            *v = self.normalize_feature(i % nf, *v);
        }
        for (c, z) in out.density.iter_mut().enumerate() {
            if out.observed[c] {
                *z = self.normalize_density(*z);
            }
        }
        out.normalization = Some(self.clone());
        out
    }

    pub fn write_to(&self, ckpt: &mut Checkpoint, prefix: &str) {
        let v = |x: &[f64]| Tensor::vector(x.to_vec()).expect("finite stats");
        ckpt.push_fixed(format!("{prefix}feature_mean"), v(&self.feature_mean));
        ckpt.push_fixed(format!("{prefix}feature_std"), v(&self.feature_std));
        ckpt.push_fixed(
            format!("{prefix}density"),
            v(&[self.density_mean, self.density_std]),
        );
    }

    pub fn read_from(ckpt: &Checkpoint, prefix: &str) -> Option<Self> {
        let get = |n: &str| ckpt.get(&format!("{prefix}{n}")).map(|t| t.data().to_vec());
        let density = get("density")?;
        Some(Self {
            feature_mean: get("feature_mean")?,
            feature_std: get("feature_std")?,
            density_mean: *density.first()?,
            density_std: *density.get(1)?,
        })
    }
}

/// Fits on `train_dates` and returns the statistics with the normalized dataset.
pub fn fit_and_apply_normalization(
    train_dates: &[usize],
    dataset: &LakeDataset,
) -> Result<(NormalizationStats, LakeDataset), DataError> {
    let stats = NormalizationStats::fit(dataset, train_dates)?;
    let normalized = stats.apply(dataset);
    Ok((stats, normalized))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn tiny(values: &[f64], temps: &[Option<f64>]) -> LakeDataset {
        let dates: Vec<NaiveDate> = (0..values.len())
            .map(|i| NaiveDate::from_ymd_opt(2010, 1, 1 + i as u32).unwrap())
            .collect();
        let mut features = Vec::new();
        for &v in values {
            features.extend_from_slice(&[0.0, v, 7.0]);
        }
        LakeDataset::from_grid(
            vec!["depth_m".into(), "x".into(), "c".into()],
            dates,
            vec![0.0],
            features,
            temps.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn population_zscore() {
        let ds = tiny(&[1.0, 2.0, 3.0], &[Some(5.0), Some(10.0), None]);
        let (stats, n) = fit_and_apply_normalization(&[0, 1, 2], &ds).unwrap();
        assert_eq!(stats.feature_mean[1], 2.0);
        assert!((stats.feature_std[1] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let got: Vec<f64> = (0..3).map(|t| n.features(t, 0)[1]).collect();
        for (g, e) in got.iter().zip([-1.224744871391589, 0.0, 1.224744871391589]) {
            assert!((g - e).abs() < 1e-12);
        }
        // temperature untouched, density z-scored
        assert_eq!(n.temperature(0, 0), Some(5.0));
        let z0 = n.density(0, 0).unwrap();
        let z1 = n.density(1, 0).unwrap();
        // water at 5 °C is denser than at 10 °C
        assert!((z0 - 1.0).abs() < 1e-9 && (z1 + 1.0).abs() < 1e-9);
        assert_eq!(n.density(2, 0), None);
    }

    #[test]
    fn constant_column_is_floored() {
        let ds = tiny(&[1.0, 2.0], &[Some(5.0), Some(6.0)]);
        let (stats, n) = fit_and_apply_normalization(&[0, 1], &ds).unwrap();
        assert_eq!(stats.feature_std[2], STD_FLOOR);
        assert_eq!(n.features(0, 0)[2], 0.0);
        assert_eq!(n.features(1, 0)[2], 0.0);
    }

    #[test]
    fn round_trip() {
        let ds = tiny(&[1.5, -2.25, 3.0], &[Some(5.0), Some(6.0), Some(20.0)]);
        let (stats, n) = fit_and_apply_normalization(&[0, 1], &ds).unwrap();
        for t in 0..3 {
            for f in 0..3 {
                let back = stats.denormalize_feature(f, n.features(t, 0)[f]);
                assert!((back - ds.features(t, 0)[f]).abs() < 1e-12);
            }
            let z = stats.denormalize_density(n.density(t, 0).unwrap());
            assert!((z - ds.density(t, 0).unwrap()).abs() < 1e-12 * 1000.0);
        }
    }

    #[test]
    fn train_only_statistics() {
        let ds = tiny(&[1.0, 2.0, 100.0], &[Some(5.0), Some(6.0), Some(25.0)]);
        let (stats, _) = fit_and_apply_normalization(&[0, 1], &ds).unwrap();
        assert_eq!(stats.feature_mean[1], 1.5);
        let z: Vec<f64> = [0, 1].iter().map(|&t| ds.density(t, 0).unwrap()).collect();
        assert_eq!(stats.density_mean, (z[0] + z[1]) / 2.0);
    }

    #[test]
    fn errors_without_training_rows_or_labels() {
        let ds = tiny(&[1.0, 2.0], &[None, None]);
        assert!(matches!(
            fit_and_apply_normalization(&[], &ds),
            Err(DataError::NoTrainingData(_))
        ));
        assert!(matches!(
            fit_and_apply_normalization(&[0, 1], &ds),
            Err(DataError::NoTrainingData(c)) if c == "temperature"
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let ds = tiny(&[1.0, 2.0], &[Some(5.0), Some(6.0)]);
        let stats = NormalizationStats::fit(&ds, &[0, 1]).unwrap();
        let mut c = Checkpoint::new("x");
        stats.write_to(&mut c, "norm.");
        assert_eq!(NormalizationStats::read_from(&c, "norm.").unwrap(), stats);
    }
}
