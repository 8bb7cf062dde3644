use chrono::Days;

use super::{DataError, LakeDataset};
use crate::math::Tensor;

/// Date-level features of day `t` and the `len - 1` days before it, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalWindow {
    pub date_index: usize,
    /// `[len, n_date_features]`
    pub steps: Tensor,
}

/// Dates skipped for lack of feature history.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DropReport {
    pub dropped: Vec<usize>,
}

impl DropReport {
    pub fn count(&self) -> usize {
        self.dropped.len()
    }
}

/// One window per date that has `history_days` consecutive preceding days.
pub fn build_windows(
    dataset: &LakeDataset,
    history_days: usize,
) -> (Vec<TemporalWindow>, DropReport) {
    let cols = dataset.date_level_features();
    let dates = dataset.dates();
    let mut windows = Vec::new();
    let mut report = DropReport::default();
    for t in 0..dataset.n_dates() {
        // Dates are strictly ascending, so an exact `history_days` span means
        // every intermediate day is present.
        let has_history = t >= history_days
            && dates[t - history_days].checked_add_days(Days::new(history_days as u64))
                == Some(dates[t]);
        if !has_history {
            report.dropped.push(t);
            continue;
        }
        let mut data = Vec::with_capacity((history_days + 1) * cols.len());
        for s in t - history_days..=t {
            let row = dataset.features(s, 0);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        windows.push(TemporalWindow {
            date_index: t,
            steps: Tensor::from_parts(vec![history_days + 1, cols.len()], data),
        });
    }
    (windows, report)
}

/// Depth-ordered inputs of one date with `padding` copies of the surface row
/// prepended. Labels cover only the real depths.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSequence {
    pub date_index: usize,
    pub padding: usize,
    /// `[padding + n_depths, n_features]`
    pub inputs: Tensor,
    /// Temporal embedding for the date, attached once an encoder is available.
    pub embedding: Option<Vec<f64>>,
    pub temperature: Vec<f64>,
    pub density: Vec<f64>,
    pub mask: Vec<bool>,
}

impl DepthSequence {
    pub fn n_depths(&self) -> usize {
        self.mask.len()
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

pub fn build_depth_sequences(
    dataset: &LakeDataset,
    padding: usize,
    dates: &[usize],
) -> Vec<DepthSequence> {
    let nd = dataset.n_depths();
    let nf = dataset.n_features();
    dates
        .iter()
        .map(|&t| {
            let mut data = Vec::with_capacity((padding + nd) * nf);
            for _ in 0..padding {
                data.extend_from_slice(dataset.features(t, 0));
            }
            for d in 0..nd {
                data.extend_from_slice(dataset.features(t, d));
            }
            DepthSequence {
                date_index: t,
                padding,
                inputs: Tensor::from_parts(vec![padding + nd, nf], data),
                embedding: None,
                temperature: (0..nd)
                    .map(|d| dataset.temperature(t, d).unwrap_or(0.0))
                    .collect(),
                density: (0..nd)
                    .map(|d| dataset.density(t, d).unwrap_or(0.0))
                    .collect(),
                mask: (0..nd).map(|d| dataset.is_observed(t, d)).collect(),
            }
        })
        .collect()
}

/// Several dates stacked row-wise so one recurrence step processes them all.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSequenceBatch {
    pub date_indices: Vec<usize>,
    pub padding: usize,
    /// One `[batch, n_features + embedding_dim]` matrix per padded depth step.
    pub steps: Vec<Tensor>,
    /// `[batch, n_depths]`, zero where unobserved.
    pub temperature: Tensor,
    pub density: Tensor,
    /// `[batch, n_depths]` of 0/1.
    pub mask: Tensor,
}

impl DepthSequenceBatch {
    pub fn stack(seqs: &[&DepthSequence]) -> Result<Self, DataError> {
        let first = seqs.first().ok_or(DataError::Empty)?;
        let (padding, nd) = (first.padding, first.n_depths());
        let nf = first.inputs.cols();
        let emb = first.embedding.as_ref().map_or(0, Vec::len);
        for s in seqs {
            if s.padding != padding
                || s.n_depths() != nd
                || s.inputs.cols() != nf
                || s.embedding.as_ref().map_or(0, Vec::len) != emb
            {
                return Err(DataError::InvalidConfig(
                    "sequences in a batch must share padding, depth grid, features and embedding"
                        .into(),
                ));
            }
        }
        let b = seqs.len();
        let width = nf + emb;
        let steps = (0..padding + nd)
            .map(|s| {
                let mut data = Vec::with_capacity(b * width);
                for q in seqs {
                    data.extend_from_slice(q.inputs.row(s));
                    if let Some(e) = &q.embedding {
                        data.extend_from_slice(e);
                    }
                }
                Tensor::from_parts(vec![b, width], data)
            })
            .collect();
        let grid = |f: &dyn Fn(&DepthSequence) -> Vec<f64>| {
            let data = seqs.iter().flat_map(|q| f(q)).collect();
            Tensor::from_parts(vec![b, nd], data)
        };
        Ok(Self {
            date_indices: seqs.iter().map(|q| q.date_index).collect(),
            padding,
            steps,
            temperature: grid(&|q| q.temperature.clone()),
            density: grid(&|q| q.density.clone()),
            mask: grid(&|q| q.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.date_indices.len()
    }

    pub fn n_depths(&self) -> usize {
        self.steps.len() - self.padding
    }

    pub fn input_width(&self) -> usize {
        self.steps[0].cols()
    }

    pub fn n_observed(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m > 0.0).count()
    }
}
