//! Data preparation, training, sampling and evaluation wired together.

use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::data::{
    build_depth_sequences, build_windows, fit_and_apply_normalization, generate_synthetic,
    split_train_test, DataError, DataSplit, DepthSequence, DepthSequenceBatch, LakeDataset,
    NormalizationStats, TemporalWindow,
};
use crate::math::{Checkpoint, MathError, Rng};
use crate::models::{Autoencoder, DensityScale, DepthModel, ModelError, ModelKind};
use crate::physics::{PhysicsError, ToleranceSpec};
use crate::training::{
    initial_model, pretrain_autoencoder, train, AutoencoderTrainConfig, TrainData, TrainError,
    TrainReport,
};
use crate::uq::{evaluate, mc_sample, McSampleSet, MetricsReport, Truth, UqError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Uq(#[from] UqError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("{0}")]
    Invalid(String),
}

impl PipelineError {
    /// Whether the failure is numerical (divergence, non-finite values).
    pub fn is_numerical(&self) -> bool {
        let math =
            |e: &MathError| matches!(e, MathError::NonFinite { .. } | MathError::Domain { .. });
        match self {
            PipelineError::Train(TrainError::Diverged { .. }) => true,
            PipelineError::Math(e)
            | PipelineError::Model(ModelError::Math(e))
            | PipelineError::Train(TrainError::Model(ModelError::Math(e)))
            | PipelineError::Uq(UqError::Model(ModelError::Math(e))) => math(e),
            PipelineError::Uq(UqError::Physics(_)) | PipelineError::Physics(_) => true,
            _ => false,
        }
    }
}

/// Named sub-seeds of the experiment seed.
pub mod seeds {
    use crate::math::Rng;

    pub fn split(seed: u64) -> u64 {
        Rng::derive(seed, 100)
    }
    pub fn encoder(seed: u64) -> u64 {
        Rng::derive(seed, 101)
    }
    pub fn training(seed: u64, run: usize) -> u64 {
        Rng::derive(seed, 200 + run as u64)
    }
    pub fn sampling(seed: u64, run: usize) -> u64 {
        Rng::derive(seed, 300 + run as u64)
    }
}

/// A dataset split, normalized on its training dates.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw: LakeDataset,
    pub normalized: LakeDataset,
    pub norm: NormalizationStats,
    pub split: DataSplit,
    /// Training dates used for gradient steps.
    pub fit: Vec<usize>,
    /// Latest training dates, held out for early stopping.
    pub val: Vec<usize>,
}

impl Prepared {
    pub fn density_scale(&self) -> DensityScale {
        DensityScale {
            mean: self.norm.density_mean,
            std: self.norm.density_std,
        }
    }

    /// Observed temperatures (°C) of each date.
    pub fn truth(&self, dates: &[usize]) -> Vec<Truth> {
        dates
            .iter()
            .map(|&t| {
                (0..self.raw.n_depths())
                    .map(|d| self.raw.temperature(t, d))
                    .collect()
            })
            .collect()
    }
}

pub fn synthetic_dataset(cfg: &ExperimentConfig) -> Result<LakeDataset, PipelineError> {
    Ok(generate_synthetic(&cfg.data, cfg.data_seed)?)
}

pub fn prepare(raw: LakeDataset, cfg: &ExperimentConfig) -> Result<Prepared, PipelineError> {
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(PipelineError::Invalid(
            "val_fraction must be in [0, 1)".into(),
        ));
    }
    let split = split_train_test(
        &raw,
        cfg.train_years,
        cfg.train_fraction,
        seeds::split(cfg.seed),
    )?;
    let (fit, val) = split.holdout_validation(cfg.val_fraction);
    let (norm, normalized) = fit_and_apply_normalization(&split.train, &raw)?;
    Ok(Prepared {
        raw,
        normalized,
        norm,
        split,
        fit,
        val,
    })
}

/// Temporal windows indexed by date.
pub struct WindowIndex {
    windows: Vec<Option<TemporalWindow>>,
}

impl WindowIndex {
    pub fn new(prep: &Prepared, cfg: &ExperimentConfig) -> Self {
        let (ws, _) = build_windows(&prep.normalized, cfg.window);
        let mut windows = vec![None; prep.normalized.n_dates()];
        for w in ws {
            let t = w.date_index;
            windows[t] = Some(w);
        }
        Self { windows }
    }

    pub fn get(&self, t: usize) -> Option<&TemporalWindow> {
        self.windows.get(t).and_then(Option::as_ref)
    }

    /// Windows of dates strictly before `end`.
    pub fn before(&self, end: usize) -> Vec<&TemporalWindow> {
        self.windows[..end].iter().flatten().collect()
    }
}

/// Fits the encoder on the weather of the training block only.
pub fn pretrain_encoder(
    prep: &Prepared,
    windows: &WindowIndex,
    cfg: &ExperimentConfig,
) -> Result<(Autoencoder, Vec<f64>), PipelineError> {
    let ws = windows.before(prep.split.block_end);
    let n_inputs = prep.normalized.date_level_features().len();
    let ae_cfg = AutoencoderTrainConfig {
        seed: seeds::encoder(cfg.seed),
        ..cfg.ae.clone()
    };
    Ok(pretrain_autoencoder(
        &ws,
        cfg.autoencoder_dims(n_inputs),
        &ae_cfg,
    )?)
}

/// Depth sequences with embeddings attached. Dates without a full history
/// window are skipped and returned separately.
pub fn embedded_sequences(
    prep: &Prepared,
    windows: &WindowIndex,
    ae: &Autoencoder,
    dates: &[usize],
    cfg: &ExperimentConfig,
) -> Result<(Vec<DepthSequence>, Vec<usize>), PipelineError> {
    let (kept, dropped): (Vec<usize>, Vec<usize>) =
        dates.iter().partition(|&&t| windows.get(t).is_some());
    let ws: Vec<&TemporalWindow> = kept.iter().map(|&t| windows.get(t).unwrap()).collect();
    let embeddings = ae.encode(&ws)?;
    let mut seqs = build_depth_sequences(&prep.normalized, cfg.padding, &kept);
    for (s, e) in seqs.iter_mut().zip(embeddings) {
        s.embedding = Some(e);
    }
    Ok((seqs, dropped))
}

/// Everything a trained model needs downstream.
pub struct Stage<'a> {
    pub prep: &'a Prepared,
    pub windows: &'a WindowIndex,
    pub encoder: &'a Autoencoder,
}

pub fn train_run(
    stage: &Stage<'_>,
    kind: ModelKind,
    cfg: &ExperimentConfig,
    run: usize,
) -> Result<(DepthModel, TrainReport), PipelineError> {
    let prep = stage.prep;
    let (fit, _) = embedded_sequences(prep, stage.windows, stage.encoder, &prep.fit, cfg)?;
    let (val, _) = embedded_sequences(prep, stage.windows, stage.encoder, &prep.val, cfg)?;
    let seed = seeds::training(cfg.seed, run);
    let dims = cfg.model_dims(prep.normalized.n_features());
    let model = initial_model(kind, dims, &fit, seed)?;
    let train_cfg = crate::training::TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let data = TrainData {
        train: &fit,
        val: &val,
        density_scale: prep.density_scale(),
    };
    Ok(train(model, data, &train_cfg)?)
}

/// MC samples for every test date, in date order, with the matching truth.
pub fn sample_test(
    stage: &Stage<'_>,
    model: &DepthModel,
    cfg: &ExperimentConfig,
    run: usize,
) -> Result<(Vec<McSampleSet>, Vec<Truth>), PipelineError> {
    let prep = stage.prep;
    let (seqs, _) = embedded_sequences(prep, stage.windows, stage.encoder, &prep.split.test, cfg)?;
    if seqs.is_empty() {
        return Err(UqError::Empty("test dates").into());
    }
    let refs: Vec<&DepthSequence> = seqs.iter().collect();
    let batch = DepthSequenceBatch::stack(&refs)?;
    let dates: Vec<_> = batch
        .date_indices
        .iter()
        .map(|&t| prep.raw.dates()[t])
        .collect();
    let sets = mc_sample(
        model,
        &batch,
        &dates,
        &prep.norm,
        &cfg.mc(seeds::sampling(cfg.seed, run)),
    )?;
    let truth = prep.truth(&batch.date_indices);
    Ok((sets, truth))
}

pub fn tolerance(cfg: &ExperimentConfig) -> Result<ToleranceSpec, PipelineError> {
    Ok(ToleranceSpec::new(cfg.tolerance)?)
}

/// Result of training and evaluating one model kind over `cfg.runs` runs.
pub struct ModelResult {
    pub kind: ModelKind,
    pub models: Vec<DepthModel>,
    pub train_reports: Vec<TrainReport>,
    pub samples: Vec<Vec<McSampleSet>>,
    pub truth: Vec<Truth>,
    pub metrics: MetricsReport,
}

pub fn run_model(
    stage: &Stage<'_>,
    kind: ModelKind,
    cfg: &ExperimentConfig,
) -> Result<ModelResult, PipelineError> {
    if cfg.runs == 0 {
        return Err(PipelineError::Invalid("runs must be at least 1".into()));
    }
    let mut models = Vec::new();
    let mut train_reports = Vec::new();
    let mut samples = Vec::new();
    let mut truth = Vec::new();
    for run in 0..cfg.runs {
        let (model, report) = train_run(stage, kind, cfg, run)?;
        let (sets, t) = sample_test(stage, &model, cfg, run)?;
        models.push(model);
        train_reports.push(report);
        samples.push(sets);
        truth = t;
    }
    let metrics = evaluate(kind.as_str(), &samples, &truth, tolerance(cfg)?)?;
    Ok(ModelResult {
        kind,
        models,
        train_reports,
        samples,
        truth,
        metrics,
    })
}

/// Synthetic data, split, encoder, then each requested model.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    kinds: &[ModelKind],
) -> Result<Vec<ModelResult>, PipelineError> {
    let prep = prepare(synthetic_dataset(cfg)?, cfg)?;
    let windows = WindowIndex::new(&prep, cfg);
    let (encoder, _) = pretrain_encoder(&prep, &windows, cfg)?;
    let stage = Stage {
        prep: &prep,
        windows: &windows,
        encoder: &encoder,
    };
    kinds.iter().map(|&k| run_model(&stage, k, cfg)).collect()
}

/// Model parameters and normalization statistics in one checkpoint.
pub fn model_checkpoint(model: &DepthModel, norm: &NormalizationStats) -> Checkpoint {
    let mut ckpt = Checkpoint::new(model.kind.as_str());
    model.write_to(&mut ckpt);
    norm.write_to(&mut ckpt, "norm.");
    ckpt
}

pub fn read_model_checkpoint(
    ckpt: &Checkpoint,
) -> Result<(DepthModel, NormalizationStats), PipelineError> {
    let model = DepthModel::read_from(ckpt)?;
    let norm = NormalizationStats::read_from(ckpt, "norm.")
        .ok_or_else(|| MathError::Checkpoint("missing normalization statistics".into()))?;
    Ok((model, norm))
}

pub const ENCODER_ID: &str = "encoder";

pub fn encoder_checkpoint(ae: &Autoencoder) -> Checkpoint {
    let mut ckpt = Checkpoint::new(ENCODER_ID);
    let d = ae.dims;
    let dims = [d.n_inputs, d.embedding_dim, d.decoder_units, d.window_len];
    ckpt.push_fixed(
        "encoder.dims",
        crate::math::Tensor::vector(dims.iter().map(|&v| v as f64).collect()).expect("finite"),
    );
    ckpt.push_store("encoder.", &ae.store);
    ckpt
}

pub fn read_encoder_checkpoint(ckpt: &Checkpoint) -> Result<Autoencoder, PipelineError> {
    if ckpt.model_id != ENCODER_ID {
        return Err(ModelError::WrongModel {
            expected: ENCODER_ID.into(),
            found: ckpt.model_id.clone(),
        }
        .into());
    }
    let d = ckpt
        .get("encoder.dims")
        .filter(|t| t.len() == 4)
        .ok_or_else(|| MathError::Checkpoint("missing encoder.dims".into()))?
        .data()
        .to_vec();
    let dims = crate::models::AutoencoderDims {
        n_inputs: d[0] as usize,
        embedding_dim: d[1] as usize,
        decoder_units: d[2] as usize,
        window_len: d[3] as usize,
    };
    let mut ae = Autoencoder::new(dims, 0)?;
    ckpt.load_into("encoder.", &mut ae.store)?;
    Ok(ae)
}

/// Seeds every run of an experiment uses, for manifests.
pub fn run_seeds(cfg: &ExperimentConfig) -> Vec<(String, u64)> {
    let mut out = vec![
        ("data".to_string(), cfg.data_seed),
        ("split".to_string(), seeds::split(cfg.seed)),
        ("encoder".to_string(), seeds::encoder(cfg.seed)),
    ];
    for r in 0..cfg.runs {
        out.push((format!("training.{r}"), seeds::training(cfg.seed, r)));
        out.push((format!("sampling.{r}"), seeds::sampling(cfg.seed, r)));
    }
    let _ = Rng::derive;
    out
}
