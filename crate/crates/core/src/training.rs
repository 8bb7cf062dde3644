//! Minimizing the masked temperature/density objective, plus autoencoder
//! pretraining.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, DepthSequence, DepthSequenceBatch, TemporalWindow};
use crate::math::{Adam, AdamConfig, MathError, ParamStore, Rng, Tape, Tensor, Var};
use crate::models::{
    autoencoder_forward, pgl_physics_loss, reconstruction_loss, window_steps, Autoencoder,
    AutoencoderDims, DensityScale, DepthModel, Dropout, ModelDims, ModelError, ModelKind,
    ModelOutput,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("loss has no observed entries")]
    NoObservations,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        /// Parameters before the failing update.
        last_good: Box<DepthModel>,
        report: TrainReport,
    },
}

impl From<MathError> for TrainError {
    fn from(e: MathError) -> Self {
        TrainError::Model(ModelError::Math(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Dates per minibatch.
    pub batch_size: usize,
    pub lambda_z: f64,
    pub lambda_r: f64,
    /// PGL only.
    pub lambda_phy: f64,
    pub dropout: f64,
    /// Apply dropout while training (it is always available at sampling time).
    pub train_dropout: bool,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 300,
            batch_size: 32,
            lambda_z: 1.0,
            lambda_r: 1e-4,
            lambda_phy: 1.0,
            dropout: 0.2,
            train_dropout: true,
            patience: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lambda_z >= 0.0 && self.lambda_r >= 0.0 && self.lambda_phy >= 0.0) {
            return bad("loss weights must be >= 0");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_z: f64,
    pub lambda_r: f64,
}

/// Weighted loss terms on the tape; `total = y + z + r`.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub y: Var,
    pub z: Option<Var>,
    pub r: Var,
}

fn masked_mse(
    tape: &mut Tape,
    pred: Var,
    truth: &Tensor,
    mask: Var,
    n: f64,
) -> Result<Var, MathError> {
    let t = tape.constant(truth.clone());
    let diff = tape.sub(pred, t)?;
    let sq = tape.square(diff)?;
    let kept = tape.hadamard(sq, mask)?;
    let s = tape.sum(kept)?;
    tape.scale(s, 1.0 / n)
}

/// `(1/N) Σ mask (Y - Ŷ)² + λ_Z (1/N) Σ mask (Z - Ẑ)² + λ_R ‖W‖₂` where `N`
/// counts the observed entries and `‖W‖₂` is the Euclidean norm of every
/// weight matrix of `store`, biases excluded.
#[allow(clippy::too_many_arguments)]
pub fn composite_loss(
    tape: &mut Tape,
    store: &ParamStore,
    y_hat: Var,
    y: &Tensor,
    z_hat: Option<Var>,
    z: &Tensor,
    mask: &Tensor,
    weights: LossWeights,
) -> Result<LossParts, TrainError> {
    let n = mask.data().iter().filter(|&&m| m > 0.0).count();
    if n == 0 {
        return Err(TrainError::NoObservations);
    }
    let n = n as f64;
    let m = tape.constant(mask.clone());
    let y_term = masked_mse(tape, y_hat, y, m, n)?;
    let mut total = y_term;
    let z_term = match z_hat {
        Some(zh) => {
            let mse = masked_mse(tape, zh, z, m, n)?;
            let w = tape.scale(mse, weights.lambda_z)?;
            total = tape.add(total, w)?;
            Some(w)
        }
        None => None,
    };
    let mut sq_sum: Option<Var> = None;
    for id in store.weight_ids().collect::<Vec<_>>() {
        let w = tape.param(store, id);
        let sq = tape.square(w)?;
        let s = tape.sum(sq)?;
        sq_sum = Some(match sq_sum {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    let norm = match sq_sum {
        Some(s) => tape.sqrt(s)?,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    let r_term = tape.scale(norm, weights.lambda_r)?;
    total = tape.add(total, r_term)?;
    Ok(LossParts {
        total,
        y: y_term,
        z: z_term,
        r: r_term,
    })
}

/// Full training objective of one model kind on one batch.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub total: Var,
    pub parts: LossParts,
    pub phy: Option<Var>,
    pub output: ModelOutput,
}

/// PGA: Y, Z and R terms. LSTM: Y and R. PGL: Y, R and the density-ordering
/// penalty weighted by `lambda_phy`.
pub fn objective(
    tape: &mut Tape,
    model: &DepthModel,
    batch: &DepthSequenceBatch,
    cfg: &TrainConfig,
    scale: DensityScale,
    dropout: &mut Dropout,
) -> Result<Objective, TrainError> {
    let output = model.forward(tape, batch, dropout)?;
    let z_hat = match model.kind {
        ModelKind::Pga => output.density,
        _ => None,
    };
    let parts = composite_loss(
        tape,
        &model.store,
        output.temperature,
        &batch.temperature,
        z_hat,
        &batch.density,
        &batch.mask,
        LossWeights {
            lambda_z: cfg.lambda_z,
            lambda_r: cfg.lambda_r,
        },
    )?;
    let (total, phy) = match model.kind {
        ModelKind::Pgl => {
            let raw = pgl_physics_loss(tape, output.temperature, scale)?;
            let phy = tape.scale(raw, cfg.lambda_phy)?;
            (tape.add(parts.total, phy)?, Some(phy))
        }
        _ => (parts.total, None),
    };
    Ok(Objective {
        total,
        parts,
        phy,
        output,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub y_loss: f64,
    pub z_loss: f64,
    pub r_loss: f64,
    pub phy_loss: f64,
    pub total: f64,
    pub val_rmse: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept, if any epoch ran.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,y_loss,z_loss,r_loss,phy_loss,val_rmse,seconds")?;
        for e in &self.epochs {
            let val = e.val_rmse.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                e.epoch, e.y_loss, e.z_loss, e.r_loss, e.phy_loss, val, e.seconds
            )?;
        }
        Ok(())
    }

    /// Equality ignoring wall time.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        let strip = |r: &Self| {
            let mut r = r.clone();
            r.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
            r
        };
        strip(self) == strip(other)
    }
}

fn stack(seqs: &[&DepthSequence]) -> Result<DepthSequenceBatch, TrainError> {
    Ok(DepthSequenceBatch::stack(seqs)?)
}

/// RMSE (°C) of dropout-free predictions over every observed entry.
pub fn deterministic_rmse(model: &DepthModel, seqs: &[DepthSequence]) -> Result<f64, TrainError> {
    let refs: Vec<&DepthSequence> = seqs.iter().collect();
    let batch = stack(&refs)?;
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &batch, &mut Dropout::off())?;
    let pred = tape.value(out.temperature).data();
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, t), m) in pred
        .iter()
        .zip(batch.temperature.data())
        .zip(batch.mask.data())
    {
        if *m > 0.0 {
            sum += (p - t) * (p - t);
            n += 1;
        }
    }
    if n == 0 {
        return Err(TrainError::NoObservations);
    }
    Ok((sum / n as f64).sqrt())
}

/// Fresh model whose temperature output starts at the mean training label.
pub fn initial_model(
    kind: ModelKind,
    dims: ModelDims,
    train: &[DepthSequence],
    seed: u64,
) -> Result<DepthModel, TrainError> {
    let mut model = DepthModel::new(kind, dims, Rng::derive(seed, 1))?;
    let (sum, n) = train.iter().fold((0.0, 0usize), |(s, n), q| {
        let obs = q.temperature.iter().zip(&q.mask).filter(|(_, &m)| m);
        obs.fold((s, n), |(s, n), (t, _)| (s + t, n + 1))
    });
    if n == 0 {
        return Err(TrainError::NoObservations);
    }
    model.set_output_bias(sum / n as f64);
    Ok(model)
}

/// Training and validation dates as depth sequences (embeddings attached).
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a [DepthSequence],
    pub val: &'a [DepthSequence],
    /// kg/m³ to normalized density, for the PGL penalty.
    pub density_scale: DensityScale,
}

/// Minibatch Adam over shuffled dates. Keeps the parameters with the best
/// validation RMSE (the final ones when there is no validation set) and stops
/// after `patience` epochs without improvement.
pub fn train(
    mut model: DepthModel,
    data: TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<(DepthModel, TrainReport), TrainError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::NoObservations);
    }
    let mut adam = Adam::new(cfg.adam(), &model.store);
    let mut order_rng = Rng::new(Rng::derive(cfg.seed, 2));
    let mut dropout = if cfg.train_dropout && cfg.dropout > 0.0 {
        Dropout::new(cfg.dropout, Rng::new(Rng::derive(cfg.seed, 3)))
    } else {
        Dropout::off()
    };
    let mut report = TrainReport::default();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order_rng.shuffle(&mut order);
        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let seqs: Vec<&DepthSequence> = chunk.iter().map(|&i| &data.train[i]).collect();
            let batch = stack(&seqs)?;
            if batch.n_observed() == 0 {
                continue;
            }
            let diverged =
                |reason: String, model: &DepthModel, report: &TrainReport| TrainError::Diverged {
                    epoch,
                    reason,
                    last_good: Box::new(model.clone()),
                    report: report.clone(),
                };
            let mut tape = Tape::new();
            let obj = match objective(
                &mut tape,
                &model,
                &batch,
                cfg,
                data.density_scale,
                &mut dropout,
            ) {
                Ok(o) => o,
                Err(TrainError::Model(ModelError::Math(e))) => {
                    return Err(diverged(e.to_string(), &model, &report))
                }
                Err(e) => return Err(e),
            };
            let value =
                |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item().unwrap_or(f64::NAN));
            let terms = [
                value(Some(obj.parts.y)),
                value(obj.parts.z),
                value(Some(obj.parts.r)),
                value(obj.phy),
                value(Some(obj.total)),
            ];
            if !terms[4].is_finite() {
                return Err(diverged("non-finite loss".into(), &model, &report));
            }
            let grads = match tape.backward(obj.total) {
                Ok(g) => g.for_params(&tape, &model.store),
                Err(e) => return Err(diverged(e.to_string(), &model, &report)),
            };
            let before = model.clone();
            if let Err(e) = adam.step(&mut model.store, &grads) {
                return Err(diverged(e.to_string(), &model, &report));
            }
            if !model.store.flatten().iter().all(|v| v.is_finite()) {
                return Err(diverged("non-finite parameters".into(), &before, &report));
            }
            for (s, t) in sums.iter_mut().zip(terms) {
                *s += t;
            }
            batches += 1;
        }
        let k = batches.max(1) as f64;
        let val_rmse = if data.val.is_empty() {
            None
        } else {
            match deterministic_rmse(&model, data.val) {
                Ok(v) => Some(v),
                Err(TrainError::Model(ModelError::Math(e))) => {
                    return Err(TrainError::Diverged {
                        epoch,
                        reason: format!("validation: {e}"),
                        last_good: Box::new(model),
                        report,
                    })
                }
                Err(e) => return Err(e),
            }
        };
        report.epochs.push(EpochRecord {
            epoch,
            y_loss: sums[0] / k,
            z_loss: sums[1] / k,
            r_loss: sums[2] / k,
            phy_loss: sums[3] / k,
            total: sums[4] / k,
            val_rmse,
            seconds: start.elapsed().as_secs_f64(),
        });
        let score = val_rmse.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => score < *b || val_rmse.is_none(),
        };
        if improved {
            best = Some((score, epoch, model.store.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= cfg.patience {
            report.stopped_early = true;
            break;
        }
    }
    if let Some((_, epoch, store)) = best {
        model.store = store;
        report.best_epoch = Some(epoch);
    }
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AutoencoderTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-2,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Reconstruction MSE of `ae` over `windows`.
pub fn reconstruction_mse(
    ae: &Autoencoder,
    windows: &[&TemporalWindow],
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let steps: Vec<Var> = window_steps(windows, ae.dims)?
        .into_iter()
        .map(|t| tape.constant(t))
        .collect();
    let out = autoencoder_forward(&mut tape, ae, &steps)?;
    let l = reconstruction_loss(&mut tape, &out, &steps)?;
    Ok(tape.value(l).item()?)
}

/// Fits the autoencoder; returns it with the mean epoch loss history.
pub fn pretrain_autoencoder(
    windows: &[&TemporalWindow],
    dims: AutoencoderDims,
    cfg: &AutoencoderTrainConfig,
) -> Result<(Autoencoder, Vec<f64>), TrainError> {
    if windows.is_empty() {
        return Err(TrainError::Data(DataError::Empty));
    }
    if cfg.batch_size == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(TrainError::Config(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let mut ae = Autoencoder::new(dims, Rng::derive(cfg.seed, 4))?;
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &ae.store,
    );
    let mut rng = Rng::new(Rng::derive(cfg.seed, 5));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let ws: Vec<&TemporalWindow> = chunk.iter().map(|&i| windows[i]).collect();
            let mut tape = Tape::new();
            let steps: Vec<Var> = window_steps(&ws, ae.dims)?
                .into_iter()
                .map(|t| tape.constant(t))
                .collect();
            let out = autoencoder_forward(&mut tape, &ae, &steps)?;
            let l = reconstruction_loss(&mut tape, &out, &steps)?;
            let grads = tape.backward(l)?.for_params(&tape, &ae.store);
            adam.step(&mut ae.store, &grads)?;
            sum += tape.value(l).item()?;
            batches += 1;
        }
        history.push(sum / batches as f64);
    }
    Ok((ae, history))
}
