//! Depth-recurrent temperature models and the temporal autoencoder.

mod autoencoder;
mod layers;
mod mono_lstm;
mod plain;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use autoencoder::{
    autoencoder_forward, reconstruction_loss, window_steps, Autoencoder, AutoencoderDims,
    AutoencoderOutput,
};
pub use layers::{dense_stack, Activation, Dense, Dropout, LstmGates, LstmState};
pub use mono_lstm::{
    mono_lstm_forward, mono_lstm_step, MonoLstmOutput, MonoLstmParams, MonoLstmState, Z0_INIT,
};
pub use plain::{
    pga_forward, pgl_physics_loss, plain_lstm_forward, DensityScale, HeadParams, PlainLstmParams,
};

use crate::data::DepthSequenceBatch;
use crate::math::{Checkpoint, MathError, ParamId, ParamStore, Rng, Tape, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("input width {got} does not match model width {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("depth models need a temporal embedding of width {0}; batch has none")]
    MissingEmbedding(usize),
    #[error("window of {got} steps; model expects {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("checkpoint holds model '{found}', expected '{expected}'")]
    WrongModel { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Monotone density LSTM with a temperature head.
    Pga,
    /// Plain LSTM regressor.
    Lstm,
    /// Plain LSTM trained with a density-ordering penalty.
    Pgl,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Pga, ModelKind::Lstm, ModelKind::Pgl];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Pga => "pga",
            ModelKind::Lstm => "lstm",
            ModelKind::Pgl => "pgl",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pga" => Ok(ModelKind::Pga),
            "lstm" => Ok(ModelKind::Lstm),
            "pgl" => Ok(ModelKind::Pgl),
            other => Err(ModelError::Config(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Per-depth input features (depth included).
    pub n_features: usize,
    pub embedding_dim: usize,
    pub hidden_units: usize,
    pub dense_units: usize,
    pub delta_layers: usize,
    pub head_layers: usize,
    pub baseline_dense_layers: usize,
}

impl ModelDims {
    pub fn new(n_features: usize, embedding_dim: usize) -> Self {
        Self {
            n_features,
            embedding_dim,
            hidden_units: 8,
            dense_units: 5,
            delta_layers: 2,
            head_layers: 2,
            baseline_dense_layers: 4,
        }
    }

    pub fn input_width(&self) -> usize {
        self.n_features + self.embedding_dim
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.n_features == 0 || self.hidden_units == 0 || self.dense_units == 0 {
            return Err(ModelError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    Pga {
        mono: MonoLstmParams,
        head: HeadParams,
    },
    Plain(PlainLstmParams),
}

/// Network outputs for a batch of dates, real depths only.
#[derive(Debug, Clone, Copy)]
pub struct ModelOutput {
    /// `[batch, n_depths]` temperature (°C).
    pub temperature: Var,
    /// `[batch, n_depths]` normalized density; PGA only.
    pub density: Option<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthModel {
    pub kind: ModelKind,
    pub dims: ModelDims,
    pub store: ParamStore,
    pub arch: Architecture,
}

impl DepthModel {
    pub fn new(kind: ModelKind, dims: ModelDims, seed: u64) -> Result<Self, ModelError> {
        dims.validate()?;
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let w = dims.input_width();
        let arch = match kind {
            ModelKind::Pga => {
                let mono = MonoLstmParams::new(
                    &mut store,
                    w,
                    dims.hidden_units,
                    dims.dense_units,
                    dims.delta_layers,
                    &mut rng,
                );
                let head = HeadParams::new(
                    &mut store,
                    w + 1,
                    dims.dense_units,
                    dims.head_layers,
                    &mut rng,
                );
                Architecture::Pga { mono, head }
            }
            ModelKind::Lstm | ModelKind::Pgl => Architecture::Plain(PlainLstmParams::new(
                &mut store,
                w,
                dims.hidden_units,
                dims.dense_units,
                dims.baseline_dense_layers,
                &mut rng,
            )),
        };
        Ok(Self {
            kind,
            dims,
            store,
            arch,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Bias of the final temperature unit.
    pub fn output_bias(&self) -> ParamId {
        match &self.arch {
            Architecture::Pga { head, .. } => head.out.b,
            Architecture::Plain(p) => p.out.b,
        }
    }

    pub fn set_output_bias(&mut self, value: f64) {
        let id = self.output_bias();
        self.store.value_mut(id).data_mut().fill(value);
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        batch: &DepthSequenceBatch,
        dropout: &mut Dropout,
    ) -> Result<ModelOutput, ModelError> {
        let expected = self.dims.input_width();
        let got = batch.input_width();
        if got != expected {
            if got == self.dims.n_features && self.dims.embedding_dim > 0 {
                return Err(ModelError::MissingEmbedding(self.dims.embedding_dim));
            }
            return Err(ModelError::InputWidth { expected, got });
        }
        let steps: Vec<Var> = batch
            .steps
            .iter()
            .map(|s| tape.constant(s.clone()))
            .collect();
        match &self.arch {
            Architecture::Pga { mono, head } => pga_forward(
                tape,
                &self.store,
                mono,
                head,
                &steps,
                batch.padding,
                dropout,
            ),
            Architecture::Plain(p) => {
                let y = plain_lstm_forward(tape, &self.store, p, &steps, batch.padding, dropout)?;
                Ok(ModelOutput {
                    temperature: y,
                    density: None,
                })
            }
        }
    }

    /// Parameters under `model.`, plus the dimensions as a fixed tensor.
    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        let d = &self.dims;
        let dims = [
            d.n_features,
            d.embedding_dim,
            d.hidden_units,
            d.dense_units,
            d.delta_layers,
            d.head_layers,
            d.baseline_dense_layers,
        ];
        ckpt.push_fixed(
            "model.dims",
            crate::math::Tensor::from_parts(
                vec![dims.len()],
                dims.iter().map(|&v| v as f64).collect(),
            ),
        );
        ckpt.push_store("model.", &self.store);
    }

    pub fn read_from(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let kind: ModelKind = ckpt.model_id.parse()?;
        let raw = ckpt
            .get("model.dims")
            .ok_or_else(|| MathError::Checkpoint("missing model.dims".into()))?;
        let v: Vec<usize> = raw.data().iter().map(|&x| x as usize).collect();
        if v.len() != 7 {
            return Err(MathError::Checkpoint("model.dims must have 7 entries".into()).into());
        }
        let dims = ModelDims {
            n_features: v[0],
            embedding_dim: v[1],
            hidden_units: v[2],
            dense_units: v[3],
            delta_layers: v[4],
            head_layers: v[5],
            baseline_dense_layers: v[6],
        };
        let mut model = Self::new(kind, dims, 0)?;
        ckpt.load_into("model.", &mut model.store)?;
        Ok(model)
    }
}
