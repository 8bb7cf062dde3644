//! Shared fixtures for the benchmarks under `benches/`.

use pga_core::config::ExperimentConfig;
use pga_core::data::{DepthSequence, DepthSequenceBatch};
use pga_core::models::{DepthModel, ModelKind};
use pga_core::pipeline::{self, Prepared, WindowIndex};
use pga_core::training::initial_model;

/// Default-sized lake (28 depths, padding 10) with embedded training dates.
pub struct Fixture {
    pub cfg: ExperimentConfig,
    pub prep: Prepared,
    pub seqs: Vec<DepthSequence>,
}

impl Fixture {
    pub fn new() -> Self {
        let mut cfg = ExperimentConfig::default();
        cfg.ae.epochs = 1;
        let prep = pipeline::prepare(pipeline::synthetic_dataset(&cfg).unwrap(), &cfg).unwrap();
        let windows = WindowIndex::new(&prep, &cfg);
        let (encoder, _) = pipeline::pretrain_encoder(&prep, &windows, &cfg).unwrap();
        let (seqs, _) =
            pipeline::embedded_sequences(&prep, &windows, &encoder, &prep.fit, &cfg).unwrap();
        Self { cfg, prep, seqs }
    }

    pub fn batch(&self, dates: usize) -> DepthSequenceBatch {
        let refs: Vec<&DepthSequence> = self.seqs.iter().take(dates).collect();
        DepthSequenceBatch::stack(&refs).unwrap()
    }

    pub fn model(&self, kind: ModelKind) -> DepthModel {
        let dims = self.cfg.model_dims(self.prep.normalized.n_features());
        initial_model(kind, dims, &self.seqs, 1).unwrap()
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
