//! LSTM autoencoder compressing a week of weather into a short embedding.
//!
//! The encoder's final hidden state is the embedding. The decoder receives the
//! embedding at every step and a linear readout reconstructs the window.

use serde::{Deserialize, Serialize};

use super::layers::{Activation, Dense, Dropout, LstmGates};
use super::ModelError;
use crate::data::TemporalWindow;
use crate::math::{ParamStore, Rng, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderDims {
    pub n_inputs: usize,
    pub embedding_dim: usize,
    pub decoder_units: usize,
    /// Steps per window, target day included.
    pub window_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub dims: AutoencoderDims,
    pub store: ParamStore,
    pub encoder: LstmGates,
    pub decoder: LstmGates,
    pub readout: Dense,
}

#[derive(Debug, Clone)]
pub struct AutoencoderOutput {
    /// `[batch, embedding_dim]`
    pub embedding: Var,
    /// One `[batch, n_inputs]` per step.
    pub reconstruction: Vec<Var>,
}

impl Autoencoder {
    pub fn new(dims: AutoencoderDims, seed: u64) -> Result<Self, ModelError> {
        if dims.embedding_dim == 0 || dims.embedding_dim >= dims.n_inputs {
            return Err(ModelError::Config(format!(
                "embedding width {} must be in 1..{}",
                dims.embedding_dim, dims.n_inputs
            )));
        }
        if dims.window_len == 0 || dims.decoder_units == 0 {
            return Err(ModelError::Config(
                "window and decoder sizes must be positive".into(),
            ));
        }
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let encoder = LstmGates::new(
            &mut store,
            "encoder",
            dims.n_inputs,
            dims.embedding_dim,
            0,
            &mut rng,
        );
        let decoder = LstmGates::new(
            &mut store,
            "decoder",
            dims.embedding_dim,
            dims.decoder_units,
            0,
            &mut rng,
        );
        let readout = Dense::new(
            &mut store,
            "readout",
            dims.decoder_units,
            dims.n_inputs,
            Activation::Identity,
            &mut rng,
        );
        Ok(Self {
            dims,
            store,
            encoder,
            decoder,
            readout,
        })
    }

    /// Embeddings for each window, in order.
    pub fn encode(&self, windows: &[&TemporalWindow]) -> Result<Vec<Vec<f64>>, ModelError> {
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let steps: Vec<Var> = window_steps(windows, self.dims)?
            .into_iter()
            .map(|t| tape.constant(t))
            .collect();
        let out = autoencoder_forward(&mut tape, self, &steps)?;
        let e = tape.value(out.embedding);
        Ok((0..e.rows()).map(|r| e.row(r).to_vec()).collect())
    }
}

/// Re-stacks windows as one `[batch, n_inputs]` tensor per step.
pub fn window_steps(
    windows: &[&TemporalWindow],
    dims: AutoencoderDims,
) -> Result<Vec<Tensor>, ModelError> {
    for w in windows {
        if w.steps.rows() != dims.window_len {
            return Err(ModelError::WindowLength {
                expected: dims.window_len,
                got: w.steps.rows(),
            });
        }
        if w.steps.cols() != dims.n_inputs {
            return Err(ModelError::InputWidth {
                expected: dims.n_inputs,
                got: w.steps.cols(),
            });
        }
    }
    let b = windows.len();
    Ok((0..dims.window_len)
        .map(|s| {
            let data = windows
                .iter()
                .flat_map(|w| w.steps.row(s).iter().copied())
                .collect();
            Tensor::from_parts(vec![b, dims.n_inputs], data)
        })
        .collect())
}

pub fn autoencoder_forward(
    tape: &mut Tape,
    ae: &Autoencoder,
    steps: &[Var],
) -> Result<AutoencoderOutput, ModelError> {
    let first = *steps.first().ok_or(ModelError::EmptySequence)?;
    if steps.len() != ae.dims.window_len {
        return Err(ModelError::WindowLength {
            expected: ae.dims.window_len,
            got: steps.len(),
        });
    }
    let batch = tape.value(first).rows();
    let mut off = Dropout::off();
    let mut enc = ae.encoder.zero_state(tape, batch);
    for &x in steps {
        enc = ae.encoder.step(tape, &ae.store, x, enc, None, &mut off)?;
    }
    let embedding = enc.h;
    let mut dec = ae.decoder.zero_state(tape, batch);
    let mut reconstruction = Vec::with_capacity(steps.len());
    for _ in steps {
        dec = ae
            .decoder
            .step(tape, &ae.store, embedding, dec, None, &mut off)?;
        reconstruction.push(ae.readout.forward(tape, &ae.store, dec.h)?);
    }
    Ok(AutoencoderOutput {
        embedding,
        reconstruction,
    })
}

/// Mean squared reconstruction error over every step, row and feature.
pub fn reconstruction_loss(
    tape: &mut Tape,
    out: &AutoencoderOutput,
    steps: &[Var],
) -> Result<Var, ModelError> {
    let n = steps.len();
    if n == 0 || n != out.reconstruction.len() {
        return Err(ModelError::EmptySequence);
    }
    let mut total: Option<Var> = None;
    for (&x, &r) in steps.iter().zip(&out.reconstruction) {
        let diff = tape.sub(r, x)?;
        let sq = tape.square(diff)?;
        let m = tape.mean(sq)?;
        total = Some(match total {
            None => m,
            Some(t) => tape.add(t, m)?,
        });
    }
    Ok(tape.scale(total.unwrap(), 1.0 / n as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Adam, AdamConfig};

    fn dims() -> AutoencoderDims {
        AutoencoderDims {
            n_inputs: 6,
            embedding_dim: 3,
            decoder_units: 8,
            window_len: 4,
        }
    }

    fn windows(n: usize, seed: u64) -> Vec<TemporalWindow> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|i| {
                let base: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
                // features are combinations of two latent factors
                let data = (0..4 * 6)
                    .map(|k| {
                        let (s, f) = (k / 6, k % 6);
                        base[f % 2] * (1.0 + 0.1 * s as f64)
                            + if f >= 4 { base[0] - base[1] } else { 0.0 }
                    })
                    .collect();
                TemporalWindow {
                    date_index: i,
                    steps: Tensor::matrix(4, 6, data).unwrap(),
                }
            })
            .collect()
    }

    #[test]
    fn embedding_has_requested_width() {
        let ae = Autoencoder::new(dims(), 1).unwrap();
        let ws = windows(5, 2);
        let refs: Vec<&TemporalWindow> = ws.iter().collect();
        let e = ae.encode(&refs).unwrap();
        assert_eq!(e.len(), 5);
        assert!(e
            .iter()
            .all(|v| v.len() == 3 && v.iter().all(|x| x.abs() < 1.0)));
    }

    #[test]
    fn rejects_wide_embedding_and_wrong_window() {
        assert!(Autoencoder::new(
            AutoencoderDims {
                embedding_dim: 6,
                ..dims()
            },
            1
        )
        .is_err());
        let ae = Autoencoder::new(dims(), 1).unwrap();
        let bad = TemporalWindow {
            date_index: 0,
            steps: Tensor::zeros(&[3, 6]),
        };
        assert!(matches!(
            ae.encode(&[&bad]),
            Err(ModelError::WindowLength {
                expected: 4,
                got: 3
            })
        ));
    }

    #[test]
    fn training_reduces_reconstruction_error() {
        let mut ae = Autoencoder::new(dims(), 3).unwrap();
        let ws = windows(32, 4);
        let refs: Vec<&TemporalWindow> = ws.iter().collect();
        let data = window_steps(&refs, ae.dims).unwrap();
        let loss_at = |ae: &Autoencoder| {
            let mut tape = Tape::new();
            let steps: Vec<Var> = data.iter().map(|t| tape.constant(t.clone())).collect();
            let out = autoencoder_forward(&mut tape, ae, &steps).unwrap();
            let l = reconstruction_loss(&mut tape, &out, &steps).unwrap();
            (tape, l)
        };
        let start = {
            let (tape, l) = loss_at(&ae);
            tape.value(l).item().unwrap()
        };
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            &ae.store,
        );
        for _ in 0..200 {
            let (tape, l) = loss_at(&ae);
            let g = tape.backward(l).unwrap().for_params(&tape, &ae.store);
            adam.step(&mut ae.store, &g).unwrap();
        }
        let (tape, l) = loss_at(&ae);
        let end = tape.value(l).item().unwrap();
        assert!(end < 0.5 * start, "{start} -> {end}");
    }
}
