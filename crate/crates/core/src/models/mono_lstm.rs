//! LSTM over depth with a monotone density channel.
//!
//! Gates see `[x_d, h_{d-1}, z_{d-1}]`. A dense ELU stack on `h_d` ends in a
//! ReLU unit producing `delta_d >= 0`, and `z_d = z_{d-1} + delta_d`. Since
//! `a + b >= a` holds exactly in IEEE arithmetic for `b >= 0`, the density
//! sequence is nondecreasing for every parameter value and dropout mask.

use super::layers::{dense_stack, Activation, Dense, Dropout, LstmGates, LstmState};
use super::ModelError;
use crate::math::{ParamId, ParamStore, Rng, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct MonoLstmParams {
    pub gates: LstmGates,
    /// ELU layers `W_1..W_k` on the hidden state.
    pub delta_hidden: Vec<Dense>,
    /// ReLU output `W_delta`.
    pub delta_out: Dense,
    /// Initial density (normalized units).
    pub z0: ParamId,
}

/// Initial density before the first (padded) step.
pub const Z0_INIT: f64 = -2.0;

impl MonoLstmParams {
    pub fn new(
        store: &mut ParamStore,
        x_width: usize,
        hidden: usize,
        dense_units: usize,
        delta_layers: usize,
        rng: &mut Rng,
    ) -> Self {
        let gates = LstmGates::new(store, "mono", x_width, hidden, 1, rng);
        let mut delta_hidden = Vec::with_capacity(delta_layers);
        let mut fan_in = hidden;
        for k in 0..delta_layers {
            delta_hidden.push(Dense::new(
                store,
                &format!("mono.delta{}", k + 1),
                fan_in,
                dense_units,
                Activation::Elu,
                rng,
            ));
            fan_in = dense_units;
        }
        let delta_out = Dense::new(store, "mono.delta_out", fan_in, 1, Activation::Relu, rng);
        let z0 = store.add(
            "mono.z0",
            crate::math::ParamKind::Bias,
            Tensor::full(&[1], Z0_INIT),
        );
        Self {
            gates,
            delta_hidden,
            delta_out,
            z0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MonoLstmState {
    pub h: Var,
    pub c: Var,
    /// `[batch, 1]`
    pub z: Var,
}

impl MonoLstmState {
    /// `h = c = 0`, `z = z0` broadcast over the batch.
    pub fn initial(
        tape: &mut Tape,
        store: &ParamStore,
        params: &MonoLstmParams,
        batch: usize,
    ) -> Result<Self, ModelError> {
        let LstmState { h, c } = params.gates.zero_state(tape, batch);
        let zeros = tape.constant(Tensor::zeros(&[batch, 1]));
        let z0 = tape.param(store, params.z0);
        let z = tape.add(zeros, z0)?;
        Ok(Self { h, c, z })
    }
}

/// One depth step; returns the new state and the increment `delta_d`.
pub fn mono_lstm_step(
    tape: &mut Tape,
    store: &ParamStore,
    params: &MonoLstmParams,
    x: Var,
    prev: MonoLstmState,
    dropout: &mut Dropout,
) -> Result<(MonoLstmState, Var), ModelError> {
    let LstmState { h, c } = params.gates.step(
        tape,
        store,
        x,
        LstmState {
            h: prev.h,
            c: prev.c,
        },
        Some(prev.z),
        dropout,
    )?;
    let l_k = dense_stack(&params.delta_hidden, tape, store, h, dropout)?;
    let l_k = dropout.apply(tape, l_k)?;
    let delta = params.delta_out.forward(tape, store, l_k)?;
    let z = tape.add(prev.z, delta)?;
    Ok((MonoLstmState { h, c, z }, delta))
}

/// Densities and hidden states at every step, padded steps included.
#[derive(Debug, Clone)]
pub struct MonoLstmOutput {
    pub z: Vec<Var>,
    pub h: Vec<Var>,
    /// The first `padding` entries belong to padded steps and carry no labels.
    pub padding: usize,
}

impl MonoLstmOutput {
    /// Density at the real depths only.
    pub fn real_z(&self) -> &[Var] {
        &self.z[self.padding..]
    }
}

pub fn mono_lstm_forward(
    tape: &mut Tape,
    store: &ParamStore,
    params: &MonoLstmParams,
    steps: &[Var],
    padding: usize,
    dropout: &mut Dropout,
) -> Result<MonoLstmOutput, ModelError> {
    let first = *steps.first().ok_or(ModelError::EmptySequence)?;
    if padding >= steps.len() {
        return Err(ModelError::EmptySequence);
    }
    let batch = tape.value(first).rows();
    let mut state = MonoLstmState::initial(tape, store, params, batch)?;
    let mut out = MonoLstmOutput {
        z: Vec::with_capacity(steps.len()),
        h: Vec::with_capacity(steps.len()),
        padding,
    };
    for &x in steps {
        let (next, _) = mono_lstm_step(tape, store, params, x, state, dropout)?;
        out.z.push(next.z);
        out.h.push(next.h);
        state = next;
    }
    Ok(out)
}
