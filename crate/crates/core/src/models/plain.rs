use super::layers::{dense_stack, Activation, Dense, Dropout, LstmGates};
use super::mono_lstm::{mono_lstm_forward, MonoLstmParams};
use super::{ModelError, ModelOutput};
use crate::math::{ParamStore, Rng, Tape, Var};

/// Dense ELU layers ending in one linear unit.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub hidden: Vec<Dense>,
    pub out: Dense,
}

impl HeadParams {
    pub fn new(
        store: &mut ParamStore,
        fan_in: usize,
        units: usize,
        layers: usize,
        rng: &mut Rng,
    ) -> Self {
        Self::named(store, "head", fan_in, units, layers, rng)
    }

    fn named(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        units: usize,
        layers: usize,
        rng: &mut Rng,
    ) -> Self {
        let mut hidden = Vec::with_capacity(layers);
        let mut width = fan_in;
        for k in 0..layers {
            hidden.push(Dense::new(
                store,
                &format!("{name}.dense{}", k + 1),
                width,
                units,
                Activation::Elu,
                rng,
            ));
            width = units;
        }
        let out = Dense::new(
            store,
            &format!("{name}.out"),
            width,
            1,
            Activation::Identity,
            rng,
        );
        Self { hidden, out }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        dropout: &mut Dropout,
    ) -> Result<Var, ModelError> {
        let x = dropout.apply(tape, x)?;
        self.forward_dropped(tape, store, x, dropout)
    }

    /// Like `forward`, but the caller has already applied dropout to `x`.
    fn forward_dropped(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        dropout: &mut Dropout,
    ) -> Result<Var, ModelError> {
        let (first, rest) = match self.hidden.split_first() {
            Some((first, rest)) => (Some(first), rest),
            None => (None, &[][..]),
        };
        let l = match first {
            Some(layer) => layer.forward(tape, store, x)?,
            None => x,
        };
        let l = dense_stack(rest, tape, store, l, dropout)?;
        let l = if first.is_some() {
            dropout.apply(tape, l)?
        } else {
            l
        };
        Ok(self.out.forward(tape, store, l)?)
    }
}

/// Monotone LSTM followed by a head reading `[x_d, z_d]` at each real depth.
/// Dropout reaches the drivers `x_d` but never the density `z_d`.
pub fn pga_forward(
    tape: &mut Tape,
    store: &ParamStore,
    mono: &MonoLstmParams,
    head: &HeadParams,
    steps: &[Var],
    padding: usize,
    dropout: &mut Dropout,
) -> Result<ModelOutput, ModelError> {
    let out = mono_lstm_forward(tape, store, mono, steps, padding, dropout)?;
    let mut ys = Vec::with_capacity(steps.len() - padding);
    for (d, &z) in out.real_z().iter().enumerate() {
        let x = dropout.apply(tape, steps[padding + d])?;
        let input = tape.concat(&[x, z])?;
        ys.push(head.forward_dropped(tape, store, input, dropout)?);
    }
    let temperature = tape.concat(&ys)?;
    let density = tape.concat(out.real_z())?;
    Ok(ModelOutput {
        temperature,
        density: Some(density),
    })
}

/// LSTM over depth with a dense ELU regressor on the hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainLstmParams {
    pub gates: LstmGates,
    pub dense: Vec<Dense>,
    pub out: Dense,
}

impl PlainLstmParams {
    pub fn new(
        store: &mut ParamStore,
        x_width: usize,
        hidden: usize,
        units: usize,
        layers: usize,
        rng: &mut Rng,
    ) -> Self {
        let gates = LstmGates::new(store, "lstm", x_width, hidden, 0, rng);
        let HeadParams { hidden: dense, out } =
            HeadParams::named(store, "regressor", hidden, units, layers, rng);
        Self { gates, dense, out }
    }
}

/// `[batch, n_depths]` temperatures at the real depths.
pub fn plain_lstm_forward(
    tape: &mut Tape,
    store: &ParamStore,
    params: &PlainLstmParams,
    steps: &[Var],
    padding: usize,
    dropout: &mut Dropout,
) -> Result<Var, ModelError> {
    let first = *steps.first().ok_or(ModelError::EmptySequence)?;
    if padding >= steps.len() {
        return Err(ModelError::EmptySequence);
    }
    let batch = tape.value(first).rows();
    let mut state = params.gates.zero_state(tape, batch);
    let mut ys = Vec::with_capacity(steps.len() - padding);
    for (s, &x) in steps.iter().enumerate() {
        state = params.gates.step(tape, store, x, state, None, dropout)?;
        if s >= padding {
            let l = dense_stack(&params.dense, tape, store, state.h, dropout)?;
            let l = dropout.apply(tape, l)?;
            ys.push(params.out.forward(tape, store, l)?);
        }
    }
    Ok(tape.concat(&ys)?)
}

/// Affine map from kg/m³ to the normalized density units used in training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityScale {
    pub mean: f64,
    pub std: f64,
}

/// Mean over adjacent depth pairs of `relu(rho(y_d) - rho(y_{d+1}))`, with
/// densities in normalized units.
pub fn pgl_physics_loss(tape: &mut Tape, y: Var, scale: DensityScale) -> Result<Var, ModelError> {
    let d = tape.value(y).cols();
    if d < 2 {
        return Err(ModelError::Config(
            "physics loss needs at least two depths".into(),
        ));
    }
    let rho = tape.density(y)?;
    let rho = tape.affine(rho, 1.0 / scale.std, -scale.mean / scale.std)?;
    let upper = tape.slice_cols(rho, 0, d - 1)?;
    let lower = tape.slice_cols(rho, 1, d - 1)?;
    let gap = tape.sub(upper, lower)?;
    let violation = tape.relu(gap)?;
    Ok(tape.mean(violation)?)
}
