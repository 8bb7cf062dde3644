use crate::math::{MathError, ParamId, ParamStore, Rng, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Elu,
    Relu,
}

/// `act(x W + b)` with `W: [fan_in, fan_out]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        Self {
            w: store.add_glorot(format!("{name}.w"), fan_in, fan_out, rng),
            b: store.add_bias(format!("{name}.b"), fan_out, 0.0),
            fan_in,
            fan_out,
            activation,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, MathError> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let pre = tape.linear(x, w, b)?;
        match self.activation {
            Activation::Identity => Ok(pre),
            Activation::Elu => tape.elu(pre),
            Activation::Relu => tape.relu(pre),
        }
    }
}

/// Bernoulli dropout masks with inverted scaling, recorded as tape constants.
/// Inactive (no randomness) when `p == 0` or no stream is attached.
#[derive(Debug, Clone)]
pub struct Dropout {
    p: f64,
    rng: Option<Rng>,
}

impl Dropout {
    pub fn off() -> Self {
        Self { p: 0.0, rng: None }
    }

    pub fn new(p: f64, rng: Rng) -> Self {
        assert!(
            (0.0..1.0).contains(&p),
            "dropout probability must be in [0, 1)"
        );
        Self { p, rng: Some(rng) }
    }

    pub fn is_active(&self) -> bool {
        self.p > 0.0 && self.rng.is_some()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var, MathError> {
        let p = self.p;
        let Some(rng) = self.rng.as_mut().filter(|_| p > 0.0) else {
            return Ok(x);
        };
        let shape = tape.value(x).shape().to_vec();
        let n: usize = shape.iter().product();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.bernoulli(p) { 0.0 } else { keep })
            .collect();
        let m = tape.constant(Tensor::from_parts(shape, mask));
        tape.hadamard(x, m)
    }
}

/// The four gate blocks of an LSTM cell. Each consumes the same concatenated
/// input `[x, h_prev, extra...]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmGates {
    pub input: Dense,
    pub forget: Dense,
    pub cell: Dense,
    pub output: Dense,
    pub x_width: usize,
    pub hidden: usize,
    pub extra: usize,
}

/// Hidden and cell state of an LSTM.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmGates {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        x_width: usize,
        hidden: usize,
        extra: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = x_width + hidden + extra;
        let gate = |g: &str, store: &mut ParamStore, rng: &mut Rng| {
            Dense::new(
                store,
                &format!("{name}.{g}"),
                fan_in,
                hidden,
                Activation::Identity,
                rng,
            )
        };
        let input = gate("input", store, rng);
        let forget = gate("forget", store, rng);
        let cell = gate("cell", store, rng);
        let output = gate("output", store, rng);
        *store.value_mut(forget.b) = Tensor::full(&[hidden], 1.0);
        Self {
            input,
            forget,
            cell,
            output,
            x_width,
            hidden,
            extra,
        }
    }

    pub fn zero_state(&self, tape: &mut Tape, batch: usize) -> LstmState {
        let h = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        let c = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        LstmState { h, c }
    }

    /// One recurrence step. Dropout touches only the non-recurrent input `x`,
    /// independently per gate block.
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        state: LstmState,
        extra: Option<Var>,
        dropout: &mut Dropout,
    ) -> Result<LstmState, MathError> {
        let gate_input = |tape: &mut Tape, dropout: &mut Dropout| -> Result<Var, MathError> {
            let xd = dropout.apply(tape, x)?;
            match extra {
                Some(e) => tape.concat(&[xd, state.h, e]),
                None => tape.concat(&[xd, state.h]),
            }
        };
        let gi = gate_input(tape, dropout)?;
        let i_pre = self.input.forward(tape, store, gi)?;
        let i = tape.sigmoid(i_pre)?;
        let gf = gate_input(tape, dropout)?;
        let f_pre = self.forget.forward(tape, store, gf)?;
        let f = tape.sigmoid(f_pre)?;
        let gc = gate_input(tape, dropout)?;
        let c_pre = self.cell.forward(tape, store, gc)?;
        let cand = tape.tanh(c_pre)?;
        let go = gate_input(tape, dropout)?;
        let o_pre = self.output.forward(tape, store, go)?;
        let o = tape.sigmoid(o_pre)?;

        let keep = tape.hadamard(f, state.c)?;
        let write = tape.hadamard(i, cand)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        let h = tape.hadamard(o, tc)?;
        Ok(LstmState { h, c })
    }

    pub fn dense_layers(&self) -> [&Dense; 4] {
        [&self.input, &self.forget, &self.cell, &self.output]
    }
}

/// Stack of dense layers applied with dropout on each layer's input.
pub fn dense_stack(
    layers: &[Dense],
    tape: &mut Tape,
    store: &ParamStore,
    mut x: Var,
    dropout: &mut Dropout,
) -> Result<Var, MathError> {
    for layer in layers {
        let xd = dropout.apply(tape, x)?;
        x = layer.forward(tape, store, xd)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropout_preserves_expectation_and_zeroes_units() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[200, 50], 1.0));
        let mut d = Dropout::new(0.2, Rng::new(3));
        let y = d.apply(&mut tape, x).unwrap();
        let v = tape.value(y).data();
        let zeros = v.iter().filter(|&&a| a == 0.0).count() as f64 / v.len() as f64;
        assert!((zeros - 0.2).abs() < 0.02);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 1.0).abs() < 0.03);
        assert!(v.iter().all(|&a| a == 0.0 || a == 1.25));
    }

    #[test]
    fn inactive_dropout_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[2, 2], 3.0));
        let n = tape.len();
        let y = Dropout::off().apply(&mut tape, x).unwrap();
        assert_eq!(x, y);
        let y = Dropout::new(0.0, Rng::new(1)).apply(&mut tape, x).unwrap();
        assert_eq!(x, y);
        assert_eq!(tape.len(), n);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut s = ParamStore::new();
        let g = LstmGates::new(&mut s, "g", 3, 4, 1, &mut Rng::new(1));
        assert!(s.value(g.forget.b).data().iter().all(|&v| v == 1.0));
        assert!(s.value(g.input.b).data().iter().all(|&v| v == 0.0));
        assert_eq!(s.value(g.input.w).shape(), &[3 + 4 + 1, 4]);
        let limit = (6.0f64 / (8.0 + 4.0)).sqrt();
        assert!(s.value(g.cell.w).data().iter().all(|v| v.abs() <= limit));
    }
}
