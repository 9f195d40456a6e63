//! LSTM cell built from tape primitives.
//!
//! Gate layout in the stacked weight matrix is `[input; forget; candidate;
//! output]`, each block `d_h` rows tall, applied to `[x; h]`.

use crate::{Result, Tape, TensorError, Var};

/// Tape handles for one LSTM's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    /// `[4·d_h × (d_in + d_h)]`
    pub w: Var,
    /// `[4·d_h]`
    pub b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmWeights {
    pub fn hidden_size(&self, tape: &Tape) -> usize {
        tape.shape(self.b)[0] / 4
    }

    pub fn input_size(&self, tape: &Tape) -> usize {
        tape.shape(self.w)[1] - self.hidden_size(tape)
    }

    /// One step: returns `(h', c')`.
    pub fn cell(&self, tape: &mut Tape, x: Var, state: LstmState) -> Result<LstmState> {
        let d_h = self.hidden_size(tape);
        let ws = tape.shape(self.w).to_vec();
        if ws.len() != 2 || ws[0] != 4 * d_h || !tape.shape(self.b)[0].is_multiple_of(4) {
            return Err(TensorError::ShapeMismatch {
                op: "lstm_cell",
                left: ws,
                right: tape.shape(self.b).to_vec(),
            });
        }
        if tape.shape(state.h) != [d_h] || tape.shape(state.c) != [d_h] {
            return Err(TensorError::ShapeMismatch {
                op: "lstm_cell",
                left: vec![d_h],
                right: tape.shape(state.h).to_vec(),
            });
        }
        let xh = tape.concat(&[x, state.h], 0)?;
        let pre = tape.matvec(self.w, xh)?;
        let pre = tape.add(pre, self.b)?;
        let i = tape.slice(pre, 0, d_h)?;
        let f = tape.slice(pre, d_h, d_h)?;
        let g = tape.slice(pre, 2 * d_h, d_h)?;
        let o = tape.slice(pre, 3 * d_h, d_h)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, state.c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let squashed = tape.tanh(c);
        let h = tape.mul(o, squashed)?;
        Ok(LstmState { h, c })
    }

    /// Runs the cell over `inputs` from a zero state, returning every hidden
    /// state in input order. With `reverse`, the sequence is consumed back to
    /// front but outputs are still indexed by input position.
    pub fn run(&self, tape: &mut Tape, inputs: &[Var], reverse: bool) -> Result<Vec<Var>> {
        let d_h = self.hidden_size(tape);
        let zero = tape.constant(crate::Tensor::zeros(&[d_h]));
        let mut state = LstmState { h: zero, c: zero };
        let mut out = vec![zero; inputs.len()];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..inputs.len()).rev())
        } else {
            Box::new(0..inputs.len())
        };
        for t in order {
            state = self.cell(tape, inputs[t], state)?;
            out[t] = state.h;
        }
        Ok(out)
    }
}
