//! Named learnable parameters and their binding onto a tape.

use std::ops::Index;

use rand::Rng;
use tbm_autodiff::{LstmWeights, Tape, Tensor, Var};

/// Half-width of the uniform initialization range.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Adds a parameter initialized from `U[-0.08, 0.08]`.
    pub fn uniform<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], rng: &mut R) -> ParamId {
        self.add(name, Tensor::uniform(shape, INIT_SCALE, rng))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar entries.
    pub fn size(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(Tensor::sum_squares).sum()
    }

    /// Records every parameter as a gradient-carrying leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound(self.values.iter().map(|v| tape.variable(v.clone())).collect())
    }

    /// Records every parameter as a constant leaf (inference).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound(self.values.iter().map(|v| tape.constant(v.clone())).collect())
    }
}

/// Tape handles for every parameter of a store, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    pub fn lstm(&self, p: LstmParams) -> LstmWeights {
        LstmWeights {
            w: self[p.w],
            b: self[p.b],
        }
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

/// Parameter ids of one LSTM (`[4·d_h × (d_in + d_h)]` weights, `[4·d_h]` bias).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LstmParams {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d_in: usize, d_h: usize, rng: &mut R) -> Self {
        LstmParams {
            w: store.uniform(&format!("{name}.w"), &[4 * d_h, d_in + d_h], rng),
            b: store.uniform(&format!("{name}.b"), &[4 * d_h], rng),
        }
    }
}
