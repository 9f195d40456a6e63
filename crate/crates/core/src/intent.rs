//! Intent navigation: knowledge and role transfer, intent attention and
//! fusion with the dialogue states.
//!
//! ```text
//! I_i = σ(k^I · h̄ᵖ_i)              k^I = σ(raw), entries in [0,1]
//! R_j = σ(k^R · r_j)               k^R = σ(raw)
//! H_i = [I_i ; R_{i+1}]            R_{n+1} from the judge embedding
//! Y   = Σ_i softmax(mean(I))_i · H_i
//! Z_i = [X_i ; Ŷ ; X_i⊙Ŷ ; X_i−Ŷ]   Ŷ = W_Y · Y
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};
use tbm_autodiff::{Tape, TensorError, Var};

use crate::params::{Bound, ParamId, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentConfig {
    /// `d_I`, rows of `k^I`.
    pub d_intent: usize,
    /// `d_R`, rows of `k^R`.
    pub d_role_transfer: usize,
}

impl Default for IntentConfig {
    fn default() -> Self {
        IntentConfig {
            d_intent: 16,
            d_role_transfer: 16,
        }
    }
}

impl IntentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_intent == 0 || self.d_role_transfer == 0 {
            return Err(Error::Config("intent dimensions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Squashes raw transfer parameters into `[0,1]`.
pub fn transfer_matrix(tape: &mut Tape, raw: Var) -> Var {
    tape.sigmoid(raw)
}

/// `I_i = σ(k^I · h̄ᵖ_i)`
pub fn intent_transform(tape: &mut Tape, k_intent: Var, knowledge: Var) -> Result<Var> {
    let pre = tape.matvec(k_intent, knowledge)?;
    Ok(tape.sigmoid(pre))
}

/// `R_j = σ(k^R · r_j)`
pub fn role_transform(tape: &mut Tape, k_role: Var, role: Var) -> Result<Var> {
    let pre = tape.matvec(k_role, role)?;
    Ok(tape.sigmoid(pre))
}

/// `H_i = [I_i ; R_{i+1}]`; `roles` holds `R_1..R_{n+1}`.
pub fn pair_sequence(tape: &mut Tape, intents: &[Var], roles: &[Var]) -> Result<Vec<Var>> {
    if roles.len() != intents.len() + 1 {
        return Err(TensorError::ShapeMismatch {
            op: "pair_sequence",
            left: vec![intents.len()],
            right: vec![roles.len()],
        }
        .into());
    }
    intents
        .iter()
        .zip(&roles[1..])
        .map(|(&i, &r)| Ok(tape.concat(&[i, r], 0)?))
        .collect()
}

/// Scores each utterance by the mean of `I_i`, normalizes the scores with a
/// softmax and returns `(Y, weights)`.
pub fn intent_attention(tape: &mut Tape, intents: &[Var], pairs: &[Var]) -> Result<(Var, Var)> {
    if intents.is_empty() {
        return Err(TensorError::Empty("intent_attention").into());
    }
    if intents.len() != pairs.len() {
        return Err(TensorError::ShapeMismatch {
            op: "intent_attention",
            left: vec![intents.len()],
            right: vec![pairs.len()],
        }
        .into());
    }
    let scores = intents
        .iter()
        .map(|&i| tape.mean(i))
        .collect::<tbm_autodiff::Result<Vec<_>>>()?;
    let scores = tape.concat(&scores, 0)?;
    let weights = tape.softmax(scores)?;
    let n = intents.len();
    let h = tape.stack(pairs)?;
    let row = tape.reshape(weights, &[1, n])?;
    let y = tape.matmul(row, h)?;
    let width = tape.shape(y)[1];
    let y = tape.reshape(y, &[width])?;
    Ok((y, weights))
}

/// `Z_i = [X_i ; Ŷ ; X_i⊙Ŷ ; X_i−Ŷ]`
pub fn fuse(tape: &mut Tape, x: &[Var], y_hat: Var) -> Result<Vec<Var>> {
    x.iter()
        .map(|&xi| {
            let prod = tape.mul(xi, y_hat)?;
            let diff = tape.sub(xi, y_hat)?;
            Ok(tape.concat(&[xi, y_hat, prod, diff], 0)?)
        })
        .collect()
}

/// Every intermediate of one navigation pass.
#[derive(Clone, Debug)]
pub struct IntentContext {
    /// `I_1..I_n`
    pub intents: Vec<Var>,
    /// `R_1..R_{n+1}`
    pub roles: Vec<Var>,
    /// `H_1..H_n`
    pub pairs: Vec<Var>,
    pub weights: Var,
    pub y: Var,
    pub y_hat: Var,
    pub z: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntentNav {
    pub config: IntentConfig,
    pub k_intent: ParamId,
    pub k_role: ParamId,
    pub w_y: ParamId,
}

impl IntentNav {
    pub fn new<R: Rng + ?Sized>(
        config: IntentConfig,
        d_h: usize,
        d_role: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let (d_i, d_r) = (config.d_intent, config.d_role_transfer);
        IntentNav {
            config,
            k_intent: store.uniform("intent.k_intent", &[d_i, d_h], rng),
            k_role: store.uniform("intent.k_role", &[d_r, d_role], rng),
            w_y: store.uniform("intent.w_y", &[2 * d_h, d_i + d_r], rng),
        }
    }

    /// Runs the full navigation. `roles` are the speaker embeddings `r_1..r_n`
    /// and `judge` the embedding used for the target slot `R_{n+1}`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: &[Var],
        knowledge: &[Var],
        roles: &[Var],
        judge: Var,
    ) -> Result<IntentContext> {
        if x.len() != knowledge.len() || x.len() != roles.len() {
            return Err(TensorError::ShapeMismatch {
                op: "intent_nav",
                left: vec![x.len(), knowledge.len()],
                right: vec![roles.len()],
            }
            .into());
        }
        let k_i = transfer_matrix(tape, bound[self.k_intent]);
        let k_r = transfer_matrix(tape, bound[self.k_role]);
        let intents = knowledge
            .iter()
            .map(|&h| intent_transform(tape, k_i, h))
            .collect::<Result<Vec<_>>>()?;
        let role_vecs = roles
            .iter()
            .chain(std::iter::once(&judge))
            .map(|&r| role_transform(tape, k_r, r))
            .collect::<Result<Vec<_>>>()?;
        let pairs = pair_sequence(tape, &intents, &role_vecs)?;
        let (y, weights) = intent_attention(tape, &intents, &pairs)?;
        let y_hat = tape.matvec(bound[self.w_y], y)?;
        let z = fuse(tape, x, y_hat)?;
        Ok(IntentContext {
            intents,
            roles: role_vecs,
            pairs,
            weights,
            y,
            y_hat,
            z,
        })
    }
}
