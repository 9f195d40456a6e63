//! Pointer-generator decoder.
//!
//! Memory row for word `t` of utterance `i` is `[e_{i,t} ; Z_i]` (width
//! `10·d_h`). One step:
//!
//! ```text
//! s'        = LSTM(emb(prev), s)
//! a         = softmax(vᵀ tanh(M·W_mem + W_s·h' + b))
//! ctx       = aᵀ M
//! P_vocab   = softmax(W_out [h' ; ctx] + b_out)
//! p_gen     = σ(w_gen · [ctx ; h' ; emb(prev)] + b_gen)
//! final     = p_gen · P_vocab ⊕ (1 − p_gen) · scatter(a, ids)
//! ```
//!
//! Temporary (out-of-vocabulary) ids are fed back as `<unk>`.

use std::collections::HashMap;

use rand::Rng;
use tbm_autodiff::{LstmState, Tape, Tensor, TensorError, Var};

use crate::data::{Utterance, Vocab, UNK};
use crate::params::{Bound, LstmParams, ParamId, ParamStore};
use crate::Result;

/// Per-fragment vocabulary extension with temporary ids for context tokens
/// missing from the base vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedVocabMap {
    base_len: usize,
    oov: Vec<String>,
    oov_ids: HashMap<String, usize>,
    /// Extended id of every context token, in memory order.
    positions: Vec<usize>,
}

impl ExtendedVocabMap {
    pub fn build(context: &[Utterance], vocab: &Vocab) -> Self {
        let mut map = ExtendedVocabMap {
            base_len: vocab.len(),
            oov: Vec::new(),
            oov_ids: HashMap::new(),
            positions: Vec::new(),
        };
        for token in context.iter().flat_map(|u| u.tokens()) {
            let id = match vocab.get(token) {
                Some(id) => id,
                None => match map.oov_ids.get(token) {
                    Some(&id) => id,
                    None => {
                        let id = map.base_len + map.oov.len();
                        map.oov.push(token.clone());
                        map.oov_ids.insert(token.clone(), id);
                        id
                    }
                },
            };
            map.positions.push(id);
        }
        map
    }

    /// Base vocabulary size plus temporary ids.
    pub fn len(&self) -> usize {
        self.base_len + self.oov.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn oov(&self) -> &[String] {
        &self.oov
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Extended id of a target token: base id, else temporary id, else UNK.
    pub fn target_id(&self, token: &str, vocab: &Vocab) -> usize {
        vocab
            .get(token)
            .or_else(|| self.oov_ids.get(token).copied())
            .unwrap_or(UNK)
    }

    pub fn token<'a>(&'a self, id: usize, vocab: &'a Vocab) -> Option<&'a str> {
        if id < self.base_len {
            vocab.token(id)
        } else {
            self.oov.get(id - self.base_len).map(String::as_str)
        }
    }
}

/// Attention memory for one fragment.
#[derive(Clone, Debug)]
pub struct Memory {
    /// `[L × 10·d_h]`
    pub rows: Var,
    /// `M·W_mem`, `[L × d_h]`, computed once per fragment.
    pub keys: Var,
    pub ids: Vec<usize>,
    pub ext_len: usize,
}

impl Memory {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Stacks `[e_{i,t} ; Z_i]` for every word, ordered by `(i, t)`.
pub fn build_memory(tape: &mut Tape, word_states: &[Vec<Var>], z: &[Var]) -> Result<Var> {
    if word_states.len() != z.len() {
        return Err(TensorError::ShapeMismatch {
            op: "build_memory",
            left: vec![word_states.len()],
            right: vec![z.len()],
        }
        .into());
    }
    let mut rows = Vec::new();
    for (states, &zi) in word_states.iter().zip(z) {
        for &e in states {
            rows.push(tape.concat(&[e, zi], 0)?);
        }
    }
    Ok(tape.stack(&rows)?)
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub lstm: LstmState,
    pub step: usize,
}

/// Tape handles produced by one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct StepVars {
    pub attention: Var,
    pub p_vocab: Var,
    /// `[1]`
    pub p_gen: Var,
    pub state: DecoderState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub d_h: usize,
    pub vocab_size: usize,
    /// Shared with the encoder.
    pub word_emb: ParamId,
    pub w_init: ParamId,
    pub lstm: LstmParams,
    pub w_mem: ParamId,
    pub w_state: ParamId,
    pub b_attn: ParamId,
    pub v_attn: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
    pub w_gen: ParamId,
    pub b_gen: ParamId,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(
        d_word: usize,
        d_h: usize,
        vocab_size: usize,
        word_emb: ParamId,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let mem = 10 * d_h;
        Decoder {
            d_h,
            vocab_size,
            word_emb,
            w_init: store.uniform("decoder.w_init", &[d_h, 8 * d_h], rng),
            lstm: LstmParams::new(store, "decoder.lstm", d_word, d_h, rng),
            w_mem: store.uniform("decoder.w_mem", &[mem, d_h], rng),
            w_state: store.uniform("decoder.w_state", &[d_h, d_h], rng),
            b_attn: store.uniform("decoder.b_attn", &[d_h], rng),
            v_attn: store.uniform("decoder.v_attn", &[d_h], rng),
            w_out: store.uniform("decoder.w_out", &[vocab_size, d_h + mem], rng),
            b_out: store.uniform("decoder.b_out", &[vocab_size], rng),
            w_gen: store.uniform("decoder.w_gen", &[1, mem + d_h + d_word], rng),
            b_gen: store.uniform("decoder.b_gen", &[1], rng),
        }
    }

    pub fn memory(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        word_states: &[Vec<Var>],
        z: &[Var],
        map: &ExtendedVocabMap,
    ) -> Result<Memory> {
        let rows = build_memory(tape, word_states, z)?;
        if tape.shape(rows)[0] != map.positions().len() {
            return Err(TensorError::ShapeMismatch {
                op: "memory",
                left: tape.shape(rows).to_vec(),
                right: vec![map.positions().len()],
            }
            .into());
        }
        let keys = tape.matmul(rows, bound[self.w_mem])?;
        Ok(Memory {
            rows,
            keys,
            ids: map.positions().to_vec(),
            ext_len: map.len(),
        })
    }

    /// `h₀ = tanh(W_init · mean_i Z_i)`, `c₀ = 0`.
    pub fn init(&self, tape: &mut Tape, bound: &Bound, z: &[Var]) -> Result<DecoderState> {
        if z.is_empty() {
            return Err(TensorError::Empty("init_decoder").into());
        }
        let n = z.len();
        let stacked = tape.stack(z)?;
        let avg = tape.constant(Tensor::matrix(1, n, vec![1.0 / n as f64; n])?);
        let mean = tape.matmul(avg, stacked)?;
        let width = tape.shape(mean)[1];
        let mean = tape.reshape(mean, &[width])?;
        let pre = tape.matvec(bound[self.w_init], mean)?;
        let h = tape.tanh(pre);
        let c = tape.constant(Tensor::zeros(&[self.d_h]));
        Ok(DecoderState {
            lstm: LstmState { h, c },
            step: 0,
        })
    }

    /// Advances the LSTM on `prev` and computes attention, `P_vocab` and
    /// `p_gen`. With `copy` off the gate is the constant 1.
    pub fn step(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        memory: &Memory,
        state: &DecoderState,
        prev: usize,
        copy: bool,
    ) -> Result<StepVars> {
        if memory.is_empty() {
            return Err(TensorError::Empty("decode_step").into());
        }
        let input = if prev < self.vocab_size { prev } else { UNK };
        let x = tape.row(bound[self.word_emb], input)?;
        let lstm = bound.lstm(self.lstm).cell(tape, x, state.lstm)?;
        let h = lstm.h;

        let query = tape.matvec(bound[self.w_state], h)?;
        let query = tape.add(query, bound[self.b_attn])?;
        let pre = tape.add_row(memory.keys, query)?;
        let act = tape.tanh(pre);
        let scores = tape.matvec(act, bound[self.v_attn])?;
        let attention = tape.softmax(scores)?;
        let l = memory.len();
        let a_row = tape.reshape(attention, &[1, l])?;
        let ctx = tape.matmul(a_row, memory.rows)?;
        let width = tape.shape(ctx)[1];
        let ctx = tape.reshape(ctx, &[width])?;

        let hc = tape.concat(&[h, ctx], 0)?;
        let logits = tape.matvec(bound[self.w_out], hc)?;
        let logits = tape.add(logits, bound[self.b_out])?;
        let p_vocab = tape.softmax(logits)?;

        let p_gen = if copy {
            let feats = tape.concat(&[ctx, h, x], 0)?;
            let g = tape.matvec(bound[self.w_gen], feats)?;
            let g = tape.add(g, bound[self.b_gen])?;
            tape.sigmoid(g)
        } else {
            tape.constant(Tensor::scalar(1.0))
        };
        Ok(StepVars {
            attention,
            p_vocab,
            p_gen,
            state: DecoderState {
                lstm,
                step: state.step + 1,
            },
        })
    }

    /// `p_gen·pad(P_vocab) + (1 − p_gen)·scatter(attention, ids)` over the
    /// extended vocabulary.
    pub fn final_distribution(&self, tape: &mut Tape, step: &StepVars, memory: &Memory) -> Result<Var> {
        let padded = tape.pad_to(step.p_vocab, memory.ext_len)?;
        let generated = tape.scalar_mul(step.p_gen, padded)?;
        let copy_gate = tape.affine(step.p_gen, -1.0, 1.0);
        let scattered = tape.scatter_add(step.attention, &memory.ids, memory.ext_len)?;
        let copied = tape.scalar_mul(copy_gate, scattered)?;
        Ok(tape.add(generated, copied)?)
    }

    /// Final probability of a single extended id, without materializing the
    /// whole distribution. Same value as indexing
    /// [`final_distribution`](Self::final_distribution).
    pub fn gold_probability(&self, tape: &mut Tape, step: &StepVars, memory: &Memory, gold: usize) -> Result<Var> {
        let generated = if gold < self.vocab_size {
            let p = tape.pick(step.p_vocab, gold)?;
            Some(tape.mul(step.p_gen, p)?)
        } else {
            None
        };
        let copied = if memory.ids.contains(&gold) {
            let mask: Vec<f64> = memory
                .ids
                .iter()
                .map(|&id| if id == gold { 1.0 } else { 0.0 })
                .collect();
            let mask = tape.constant(Tensor::vector(mask));
            let masked = tape.mul(step.attention, mask)?;
            let mass = tape.sum(masked);
            let copy_gate = tape.affine(step.p_gen, -1.0, 1.0);
            Some(tape.mul(copy_gate, mass)?)
        } else {
            None
        };
        match (generated, copied) {
            (Some(g), Some(c)) => Ok(tape.add(g, c)?),
            (Some(v), None) | (None, Some(v)) => Ok(v),
            (None, None) => Ok(tape.constant(Tensor::scalar(0.0))),
        }
    }
}
