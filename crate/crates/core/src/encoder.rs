//! Multi-role dialogue encoder.
//!
//! * word level: embeddings → Bi-LSTM per utterance, giving word states
//!   `e_{i,t} = [fwd_t ; bwd_t]` and a summary `[fwd_last ; bwd_first]`;
//! * dialogue level: Bi-LSTM over `[summary_i ; r_i]` giving `X_i`;
//! * knowledge: element embeddings → unidirectional LSTM per utterance, the
//!   final hidden state being `h̄ᵖ_i`. Empty element lists encode as `[<none>]`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use tbm_autodiff::{Tape, Tensor, Var};

use crate::data::{KnowledgeVocab, Role, Utterance, Vocab};
use crate::params::{Bound, LstmParams, ParamId, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_word: usize,
    pub d_role: usize,
    pub d_elem: usize,
    /// Hidden size shared by every LSTM in the model.
    pub d_h: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_word: 32,
            d_role: 8,
            d_elem: 16,
            d_h: 32,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.d_word, self.d_role, self.d_elem, self.d_h].contains(&0) {
            return Err(Error::Config("encoder dimensions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ids of one context turn, ready for encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderInput {
    pub role: Role,
    pub token_ids: Vec<usize>,
    pub element_ids: Vec<usize>,
}

impl EncoderInput {
    pub fn from_utterance(u: &Utterance, vocab: &Vocab, knowledge: &KnowledgeVocab) -> Result<Self> {
        Ok(EncoderInput {
            role: u.role(),
            token_ids: u.tokens().iter().map(|t| vocab.id(t)).collect(),
            element_ids: u.elements().iter().map(|e| knowledge.id(e)).collect::<Result<_>>()?,
        })
    }
}

/// Encoder outputs for one context, as tape handles.
#[derive(Clone, Debug)]
pub struct EncodedDialogue {
    /// `[2·d_h]` per token, per utterance.
    pub word_states: Vec<Vec<Var>>,
    /// `X_i`, `[2·d_h]` per utterance.
    pub x: Vec<Var>,
    /// `h̄ᵖ_i`, `[d_h]` per utterance.
    pub knowledge: Vec<Var>,
    /// `r_i`, `[d_role]` per utterance.
    pub roles: Vec<Var>,
}

impl EncodedDialogue {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub word_emb: ParamId,
    pub role_emb: ParamId,
    pub elem_emb: ParamId,
    pub utt_fwd: LstmParams,
    pub utt_bwd: LstmParams,
    pub dlg_fwd: LstmParams,
    pub dlg_bwd: LstmParams,
    pub knowledge: LstmParams,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        config: EncoderConfig,
        vocab_size: usize,
        n_elements: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let EncoderConfig {
            d_word,
            d_role,
            d_elem,
            d_h,
        } = config;
        Encoder {
            config,
            word_emb: store.uniform("encoder.word_emb", &[vocab_size, d_word], rng),
            role_emb: store.uniform("encoder.role_emb", &[Role::ALL.len(), d_role], rng),
            elem_emb: store.uniform("encoder.elem_emb", &[n_elements, d_elem], rng),
            utt_fwd: LstmParams::new(store, "encoder.utt_fwd", d_word, d_h, rng),
            utt_bwd: LstmParams::new(store, "encoder.utt_bwd", d_word, d_h, rng),
            dlg_fwd: LstmParams::new(store, "encoder.dlg_fwd", 2 * d_h + d_role, d_h, rng),
            dlg_bwd: LstmParams::new(store, "encoder.dlg_bwd", 2 * d_h + d_role, d_h, rng),
            knowledge: LstmParams::new(store, "encoder.knowledge", d_elem, d_h, rng),
        }
    }

    pub fn embed_role(&self, tape: &mut Tape, bound: &Bound, role: Role) -> Result<Var> {
        Ok(tape.row(bound[self.role_emb], role.code())?)
    }

    /// Word states and summary of one utterance.
    pub fn encode_utterance(&self, tape: &mut Tape, bound: &Bound, token_ids: &[usize]) -> Result<(Vec<Var>, Var)> {
        if token_ids.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        let embedded = token_ids
            .iter()
            .map(|&id| tape.row(bound[self.word_emb], id))
            .collect::<tbm_autodiff::Result<Vec<_>>>()?;
        let fwd = bound.lstm(self.utt_fwd).run(tape, &embedded, false)?;
        let bwd = bound.lstm(self.utt_bwd).run(tape, &embedded, true)?;
        let states = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.concat(&[f, b], 0))
            .collect::<tbm_autodiff::Result<Vec<_>>>()?;
        let summary = tape.concat(&[fwd[fwd.len() - 1], bwd[0]], 0)?;
        Ok((states, summary))
    }

    /// Dialogue-level Bi-LSTM over `[summary_i ; r_i]`.
    pub fn encode_dialogue(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        summaries: &[Var],
        roles: &[Var],
    ) -> Result<Vec<Var>> {
        if summaries.len() != roles.len() {
            return Err(tbm_autodiff::TensorError::ShapeMismatch {
                op: "encode_dialogue",
                left: vec![summaries.len()],
                right: vec![roles.len()],
            }
            .into());
        }
        let inputs = summaries
            .iter()
            .zip(roles)
            .map(|(&s, &r)| tape.concat(&[s, r], 0))
            .collect::<tbm_autodiff::Result<Vec<_>>>()?;
        let fwd = bound.lstm(self.dlg_fwd).run(tape, &inputs, false)?;
        let bwd = bound.lstm(self.dlg_bwd).run(tape, &inputs, true)?;
        Ok(fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.concat(&[f, b], 0))
            .collect::<tbm_autodiff::Result<Vec<_>>>()?)
    }

    /// `h̄ᵖ_i` for each utterance's element-id list.
    pub fn encode_knowledge(&self, tape: &mut Tape, bound: &Bound, elements: &[Vec<usize>]) -> Result<Vec<Var>> {
        let n_elements = tape.shape(bound[self.elem_emb])[0];
        let lstm = bound.lstm(self.knowledge);
        let mut out = Vec::with_capacity(elements.len());
        for ids in elements {
            let ids: &[usize] = if ids.is_empty() { &[0] } else { ids };
            let embedded = ids
                .iter()
                .map(|&id| {
                    if id >= n_elements {
                        return Err(Error::UnknownElement(format!("#{id}")));
                    }
                    Ok(tape.row(bound[self.elem_emb], id)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let states = lstm.run(tape, &embedded, false)?;
            out.push(states[states.len() - 1]);
        }
        Ok(out)
    }

    /// Full encoder pass. `zero_roles` / `zero_knowledge` replace the role
    /// embeddings or knowledge states with zeros (ablations).
    pub fn encode(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        context: &[EncoderInput],
        zero_roles: bool,
        zero_knowledge: bool,
    ) -> Result<EncodedDialogue> {
        let mut word_states = Vec::with_capacity(context.len());
        let mut summaries = Vec::with_capacity(context.len());
        let mut roles = Vec::with_capacity(context.len());
        for turn in context {
            let (states, summary) = self.encode_utterance(tape, bound, &turn.token_ids)?;
            word_states.push(states);
            summaries.push(summary);
            roles.push(if zero_roles {
                tape.constant(Tensor::zeros(&[self.config.d_role]))
            } else {
                self.embed_role(tape, bound, turn.role)?
            });
        }
        let x = self.encode_dialogue(tape, bound, &summaries, &roles)?;
        let knowledge = if zero_knowledge {
            let z = tape.constant(Tensor::zeros(&[self.config.d_h]));
            vec![z; context.len()]
        } else {
            let elements: Vec<Vec<usize>> = context.iter().map(|t| t.element_ids.clone()).collect();
            self.encode_knowledge(tape, bound, &elements)?
        };
        Ok(EncodedDialogue {
            word_states,
            x,
            knowledge,
            roles,
        })
    }
}
