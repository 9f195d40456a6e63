//! The full question-generation model: encoder, intent navigation and
//! pointer-generator decoder over one parameter store.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tbm_autodiff::{Tape, Tensor, Var};

use crate::data::{DialogueFragment, KnowledgeVocab, Role, Utterance, Vocab, EOS, UNK};
use crate::decoder::{Decoder, DecoderState, ExtendedVocabMap, Memory};
use crate::encoder::{Encoder, EncoderConfig, EncoderInput};
use crate::intent::{fuse, IntentConfig, IntentNav};
use crate::params::{Bound, ParamStore};
use crate::search::{beam_decode, greedy_decode, Hypothesis, StepOutput, StepScorer};
use crate::{Error, Result};

/// Switches that disable one model component each.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// `Ŷ ≡ 0`, so `Z_i = [X_i ; 0 ; 0 ; X_i]`.
    pub disable_intent_nav: bool,
    /// Role vectors replaced by zeros.
    pub disable_role: bool,
    /// Knowledge states replaced by zeros.
    pub disable_knowledge: bool,
    /// `p_gen ≡ 1`; out-of-vocabulary targets are scored as `<unk>`.
    pub disable_copy: bool,
}

impl Ablation {
    pub const NAMES: [&'static str; 4] = [
        "disable_intent_nav",
        "disable_role",
        "disable_knowledge",
        "disable_copy",
    ];

    pub fn get(&self, name: &str) -> Option<bool> {
        Some(match name {
            "disable_intent_nav" => self.disable_intent_nav,
            "disable_role" => self.disable_role,
            "disable_knowledge" => self.disable_knowledge,
            "disable_copy" => self.disable_copy,
            _ => return None,
        })
    }

    /// Sets a flag by name; returns `false` for an unknown name.
    pub fn set(&mut self, name: &str, value: bool) -> bool {
        let slot = match name {
            "disable_intent_nav" => &mut self.disable_intent_nav,
            "disable_role" => &mut self.disable_role,
            "disable_knowledge" => &mut self.disable_knowledge,
            "disable_copy" => &mut self.disable_copy,
            _ => return false,
        };
        *slot = value;
        true
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub intent: IntentConfig,
    pub ablation: Ablation,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.intent.validate()
    }
}

/// A fragment converted to ids.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub inputs: Vec<EncoderInput>,
    pub map: ExtendedVocabMap,
    /// Extended target ids followed by EOS; empty when there is no target.
    pub target: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TbmModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub knowledge: KnowledgeVocab,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub intent: IntentNav,
    pub decoder: Decoder,
}

/// Negative log-likelihood of one fragment with its gradients.
#[derive(Clone, Debug)]
pub struct FragmentGrad {
    pub nll: f64,
    pub tokens: usize,
    pub grads: Vec<Tensor>,
}

impl TbmModel {
    /// Fresh model with parameters drawn from `U[-0.08, 0.08]` under `seed`.
    pub fn new(config: ModelConfig, vocab: Vocab, knowledge: KnowledgeVocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let e = config.encoder;
        let encoder = Encoder::new(e, vocab.len(), knowledge.len(), &mut params, &mut rng);
        let intent = IntentNav::new(config.intent, e.d_h, e.d_role, &mut params, &mut rng);
        let decoder = Decoder::new(e.d_word, e.d_h, vocab.len(), encoder.word_emb, &mut params, &mut rng);
        Ok(TbmModel {
            config,
            vocab,
            knowledge,
            params,
            encoder,
            intent,
            decoder,
        })
    }

    fn copy_enabled(&self) -> bool {
        !self.config.ablation.disable_copy
    }

    /// Converts a context (and optional target, truncated to `max_target_len`
    /// tokens) into ids.
    pub fn prepare(
        &self,
        context: &[Utterance],
        target: Option<&Utterance>,
        max_target_len: usize,
    ) -> Result<Prepared> {
        if context.is_empty() {
            return Err(Error::ShortContext(0));
        }
        let inputs = context
            .iter()
            .map(|u| EncoderInput::from_utterance(u, &self.vocab, &self.knowledge))
            .collect::<Result<Vec<_>>>()?;
        let map = ExtendedVocabMap::build(context, &self.vocab);
        let mut ids = Vec::new();
        if let Some(t) = target {
            for token in t.tokens().iter().take(max_target_len) {
                let id = map.target_id(token, &self.vocab);
                ids.push(if id >= self.vocab.len() && !self.copy_enabled() {
                    UNK
                } else {
                    id
                });
            }
            ids.push(EOS);
        }
        Ok(Prepared {
            inputs,
            map,
            target: ids,
        })
    }

    pub fn prepare_fragment(&self, fragment: &DialogueFragment, max_target_len: usize) -> Result<Prepared> {
        self.prepare(fragment.context(), Some(fragment.target()), max_target_len)
    }

    /// Encoder, intent navigation and decoder initialization.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, prep: &Prepared) -> Result<(Memory, DecoderState)> {
        let ab = self.config.ablation;
        let enc = self
            .encoder
            .encode(tape, bound, &prep.inputs, ab.disable_role, ab.disable_knowledge)?;
        let z = if ab.disable_intent_nav {
            let zero = tape.constant(Tensor::zeros(&[2 * self.config.encoder.d_h]));
            fuse(tape, &enc.x, zero)?
        } else {
            let judge = if ab.disable_role {
                tape.constant(Tensor::zeros(&[self.config.encoder.d_role]))
            } else {
                self.encoder.embed_role(tape, bound, Role::Judge)?
            };
            self.intent
                .forward(tape, bound, &enc.x, &enc.knowledge, &enc.roles, judge)?
                .z
        };
        let memory = self.decoder.memory(tape, bound, &enc.word_states, &z, &prep.map)?;
        let state = self.decoder.init(tape, bound, &z)?;
        Ok((memory, state))
    }

    /// Teacher-forced negative log-likelihood of the prepared target.
    pub fn sequence_loss(&self, tape: &mut Tape, bound: &Bound, prep: &Prepared) -> Result<Var> {
        if prep.target.is_empty() {
            return Err(Error::Invalid("fragment has no target".into()));
        }
        let (memory, mut state) = self.encode(tape, bound, prep)?;
        let mut prev = crate::data::BOS;
        let mut terms = Vec::with_capacity(prep.target.len());
        for &gold in &prep.target {
            let step = self
                .decoder
                .step(tape, bound, &memory, &state, prev, self.copy_enabled())?;
            let p = self.decoder.gold_probability(tape, &step, &memory, gold)?;
            terms.push(tape.ln(p));
            state = step.state;
            prev = gold;
        }
        let all = tape.concat(&terms, 0)?;
        let total = tape.sum(all);
        Ok(tape.affine(total, -1.0, 0.0))
    }

    /// Teacher-forced log-likelihood read from full step distributions.
    pub fn score_full(&self, prep: &Prepared) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let (memory, mut state) = self.encode(&mut tape, &bound, prep)?;
        let mut prev = crate::data::BOS;
        let mut total = 0.0;
        for &gold in &prep.target {
            let step = self
                .decoder
                .step(&mut tape, &bound, &memory, &state, prev, self.copy_enabled())?;
            let fin = self.decoder.final_distribution(&mut tape, &step, &memory)?;
            total += tape.value(fin).data()[gold].ln();
            state = step.state;
            prev = gold;
        }
        Ok(total)
    }

    /// NLL of one prepared fragment, without gradients.
    pub fn nll(&self, prep: &Prepared) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let loss = self.sequence_loss(&mut tape, &bound, prep)?;
        Ok(tape.value(loss).item()?)
    }

    /// NLL and its gradient with respect to every parameter.
    pub fn nll_and_grad(&self, prep: &Prepared) -> Result<FragmentGrad> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let loss = self.sequence_loss(&mut tape, &bound, prep)?;
        let nll = tape.value(loss).item()?;
        tape.backward(loss)?;
        let grads = self
            .params
            .values()
            .iter()
            .zip(bound.vars())
            .map(|(p, &v)| match tape.grad(v) {
                Some(g) => Tensor::new(p.shape().to_vec(), g.to_vec()),
                None => Ok(Tensor::zeros(p.shape())),
            })
            .collect::<tbm_autodiff::Result<Vec<_>>>()?;
        Ok(FragmentGrad {
            nll,
            tokens: prep.target.len(),
            grads,
        })
    }

    /// Decodes a question for `context`. `beam == 1` is greedy decoding.
    pub fn generate_ids(&self, prep: &Prepared, beam: usize, max_len: usize) -> Result<Hypothesis> {
        let mut scorer = ModelScorer::new(self, prep)?;
        if beam == 1 {
            greedy_decode(&mut scorer, max_len)
        } else {
            beam_decode(&mut scorer, beam, max_len)
        }
    }

    /// Decoded question as surface tokens.
    pub fn generate(&self, context: &[Utterance], beam: usize, max_len: usize) -> Result<Vec<String>> {
        let prep = self.prepare(context, None, 0)?;
        let hyp = self.generate_ids(&prep, beam, max_len)?;
        Ok(self.realize(&prep, &hyp.tokens))
    }

    pub fn realize(&self, prep: &Prepared, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&id| prep.map.token(id, &self.vocab).unwrap_or("<unk>").to_string())
            .collect()
    }

    /// Final distribution of every teacher-forced step, for inspection.
    pub fn step_distributions(&self, prep: &Prepared) -> Result<Vec<Vec<f64>>> {
        let mut scorer = ModelScorer::new(self, prep)?;
        let mut state = scorer.start()?;
        let mut prev = crate::data::BOS;
        let mut out = Vec::new();
        for &gold in &prep.target {
            let (dist, next) = scorer.step(&state, prev)?;
            out.push(dist.probs);
            state = next;
            prev = gold;
        }
        Ok(out)
    }
}

/// Step-wise scoring of one context against frozen parameters.
pub struct ModelScorer<'a> {
    model: &'a TbmModel,
    tape: Tape,
    bound: Bound,
    memory: Memory,
    init: DecoderState,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a TbmModel, prep: &Prepared) -> Result<Self> {
        let mut tape = Tape::new();
        let bound = model.params.bind_frozen(&mut tape);
        let (memory, init) = model.encode(&mut tape, &bound, prep)?;
        Ok(ModelScorer {
            model,
            tape,
            bound,
            memory,
            init,
        })
    }
}

impl StepScorer for ModelScorer<'_> {
    type State = DecoderState;

    fn start(&mut self) -> Result<DecoderState> {
        Ok(self.init)
    }

    fn step(&mut self, state: &DecoderState, prev: usize) -> Result<(StepOutput, DecoderState)> {
        let dec = &self.model.decoder;
        let step = dec.step(
            &mut self.tape,
            &self.bound,
            &self.memory,
            state,
            prev,
            self.model.copy_enabled(),
        )?;
        let fin = dec.final_distribution(&mut self.tape, &step, &self.memory)?;
        let attention = self.tape.value(step.attention).data();
        let top = (0..attention.len()).fold(0, |best, i| if attention[i] > attention[best] { i } else { best });
        let out = StepOutput {
            probs: self.tape.value(fin).data().to_vec(),
            copy_hint: self.memory.ids.get(top).copied(),
        };
        Ok((out, step.state))
    }
}
