//! Dialogue data model: roles, utterances, fragments, vocabularies, corpus
//! files, splitting and the synthetic debate generator.

mod corpus;
mod split;
pub mod synth;
mod tokenize;
mod vocab;

use std::fmt;
use std::str::FromStr;

pub use corpus::{
    load_corpus, load_fragments, read_context, read_corpus, read_fragments, save_corpus, save_fragments, write_corpus,
    write_fragments, Corpus, FileHeader, FragmentFile, CORPUS_FORMAT, FORMAT_VERSION, FRAGMENT_FORMAT,
};
pub use split::{split_dataset, split_sizes, Split};
pub use tokenize::{detokenize, tokenize};
pub use vocab::{KnowledgeVocab, Vocab, BOS, EOS, NONE_ELEMENT, PAD, UNK};

use crate::{Error, Result};

/// Minimum number of historical utterances before a judge question.
pub const MIN_CONTEXT: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Judge = 0,
    Plaintiff = 1,
    Defendant = 2,
    Witness = 3,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Judge, Role::Plaintiff, Role::Defendant, Role::Witness];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Judge => "judge",
            Role::Plaintiff => "plaintiff",
            Role::Defendant => "defendant",
            Role::Witness => "witness",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// One speaker turn. `tokens` is always the tokenization of `text`.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    role: Role,
    text: String,
    tokens: Vec<String>,
    elements: Vec<String>,
}

impl Utterance {
    pub fn new(role: Role, text: impl Into<String>, elements: Vec<String>) -> Result<Self> {
        let text = text.into();
        let tokens = tokenize(&text)?;
        Ok(Utterance {
            role,
            text,
            tokens,
            elements,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Knowledge-element ids annotated on this turn; may be empty.
    pub fn elements(&self) -> &[String] {
        &self.elements
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Utterance>,
}

/// A judge question together with every turn that preceded it.
#[derive(Clone, Debug, PartialEq)]
pub struct DialogueFragment {
    id: String,
    context: Vec<Utterance>,
    target: Utterance,
}

impl DialogueFragment {
    pub fn new(id: impl Into<String>, context: Vec<Utterance>, target: Utterance) -> Result<Self> {
        if context.len() < MIN_CONTEXT {
            return Err(Error::ShortContext(context.len()));
        }
        if target.role() != Role::Judge {
            return Err(Error::TargetNotJudge);
        }
        Ok(DialogueFragment {
            id: id.into(),
            context,
            target,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn context(&self) -> &[Utterance] {
        &self.context
    }

    pub fn target(&self) -> &Utterance {
        &self.target
    }
}

/// Emits one fragment per judge turn at 1-based position `p ≥ 6`, with every
/// preceding turn as context.
pub fn extract_fragments(dialogue: &Dialogue) -> Vec<DialogueFragment> {
    dialogue
        .turns
        .iter()
        .enumerate()
        .filter(|(i, u)| *i >= MIN_CONTEXT && u.role() == Role::Judge)
        .map(|(i, u)| DialogueFragment {
            id: format!("{}:{}", dialogue.id, i + 1),
            context: dialogue.turns[..i].to_vec(),
            target: u.clone(),
        })
        .collect()
}

pub fn extract_all(dialogues: &[Dialogue]) -> Vec<DialogueFragment> {
    dialogues.iter().flat_map(extract_fragments).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn turn(role: Role, text: &str) -> Utterance {
        Utterance::new(role, text, vec![]).unwrap()
    }

    fn dialogue(roles: &[Role]) -> Dialogue {
        Dialogue {
            id: "d".into(),
            turns: roles
                .iter()
                .enumerate()
                .map(|(k, r)| turn(*r, &format!("turn {k} ?")))
                .collect(),
        }
    }

    #[test]
    fn role_codes_are_stable() {
        let codes: Vec<usize> = Role::ALL.iter().map(|r| r.code()).collect();
        assert_eq!(codes, vec![0, 1, 2, 3]);
        assert_eq!("witness".parse::<Role>(), Ok(Role::Witness));
        assert!("lawyer".parse::<Role>().is_err());
    }

    #[test]
    fn early_judge_turns_yield_nothing() {
        use Role::*;
        let d = dialogue(&[Judge, Judge, Judge, Judge, Judge, Plaintiff, Defendant]);
        assert!(extract_fragments(&d).is_empty());
    }

    #[test]
    fn judge_turns_at_six_and_nine() {
        use Role::*;
        let roles = [
            Judge, Plaintiff, Judge, Defendant, Plaintiff, Judge, Plaintiff, Defendant, Judge, Witness,
        ];
        let d = dialogue(&roles);
        // Oracle: enumerate 1-based positions p ≥ 6 holding a judge turn.
        let expected: Vec<usize> = (1..=roles.len()).filter(|&p| p >= 6 && roles[p - 1] == Judge).collect();
        let frags = extract_fragments(&d);
        assert_eq!(expected, vec![6, 9]);
        assert_eq!(frags.len(), 2);
        assert_eq!(frags[0].context().len(), 5);
        assert_eq!(frags[1].context().len(), 8);
        assert_eq!(frags[1].id(), "d:9");
    }

    #[test]
    fn fragment_constructor_validates() {
        let ctx: Vec<Utterance> = (0..4).map(|_| turn(Role::Plaintiff, "yes .")).collect();
        assert!(matches!(
            DialogueFragment::new("x", ctx.clone(), turn(Role::Judge, "why ?")),
            Err(Error::ShortContext(4))
        ));
        let mut ctx5 = ctx;
        ctx5.push(turn(Role::Defendant, "no ."));
        assert!(matches!(
            DialogueFragment::new("x", ctx5, turn(Role::Plaintiff, "why ?")),
            Err(Error::TargetNotJudge)
        ));
    }
}
