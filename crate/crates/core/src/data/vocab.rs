use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Word vocabulary with four reserved ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_freq: usize,
}

impl Vocab {
    /// Keeps tokens seen at least `min_freq` times, ordered by descending
    /// frequency then lexicographically.
    pub fn build<'a, I>(tokens: I, min_freq: usize) -> Vocab
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            if !RESERVED.contains(&t) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = RESERVED
            .iter()
            .copied()
            .chain(kept.into_iter().map(|(t, _)| t))
            .map(String::from)
            .collect();
        Self::from_parts(tokens, min_freq).expect("built vocabulary is bijective")
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_parts(tokens: Vec<String>, min_freq: usize) -> Result<Vocab> {
        if tokens.len() < RESERVED.len() || tokens[..4] != RESERVED {
            return Err(Error::Invalid("vocabulary must start with reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocab {
            tokens,
            index,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or [`UNK`] when absent.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the id-ordered token list.
    pub fn hash(&self) -> String {
        hash_lines(&self.tokens)
    }
}

pub const NONE_ELEMENT: &str = "<none>";

/// Knowledge-element vocabulary; id 0 is the reserved `<none>` element.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeVocab {
    elements: Vec<String>,
    index: HashMap<String, usize>,
}

impl KnowledgeVocab {
    pub fn build<'a, I>(elements: I) -> KnowledgeVocab
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut seen: Vec<&str> = elements.into_iter().filter(|e| *e != NONE_ELEMENT).collect();
        seen.sort_unstable();
        seen.dedup();
        let elements = std::iter::once(NONE_ELEMENT).chain(seen).map(String::from).collect();
        Self::from_parts(elements).expect("built knowledge vocabulary is bijective")
    }

    pub fn from_parts(elements: Vec<String>) -> Result<KnowledgeVocab> {
        if elements.first().map(String::as_str) != Some(NONE_ELEMENT) {
            return Err(Error::Invalid("knowledge vocabulary must start with <none>".into()));
        }
        let mut index = HashMap::with_capacity(elements.len());
        for (i, e) in elements.iter().enumerate() {
            if index.insert(e.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate knowledge element `{e}`")));
            }
        }
        Ok(KnowledgeVocab { elements, index })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn id(&self, element: &str) -> Result<usize> {
        self.index
            .get(element)
            .copied()
            .ok_or_else(|| Error::UnknownElement(element.to_string()))
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn hash(&self) -> String {
        hash_lines(&self.elements)
    }
}

fn hash_lines(items: &[String]) -> String {
    let mut h = Sha256::new();
    for item in items {
        h.update(item.as_bytes());
        h.update(b"\n");
    }
    format!("{:x}", h.finalize())
}
