use crate::{Error, Result};

/// Punctuation split off the end of a whitespace chunk.
const DETACHABLE: [char; 5] = ['?', '!', '.', ',', ';'];

/// Whitespace tokenizer. ASCII letters are lowercased, terminal `? ! . , ;`
/// become standalone tokens, and `<...>` placeholders stay atomic.
pub fn tokenize(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_ascii_lowercase();
        let mut body = lower.as_str();
        let mut trailing = Vec::new();
        while let Some(c) = body.chars().next_back().filter(|c| DETACHABLE.contains(c)) {
            trailing.push(c);
            body = &body[..body.len() - c.len_utf8()];
        }
        if !body.is_empty() {
            out.push(body.to_string());
        }
        out.extend(trailing.iter().rev().map(char::to_string));
    }
    if out.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    Ok(out)
}

/// Joins tokens with spaces, attaching detached punctuation to the token
/// before it. Inverse of [`tokenize`] on its own output.
pub fn detokenize<T: AsRef<str>>(tokens: &[T]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let punct = t.chars().count() == 1 && t.chars().all(|c| DETACHABLE.contains(&c));
        if !out.is_empty() && !punct {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}
