//! JSON-lines corpus and fragment files.
//!
//! Corpus line: `{"dialogue_id": str, "turns": [turn, ...]}`
//! Fragment line: `{"id": str, "context": [turn, ...], "target": turn}`
//! Turn: `{"role": "judge|plaintiff|defendant|witness", "text": str, "elements": [str]}`
//!
//! A file may start with a header line `{"format": ..., "version": 1,
//! "config": {...}}` recording what produced it. Writing what was read
//! reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Dialogue, DialogueFragment, Role, Utterance, MIN_CONTEXT};
use crate::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;
pub const CORPUS_FORMAT: &str = "tbm-corpus";
pub const FRAGMENT_FORMAT: &str = "tbm-fragments";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub format: String,
    pub version: u64,
    pub config: BTreeMap<String, String>,
}

impl FileHeader {
    pub fn new(format: &str, config: BTreeMap<String, String>) -> Self {
        FileHeader {
            format: format.to_string(),
            version: FORMAT_VERSION,
            config,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Corpus {
    pub header: Option<FileHeader>,
    pub dialogues: Vec<Dialogue>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct FragmentFile {
    pub header: Option<FileHeader>,
    pub fragments: Vec<DialogueFragment>,
}

#[derive(Serialize, Deserialize)]
struct TurnRecord {
    role: String,
    text: String,
    #[serde(default)]
    elements: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DialogueRecord {
    dialogue_id: String,
    turns: Vec<TurnRecord>,
}

#[derive(Serialize, Deserialize)]
struct FragmentRecord {
    id: String,
    context: Vec<TurnRecord>,
    target: TurnRecord,
}

impl TurnRecord {
    fn from_utterance(u: &Utterance) -> Self {
        TurnRecord {
            role: u.role().as_str().to_string(),
            text: u.text().to_string(),
            elements: u.elements().to_vec(),
        }
    }

    fn into_utterance(self, line: usize) -> Result<Utterance> {
        let role: Role = self.role.parse().map_err(|role| Error::UnknownRole { line, role })?;
        Utterance::new(role, self.text, self.elements).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })
    }
}

/// Header (if any) and the numbered record lines of a file.
type Lines = (Option<FileHeader>, Vec<(usize, Value)>);

/// Splits a file into numbered non-blank lines, pulling off a header line if
/// the first one is a header.
fn parse_lines(text: &str, format: &str) -> Result<Lines> {
    let mut header = None;
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if value.get("format").is_some() {
            if header.is_some() || !records.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "header must be the first line".into(),
                });
            }
            let h: FileHeader = serde_json::from_value(value).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if h.format != format {
                return Err(Error::Parse {
                    line,
                    message: format!("expected a `{format}` file, found `{}`", h.format),
                });
            }
            if h.version != FORMAT_VERSION {
                return Err(Error::Version {
                    what: "data file",
                    found: h.version,
                    expected: FORMAT_VERSION,
                });
            }
            header = Some(h);
        } else {
            records.push((line, value));
        }
    }
    Ok((header, records))
}

fn record<T: for<'de> Deserialize<'de>>(line: usize, value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })
}

pub fn read_corpus(text: &str) -> Result<Corpus> {
    let (header, lines) = parse_lines(text, CORPUS_FORMAT)?;
    let dialogues = lines
        .into_iter()
        .map(|(line, value)| {
            let rec: DialogueRecord = record(line, value)?;
            let turns = rec
                .turns
                .into_iter()
                .map(|t| t.into_utterance(line))
                .collect::<Result<Vec<_>>>()?;
            Ok(Dialogue {
                id: rec.dialogue_id,
                turns,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { header, dialogues })
}

fn push_line<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("records serialize"));
    out.push('\n');
}

pub fn write_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    if let Some(h) = &corpus.header {
        push_line(&mut out, h);
    }
    for d in &corpus.dialogues {
        let rec = DialogueRecord {
            dialogue_id: d.id.clone(),
            turns: d.turns.iter().map(TurnRecord::from_utterance).collect(),
        };
        push_line(&mut out, &rec);
    }
    out
}

pub fn read_fragments(text: &str) -> Result<FragmentFile> {
    let (header, lines) = parse_lines(text, FRAGMENT_FORMAT)?;
    let fragments = lines
        .into_iter()
        .map(|(line, value)| {
            let rec: FragmentRecord = record(line, value)?;
            let context = rec
                .context
                .into_iter()
                .map(|t| t.into_utterance(line))
                .collect::<Result<Vec<_>>>()?;
            let target = rec.target.into_utterance(line)?;
            DialogueFragment::new(rec.id, context, target)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FragmentFile { header, fragments })
}

pub fn write_fragments(file: &FragmentFile) -> String {
    let mut out = String::new();
    if let Some(h) = &file.header {
        push_line(&mut out, h);
    }
    for f in &file.fragments {
        let rec = FragmentRecord {
            id: f.id().to_string(),
            context: f.context().iter().map(TurnRecord::from_utterance).collect(),
            target: TurnRecord::from_utterance(f.target()),
        };
        push_line(&mut out, &rec);
    }
    out
}

#[derive(Deserialize)]
struct ContextRecord {
    context: Vec<TurnRecord>,
}

/// Context of the first fragment-shaped line (`{"context": [...], ...}`); any
/// target is ignored. Contexts shorter than five turns are rejected.
pub fn read_context(text: &str) -> Result<Vec<Utterance>> {
    let (_, lines) = parse_lines(text, FRAGMENT_FORMAT)?;
    let (line, value) = lines.into_iter().next().ok_or(Error::Parse {
        line: 1,
        message: "no fragment found".into(),
    })?;
    let rec: ContextRecord = record(line, value)?;
    let context = rec
        .context
        .into_iter()
        .map(|t| t.into_utterance(line))
        .collect::<Result<Vec<_>>>()?;
    if context.len() < MIN_CONTEXT {
        return Err(Error::ShortContext(context.len()));
    }
    Ok(context)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus(&fs::read_to_string(path)?)
}

pub fn save_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    fs::write(path, write_corpus(corpus))?;
    Ok(())
}

pub fn load_fragments(path: impl AsRef<Path>) -> Result<FragmentFile> {
    read_fragments(&fs::read_to_string(path)?)
}

pub fn save_fragments(path: impl AsRef<Path>, file: &FragmentFile) -> Result<()> {
    fs::write(path, write_fragments(file))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_empty_corpus() {
        let c = read_corpus("").unwrap();
        assert!(c.dialogues.is_empty());
        assert!(c.header.is_none());
    }

    #[test]
    fn unknown_role_names_the_line() {
        let text = concat!(
            r#"{"dialogue_id":"a","turns":[{"role":"judge","text":"why?","elements":[]}]}"#,
            "\n",
            r#"{"dialogue_id":"b","turns":[{"role":"lawyer","text":"objection!","elements":[]}]}"#,
            "\n"
        );
        match read_corpus(text) {
            Err(Error::UnknownRole { line, role }) => {
                assert_eq!(line, 2);
                assert_eq!(role, "lawyer");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "\n{\"dialogue_id\": \"a\", \"turns\": [\n";
        assert!(matches!(read_corpus(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn header_round_trips() {
        let mut config = BTreeMap::new();
        config.insert("synth.seed".to_string(), "7".to_string());
        let corpus = Corpus {
            header: Some(FileHeader::new(CORPUS_FORMAT, config)),
            dialogues: vec![Dialogue {
                id: "x".into(),
                turns: vec![Utterance::new(Role::Witness, "Ja, ich sah es.", vec!["e".into()]).unwrap()],
            }],
        };
        let text = write_corpus(&corpus);
        assert_eq!(read_corpus(&text).unwrap(), corpus);
        assert_eq!(write_corpus(&read_corpus(&text).unwrap()), text);
    }

    #[test]
    fn wrong_header_version_is_rejected() {
        let text = r#"{"format":"tbm-corpus","version":9,"config":{}}"#;
        assert!(matches!(read_corpus(text), Err(Error::Version { found: 9, .. })));
    }

    #[test]
    fn context_reader_enforces_minimum() {
        let turn = r#"{"role":"plaintiff","text":"yes.","elements":[]}"#;
        let line = |n: usize| format!("{{\"context\":[{}]}}\n", vec![turn; n].join(","));
        assert_eq!(read_context(&line(5)).unwrap().len(), 5);
        assert!(matches!(read_context(&line(4)), Err(Error::ShortContext(4))));
        assert!(read_context("").is_err());
    }
}
