//! Annotated-corpus data model and loader.
//!
//! A corpus file holds one JSON object per line, one sentence per record.
//! See `docs/FORMATS.md` for the field layout. Loading validates every
//! token and mention invariant and rejects records whose head pointers do
//! not form a single rooted tree.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Version tag written to and required in every corpus record.
pub const FORMAT_VERSION: u64 = 1;

/// Lowercases and collapses runs of whitespace into single spaces.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: String,
    /// Index of the dependency head within the sentence; `None` marks the root.
    pub head: Option<usize>,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    /// Linked knowledge-base entity. `None` marks a phrase chunk that is
    /// kept as one unit but not linked to any entity.
    pub entity_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub sent_id: u64,
    pub tokens: Vec<Token>,
    pub mentions: Vec<Mention>,
}

/// A vocabulary-level position in a sentence: either a whole mention span or
/// a single token outside every mention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub start: usize,
    pub end: usize,
    /// Syntactic head token of the span.
    pub head: usize,
    pub surface: String,
    pub entity_id: Option<String>,
    pub is_mention: bool,
}

impl Mention {
    /// Normalized surface string of the covered tokens.
    pub fn surface(&self, tokens: &[Token]) -> String {
        let joined: Vec<&str> = tokens[self.start..self.end]
            .iter()
            .map(|t| t.surface.as_str())
            .collect();
        normalize(&joined.join(" "))
    }
}

impl Sentence {
    /// Head token of the span `[start, end)`: the unique token whose
    /// dependency head lies outside the span, or the last token when that
    /// token is not unique.
    pub fn span_head(&self, start: usize, end: usize) -> usize {
        let mut outside = (start..end).filter(|&i| match self.tokens[i].head {
            None => true,
            Some(h) => h < start || h >= end,
        });
        match (outside.next(), outside.next()) {
            (Some(i), None) => i,
            _ => end - 1,
        }
    }

    /// Collapses mentions into single units; remaining tokens become one unit each.
    pub fn units(&self) -> Vec<Unit> {
        let mut mentions: Vec<&Mention> = self.mentions.iter().collect();
        mentions.sort_by_key(|m| m.start);
        let mut units = Vec::with_capacity(self.tokens.len());
        let mut next = mentions.into_iter().peekable();
        let mut i = 0;
        while i < self.tokens.len() {
            if let Some(m) = next.peek().filter(|m| m.start == i) {
                units.push(Unit {
                    start: m.start,
                    end: m.end,
                    head: self.span_head(m.start, m.end),
                    surface: m.surface(&self.tokens),
                    entity_id: m.entity_id.clone(),
                    is_mention: true,
                });
                i = m.end;
                next.next();
            } else {
                units.push(Unit {
                    start: i,
                    end: i + 1,
                    head: i,
                    surface: normalize(&self.tokens[i].surface),
                    entity_id: None,
                    is_mention: false,
                });
                i += 1;
            }
        }
        units
    }

    /// Checks token and mention invariants. The error message names the
    /// offending token or mention.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        let mut roots = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            match t.head {
                None => roots += 1,
                Some(h) if h == i => return Err(format!("token {i} is its own head")),
                Some(h) if h >= n => {
                    return Err(format!("token {i} has head {h} outside sentence of length {n}"))
                }
                Some(_) => {}
            }
        }
        if n > 0 && roots != 1 {
            return Err(format!("expected exactly one root, found {roots}"));
        }
        // Every token must reach the root within n steps.
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = self.tokens[cur].head {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(format!("dependency cycle through token {start}"));
                }
            }
        }
        let mut spans: Vec<(usize, usize)> = Vec::with_capacity(self.mentions.len());
        for (k, m) in self.mentions.iter().enumerate() {
            if m.start >= m.end || m.end > n {
                return Err(format!(
                    "mention {k} has invalid span [{}, {}) for sentence of length {n}",
                    m.start, m.end
                ));
            }
            spans.push((m.start, m.end));
        }
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(format!(
                    "mentions [{}, {}) and [{}, {}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                ));
            }
        }
        Ok(())
    }

    /// Space-joined raw token surfaces.
    pub fn text(&self) -> String {
        let words: Vec<&str> = self.tokens.iter().map(|t| t.surface.as_str()).collect();
        words.join(" ")
    }
}

fn parse_err(line: usize, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn get_str(obj: &Value, key: &str, path: &str, line: usize) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(parse_err(line, path, "expected a string")),
        None => Err(parse_err(line, path, "missing")),
    }
}

fn get_uint(obj: &Value, key: &str, path: &str, line: usize) -> Result<u64> {
    match obj.get(key) {
        Some(v) => v
            .as_u64()
            .ok_or_else(|| parse_err(line, path, "expected a non-negative integer")),
        None => Err(parse_err(line, path, "missing")),
    }
}

fn get_array<'a>(obj: &'a Value, key: &str, line: usize) -> Result<&'a Vec<Value>> {
    match obj.get(key) {
        Some(Value::Array(a)) => Ok(a),
        Some(_) => Err(parse_err(line, key, "expected an array")),
        None => Err(parse_err(line, key, "missing")),
    }
}

/// Decodes one corpus record. `line` is 1-based and only used for error messages.
pub fn parse_record(text: &str, line: usize) -> Result<Sentence> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| parse_err(line, "<record>", e.to_string()))?;
    if !value.is_object() {
        return Err(parse_err(line, "<record>", "expected a JSON object"));
    }
    let version = get_uint(&value, "version", "version", line)?;
    if version != FORMAT_VERSION {
        return Err(parse_err(
            line,
            "version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let doc_id = get_str(&value, "doc_id", "doc_id", line)?;
    let sent_id = get_uint(&value, "sent_id", "sent_id", line)?;

    let mut tokens = Vec::new();
    for (i, t) in get_array(&value, "tokens", line)?.iter().enumerate() {
        let field = |name: &str| format!("tokens[{i}].{name}");
        let head = match t.get("head") {
            Some(Value::Null) => None,
            Some(v) => Some(
                v.as_u64()
                    .ok_or_else(|| parse_err(line, field("head"), "expected an index or null"))?
                    as usize,
            ),
            None => return Err(parse_err(line, field("head"), "missing")),
        };
        tokens.push(Token {
            surface: get_str(t, "surface", &field("surface"), line)?,
            pos: get_str(t, "pos", &field("pos"), line)?,
            head,
            deprel: get_str(t, "deprel", &field("deprel"), line)?,
        });
    }

    let mut mentions = Vec::new();
    for (i, m) in get_array(&value, "mentions", line)?.iter().enumerate() {
        let field = |name: &str| format!("mentions[{i}].{name}");
        let entity_id = match m.get("entity_id") {
            Some(Value::Null) | None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(parse_err(line, field("entity_id"), "expected a string or null")),
        };
        mentions.push(Mention {
            start: get_uint(m, "start", &field("start"), line)? as usize,
            end: get_uint(m, "end", &field("end"), line)? as usize,
            entity_id,
        });
    }

    let sentence = Sentence {
        doc_id,
        sent_id,
        tokens,
        mentions,
    };
    sentence.validate().map_err(|message| Error::Structure {
        line,
        doc_id: sentence.doc_id.clone(),
        sent_id: sentence.sent_id,
        message,
    })?;
    Ok(sentence)
}

#[derive(Serialize)]
struct RecordOut<'a> {
    version: u64,
    doc_id: &'a str,
    sent_id: u64,
    tokens: &'a [Token],
    mentions: &'a [Mention],
}

/// Encodes a sentence as a single corpus line (without the trailing newline).
pub fn to_record(sentence: &Sentence) -> String {
    serde_json::to_string(&RecordOut {
        version: FORMAT_VERSION,
        doc_id: &sentence.doc_id,
        sent_id: sentence.sent_id,
        tokens: &sentence.tokens,
        mentions: &sentence.mentions,
    })
    .expect("corpus records always serialize")
}

pub fn write_corpus<'a, W: Write>(
    mut out: W,
    sentences: impl IntoIterator<Item = &'a Sentence>,
) -> std::io::Result<()> {
    for s in sentences {
        writeln!(out, "{}", to_record(s))?;
    }
    out.flush()
}

/// Streaming reader over corpus records. Blank lines are skipped; duplicate
/// `(doc_id, sent_id)` pairs are rejected.
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    seen: HashSet<(String, u64)>,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        CorpusReader {
            lines: reader.lines(),
            line: 0,
            seen: HashSet::new(),
        }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<Sentence>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(source) => {
                    return Some(Err(Error::IoContext {
                        context: format!("reading corpus line {}", self.line + 1),
                        source,
                    }))
                }
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            let sentence = match parse_record(&text, self.line) {
                Ok(s) => s,
                Err(e) => return Some(Err(e)),
            };
            if !self.seen.insert((sentence.doc_id.clone(), sentence.sent_id)) {
                return Some(Err(Error::Structure {
                    line: self.line,
                    doc_id: sentence.doc_id,
                    sent_id: sentence.sent_id,
                    message: "duplicate sent_id within document".into(),
                }));
            }
            return Some(Ok(sentence));
        }
    }
}

/// Opens a corpus file and returns a stream of validated sentences in file order.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(CorpusReader::new(BufReader::new(file)))
}

/// Loads every sentence, stopping at the first error.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    load_corpus(path)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIVE_TOKENS: &str = r#"{"version":1,"doc_id":"d1","sent_id":0,"tokens":[{"surface":"The","pos":"DT","head":1,"deprel":"det"},{"surface":"USA","pos":"NNP","head":2,"deprel":"nsubj"},{"surface":"borders","pos":"VBZ","head":null,"deprel":"root"},{"surface":"Canada","pos":"NNP","head":2,"deprel":"dobj"},{"surface":".","pos":".","head":2,"deprel":"punct"}],"mentions":[{"start":1,"end":2,"entity_id":"E_usa"}]}"#;

    fn read(text: &str) -> Vec<Result<Sentence>> {
        CorpusReader::new(text.as_bytes()).collect()
    }

    #[test]
    fn decodes_well_formed_record() {
        let s = parse_record(FIVE_TOKENS, 1).unwrap();
        assert_eq!(s.tokens.len(), 5);
        assert_eq!(s.mentions.len(), 1);
        assert_eq!(s.mentions[0].surface(&s.tokens), "usa");
        assert_eq!(parse_record(&to_record(&s), 1).unwrap(), s);
    }

    #[test]
    fn self_loop_is_structural_error() {
        let bad = FIVE_TOKENS.replace(r#""surface":"Canada","pos":"NNP","head":2"#, r#""surface":"Canada","pos":"NNP","head":3"#);
        match parse_record(&bad, 7) {
            Err(Error::Structure { line, doc_id, .. }) => {
                assert_eq!(line, 7);
                assert_eq!(doc_id, "d1");
            }
            other => panic!("expected structural error, got {other:?}"),
        }
    }

    #[test]
    fn cycle_and_multiple_roots_rejected() {
        let cyc = FIVE_TOKENS
            .replace(r#""head":null"#, r#""head":1"#);
        assert!(matches!(parse_record(&cyc, 1), Err(Error::Structure { .. })));
        let two_roots = FIVE_TOKENS.replace(r#""surface":".","pos":".","head":2"#, r#""surface":".","pos":".","head":null"#);
        assert!(matches!(parse_record(&two_roots, 1), Err(Error::Structure { .. })));
    }

    #[test]
    fn empty_stream() {
        assert!(read("").is_empty());
        assert!(read("\n\n").is_empty());
    }

    #[test]
    fn parse_error_names_line_and_field() {
        let bad = FIVE_TOKENS.replace(r#""pos":"VBZ","#, r#""pos":7,"#);
        let input = format!("{FIVE_TOKENS}\n{bad}\n");
        let results = read(&input);
        assert!(results[0].is_ok());
        match &results[1] {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(*line, 2);
                assert_eq!(field, "tokens[2].pos");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_version_rejected() {
        let bad = FIVE_TOKENS.replace(r#""version":1,"#, "");
        assert!(matches!(parse_record(&bad, 1), Err(Error::Parse { ref field, .. }) if field == "version"));
    }

    #[test]
    fn duplicate_sentence_ids_rejected() {
        let input = format!("{FIVE_TOKENS}\n{FIVE_TOKENS}\n");
        let results = read(&input);
        assert!(results[0].is_ok());
        assert!(matches!(results[1], Err(Error::Structure { line: 2, .. })));
    }

    #[test]
    fn overlapping_mentions_rejected() {
        let bad = FIVE_TOKENS.replace(
            r#""mentions":[{"start":1,"end":2,"entity_id":"E_usa"}]"#,
            r#""mentions":[{"start":0,"end":2,"entity_id":"E_usa"},{"start":1,"end":3,"entity_id":null}]"#,
        );
        assert!(matches!(parse_record(&bad, 1), Err(Error::Structure { .. })));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("  United\tStates  of\nAmerica "), "united states of america");
        assert_eq!(normalize("-LRB-"), "-lrb-");
    }

    #[test]
    fn units_collapse_mentions() {
        let s = Sentence {
            doc_id: "d".into(),
            sent_id: 0,
            tokens: ["mad", "cow", "disease", "spreads"]
                .iter()
                .enumerate()
                .map(|(i, w)| Token {
                    surface: w.to_string(),
                    pos: "NN".into(),
                    head: match i {
                        0 | 1 => Some(2),
                        2 => Some(3),
                        _ => None,
                    },
                    deprel: "dep".into(),
                })
                .collect(),
            mentions: vec![Mention {
                start: 0,
                end: 3,
                entity_id: Some("E_bse".into()),
            }],
        };
        s.validate().unwrap();
        let units = s.units();
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].surface, "mad cow disease");
        assert_eq!(units[0].head, 2);
        assert_eq!(units[1].surface, "spreads");
    }

    #[test]
    fn span_head_falls_back_to_last_token() {
        // Both tokens of the span attach outside it.
        let s = Sentence {
            doc_id: "d".into(),
            sent_id: 0,
            tokens: vec![
                Token { surface: "a".into(), pos: "X".into(), head: Some(2), deprel: "dep".into() },
                Token { surface: "b".into(), pos: "X".into(), head: Some(2), deprel: "dep".into() },
                Token { surface: "c".into(), pos: "X".into(), head: None, deprel: "root".into() },
            ],
            mentions: vec![],
        };
        assert_eq!(s.span_head(0, 2), 1);
        assert_eq!(s.span_head(1, 3), 2);
    }
}
