//! Frequency-filtered string vocabulary with sense splitting.
//!
//! A sense is a `(surface, entity_id)` pair: the same surface linked to two
//! different entities yields two senses, and an unlinked occurrence yields a
//! third. Sense ids are dense and assigned by descending count, ties broken
//! by `(surface, entity_id)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Sentence, Unit};
use crate::error::{Error, Result};

/// Dense index into the embedding tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SenseId(pub u32);

impl SenseId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SenseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unordered pair of distinct senses, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SensePair(SenseId, SenseId);

impl SensePair {
    /// Returns `None` when `a == b`.
    pub fn new(a: SenseId, b: SenseId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(SensePair(a, b)),
            std::cmp::Ordering::Greater => Some(SensePair(b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn first(self) -> SenseId {
        self.0
    }

    pub fn second(self) -> SenseId {
        self.1
    }

    pub fn contains(self, s: SenseId) -> bool {
        self.0 == s || self.1 == s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StringSense {
    pub surface: String,
    pub entity_id: Option<String>,
    pub id: SenseId,
    pub count: u64,
}

impl StringSense {
    pub fn is_linked(&self) -> bool {
        self.entity_id.is_some()
    }
}

impl fmt::Display for StringSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.entity_id {
            Some(e) => write!(f, "{} ({e})", self.surface),
            None => f.write_str(&self.surface),
        }
    }
}

type SenseKey = (String, Option<String>);

/// Raw `(surface, entity_id)` tallies. Counters built over corpus shards can
/// be merged before filtering.
#[derive(Debug, Clone, Default)]
pub struct SenseCounter {
    counts: HashMap<SenseKey, u64>,
}

impl SenseCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sentence(&mut self, sentence: &Sentence) {
        for unit in sentence.units() {
            *self
                .counts
                .entry((unit.surface, unit.entity_id))
                .or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: SenseCounter) {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
    }

    pub fn finish(self, min_count: u64) -> Vocabulary {
        let mut kept: Vec<(SenseKey, u64)> = self
            .counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        kept.sort_by(|(ka, ca), (kb, cb)| cb.cmp(ca).then_with(|| ka.cmp(kb)));
        let senses = kept
            .into_iter()
            .enumerate()
            .map(|(i, ((surface, entity_id), count))| StringSense {
                surface,
                entity_id,
                id: SenseId(i as u32),
                count,
            })
            .collect();
        Vocabulary::from_senses(senses, min_count)
    }
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    senses: Vec<StringSense>,
    min_count: u64,
    index: HashMap<SenseKey, SenseId>,
    by_surface: HashMap<String, Vec<SenseId>>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.senses == other.senses && self.min_count == other.min_count
    }
}

/// Builds the vocabulary over a corpus, keeping senses seen at least `min_count` times.
pub fn build_vocabulary<'a>(
    corpus: impl IntoIterator<Item = &'a Sentence>,
    min_count: u64,
) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut counter = SenseCounter::new();
    for s in corpus {
        counter.add_sentence(s);
    }
    Ok(counter.finish(min_count))
}

const VOCAB_HEADER: &str = "#dpe-vocab\tv1";

impl Vocabulary {
    fn from_senses(senses: Vec<StringSense>, min_count: u64) -> Self {
        let mut index = HashMap::with_capacity(senses.len());
        let mut by_surface: HashMap<String, Vec<SenseId>> = HashMap::new();
        for s in &senses {
            index.insert((s.surface.clone(), s.entity_id.clone()), s.id);
            by_surface.entry(s.surface.clone()).or_default().push(s.id);
        }
        for ids in by_surface.values_mut() {
            ids.sort_unstable();
        }
        Vocabulary {
            senses,
            min_count,
            index,
            by_surface,
        }
    }

    pub fn len(&self) -> usize {
        self.senses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senses.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn senses(&self) -> &[StringSense] {
        &self.senses
    }

    pub fn get(&self, id: SenseId) -> &StringSense {
        &self.senses[id.index()]
    }

    pub fn lookup(&self, surface: &str, entity_id: Option<&str>) -> Option<SenseId> {
        self.index
            .get(&(surface.to_string(), entity_id.map(str::to_string)))
            .copied()
    }

    /// All senses sharing a surface, in ascending id order.
    pub fn senses_of_surface(&self, surface: &str) -> &[SenseId] {
        self.by_surface.get(surface).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn unit_sense(&self, unit: &Unit) -> Option<SenseId> {
        self.lookup(&unit.surface, unit.entity_id.as_deref())
    }

    /// Senses not linked to any entity, in id order.
    pub fn unlinked(&self) -> impl Iterator<Item = SenseId> + '_ {
        self.senses.iter().filter(|s| !s.is_linked()).map(|s| s.id)
    }

    /// Surface counts summed over senses, in surface order.
    pub fn surface_totals(&self) -> BTreeMap<&str, u64> {
        let mut out = BTreeMap::new();
        for s in &self.senses {
            *out.entry(s.surface.as_str()).or_insert(0) += s.count;
        }
        out
    }

    /// Tab-separated serialization: a header line, then
    /// `sense_id<TAB>surface<TAB>entity_id<TAB>count` per sense, with an empty
    /// entity field for unlinked senses.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{VOCAB_HEADER}\tmin_count={}", self.min_count)?;
        for s in &self.senses {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                s.id,
                s.surface,
                s.entity_id.as_deref().unwrap_or(""),
                s.count
            )?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(h))) => h,
            Some((_, Err(source))) => {
                return Err(Error::IoContext {
                    context: "reading vocabulary".into(),
                    source,
                })
            }
            None => return Err(parse_vocab_err(1, "header", "empty vocabulary file")),
        };
        let min_count = header
            .strip_prefix(VOCAB_HEADER)
            .and_then(|rest| rest.trim().strip_prefix("min_count="))
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or_else(|| parse_vocab_err(1, "header", "bad vocabulary header"))?;
        let mut senses = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(|source| Error::IoContext {
                context: "reading vocabulary".into(),
                source,
            })?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(parse_vocab_err(line_no, "record", "expected 4 tab-separated fields"));
            }
            let id: u32 = fields[0]
                .parse()
                .map_err(|_| parse_vocab_err(line_no, "sense_id", "not an integer"))?;
            if id as usize != senses.len() {
                return Err(parse_vocab_err(line_no, "sense_id", "ids must be dense and ordered"));
            }
            let count: u64 = fields[3]
                .parse()
                .map_err(|_| parse_vocab_err(line_no, "count", "not an integer"))?;
            senses.push(StringSense {
                surface: fields[1].to_string(),
                entity_id: (!fields[2].is_empty()).then(|| fields[2].to_string()),
                id: SenseId(id),
                count,
            });
        }
        Ok(Self::from_senses(senses, min_count))
    }

    /// First eight bytes of the SHA-256 of the TSV serialization.
    pub fn content_hash(&self) -> u64 {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to a Vec cannot fail");
        let digest = Sha256::digest(&buf);
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_be_bytes(bytes)
    }
}

fn parse_vocab_err(line: usize, field: &str, message: &str) -> Error {
    Error::Parse {
        line,
        field: field.into(),
        message: message.into(),
    }
}
