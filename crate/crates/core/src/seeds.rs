//! Knowledge-base synonym lists, link validation, seed harvesting and
//! train/test entity splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, Sentence};
use crate::error::{Error, Result};
use crate::vocab::{SenseId, SensePair, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbEntry {
    /// First synonym listed in the KB file.
    pub canonical: String,
    pub synonyms: BTreeSet<String>,
}

/// Entity id to normalized synonym strings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KbSynonyms {
    entries: BTreeMap<String, KbEntry>,
}

impl KbSynonyms {
    /// Parses the KB synonym format: one entity per line, the entity id followed
    /// by tab-separated synonyms, the first being the canonical name. Blank lines
    /// and lines starting with `#` are ignored.
    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| Error::IoContext {
                context: format!("reading KB line {line_no}"),
                source,
            })?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let entity = fields.next().unwrap_or_default().trim().to_string();
            if entity.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    field: "entity_id".into(),
                    message: "empty entity id".into(),
                });
            }
            let names: Vec<String> = fields
                .map(normalize)
                .filter(|s| !s.is_empty())
                .collect();
            let Some(canonical) = names.first().cloned() else {
                return Err(Error::Parse {
                    line: line_no,
                    field: "synonyms".into(),
                    message: format!("entity {entity} lists no synonyms"),
                });
            };
            if entries.contains_key(&entity) {
                return Err(Error::Parse {
                    line: line_no,
                    field: "entity_id".into(),
                    message: format!("duplicate entity {entity}"),
                });
            }
            entries.insert(
                entity,
                KbEntry {
                    canonical,
                    synonyms: names.into_iter().collect(),
                },
            );
        }
        Ok(KbSynonyms { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file))
    }

    pub fn insert(&mut self, entity: &str, names: &[&str]) {
        let names: Vec<String> = names.iter().map(|n| normalize(n)).collect();
        assert!(!names.is_empty(), "KB entries need at least one synonym");
        self.entries.insert(
            entity.to_string(),
            KbEntry {
                canonical: names[0].clone(),
                synonyms: names.into_iter().collect(),
            },
        );
    }

    pub fn get(&self, entity: &str) -> Option<&KbEntry> {
        self.entries.get(entity)
    }

    pub fn contains(&self, entity: &str, surface: &str) -> bool {
        self.entries
            .get(entity)
            .is_some_and(|e| e.synonyms.contains(surface))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Drops every link whose normalized surface is not a listed synonym of the
/// linked entity. The span stays a single unlinked unit. Returns the number
/// of links removed.
pub fn validate_sentence_links(sentence: &mut Sentence, kb: &KbSynonyms) -> usize {
    let mut removed = 0;
    let tokens = &sentence.tokens;
    for m in &mut sentence.mentions {
        if let Some(entity) = &m.entity_id {
            if !kb.contains(entity, &m.surface(tokens)) {
                m.entity_id = None;
                removed += 1;
            }
        }
    }
    removed
}

/// Streaming form of [`validate_sentence_links`].
pub fn validate_links<'k, I>(corpus: I, kb: &'k KbSynonyms) -> impl Iterator<Item = Sentence> + 'k
where
    I: IntoIterator<Item = Sentence>,
    I::IntoIter: 'k,
{
    corpus.into_iter().map(move |mut s| {
        validate_sentence_links(&mut s, kb);
        s
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SeedFile {
    per_entity: BTreeMap<String, BTreeSet<SenseId>>,
}

/// Per-entity observed senses and the derived set of positive pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "SeedFile", into = "SeedFile")]
pub struct SeedSet {
    per_entity: BTreeMap<String, BTreeSet<SenseId>>,
    pairs: BTreeSet<SensePair>,
}

impl From<SeedFile> for SeedSet {
    fn from(f: SeedFile) -> Self {
        SeedSet::from_per_entity(f.per_entity)
    }
}

impl From<SeedSet> for SeedFile {
    fn from(s: SeedSet) -> Self {
        SeedFile {
            per_entity: s.per_entity,
        }
    }
}

impl SeedSet {
    pub fn from_per_entity(per_entity: BTreeMap<String, BTreeSet<SenseId>>) -> Self {
        let mut pairs = BTreeSet::new();
        for senses in per_entity.values() {
            let v: Vec<SenseId> = senses.iter().copied().collect();
            for (i, &a) in v.iter().enumerate() {
                for &b in &v[i + 1..] {
                    pairs.extend(SensePair::new(a, b));
                }
            }
        }
        SeedSet { per_entity, pairs }
    }

    pub fn per_entity(&self) -> &BTreeMap<String, BTreeSet<SenseId>> {
        &self.per_entity
    }

    pub fn senses_of(&self, entity: &str) -> Option<&BTreeSet<SenseId>> {
        self.per_entity.get(entity)
    }

    pub fn pairs(&self) -> &BTreeSet<SensePair> {
        &self.pairs
    }

    pub fn contains_pair(&self, a: SenseId, b: SenseId) -> bool {
        SensePair::new(a, b).is_some_and(|p| self.pairs.contains(&p))
    }

    pub fn num_entities(&self) -> usize {
        self.per_entity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_entity.is_empty()
    }

    /// Synonym neighbours of each sense, for negative-sample exclusion.
    pub fn neighbours(&self) -> HashMap<SenseId, Vec<SenseId>> {
        let mut out: HashMap<SenseId, Vec<SenseId>> = HashMap::new();
        for p in &self.pairs {
            out.entry(p.first()).or_default().push(p.second());
            out.entry(p.second()).or_default().push(p.first());
        }
        out
    }

    fn subset(&self, entities: &[&String]) -> SeedSet {
        SeedSet::from_per_entity(
            entities
                .iter()
                .map(|e| ((*e).clone(), self.per_entity[*e].clone()))
                .collect(),
        )
    }
}

/// Collects, per entity, the senses observed linked to it in a link-validated corpus.
/// Entities whose every surface fell below the vocabulary threshold are absent.
pub fn collect_seeds<'a>(
    corpus: impl IntoIterator<Item = &'a Sentence>,
    vocab: &Vocabulary,
) -> SeedSet {
    let mut per_entity: BTreeMap<String, BTreeSet<SenseId>> = BTreeMap::new();
    for s in corpus {
        for unit in s.units() {
            let Some(entity) = &unit.entity_id else { continue };
            if let Some(id) = vocab.unit_sense(&unit) {
                per_entity.entry(entity.clone()).or_default().insert(id);
            }
        }
    }
    SeedSet::from_per_entity(per_entity)
}

/// A held-out entity: `given` names form the query, `held_out` senses are the
/// ground truth to rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestEntity {
    pub entity_id: String,
    pub given: Vec<SenseId>,
    pub held_out: Vec<SenseId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySplit {
    pub train: SeedSet,
    pub warm: Vec<TestEntity>,
    pub cold: Vec<TestEntity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction of seed entities used as warm-start test entities.
    pub warm_frac: f64,
    /// Fraction of seed entities used as cold-start test entities.
    pub cold_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            warm_frac: 0.1,
            cold_frac: 0.1,
        }
    }
}

/// Splits seed entities into disjoint training, warm-start and cold-start sets.
///
/// Test entities need at least two observed senses. Warm-start entities reveal
/// half of their senses (rounded down, at least one); cold-start entities reveal
/// only the canonical name, so they also need that name observed in the corpus.
pub fn split_entities(
    seeds: &SeedSet,
    kb: &KbSynonyms,
    vocab: &Vocabulary,
    cfg: SplitConfig,
    rng_seed: u64,
) -> Result<EntitySplit> {
    let SplitConfig { warm_frac, cold_frac } = cfg;
    if !(0.0..1.0).contains(&warm_frac)
        || !(0.0..1.0).contains(&cold_frac)
        || warm_frac + cold_frac >= 1.0
    {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be in [0, 1) and sum below 1, got warm={warm_frac} cold={cold_frac}"
        )));
    }
    let total = seeds.num_entities();
    let n_warm = (warm_frac * total as f64).round() as usize;
    let n_cold = (cold_frac * total as f64).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut eligible: Vec<&String> = seeds
        .per_entity
        .iter()
        .filter(|(_, s)| s.len() >= 2)
        .map(|(e, _)| e)
        .collect();
    eligible.shuffle(&mut rng);

    let canonical_sense = |e: &str| -> Option<SenseId> {
        let entry = kb.get(e)?;
        let id = vocab.lookup(&entry.canonical, Some(e))?;
        seeds.per_entity[e].contains(&id).then_some(id)
    };

    if eligible.len() < n_warm {
        return Err(Error::InsufficientEntities(format!(
            "{n_warm} warm-start entities requested but only {} entities have two or more observed synonyms",
            eligible.len()
        )));
    }
    let warm_ids: Vec<&String> = eligible[..n_warm].to_vec();
    let cold_ids: Vec<&String> = eligible[n_warm..]
        .iter()
        .copied()
        .filter(|e| canonical_sense(e).is_some())
        .take(n_cold)
        .collect();
    if cold_ids.len() < n_cold {
        return Err(Error::InsufficientEntities(format!(
            "{n_cold} cold-start entities requested but only {} remaining entities have an observed canonical name and another synonym",
            cold_ids.len()
        )));
    }

    let mut warm = Vec::with_capacity(n_warm);
    for e in &warm_ids {
        let mut senses: Vec<SenseId> = seeds.per_entity[*e].iter().copied().collect();
        senses.shuffle(&mut rng);
        let n_given = (senses.len() / 2).max(1);
        let held_out = senses.split_off(n_given);
        senses.sort_unstable();
        let mut held_out = held_out;
        held_out.sort_unstable();
        warm.push(TestEntity {
            entity_id: (*e).clone(),
            given: senses,
            held_out,
        });
    }
    let mut cold = Vec::with_capacity(n_cold);
    for e in &cold_ids {
        let canonical = canonical_sense(e).expect("filtered above");
        cold.push(TestEntity {
            entity_id: (*e).clone(),
            given: vec![canonical],
            held_out: seeds.per_entity[*e]
                .iter()
                .copied()
                .filter(|&s| s != canonical)
                .collect(),
        });
    }
    warm.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    cold.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));

    let test: BTreeSet<&String> = warm_ids.iter().chain(cold_ids.iter()).copied().collect();
    let train_ids: Vec<&String> = seeds
        .per_entity
        .keys()
        .filter(|e| !test.contains(e))
        .collect();
    let train = seeds.subset(&train_ids);
    if train.pairs().is_empty() && !seeds.pairs().is_empty() {
        return Err(Error::InsufficientEntities(
            "no training entity keeps a synonym pair after the split".into(),
        ));
    }
    Ok(EntitySplit { train, warm, cold })
}
