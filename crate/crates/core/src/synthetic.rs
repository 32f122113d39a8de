//! Generator for corpora with planted synonym groups.
//!
//! Every group is one KB entity with several names. Sentences about a group
//! draw their context words from the group's topic words (adjacent groups
//! share half of them) mixed with common words. Each group also has decoy
//! strings: unlinked words used in contexts that lean towards the group's
//! topic less strongly than its names do. A fraction of each group's name
//! pairs additionally appears in "X , also known as Y" sentences, and names
//! of different groups appear in contrast sentences ("X , unlike Y", "X
//! visited Y").

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Mention, Sentence, Token};
use crate::seeds::KbSynonyms;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub groups: usize,
    pub names_per_group: usize,
    pub decoys_per_group: usize,
    /// Topic words per group; consecutive groups share half of them.
    pub topic_words: usize,
    pub common_words: usize,
    pub context_sentences: usize,
    /// Context words per context sentence.
    pub sentence_len: usize,
    /// Probability that a context word of a name's sentence is a topic word.
    pub topic_share: f64,
    /// The same probability for a decoy's sentence.
    pub decoy_topic_share: f64,
    /// How often a decoy is the subject of a sentence, relative to a name.
    pub decoy_weight: f64,
    /// Fraction of each group's name pairs that get "also known as" sentences.
    pub known_as_fraction: f64,
    pub known_as_per_pair: usize,
    pub contrast_sentences: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            groups: 20,
            names_per_group: 4,
            decoys_per_group: 1,
            topic_words: 12,
            common_words: 150,
            context_sentences: 4000,
            sentence_len: 8,
            topic_share: 0.6,
            decoy_topic_share: 0.5,
            decoy_weight: 1.0,
            known_as_fraction: 0.5,
            known_as_per_pair: 2,
            contrast_sentences: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedGroup {
    pub entity_id: String,
    /// The first name is canonical.
    pub names: Vec<String>,
    pub decoys: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub sentences: Vec<Sentence>,
    pub kb: KbSynonyms,
    pub groups: Vec<PlantedGroup>,
    /// Name pairs planted in "also known as" sentences.
    pub known_as: Vec<(String, String)>,
}

struct Gen {
    cfg: SynthConfig,
    rng: ChaCha8Rng,
    sentences: Vec<Sentence>,
}

fn tok(surface: &str, pos: &str, head: Option<usize>, deprel: &str) -> Token {
    Token {
        surface: surface.to_string(),
        pos: pos.to_string(),
        head,
        deprel: deprel.to_string(),
    }
}

impl Gen {
    fn topic_word(&mut self, group: usize) -> String {
        let half = (self.cfg.topic_words / 2).max(1);
        let total = half * self.cfg.groups.max(1);
        let k = self.rng.random_range(0..self.cfg.topic_words.max(1));
        format!("topic{:03}", (group * half + k) % total.max(1))
    }

    fn context_word(&mut self, group: usize, topic_share: f64) -> String {
        if self.rng.random_bool(topic_share) {
            self.topic_word(group)
        } else {
            format!("word{:03}", self.rng.random_range(0..self.cfg.common_words))
        }
    }

    fn push(&mut self, tokens: Vec<Token>, mentions: Vec<Mention>) {
        let id = self.sentences.len() as u64;
        self.sentences.push(Sentence {
            doc_id: format!("synth{:03}", id / 50),
            sent_id: id % 50,
            tokens,
            mentions,
        });
    }

    /// `subject` plus context words, all attached to a verb-tagged root.
    fn context_sentence(&mut self, group: usize, subject: &str, entity: Option<&str>, share: f64) {
        let n = self.cfg.sentence_len.max(1);
        let words: Vec<String> = (0..n).map(|_| self.context_word(group, share)).collect();
        let at = self.rng.random_range(0..=n);
        let root = if at < n { at + 1 } else { at - 1 };
        let mut tokens = Vec::with_capacity(n + 1);
        let mut w = words.into_iter();
        for i in 0..=n {
            if i == at {
                let pos = if entity.is_some() { "NNP" } else { "NN" };
                tokens.push(tok(subject, pos, Some(root), "nsubj"));
            } else if i == root {
                tokens.push(tok(&w.next().expect("enough words"), "VB", None, "root"));
            } else {
                let dep = if i < root { "advmod" } else { "dobj" };
                tokens.push(tok(&w.next().expect("enough words"), "NN", Some(root), dep));
            }
        }
        let mentions = entity
            .map(|e| Mention {
                start: at,
                end: at + 1,
                entity_id: Some(e.to_string()),
            })
            .into_iter()
            .collect();
        self.push(tokens, mentions);
    }

    /// `X , also known as Y` followed by a few topic words.
    fn known_as_sentence(&mut self, group: usize, x: &str, y: &str, entity: &str) {
        let mut tokens = vec![
            tok(x, "NNP", None, "root"),
            tok(",", ",", Some(0), "punct"),
            tok("also", "RB", Some(3), "advmod"),
            tok("known", "VBN", Some(0), "acl"),
            tok("as", "IN", Some(5), "case"),
            tok(y, "NNP", Some(3), "nmod"),
        ];
        for _ in 0..3 {
            let w = self.context_word(group, self.cfg.topic_share);
            tokens.push(tok(&w, "NN", Some(0), "dep"));
        }
        let mentions = vec![
            Mention { start: 0, end: 1, entity_id: Some(entity.to_string()) },
            Mention { start: 5, end: 6, entity_id: Some(entity.to_string()) },
        ];
        self.push(tokens, mentions);
    }

    fn contrast_sentence(&mut self, x: (&str, &str), y: (&str, Option<&str>)) {
        let (tokens, ys) = if self.rng.random_bool(0.5) {
            (
                vec![
                    tok(x.0, "NNP", None, "root"),
                    tok(",", ",", Some(0), "punct"),
                    tok("unlike", "IN", Some(3), "case"),
                    tok(y.0, "NNP", Some(0), "nmod"),
                ],
                3,
            )
        } else {
            (
                vec![
                    tok(x.0, "NNP", Some(1), "nsubj"),
                    tok("visited", "VBD", None, "root"),
                    tok(y.0, "NNP", Some(1), "dobj"),
                ],
                2,
            )
        };
        let mut mentions = vec![Mention { start: 0, end: 1, entity_id: Some(x.1.to_string()) }];
        if let Some(e) = y.1 {
            mentions.push(Mention { start: ys, end: ys + 1, entity_id: Some(e.to_string()) });
        }
        self.push(tokens, mentions);
    }
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut g = Gen {
        cfg: cfg.clone(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        sentences: Vec::new(),
    };
    let groups: Vec<PlantedGroup> = (0..cfg.groups)
        .map(|i| PlantedGroup {
            entity_id: format!("E{i:03}"),
            names: (0..cfg.names_per_group).map(|k| format!("name{i:03}x{k}")).collect(),
            decoys: (0..cfg.decoys_per_group).map(|k| format!("decoy{i:03}x{k}")).collect(),
        })
        .collect();
    let mut kb = KbSynonyms::default();
    for grp in &groups {
        let names: Vec<&str> = grp.names.iter().map(String::as_str).collect();
        kb.insert(&grp.entity_id, &names);
    }

    // Subjects: every name with weight 1, every decoy with `decoy_weight`.
    let mut subjects: Vec<(usize, Option<usize>, Option<usize>, f64)> = Vec::new();
    for (i, grp) in groups.iter().enumerate() {
        subjects.extend((0..grp.names.len()).map(|k| (i, Some(k), None, 1.0)));
        subjects.extend((0..grp.decoys.len()).map(|k| (i, None, Some(k), cfg.decoy_weight)));
    }
    if !subjects.is_empty() {
        for _ in 0..cfg.context_sentences {
            let &(i, name, decoy, _) = subjects
                .choose_weighted(&mut g.rng, |s| s.3)
                .expect("positive weights");
            let grp = &groups[i];
            match (name, decoy) {
                (Some(k), _) => g.context_sentence(i, &grp.names[k].clone(), Some(&grp.entity_id.clone()), cfg.topic_share),
                (_, Some(k)) => g.context_sentence(i, &grp.decoys[k].clone(), None, cfg.decoy_topic_share),
                _ => unreachable!(),
            }
        }
    }

    let mut known_as = Vec::new();
    for (i, grp) in groups.iter().enumerate() {
        let mut pairs = Vec::new();
        for a in 0..grp.names.len() {
            for b in a + 1..grp.names.len() {
                pairs.push((a, b));
            }
        }
        pairs.shuffle(&mut g.rng);
        let take = (cfg.known_as_fraction * pairs.len() as f64).round() as usize;
        for &(a, b) in &pairs[..take.min(pairs.len())] {
            known_as.push((grp.names[a].clone(), grp.names[b].clone()));
            for _ in 0..cfg.known_as_per_pair {
                let (x, y) = if g.rng.random_bool(0.5) { (a, b) } else { (b, a) };
                g.known_as_sentence(i, &grp.names[x], &grp.names[y], &grp.entity_id);
            }
        }
    }

    if groups.len() >= 2 {
        for _ in 0..cfg.contrast_sentences {
            let a = g.rng.random_range(0..groups.len());
            let mut b = g.rng.random_range(0..groups.len() - 1);
            if b >= a {
                b += 1;
            }
            let x = groups[a].names.choose(&mut g.rng).cloned();
            let Some(x) = x else { continue };
            let use_decoy = !groups[b].decoys.is_empty() && g.rng.random_bool(0.5);
            if use_decoy {
                let y = groups[b].decoys.choose(&mut g.rng).cloned().expect("non-empty");
                g.contrast_sentence((&x, &groups[a].entity_id), (&y, None));
            } else if let Some(y) = groups[b].names.choose(&mut g.rng).cloned() {
                g.contrast_sentence((&x, &groups[a].entity_id), (&y, Some(&groups[b].entity_id)));
            }
        }
    }

    SynthCorpus {
        sentences: g.sentences,
        kb,
        groups,
        known_as,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_sentences_are_valid_and_linked_to_the_kb() {
        let c = generate(&SynthConfig { context_sentences: 500, ..Default::default() });
        assert_eq!(c.groups.len(), 20);
        for s in &c.sentences {
            s.validate().unwrap();
            for m in &s.mentions {
                let e = m.entity_id.as_deref().unwrap();
                assert!(c.kb.contains(e, &m.surface(&s.tokens)));
            }
        }
        // Four names give six pairs, half of which are planted.
        assert_eq!(c.known_as.len(), 20 * 3);
        let ids: std::collections::HashSet<(String, u64)> =
            c.sentences.iter().map(|s| (s.doc_id.clone(), s.sent_id)).collect();
        assert_eq!(ids.len(), c.sentences.len());
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig { context_sentences: 200, ..Default::default() };
        assert_eq!(generate(&cfg).sentences, generate(&cfg).sentences);
    }
}
