//! Deterministic synthetic corpora: web tables whose columns share a relation
//! with the subject column, plus template sentences for every labeled pair.
//!
//! Each relation (NA included) owns a disjoint set of trigger words. A
//! sentence places the head mention, the trigger words of one template and
//! the tail mention in order, padded with filler words to 5–15 tokens. With
//! probability `noise` a sentence uses a template of a uniformly drawn
//! relation instead of its pair's.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    labels_to_jsonl, sentences_to_jsonl, EntityPair, LabeledPair, MentionSpan, RelationVocabulary, SentenceInstance,
    Split, NA_INDEX, NA_NAME,
};
use crate::dataset::Corpus;
use crate::error::{Error, Result};
use crate::seed;
use crate::tables::{tables_to_jsonl, Cell, WebTable};

const MIN_SENTENCE_LEN: usize = 5;
const MAX_SENTENCE_LEN: usize = 15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Number of relations including NA.
    pub n_relations: usize,
    pub n_entities: usize,
    /// Number of distinct non-entity words (fillers and triggers).
    pub vocab_size: usize,
    /// Number of labeled entity pairs.
    pub n_pairs: usize,
    /// Share of pairs with exactly one sentence.
    pub frac_single: f64,
    /// Share of pairs with no sentence of their own (test split only).
    pub frac_empty: f64,
    /// Probability that a sentence does not use its pair's template.
    pub noise: f64,
    /// Share of noisy sentences drawn from the NA templates; the rest use a
    /// template of a uniformly drawn relation.
    pub noise_na_share: f64,
    pub seed: u64,
    /// Share of pairs with sentences that go to the test split.
    pub test_fraction: f64,
    /// Probability that a table column holds unrelated (NA) entities.
    pub na_fraction: f64,
    /// Probability that a row of a relational column carries the column's
    /// relation; other rows are NA.
    pub column_consistency: f64,
    pub templates_per_relation: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    pub max_body_columns: usize,
    /// Upper bound on sentences for multi-sentence pairs (at least 2).
    pub max_sentences: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_relations: 21,
            n_entities: 5000,
            vocab_size: 400,
            n_pairs: 2400,
            frac_single: 0.5,
            frac_empty: 0.1,
            noise: 0.3,
            noise_na_share: 0.0,
            seed: 7,
            test_fraction: 0.3,
            na_fraction: 0.2,
            column_consistency: 1.0,
            templates_per_relation: 3,
            min_rows: 8,
            max_rows: 40,
            max_body_columns: 3,
            max_sentences: 4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("frac_single", self.frac_single),
            ("frac_empty", self.frac_empty),
            ("noise", self.noise),
            ("test_fraction", self.test_fraction),
            ("na_fraction", self.na_fraction),
            ("noise_na_share", self.noise_na_share),
            ("column_consistency", self.column_consistency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.frac_single + self.frac_empty > 1.0 {
            return bad(format!(
                "frac_single + frac_empty = {} exceeds 1",
                self.frac_single + self.frac_empty
            ));
        }
        if self.n_relations < 2 {
            return bad("n_relations must be at least 2 (NA included)".into());
        }
        if self.min_rows < 2 || self.max_rows < self.min_rows {
            return bad("row range must satisfy 2 <= min_rows <= max_rows".into());
        }
        if self.max_body_columns == 0 || self.templates_per_relation == 0 || self.max_sentences < 2 {
            return bad("max_body_columns and templates_per_relation must be >= 1, max_sentences >= 2".into());
        }
        if self.n_entities < self.max_rows * (self.max_body_columns + 1) + 1 {
            return bad("n_entities too small for the largest table".into());
        }
        if self.vocab_size < 2 * self.n_relations * self.templates_per_relation {
            return bad(format!(
                "vocab_size must be at least {} for {} relations",
                2 * self.n_relations * self.templates_per_relation,
                self.n_relations
            ));
        }
        Ok(())
    }
}

/// A generated corpus, held in memory.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub relations: RelationVocabulary,
    /// Each sentence with the relation label of its pair.
    pub sentences: Vec<(SentenceInstance, usize)>,
    pub tables: Vec<WebTable>,
    /// Every labeled pair, including pairs without sentences.
    pub labels: Vec<LabeledPair>,
    /// Trigger words of each relation's templates.
    pub templates: Vec<Vec<Vec<String>>>,
}

impl SynthCorpus {
    pub fn to_corpus(&self) -> Corpus {
        let mut sentence_labels = Vec::new();
        let mut seen = HashSet::new();
        for (s, r) in &self.sentences {
            let l = LabeledPair {
                pair: s.pair(),
                relation: *r,
                split: s.split,
            };
            if seen.insert(l.clone()) {
                sentence_labels.push(l);
            }
        }
        Corpus::from_parts(
            self.relations.clone(),
            self.sentences.iter().map(|(s, _)| s.clone()).collect(),
            sentence_labels,
            self.labels.clone(),
        )
    }

    /// Writes `sentences.jsonl`, `tables.jsonl`, `relations.txt` and
    /// `labels.jsonl` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut relations = self.relations.names().join("\n");
        relations.push('\n');
        let files = [
            ("sentences.jsonl", sentences_to_jsonl(&self.sentences, &self.relations)),
            ("tables.jsonl", tables_to_jsonl(&self.tables)),
            ("relations.txt", relations),
            ("labels.jsonl", labels_to_jsonl(&self.labels, &self.relations)),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BagSize {
    Empty,
    Single,
    Multi,
}

struct PlannedPair {
    pair: EntityPair,
    relation: usize,
    /// Pairs sharing a group are anchors of each other.
    group: usize,
}

struct Lexicon {
    fillers: Vec<String>,
    templates: Vec<Vec<Vec<String>>>,
}

fn build_lexicon(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Lexicon {
    let mut words: Vec<String> = (0..cfg.vocab_size).map(|i| format!("w{i}")).collect();
    words.shuffle(rng);
    let per_relation = (cfg.vocab_size / 2) / cfg.n_relations;
    let mut triggers = words.split_off(cfg.vocab_size - per_relation * cfg.n_relations);
    let fillers = words;
    let templates = (0..cfg.n_relations)
        .map(|_| {
            let own: Vec<String> = triggers.drain(..per_relation).collect();
            (0..cfg.templates_per_relation)
                .map(|t| {
                    // Every template starts with its own trigger word, so
                    // templates are distinguishable even when they share others.
                    let len = rng.gen_range(1..=3usize.min(own.len()));
                    let mut tpl = vec![own[t % own.len()].clone()];
                    while tpl.len() < len {
                        tpl.push(own.choose(rng).expect("nonempty").clone());
                    }
                    tpl
                })
                .collect()
        })
        .collect();
    Lexicon { fillers, templates }
}

/// Consecutive table redraws tolerated before the entity pool counts as exhausted.
const MAX_REDRAWS: usize = 10_000;

fn plan_tables(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<(Vec<WebTable>, Vec<PlannedPair>)> {
    let entity = |i: usize| format!("e{i}");
    let mut tables = Vec::new();
    let mut planned: Vec<PlannedPair> = Vec::new();
    let mut used: HashSet<EntityPair> = HashSet::new();
    let mut group = 0usize;
    let mut redraws = 0usize;
    let real = |rng: &mut ChaCha8Rng| rng.gen_range(1..cfg.n_relations);
    while planned.len() < cfg.n_pairs {
        let n_rows = rng.gen_range(cfg.min_rows..=cfg.max_rows);
        let n_body = rng.gen_range(1..=cfg.max_body_columns);
        let drawn = rand::seq::index::sample(rng, cfg.n_entities, 1 + n_rows * (n_body + 1)).into_vec();
        // Redraw tables that would put an already labeled pair into another
        // column, which would anchor it to pairs of a different relation.
        let (subject_ids, body_ids) = drawn[1..].split_at(n_rows);
        let clashes = subject_ids.iter().zip(body_ids.chunks(n_body)).any(|(&s, bodies)| {
            let subject = entity(s);
            std::iter::once(drawn[0]).chain(bodies.iter().copied()).any(|other| {
                let pair = EntityPair::new(subject.clone(), entity(other));
                used.contains(&pair) || used.contains(&pair.reversed())
            })
        });
        if clashes {
            redraws += 1;
            if redraws == MAX_REDRAWS {
                return Err(Error::Config("n_entities too small to place n_pairs distinct pairs".into()));
            }
            continue;
        }
        redraws = 0;
        let mut picks = drawn.into_iter();
        let topic = entity(picks.next().expect("sampled"));
        let subjects: Vec<String> = (0..n_rows).map(|_| entity(picks.next().expect("sampled"))).collect();
        let topic_relation = real(rng);
        let column_relations: Vec<usize> = (0..n_body)
            .map(|_| if rng.gen_bool(cfg.na_fraction) { NA_INDEX } else { real(rng) })
            .collect();
        let year = rng.gen_range(1900..2000);
        let mut rows = vec![Vec::new(); n_rows];
        let topic_group = group;
        let body_groups: Vec<usize> = (1..=n_body).map(|j| group + j).collect();
        group += n_body + 1;
        for (i, subject) in subjects.iter().enumerate() {
            rows[i].push(Cell::linked(format!("{subject} name"), subject.clone()));
            let mut add = |pair: EntityPair, relation: usize, group: usize, planned: &mut Vec<PlannedPair>| {
                if planned.len() < cfg.n_pairs && !used.contains(&pair.reversed()) && used.insert(pair.clone()) {
                    planned.push(PlannedPair { pair, relation, group });
                }
            };
            add(EntityPair::new(subject.clone(), topic.clone()), topic_relation, topic_group, &mut planned);
            for j in 0..n_body {
                let body = entity(picks.next().expect("sampled"));
                rows[i].push(Cell::linked(format!("{body} name"), body.clone()));
                let relation = if rng.gen_bool(cfg.column_consistency) { column_relations[j] } else { NA_INDEX };
                add(EntityPair::new(subject.clone(), body), relation, body_groups[j], &mut planned);
            }
            rows[i].push(Cell::plain((year + i).to_string()));
        }
        let table = WebTable::new(format!("t{}", tables.len()), Some(topic), rows).expect("generated table is well formed");
        tables.push(table);
    }
    Ok((tables, planned))
}

fn render_sentence(
    id: String,
    pair: &EntityPair,
    template: &[String],
    split: Split,
    fillers: &[String],
    rng: &mut ChaCha8Rng,
) -> SentenceInstance {
    let min_len = MIN_SENTENCE_LEN.max(template.len() + 2);
    let len = rng.gen_range(min_len..=MAX_SENTENCE_LEN.max(min_len));
    let n_fill = len - template.len() - 2;
    let before = rng.gen_range(0..=n_fill);
    let mut fill = |n: usize| -> Vec<String> { (0..n).map(|_| fillers.choose(rng).expect("fillers").clone()).collect() };
    let mut tokens = fill(before);
    let h = tokens.len();
    tokens.push(pair.head.clone());
    tokens.extend(template.iter().cloned());
    let t = tokens.len();
    tokens.push(pair.tail.clone());
    tokens.extend(fill(n_fill - before));
    SentenceInstance {
        id,
        tokens,
        head: MentionSpan {
            entity_id: pair.head.clone(),
            start: h,
            end: h + 1,
        },
        tail: MentionSpan {
            entity_id: pair.tail.clone(),
            start: t,
            end: t + 1,
        },
        split,
    }
}

/// Generates a corpus. Output depends only on `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = seed::rng_for(cfg.seed, "synth");
    let names: Vec<String> = std::iter::once(NA_NAME.to_owned())
        .chain((1..cfg.n_relations).map(|r| format!("rel{r}")))
        .collect();
    let relations = RelationVocabulary::from_names(names)?;
    let lexicon = build_lexicon(cfg, &mut rng);
    let (tables, planned) = plan_tables(cfg, &mut rng)?;

    let mut sizes: Vec<BagSize> = planned
        .iter()
        .map(|_| {
            let u: f64 = rng.gen();
            if u < cfg.frac_empty {
                BagSize::Empty
            } else if u < cfg.frac_empty + cfg.frac_single {
                BagSize::Single
            } else {
                BagSize::Multi
            }
        })
        .collect();
    let splits: Vec<Split> = sizes
        .iter()
        .map(|&s| {
            if s == BagSize::Empty || rng.gen_bool(cfg.test_fraction) {
                Split::Test
            } else {
                Split::Train
            }
        })
        .collect();
    // An empty pair needs a training anchor with sentences and the same
    // relation; otherwise it gets one sentence of its own.
    let mut trained_groups: BTreeMap<(usize, usize), bool> = BTreeMap::new();
    for (i, p) in planned.iter().enumerate() {
        *trained_groups.entry((p.group, p.relation)).or_default() |=
            splits[i] == Split::Train && sizes[i] != BagSize::Empty;
    }
    for (i, p) in planned.iter().enumerate() {
        if sizes[i] == BagSize::Empty && !trained_groups[&(p.group, p.relation)] {
            sizes[i] = BagSize::Single;
        }
    }
    let mut sentences = Vec::new();
    let mut labels = Vec::with_capacity(planned.len());
    for (i, p) in planned.iter().enumerate() {
        let n = match sizes[i] {
            BagSize::Empty => 0,
            BagSize::Single => 1,
            BagSize::Multi => rng.gen_range(2..=cfg.max_sentences),
        };
        for _ in 0..n {
            let rel = if rng.gen_bool(cfg.noise) {
                if rng.gen_bool(cfg.noise_na_share) {
                    NA_INDEX
                } else {
                    rng.gen_range(0..cfg.n_relations)
                }
            } else {
                p.relation
            };
            let template = lexicon.templates[rel].choose(&mut rng).expect("templates");
            let id = format!("s{}", sentences.len());
            let s = render_sentence(id, &p.pair, template, splits[i], &lexicon.fillers, &mut rng);
            sentences.push((s, p.relation));
        }
        labels.push(LabeledPair {
            pair: p.pair.clone(),
            relation: p.relation,
            split: splits[i],
        });
    }
    Ok(SynthCorpus {
        relations,
        sentences,
        tables,
        labels,
        templates: lexicon.templates,
    })
}
