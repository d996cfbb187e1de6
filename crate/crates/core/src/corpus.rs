//! Sentence corpus: relation vocabulary, JSONL ingestion, 1-hop bags,
//! entity-pair level dev splitting and dataset statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Index of the no-relation label in every vocabulary.
pub const NA_INDEX: usize = 0;
pub const NA_NAME: &str = "NA";
/// Sentences longer than this are cut to a window around both mentions.
pub const MAX_SENTENCE_LEN: usize = 120;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationVocabulary {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl RelationVocabulary {
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        match names.first() {
            Some(first) if first == NA_NAME => {}
            Some(first) => {
                return Err(Error::Vocabulary(format!(
                    "first relation must be {NA_NAME:?}, found {first:?}"
                )))
            }
            None => return Err(Error::Vocabulary("no relations".into())),
        }
        if names.len() < 2 {
            return Err(Error::Vocabulary("need at least one relation besides NA".into()));
        }
        let mut lookup = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Vocabulary(format!("relation {i} has an empty name")));
            }
            if lookup.insert(name.clone(), i).is_some() {
                return Err(Error::Vocabulary(format!("duplicate relation {name:?}")));
            }
        }
        Ok(Self { names, lookup })
    }

    /// Reads `relations.txt`: one name per line, line 0 must be `NA`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned);
        Self::from_names(names).map_err(|e| match e {
            Error::Vocabulary(msg) => Error::Vocabulary(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// An ordered entity pair. `(h, t)` and `(t, h)` are different keys.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityPair {
    pub head: String,
    pub tail: String,
}

impl EntityPair {
    pub fn new(head: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            tail: tail.into(),
        }
    }

    pub fn reversed(&self) -> Self {
        Self::new(self.tail.clone(), self.head.clone())
    }

    /// Stable 64-bit key, used to derive per-pair random streams.
    pub fn stable_key(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.head.len() + self.tail.len() + 1);
        bytes.extend_from_slice(self.head.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(self.tail.as_bytes());
        seed::stable_hash(&bytes)
    }
}

impl fmt::Display for EntityPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.head, self.tail)
    }
}

/// Token span `[start, end)` of one entity mention.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionSpan {
    pub entity_id: String,
    pub start: usize,
    pub end: usize,
}

impl MentionSpan {
    fn overlaps(&self, other: &MentionSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub head: MentionSpan,
    pub tail: MentionSpan,
    pub split: Split,
}

impl SentenceInstance {
    pub fn pair(&self) -> EntityPair {
        EntityPair::new(self.head.entity_id.clone(), self.tail.entity_id.clone())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        if n < 2 {
            return Err(format!("sentence {:?} has {n} tokens, need at least 2", self.id));
        }
        for (role, span) in [("head", &self.head), ("tail", &self.tail)] {
            if span.start >= span.end || span.end > n {
                return Err(format!(
                    "{role} span [{}, {}) out of range for {n} tokens",
                    span.start, span.end
                ));
            }
        }
        if self.head.entity_id == self.tail.entity_id {
            return Err(format!("head and tail are both {:?}", self.head.entity_id));
        }
        if self.head.overlaps(&self.tail) {
            return Err("head and tail spans overlap".into());
        }
        Ok(())
    }

    /// Cuts the sentence to at most `max_len` tokens. The window is centred on
    /// the midpoint of the two mention midpoints and always contains both
    /// mentions; spans are re-based onto the window.
    pub fn truncated(&self, max_len: usize) -> std::result::Result<Self, String> {
        let n = self.tokens.len();
        if n <= max_len {
            return Ok(self.clone());
        }
        let lo = self.head.start.min(self.tail.start);
        let hi = self.head.end.max(self.tail.end);
        if hi - lo > max_len {
            return Err(format!(
                "mentions span {} tokens, more than the {max_len}-token limit",
                hi - lo
            ));
        }
        let mid = |s: &MentionSpan| (s.start + s.end - 1) as f64 / 2.0;
        let center = (mid(&self.head) + mid(&self.tail)) / 2.0;
        let ideal = (center - (max_len as f64 - 1.0) / 2.0).round().max(0.0) as usize;
        let start = ideal.min(n - max_len).min(lo).max(hi.saturating_sub(max_len));
        let shift = |s: &MentionSpan| MentionSpan {
            entity_id: s.entity_id.clone(),
            start: s.start - start,
            end: s.end - start,
        };
        Ok(Self {
            id: self.id.clone(),
            tokens: self.tokens[start..start + max_len].to_vec(),
            head: shift(&self.head),
            tail: shift(&self.tail),
            split: self.split,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledPair {
    pub pair: EntityPair,
    pub relation: usize,
    pub split: Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BagKind {
    OneHop,
    TwoHop,
}

#[derive(Clone, Debug)]
pub struct SentenceBag {
    pub pair: EntityPair,
    pub sentences: Vec<Arc<SentenceInstance>>,
    pub kind: BagKind,
}

impl SentenceBag {
    pub fn empty(pair: EntityPair, kind: BagKind) -> Self {
        Self {
            pair,
            sentences: Vec::new(),
            kind,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.sentences.iter().map(|s| s.id.as_str()).collect()
    }
}

pub type BagMap = BTreeMap<EntityPair, SentenceBag>;

#[derive(Serialize, Deserialize)]
struct RawSpan {
    eid: String,
    start: usize,
    end: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSentence {
    id: String,
    tokens: Vec<String>,
    head: RawSpan,
    tail: RawSpan,
    relation: String,
    split: Split,
}

#[derive(Serialize, Deserialize)]
struct RawLabel {
    head: String,
    tail: String,
    relation: String,
    split: Split,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_owned()))
        .collect())
}

/// Reads `sentences.jsonl` with the default length limit.
pub fn load_sentences(
    path: impl AsRef<Path>,
    vocab: &RelationVocabulary,
) -> Result<(Vec<SentenceInstance>, Vec<LabeledPair>)> {
    load_sentences_with(path, vocab, MAX_SENTENCE_LEN)
}

/// Reads `sentences.jsonl`. Lines are parsed in parallel and merged back in
/// line order; the first failing line (by line number) is reported.
pub fn load_sentences_with(
    path: impl AsRef<Path>,
    vocab: &RelationVocabulary,
    max_len: usize,
) -> Result<(Vec<SentenceInstance>, Vec<LabeledPair>)> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let parsed: Vec<Result<(SentenceInstance, usize)>> = lines
        .par_iter()
        .map(|(line, text)| parse_sentence(path, *line, text, vocab, max_len))
        .collect();

    let mut sentences = Vec::with_capacity(parsed.len());
    let mut labels = Vec::new();
    let mut seen_labels = HashSet::new();
    let mut seen_ids = HashSet::new();
    for (item, (line, _)) in parsed.into_iter().zip(&lines) {
        let (sentence, relation) = item?;
        if !seen_ids.insert(sentence.id.clone()) {
            return Err(Error::Validation {
                path: path.into(),
                line: *line,
                message: format!("duplicate sentence id {:?}", sentence.id),
            });
        }
        let label = LabeledPair {
            pair: sentence.pair(),
            relation,
            split: sentence.split,
        };
        if seen_labels.insert(label.clone()) {
            labels.push(label);
        }
        sentences.push(sentence);
    }
    Ok((sentences, labels))
}

fn parse_sentence(
    path: &Path,
    line: usize,
    text: &str,
    vocab: &RelationVocabulary,
    max_len: usize,
) -> Result<(SentenceInstance, usize)> {
    let raw: RawSentence = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.into(),
        line,
        message: e.to_string(),
    })?;
    let relation = vocab
        .index_of(&raw.relation)
        .ok_or_else(|| Error::UnknownRelation {
            path: path.into(),
            line,
            name: raw.relation.clone(),
        })?;
    let span = |s: RawSpan| MentionSpan {
        entity_id: s.eid,
        start: s.start,
        end: s.end,
    };
    let sentence = SentenceInstance {
        id: raw.id,
        tokens: raw.tokens,
        head: span(raw.head),
        tail: span(raw.tail),
        split: raw.split,
    };
    let invalid = |message| Error::Validation {
        path: path.into(),
        line,
        message,
    };
    sentence.validate().map_err(invalid)?;
    let sentence = sentence.truncated(max_len).map_err(invalid)?;
    Ok((sentence, relation))
}

/// Reads a label file (`labels.jsonl`): `{"head", "tail", "relation", "split"}`
/// per line. Covers pairs that have no sentences of their own.
pub fn load_labels(path: impl AsRef<Path>, vocab: &RelationVocabulary) -> Result<Vec<LabeledPair>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, text) in read_lines(path)? {
        let raw: RawLabel = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        })?;
        if raw.head == raw.tail {
            return Err(Error::Validation {
                path: path.into(),
                line,
                message: format!("head and tail are both {:?}", raw.head),
            });
        }
        let relation = vocab.index_of(&raw.relation).ok_or_else(|| Error::UnknownRelation {
            path: path.into(),
            line,
            name: raw.relation.clone(),
        })?;
        let label = LabeledPair {
            pair: EntityPair::new(raw.head, raw.tail),
            relation,
            split: raw.split,
        };
        if seen.insert(label.clone()) {
            out.push(label);
        }
    }
    Ok(out)
}

/// Serialises labels in the `labels.jsonl` format.
pub fn labels_to_jsonl(labels: &[LabeledPair], vocab: &RelationVocabulary) -> String {
    let mut out = String::new();
    for l in labels {
        let raw = RawLabel {
            head: l.pair.head.clone(),
            tail: l.pair.tail.clone(),
            relation: vocab.name(l.relation).to_owned(),
            split: l.split,
        };
        out.push_str(&serde_json::to_string(&raw).expect("label serialises"));
        out.push('\n');
    }
    out
}

/// Serialises `(sentence, relation index)` records in the `sentences.jsonl`
/// format.
pub fn sentences_to_jsonl(records: &[(SentenceInstance, usize)], vocab: &RelationVocabulary) -> String {
    let span = |m: &MentionSpan| RawSpan {
        eid: m.entity_id.clone(),
        start: m.start,
        end: m.end,
    };
    let mut out = String::new();
    for (s, relation) in records {
        let raw = RawSentence {
            id: s.id.clone(),
            tokens: s.tokens.clone(),
            head: span(&s.head),
            tail: span(&s.tail),
            relation: vocab.name(*relation).to_owned(),
            split: s.split,
        };
        out.push_str(&serde_json::to_string(&raw).expect("sentence serialises"));
        out.push('\n');
    }
    out
}

/// Groups sentences into one bag per ordered `(head, tail)` pair, keeping
/// input order inside each bag.
pub fn build_onehop_bags(sentences: &[Arc<SentenceInstance>]) -> BagMap {
    let mut bags = BagMap::new();
    for s in sentences {
        bags.entry(s.pair())
            .or_insert_with_key(|p| SentenceBag::empty(p.clone(), BagKind::OneHop))
            .sentences
            .push(Arc::clone(s));
    }
    bags
}

/// Splits labeled pairs into (train, dev) at entity-pair granularity: every
/// label of a pair lands on the same side. Output keeps input order.
pub fn split_train_dev(
    pairs: &[LabeledPair],
    dev_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledPair>, Vec<LabeledPair>)> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::Config(format!(
            "dev fraction must be in (0, 1), got {dev_fraction}"
        )));
    }
    let distinct: BTreeSet<&EntityPair> = pairs.iter().map(|l| &l.pair).collect();
    if distinct.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 entity pairs to split, got {}",
            distinct.len()
        )));
    }
    let mut order: Vec<&EntityPair> = distinct.into_iter().collect();
    order.shuffle(&mut seed::rng_for(seed, "dev-split"));
    let n_dev = ((order.len() as f64 * dev_fraction).round() as usize).clamp(1, order.len() - 1);
    let dev: HashSet<&EntityPair> = order[..n_dev].iter().copied().collect();
    let (dev_part, train_part): (Vec<_>, Vec<_>) =
        pairs.iter().cloned().partition(|l| dev.contains(&l.pair));
    Ok((train_part, dev_part))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    pub entity_pairs: usize,
    pub pairs_with_twohop: usize,
    /// Percentage of pairs with a nonempty 2-hop bag.
    pub pct_with_twohop: Option<f64>,
    /// Mean 1-hop bag size over all pairs of the subset.
    pub mean_onehop: Option<f64>,
    /// Mean 2-hop bag size over pairs whose 2-hop bag is nonempty.
    pub mean_twohop: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub overall: SubsetStats,
    pub non_na: SubsetStats,
}

/// Dataset statistics over the pair universe of `labels`. A pair counts as
/// non-NA when any of its labels is a real relation.
pub fn corpus_stats(onehop: &BagMap, twohop: &BagMap, labels: &[LabeledPair]) -> CorpusStats {
    let mut universe: BTreeMap<&EntityPair, bool> = BTreeMap::new();
    for l in labels {
        *universe.entry(&l.pair).or_insert(false) |= l.relation != NA_INDEX;
    }
    let subset = |keep: &dyn Fn(bool) -> bool| {
        let mut stats = SubsetStats::default();
        let (mut s_total, mut st_total) = (0usize, 0usize);
        for (pair, &non_na) in &universe {
            if !keep(non_na) {
                continue;
            }
            stats.entity_pairs += 1;
            s_total += onehop.get(*pair).map_or(0, SentenceBag::len);
            let st = twohop.get(*pair).map_or(0, SentenceBag::len);
            if st > 0 {
                stats.pairs_with_twohop += 1;
                st_total += st;
            }
        }
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        stats.pct_with_twohop = ratio(100 * stats.pairs_with_twohop, stats.entity_pairs);
        stats.mean_onehop = ratio(s_total, stats.entity_pairs);
        stats.mean_twohop = ratio(st_total, stats.pairs_with_twohop);
        stats
    };
    CorpusStats {
        overall: subset(&|_| true),
        non_na: subset(&|non_na| non_na),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn vocab() -> RelationVocabulary {
        RelationVocabulary::from_names(["NA", "born_in", "capital_of"]).unwrap()
    }

    fn sentence(id: &str, h: &str, t: &str) -> Arc<SentenceInstance> {
        Arc::new(SentenceInstance {
            id: id.into(),
            tokens: vec![h.into(), "in".into(), t.into()],
            head: MentionSpan { entity_id: h.into(), start: 0, end: 1 },
            tail: MentionSpan { entity_id: t.into(), start: 2, end: 3 },
            split: Split::Train,
        })
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const GOOD: &str = r#"{"id":"s1","tokens":["a","b","c"],"head":{"eid":"A","start":0,"end":1},"tail":{"eid":"C","start":2,"end":3},"relation":"NA","split":"train"}"#;

    #[test]
    fn vocabulary_requires_na_first() {
        assert!(RelationVocabulary::from_names(["born_in", "NA"]).is_err());
        assert!(RelationVocabulary::from_names(["NA", "x", "x"]).is_err());
        let v = vocab();
        assert_eq!(v.index_of("NA"), Some(NA_INDEX));
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn empty_file_loads_nothing() {
        let f = write_tmp("");
        let (s, l) = load_sentences(f.path(), &vocab()).unwrap();
        assert!(s.is_empty() && l.is_empty());
    }

    #[test]
    fn na_line_maps_to_index_zero() {
        let f = write_tmp(GOOD);
        let (s, l) = load_sentences(f.path(), &vocab()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].relation, 0);
    }

    #[test]
    fn bad_span_names_its_line() {
        let bad = r#"{"id":"s2","tokens":["a","b"],"head":{"eid":"A","start":0,"end":1},"tail":{"eid":"B","start":1,"end":5},"relation":"NA","split":"train"}"#;
        let third = GOOD.replace("\"s1\"", "\"s3\"");
        let f = write_tmp(&format!("{GOOD}\n{bad}\n{third}\n"));
        match load_sentences(f.path(), &vocab()).unwrap_err() {
            Error::Validation { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn malformed_json_and_unknown_relation() {
        let f = write_tmp(&format!("{GOOD}\n{{not json"));
        assert!(matches!(
            load_sentences(f.path(), &vocab()).unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
        let f = write_tmp(&GOOD.replace("\"NA\"", "\"founded\""));
        assert!(matches!(
            load_sentences(f.path(), &vocab()).unwrap_err(),
            Error::UnknownRelation { line: 1, .. }
        ));
    }

    #[test]
    fn invariant_violations_rejected() {
        let same = GOOD.replace("\"C\"", "\"A\"");
        assert!(load_sentences(write_tmp(&same).path(), &vocab()).is_err());
        let overlap = GOOD.replace(r#""start":2,"end":3"#, r#""start":0,"end":2"#);
        assert!(load_sentences(write_tmp(&overlap).path(), &vocab()).is_err());
        let dup = format!("{GOOD}\n{GOOD}");
        assert!(load_sentences(write_tmp(&dup).path(), &vocab()).is_err());
    }

    #[test]
    fn truncation_keeps_both_mentions() {
        let tokens: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
        let s = SentenceInstance {
            id: "long".into(),
            tokens,
            head: MentionSpan { entity_id: "A".into(), start: 150, end: 152 },
            tail: MentionSpan { entity_id: "B".into(), start: 200, end: 201 },
            split: Split::Train,
        };
        let t = s.truncated(120).unwrap();
        assert_eq!(t.tokens.len(), 120);
        t.validate().unwrap();
        assert_eq!(t.tokens[t.head.start], "w150");
        assert_eq!(t.tokens[t.tail.start], "w200");
        // Midpoint of mention midpoints is 175.25; the window is centred on it.
        let offset: usize = t.tokens[0][1..].parse().unwrap();
        assert_eq!(offset, 116);

        let mut far = s.clone();
        far.tail.start = 290;
        far.tail.end = 291;
        assert!(far.truncated(120).is_err());
    }

    #[test]
    fn onehop_bags_group_by_ordered_pair() {
        assert!(build_onehop_bags(&[]).is_empty());
        let s = vec![sentence("1", "A", "B"), sentence("2", "A", "B")];
        let bags = build_onehop_bags(&s);
        assert_eq!(bags.len(), 1);
        assert_eq!(bags[&EntityPair::new("A", "B")].ids(), vec!["1", "2"]);

        let s = vec![sentence("1", "A", "B"), sentence("2", "B", "A")];
        assert_eq!(build_onehop_bags(&s).len(), 2);
    }

    #[test]
    fn onehop_bags_match_quadratic_grouping() {
        let pairs = [("A", "B"), ("B", "A"), ("A", "C"), ("D", "E")];
        let mut rng = seed::rng(3);
        let sentences: Vec<_> = (0..10)
            .map(|i| {
                let (h, t) = pairs[rand::Rng::gen_range(&mut rng, 0..pairs.len())];
                sentence(&i.to_string(), h, t)
            })
            .collect();
        let bags = build_onehop_bags(&sentences);
        // Oracle: for every sentence, scan all sentences for the same pair.
        for s in &sentences {
            let expected: Vec<&str> = sentences
                .iter()
                .filter(|o| o.head.entity_id == s.head.entity_id && o.tail.entity_id == s.tail.entity_id)
                .map(|o| o.id.as_str())
                .collect();
            assert_eq!(bags[&s.pair()].ids(), expected);
        }
        assert_eq!(bags.values().map(SentenceBag::len).sum::<usize>(), sentences.len());
    }

    fn labeled(n: usize) -> Vec<LabeledPair> {
        (0..n)
            .map(|i| LabeledPair {
                pair: EntityPair::new(format!("h{i}"), format!("t{i}")),
                relation: i % 3,
                split: Split::Train,
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let pairs = labeled(10);
        let (train, dev) = split_train_dev(&pairs, 0.2, 11).unwrap();
        assert_eq!((train.len(), dev.len()), (8, 2));
        assert_eq!(split_train_dev(&pairs, 0.2, 11).unwrap(), (train, dev));
        assert!(split_train_dev(&labeled(1), 0.2, 0).is_err());
        assert!(split_train_dev(&pairs, 0.0, 0).is_err());
        assert!(split_train_dev(&pairs, 1.0, 0).is_err());
    }

    #[test]
    fn different_seeds_give_different_dev_sets() {
        let pairs = labeled(100);
        let dev_a = split_train_dev(&pairs, 0.2, 1).unwrap().1;
        let dev_b = split_train_dev(&pairs, 0.2, 2).unwrap().1;
        // Oracle: rerunning each seed reproduces its own set.
        assert_eq!(dev_a, split_train_dev(&pairs, 0.2, 1).unwrap().1);
        assert_eq!(dev_b, split_train_dev(&pairs, 0.2, 2).unwrap().1);
        assert_eq!(dev_a.len(), 20);
        assert_ne!(dev_a, dev_b);
    }

    #[test]
    fn split_keeps_all_labels_of_a_pair_together() {
        let mut pairs = labeled(30);
        let extra: Vec<_> = pairs.iter().map(|l| LabeledPair { relation: 1, ..l.clone() }).collect();
        pairs.extend(extra);
        let (train, dev) = split_train_dev(&pairs, 0.3, 5).unwrap();
        let dev_pairs: HashSet<_> = dev.iter().map(|l| &l.pair).collect();
        assert!(train.iter().all(|l| !dev_pairs.contains(&l.pair)));
        assert_eq!(train.len() + dev.len(), pairs.len());
    }

    #[test]
    fn stats_match_hand_count() {
        // Three pairs, one non-NA. (A,B): 2 sentences; (A,C): 1; (D,E): 1.
        let s = vec![
            sentence("1", "A", "B"),
            sentence("2", "A", "B"),
            sentence("3", "A", "C"),
            sentence("4", "D", "E"),
        ];
        let onehop = build_onehop_bags(&s);
        let mut twohop = BagMap::new();
        twohop.insert(
            EntityPair::new("A", "B"),
            SentenceBag {
                pair: EntityPair::new("A", "B"),
                sentences: vec![s[2].clone(), s[3].clone()],
                kind: BagKind::TwoHop,
            },
        );
        let labels = vec![
            LabeledPair { pair: EntityPair::new("A", "B"), relation: 1, split: Split::Train },
            LabeledPair { pair: EntityPair::new("A", "C"), relation: 0, split: Split::Train },
            LabeledPair { pair: EntityPair::new("D", "E"), relation: 0, split: Split::Train },
        ];
        let stats = corpus_stats(&onehop, &twohop, &labels);
        assert_eq!(stats.overall.entity_pairs, 3);
        assert_eq!(stats.overall.pairs_with_twohop, 1);
        assert!((stats.overall.mean_onehop.unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(stats.overall.mean_twohop, Some(2.0));
        assert_eq!(stats.non_na.entity_pairs, 1);
        assert_eq!(stats.non_na.pct_with_twohop, Some(100.0));
        assert_eq!(stats.non_na.mean_onehop, Some(2.0));

        let empty = corpus_stats(&BagMap::new(), &BagMap::new(), &[]);
        assert_eq!(empty.overall.mean_onehop, None);
    }
}
