//! Ties the loaded corpus, the anchor index and the encoder vocabulary
//! together into model-ready examples.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::corpus::{
    build_onehop_bags, corpus_stats, load_labels, load_sentences_with, BagKind, BagMap, CorpusStats, EntityPair,
    LabeledPair, RelationVocabulary, SentenceBag, SentenceInstance, Split,
};
use crate::encoder::{Hyperparams, IndexedSentence, WordVocab};
use crate::error::Result;
use crate::tables::{expand_bag, AnchorIndex};

/// One labeled pair with its indexed 1-hop bag `S` and 2-hop bag `S^T`.
#[derive(Clone, Debug)]
pub struct Example {
    pub label: LabeledPair,
    pub onehop: Vec<Arc<IndexedSentence>>,
    pub twohop: Vec<Arc<IndexedSentence>>,
}

/// Sentences, relation labels and per-split 1-hop bags.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub relations: RelationVocabulary,
    pub sentences: Vec<Arc<SentenceInstance>>,
    /// Labels from the sentences, followed by any extra labels (deduplicated).
    pub labels: Vec<LabeledPair>,
    pub train_bags: BagMap,
    pub test_bags: BagMap,
}

impl Corpus {
    pub fn from_parts(
        relations: RelationVocabulary,
        sentences: Vec<SentenceInstance>,
        labels: Vec<LabeledPair>,
        extra_labels: Vec<LabeledPair>,
    ) -> Self {
        let sentences: Vec<Arc<SentenceInstance>> = sentences.into_iter().map(Arc::new).collect();
        let by_split = |split: Split| {
            let subset: Vec<_> = sentences.iter().filter(|s| s.split == split).cloned().collect();
            build_onehop_bags(&subset)
        };
        let train_bags = by_split(Split::Train);
        let test_bags = by_split(Split::Test);
        let mut seen = BTreeSet::new();
        let labels = labels
            .into_iter()
            .chain(extra_labels)
            .filter(|l| seen.insert(l.clone()))
            .collect();
        Self {
            relations,
            sentences,
            labels,
            train_bags,
            test_bags,
        }
    }

    /// Loads `relations.txt`, `sentences.jsonl` and, optionally, `labels.jsonl`.
    pub fn load(
        relations: impl AsRef<Path>,
        sentences: impl AsRef<Path>,
        labels: Option<&Path>,
        max_len: usize,
    ) -> Result<Self> {
        let vocab = RelationVocabulary::load(relations)?;
        let (sents, sent_labels) = load_sentences_with(sentences, &vocab, max_len)?;
        let extra = match labels {
            Some(p) => load_labels(p, &vocab)?,
            None => Vec::new(),
        };
        Ok(Self::from_parts(vocab, sents, sent_labels, extra))
    }

    pub fn bags(&self, split: Split) -> &BagMap {
        match split {
            Split::Train => &self.train_bags,
            Split::Test => &self.test_bags,
        }
    }

    pub fn labels_of(&self, split: Split) -> Vec<LabeledPair> {
        self.labels.iter().filter(|l| l.split == split).cloned().collect()
    }

    /// Encoder vocabulary over training sentences.
    pub fn word_vocab(&self, min_count: usize) -> WordVocab {
        WordVocab::from_sentences(
            self.sentences
                .iter()
                .filter(|s| s.split == Split::Train)
                .map(|s| s.as_ref()),
            min_count,
        )
    }

    /// 2-hop bags for the distinct pairs of `labels`; empty bags are omitted.
    pub fn twohop_bags(&self, labels: &[LabeledPair], index: &AnchorIndex, cap: usize, seed: u64) -> Result<BagMap> {
        let pairs: BTreeSet<&EntityPair> = labels.iter().map(|l| &l.pair).collect();
        let pairs: Vec<&EntityPair> = pairs.into_iter().collect();
        let bags: Vec<SentenceBag> = pairs
            .par_iter()
            .map(|p| expand_bag(p, index, &self.train_bags, cap, seed))
            .collect::<Result<_>>()?;
        Ok(bags
            .into_iter()
            .filter(|b| !b.is_empty())
            .map(|b| (b.pair.clone(), b))
            .collect())
    }

    /// Bag-size statistics for one split.
    pub fn stats(&self, split: Split, index: &AnchorIndex, cap: usize, seed: u64) -> Result<CorpusStats> {
        let labels = self.labels_of(split);
        let twohop = self.twohop_bags(&labels, index, cap, seed)?;
        Ok(corpus_stats(self.bags(split), &twohop, &labels))
    }
}

/// Builds [`Example`]s, indexing each sentence once.
pub struct ExampleBuilder<'a> {
    corpus: &'a Corpus,
    indexed: HashMap<&'a str, Arc<IndexedSentence>>,
}

impl<'a> ExampleBuilder<'a> {
    pub fn new(corpus: &'a Corpus, vocab: &WordVocab, hp: &Hyperparams) -> Result<Self> {
        let indexed: Vec<(&str, Arc<IndexedSentence>)> = corpus
            .sentences
            .par_iter()
            .map(|s| Ok((s.id.as_str(), Arc::new(IndexedSentence::new(s, vocab, hp)?))))
            .collect::<Result<_>>()?;
        Ok(Self {
            corpus,
            indexed: indexed.into_iter().collect(),
        })
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    fn index_bag(&self, bag: Option<&SentenceBag>) -> Vec<Arc<IndexedSentence>> {
        bag.map(|b| b.sentences.iter().map(|s| Arc::clone(&self.indexed[s.id.as_str()])).collect())
            .unwrap_or_default()
    }

    /// `S` comes from the label's split; `S^T` is expanded over training bags
    /// when `twohop` is given as `(index, cap, seed)`.
    pub fn example(&self, label: &LabeledPair, twohop: Option<(&AnchorIndex, usize, u64)>) -> Result<Example> {
        let onehop = self.index_bag(self.corpus.bags(label.split).get(&label.pair));
        let twohop = match twohop {
            Some((index, cap, seed)) => {
                let bag = expand_bag(&label.pair, index, &self.corpus.train_bags, cap, seed)?;
                debug_assert_eq!(bag.kind, BagKind::TwoHop);
                self.index_bag(Some(&bag))
            }
            None => Vec::new(),
        };
        Ok(Example {
            label: label.clone(),
            onehop,
            twohop,
        })
    }

    pub fn examples(&self, labels: &[LabeledPair], twohop: Option<(&AnchorIndex, usize, u64)>) -> Result<Vec<Example>> {
        labels.par_iter().map(|l| self.example(l, twohop)).collect()
    }
}
