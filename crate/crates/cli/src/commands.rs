use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use twohop::aggregation::predict_pair;
use twohop::corpus::{split_train_dev, EntityPair, LabeledPair, Split, NA_INDEX};
use twohop::dataset::{Corpus, ExampleBuilder};
use twohop::encoder::{load_word_embeddings, WordVocab};
use twohop::evaluation::{collect_pairs, evaluate, predictions_to_jsonl, TestMode};
use twohop::seed;
use twohop::synthgen::generate;
use twohop::tables::{build_anchor_index, load_entity_map, load_tables, AnchorIndex};
use twohop::training::{
    load_checkpoint, log_to_csv, phase_examples, save_checkpoint, train_phase, CheckpointMeta, ModelParams, Phase,
};

use crate::config::{require, RunConfig};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let (relations, sentences) = (cfg.relations_path(), cfg.sentences_path());
    require(&relations, "relation list")?;
    require(&sentences, "sentence file")?;
    let labels = cfg.labels_path();
    if let Some(p) = &labels {
        require(p, "label file")?;
    }
    Ok(Corpus::load(&relations, &sentences, labels.as_deref(), cfg.hyperparams.max_len)?)
}

fn build_from_tables(cfg: &RunConfig) -> Result<AnchorIndex> {
    let tables = cfg.tables_path();
    require(&tables, "table file")?;
    let map = match &cfg.entity_map {
        Some(p) => {
            require(p, "entity map")?;
            Some(load_entity_map(p)?)
        }
        None => None,
    };
    let tables = load_tables(&tables, map.as_ref())?;
    Ok(build_anchor_index(&tables, cfg.ne_threshold))
}

/// The saved index when present, otherwise one built from the tables.
fn load_index(cfg: &RunConfig) -> Result<AnchorIndex> {
    let path = cfg.index_path();
    if path.exists() {
        Ok(AnchorIndex::load(&path)?)
    } else {
        build_from_tables(cfg)
    }
}

fn split(cfg: &RunConfig, corpus: &Corpus) -> Result<(Vec<LabeledPair>, Vec<LabeledPair>)> {
    let train = corpus.labels_of(Split::Train);
    Ok(split_train_dev(&train, cfg.dev_fraction, seed::derive(cfg.seed, "dev"))?)
}

fn load_model(cfg: &RunConfig, phase: Phase, corpus: &Corpus) -> Result<(ModelParams, WordVocab)> {
    let dir = cfg.checkpoint_path(phase);
    require(&dir, "checkpoint")?;
    let (params, vocab, meta) = load_checkpoint(&dir)?;
    if meta.relations != corpus.relations.names() {
        bail!("checkpoint {} was trained with a different relation list", dir.display());
    }
    Ok((params, vocab))
}

pub fn synth(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let dir = out.map_or_else(|| cfg.data_dir.clone(), Path::to_path_buf);
    let corpus = generate(&cfg.synth)?;
    corpus.write(&dir)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        dir: &'a Path,
        relations: usize,
        sentences: usize,
        tables: usize,
        labeled_pairs: usize,
    }
    print_json(&Summary {
        dir: &dir,
        relations: corpus.relations.len(),
        sentences: corpus.sentences.len(),
        tables: corpus.tables.len(),
        labeled_pairs: corpus.labels.len(),
    })
}

pub fn build_index(cfg: &RunConfig) -> Result<()> {
    let index = build_from_tables(cfg)?;
    let path = cfg.index_path();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    index.save(&path)?;
    print_json(&serde_json::json!({ "index": path, "pairs": index.len() }))
}

pub fn expand(cfg: &RunConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        head: &'a str,
        tail: &'a str,
        split: Split,
        onehop: usize,
        twohop: usize,
    }
    let corpus = load_corpus(cfg)?;
    let index = load_index(cfg)?;
    let mut rows = String::new();
    let mut stats = BTreeMap::new();
    for (name, split) in [("train", Split::Train), ("test", Split::Test)] {
        let labels = corpus.labels_of(split);
        let twohop = corpus.twohop_bags(&labels, &index, cfg.cap, cfg.seed)?;
        let mut pairs: Vec<&EntityPair> = labels.iter().map(|l| &l.pair).collect();
        pairs.sort();
        pairs.dedup();
        for pair in pairs {
            let row = Row {
                head: &pair.head,
                tail: &pair.tail,
                split,
                onehop: corpus.bags(split).get(pair).map_or(0, |b| b.len()),
                twohop: twohop.get(pair).map_or(0, |b| b.len()),
            };
            rows.push_str(&serde_json::to_string(&row)?);
            rows.push('\n');
        }
        stats.insert(name, twohop::corpus::corpus_stats(corpus.bags(split), &twohop, &labels));
    }
    write(&cfg.output_dir.join("expand.jsonl"), rows)?;
    let json = serde_json::to_string_pretty(&stats)?;
    write(&cfg.output_dir.join("expand_stats.json"), &json)?;
    println!("{json}");
    Ok(())
}

pub fn train(cfg: &RunConfig, phase: Phase) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let n_rel = corpus.relations.len();
    let (start, vocab, twohop_index, train_cfg) = match phase {
        Phase::Pretrain => {
            let (vocab, params) = match &cfg.embeddings {
                Some(p) => {
                    require(p, "embedding file")?;
                    let (vocab, table) =
                        load_word_embeddings(p, cfg.hyperparams.word_dim, &mut seed::rng_for(cfg.seed, "unk"))?;
                    let params = ModelParams::with_word_table(
                        cfg.hyperparams,
                        table,
                        n_rel,
                        &mut seed::rng_for(cfg.seed, "init"),
                    )?;
                    (vocab, params)
                }
                None => {
                    let vocab = corpus.word_vocab(cfg.min_count);
                    let params =
                        ModelParams::init(cfg.hyperparams, vocab.len(), n_rel, &mut seed::rng_for(cfg.seed, "init"))?;
                    (vocab, params)
                }
            };
            (params, vocab, None, &cfg.pretrain)
        }
        Phase::Finetune => {
            let (mut params, vocab) = load_model(cfg, Phase::Pretrain, &corpus)?;
            params.reset_gate(&mut seed::rng_for(cfg.seed, "gate-init"));
            (params, vocab, Some(load_index(cfg)?), &cfg.finetune)
        }
    };
    let builder = ExampleBuilder::new(&corpus, &vocab, &start.hp)?;
    let (train, dev) = split(cfg, &corpus)?;
    let twohop = twohop_index.as_ref().map(|i| (i, cfg.cap, cfg.seed));
    let (train_ex, dev_ex) = phase_examples(&builder, &train, &dev, twohop)?;
    if train_ex.is_empty() {
        bail!("no training pair has a usable sentence bag");
    }
    let mut log = Vec::new();
    let params = train_phase(&train_ex, &dev_ex, start, train_cfg, &mut log)?;
    let dir = cfg.checkpoint_path(phase);
    let meta = CheckpointMeta {
        relations: corpus.relations.names().to_vec(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
    };
    save_checkpoint(&dir, &params, &vocab, &meta)?;
    write(&cfg.output_dir.join(format!("train_log_{}.csv", phase.as_str())), log_to_csv(&log))?;
    let last = log.last();
    print_json(&serde_json::json!({
        "phase": phase,
        "checkpoint": dir,
        "epochs": log.len(),
        "train_examples": train_ex.len(),
        "dev_examples": dev_ex.len(),
        "final_train_loss": last.map(|r| r.train_loss),
        "best_dev_loss": log.iter().filter_map(|r| r.dev_loss).reduce(f64::min),
    }))
}

pub fn eval(cfg: &RunConfig, mode: TestMode, phase: Phase) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let (params, vocab) = load_model(cfg, phase, &corpus)?;
    let index = match phase {
        Phase::Pretrain => None,
        Phase::Finetune => Some(load_index(cfg)?),
    };
    let builder = ExampleBuilder::new(&corpus, &vocab, &params.hp)?;
    let test = corpus.labels_of(Split::Test);
    let pairs = collect_pairs(&builder, &test, index.as_ref().map(|i| (i, cfg.cap, cfg.seed)))?;
    let outcome = evaluate(&pairs, &test, &params, mode)
        .with_context(|| format!("evaluating mode {mode} with the {} checkpoint", phase.as_str()))?;
    let stem = format!("eval_{}_{}", phase.as_str(), mode.name());
    let json = serde_json::to_string_pretty(&outcome.report)?;
    write(&cfg.output_dir.join(format!("{stem}.json")), &json)?;
    write(&cfg.output_dir.join(format!("{stem}_pr.csv")), outcome.curve.to_csv())?;
    write(
        &cfg.output_dir.join(format!("{stem}_predictions.jsonl")),
        predictions_to_jsonl(&outcome.ranked, &corpus.relations),
    )?;
    println!("{json}");
    Ok(())
}

#[derive(Deserialize)]
struct PairQuery {
    head: String,
    tail: String,
}

fn read_pairs(path: &Path) -> Result<Vec<EntityPair>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let q: PairQuery =
                serde_json::from_str(line).with_context(|| format!("{}:{}: invalid pair", path.display(), i + 1))?;
            Ok(EntityPair::new(q.head, q.tail))
        })
        .collect()
}

pub fn predict(cfg: &RunConfig, pairs: Option<PathBuf>, phase: Phase) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        head: &'a str,
        tail: &'a str,
        onehop: usize,
        twohop: usize,
        /// Relation → probability; absent when both bags are empty.
        scores: Option<BTreeMap<&'a str, f64>>,
    }
    let Some(path) = pairs.or_else(|| cfg.pairs.clone()) else {
        bail!("predict needs a pair file (--pairs or the `pairs` config key)");
    };
    require(&path, "pair file")?;
    let queries = read_pairs(&path)?;
    let corpus = load_corpus(cfg)?;
    let (params, vocab) = load_model(cfg, phase, &corpus)?;
    let index = match phase {
        Phase::Pretrain => None,
        Phase::Finetune => Some(load_index(cfg)?),
    };
    let builder = ExampleBuilder::new(&corpus, &vocab, &params.hp)?;
    let mut out = String::new();
    for pair in &queries {
        // Sentences of the pair come from whichever split mentions it.
        let split = if corpus.test_bags.contains_key(pair) { Split::Test } else { Split::Train };
        let label = LabeledPair {
            pair: pair.clone(),
            relation: NA_INDEX,
            split,
        };
        let ex = builder.example(&label, index.as_ref().map(|i| (i, cfg.cap, cfg.seed)))?;
        let scores = if ex.onehop.is_empty() && ex.twohop.is_empty() {
            None
        } else {
            let probs = predict_pair(&ex.onehop, &ex.twohop, &params)?;
            Some(
                probs
                    .iter()
                    .enumerate()
                    .filter(|&(r, _)| r != NA_INDEX)
                    .map(|(r, &p)| (corpus.relations.name(r), p))
                    .collect(),
            )
        };
        let row = Row {
            head: &pair.head,
            tail: &pair.tail,
            onehop: ex.onehop.len(),
            twohop: ex.twohop.len(),
            scores,
        };
        out.push_str(&serde_json::to_string(&row)?);
        out.push('\n');
    }
    let dest = cfg.output_dir.join(format!("predict_{}.jsonl", phase.as_str()));
    write(&dest, &out)?;
    print_json(&serde_json::json!({ "pairs": queries.len(), "output": dest }))
}
