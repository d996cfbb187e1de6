//! Scaled-down end-to-end run on a synthetic corpus: two-phase training, then
//! held-out evaluation of the 1-hop-only and the 2-hop model.

use std::time::Instant;

use twohop::corpus::{split_train_dev, Split, NA_INDEX};
use twohop::dataset::{Corpus, ExampleBuilder};
use twohop::encoder::{Hyperparams, WordVocab};
use twohop::evaluation::{collect_pairs, evaluate, TestMode};
use twohop::seed;
use twohop::synthgen::{generate, SynthConfig, SynthCorpus};
use twohop::tables::{build_anchor_index, AnchorIndex, DEFAULT_NE_THRESHOLD};
use twohop::training::{phase_examples, train_phase, ModelParams, Phase, TrainConfig};

pub struct Setup {
    pub synth: SynthCorpus,
    pub corpus: Corpus,
    pub index: AnchorIndex,
    pub vocab: WordVocab,
    pub hp: Hyperparams,
    pub seed: u64,
}

/// Encoder sized for a single CPU core.
pub fn desk_hyperparams() -> Hyperparams {
    Hyperparams {
        window: 3,
        filters: 32,
        word_dim: 16,
        pos_dim: 4,
        pos_clip: 30,
        max_len: 120,
    }
}

/// 20 relations plus NA, 2400 pairs, half of them single-sentence, noise 0.3.
pub fn desk_synth_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        ..SynthConfig::default()
    }
}

pub fn desk_train_configs(seed: u64) -> (TrainConfig, TrainConfig) {
    let pre = TrainConfig {
        phase: Phase::Pretrain,
        learning_rate: 0.2,
        dropout: 0.5,
        epochs: 30,
        batch_size: 32,
        seed,
        ..TrainConfig::pretrain()
    };
    let fine = TrainConfig {
        phase: Phase::Finetune,
        learning_rate: 0.1,
        epochs: 8,
        ..pre.clone()
    };
    (pre, fine)
}

impl Setup {
    pub fn new(cfg: &SynthConfig, hp: Hyperparams) -> Self {
        let synth = generate(cfg).expect("synthetic corpus");
        let corpus = synth.to_corpus();
        let index = build_anchor_index(&synth.tables, DEFAULT_NE_THRESHOLD);
        let vocab = corpus.word_vocab(1);
        Self {
            synth,
            corpus,
            index,
            vocab,
            hp,
            seed: cfg.seed,
        }
    }

    /// Share of non-NA labeled pairs that have exactly one sentence.
    pub fn single_sentence_share(&self) -> f64 {
        let non_na: Vec<_> = self.corpus.labels.iter().filter(|l| l.relation != NA_INDEX).collect();
        let singles = non_na
            .iter()
            .filter(|l| self.corpus.bags(l.split).get(&l.pair).is_some_and(|b| b.len() == 1))
            .count();
        singles as f64 / non_na.len().max(1) as f64
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// OVERALL AUC of the phase-1 model on 1-hop bags.
    pub pre_auc: f64,
    /// OVERALL AUC of the model fine-tuned with the last cap.
    pub fine_auc: f64,
    /// EMPTY_ONEHOP AUC of the model fine-tuned with the last cap.
    pub empty_auc: f64,
    /// `(cap, OVERALL AUC)` of a model fine-tuned and evaluated with that cap.
    pub cap_aucs: Vec<(usize, f64)>,
    pub seconds: f64,
}

/// Pretrains once, then fine-tunes from that model once per cap; the cap
/// bounds the 2-hop bags in both training and evaluation.
pub fn run(setup: &Setup, pre_cfg: &TrainConfig, fine_cfg: &TrainConfig, caps: &[usize]) -> RunResult {
    let start = Instant::now();
    let builder = ExampleBuilder::new(&setup.corpus, &setup.vocab, &setup.hp).expect("builder");
    let train_labels = setup.corpus.labels_of(Split::Train);
    let test_labels = setup.corpus.labels_of(Split::Test);
    let (train, dev) = split_train_dev(&train_labels, 0.1, seed::derive(setup.seed, "dev")).expect("split");
    let n_rel = setup.corpus.relations.len();
    let init = ModelParams::init(setup.hp, setup.vocab.len(), n_rel, &mut seed::rng_for(setup.seed, "init")).expect("init");

    let mut log = Vec::new();
    let (pre_train, pre_dev) = phase_examples(&builder, &train, &dev, None).expect("examples");
    let pretrained = train_phase(&pre_train, &pre_dev, init, pre_cfg, &mut log).expect("pretrain");
    let onehop_pairs = collect_pairs(&builder, &test_labels, None).expect("pairs");
    let pre_auc = evaluate(&onehop_pairs, &test_labels, &pretrained, TestMode::Overall)
        .expect("eval")
        .report
        .auc;

    let mut cap_aucs = Vec::new();
    let mut empty_auc = f64::NAN;
    for &cap in caps {
        let cfg = TrainConfig { cap, ..fine_cfg.clone() };
        let twohop = Some((&setup.index, cap, setup.seed));
        let (fine_train, fine_dev) = phase_examples(&builder, &train, &dev, twohop).expect("examples");
        let mut start_params = pretrained.clone();
        start_params.reset_gate(&mut seed::rng_for(cfg.seed, "gate-init"));
        let finetuned = train_phase(&fine_train, &fine_dev, start_params, &cfg, &mut log).expect("finetune");
        let pairs = collect_pairs(&builder, &test_labels, twohop).expect("pairs");
        let auc = evaluate(&pairs, &test_labels, &finetuned, TestMode::Overall).expect("eval").report.auc;
        cap_aucs.push((cap, auc));
        empty_auc = evaluate(&pairs, &test_labels, &finetuned, TestMode::EmptyOnehop)
            .expect("eval")
            .report
            .auc;
    }
    RunResult {
        pre_auc,
        fine_auc: cap_aucs.last().map_or(f64::NAN, |&(_, a)| a),
        empty_auc,
        cap_aucs,
        seconds: start.elapsed().as_secs_f64(),
    }
}
