//! Objective, exact gradients, mini-batch SGD and the two-phase schedule:
//! pretrain encoder and relation matrix on 1-hop bags, then fine-tune with
//! the 2-hop bag and the gate.

mod checkpoint;
mod objective;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, TensorEntry, CHECKPOINT_DTYPE};
pub use objective::{
    compute_gradients, compute_loss, evaluate_loss, gradients_with_masks, loss_with_masks, DropoutMasks,
};
pub use params::{Freeze, Gradients, ModelParams, TENSOR_NAMES};

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledPair;
use crate::dataset::{Example, ExampleBuilder};
use crate::error::{Error, Result};
use crate::seed;
use crate::tables::AnchorIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub phase: Phase,
    pub learning_rate: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Maximum 2-hop bag size.
    pub cap: usize,
    /// Stop after this many epochs without a dev-loss improvement.
    pub patience: Option<usize>,
    pub freeze_words: bool,
    pub freeze_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::pretrain()
    }
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        Self {
            phase: Phase::Pretrain,
            learning_rate: 0.005,
            dropout: 0.5,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            cap: 300,
            patience: None,
            freeze_words: false,
            freeze_encoder: false,
        }
    }

    pub fn finetune() -> Self {
        Self {
            phase: Phase::Finetune,
            learning_rate: 0.002,
            epochs: 50,
            ..Self::pretrain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.cap == 0 {
            return bad("2-hop bag cap must be at least 1");
        }
        Ok(())
    }

    fn freeze(&self) -> Freeze {
        Freeze {
            words: self.freeze_words,
            encoder: self.freeze_encoder,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
    pub wall_seconds: f64,
}

/// `epoch,phase,train_loss,dev_loss,wall_seconds`
pub fn log_to_csv(log: &[LogRecord]) -> String {
    let mut out = String::from("epoch,phase,train_loss,dev_loss,wall_seconds\n");
    for r in log {
        let dev = r.dev_loss.map(|d| d.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3}",
            r.epoch,
            r.phase.as_str(),
            r.train_loss,
            dev,
            r.wall_seconds
        );
    }
    out
}

/// One pass over `examples` in a seeded shuffled order. Returns the mean
/// batch loss.
pub fn sgd_epoch(examples: &[Example], params: &mut ModelParams, cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let epoch_seed = seed::derive_n(seed::derive(cfg.seed, cfg.phase.as_str()), epoch as u64);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut seed::rng_for(epoch_seed, "shuffle"));
    let mut dropout_rng = seed::rng_for(epoch_seed, "dropout");
    let mut total = 0.0;
    let mut n = 0usize;
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
        let (loss, grads) = compute_gradients(&batch, params, cfg, &mut dropout_rng)?;
        params.apply_gradients(&grads, cfg.learning_rate, cfg.freeze());
        total += loss;
        n += 1;
    }
    Ok(total / n as f64)
}

/// Trains for `cfg.epochs` epochs and returns the parameters with the lowest
/// dev loss (the last epoch's when `dev` is empty). Appends to `log`.
pub fn train_phase(
    train: &[Example],
    dev: &[Example],
    mut params: ModelParams,
    cfg: &TrainConfig,
    log: &mut Vec<LogRecord>,
) -> Result<ModelParams> {
    cfg.validate()?;
    let start = Instant::now();
    let dev_refs: Vec<&Example> = dev.iter().collect();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0usize;
    for epoch in 1..=cfg.epochs {
        let train_loss = sgd_epoch(train, &mut params, cfg, epoch)?;
        let dev_loss = if dev.is_empty() {
            None
        } else {
            Some(evaluate_loss(&dev_refs, &params, cfg.phase)?)
        };
        log.push(LogRecord {
            epoch,
            phase: cfg.phase,
            train_loss,
            dev_loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(d) = dev_loss {
            if best.as_ref().is_none_or(|(b, _)| d < *b) {
                best = Some((d, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience.is_some_and(|p| since_best >= p) {
                    break;
                }
            }
        }
    }
    Ok(best.map_or(params, |(_, p)| p))
}

pub struct TwoPhaseOutcome {
    pub pretrained: ModelParams,
    pub finetuned: ModelParams,
    pub log: Vec<LogRecord>,
}

/// Phase 1 on 1-hop bags (pairs with an empty bag are skipped), then phase 2
/// from the phase-1 checkpoint with a freshly initialised gate.
pub fn run_two_phase(
    builder: &ExampleBuilder<'_>,
    train: &[LabeledPair],
    dev: &[LabeledPair],
    index: Option<&AnchorIndex>,
    init: ModelParams,
    cfg_pre: &TrainConfig,
    cfg_fine: &TrainConfig,
) -> Result<TwoPhaseOutcome> {
    let index = index.ok_or_else(|| Error::Config("fine-tuning needs an anchor index".into()))?;
    let mut log = Vec::new();
    let (pre_train, pre_dev) = phase_examples(builder, train, dev, None)?;
    let pretrained = train_phase(&pre_train, &pre_dev, init, cfg_pre, &mut log)?;
    let (fine_train, fine_dev) = phase_examples(builder, train, dev, Some((index, cfg_fine.cap, cfg_fine.seed)))?;
    let mut start = pretrained.clone();
    start.reset_gate(&mut seed::rng_for(cfg_fine.seed, "gate-init"));
    let finetuned = train_phase(&fine_train, &fine_dev, start, cfg_fine, &mut log)?;
    Ok(TwoPhaseOutcome {
        pretrained,
        finetuned,
        log,
    })
}

/// Train and dev examples for one phase, keeping only pairs with a usable bag.
pub fn phase_examples(
    builder: &ExampleBuilder<'_>,
    train: &[LabeledPair],
    dev: &[LabeledPair],
    twohop: Option<(&AnchorIndex, usize, u64)>,
) -> Result<(Vec<Example>, Vec<Example>)> {
    let usable = |labels: &[LabeledPair]| -> Result<Vec<Example>> {
        Ok(builder
            .examples(labels, twohop)?
            .into_iter()
            .filter(|e| !e.onehop.is_empty() || !e.twohop.is_empty())
            .collect())
    };
    Ok((usable(train)?, usable(dev)?))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::corpus::{EntityPair, MentionSpan, SentenceInstance, Split};
    use crate::encoder::{Hyperparams, IndexedSentence, WordVocab};

    pub(crate) fn tiny_hp() -> Hyperparams {
        Hyperparams {
            window: 3,
            filters: 3,
            word_dim: 4,
            pos_dim: 2,
            pos_clip: 10,
            max_len: 20,
        }
    }

    fn indexed(tokens: &[&str], vocab: &WordVocab, hp: &Hyperparams) -> Arc<IndexedSentence> {
        let s = SentenceInstance {
            id: "s".into(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            head: MentionSpan {
                entity_id: "h".into(),
                start: 0,
                end: 1,
            },
            tail: MentionSpan {
                entity_id: "t".into(),
                start: tokens.len() - 1,
                end: tokens.len(),
            },
            split: Split::Train,
        };
        Arc::new(IndexedSentence::new(&s, vocab, hp).unwrap())
    }

    pub(crate) fn toy_examples(hp: &Hyperparams) -> (WordVocab, Vec<Example>) {
        let vocab = WordVocab::from_words(["h", "t", "born", "in", "works", "for", "near"].map(String::from));
        let mk = |rel: usize, s: &[&[&str]], t: &[&[&str]]| Example {
            label: LabeledPair {
                pair: EntityPair::new("h", "t"),
                relation: rel,
                split: Split::Train,
            },
            onehop: s.iter().map(|x| indexed(x, &vocab, hp)).collect(),
            twohop: t.iter().map(|x| indexed(x, &vocab, hp)).collect(),
        };
        let exs = vec![
            mk(1, &[&["h", "born", "in", "t"]], &[&["h", "near", "t"]]),
            mk(2, &[&["h", "works", "for", "t"], &["h", "for", "t"]], &[]),
            mk(0, &[&["h", "near", "t"]], &[&["h", "born", "t"], &["h", "in", "t"]]),
            mk(1, &[], &[&["h", "born", "in", "t"]]),
        ];
        (vocab, exs)
    }

    fn finite_difference_max_error(phase: Phase, masks: bool) -> f64 {
        let hp = tiny_hp();
        let (vocab, exs) = toy_examples(&hp);
        let exs: Vec<&Example> = match phase {
            Phase::Pretrain => exs.iter().filter(|e| !e.onehop.is_empty()).collect(),
            Phase::Finetune => exs.iter().collect(),
        };
        let mut params = ModelParams::init(hp, vocab.len(), 3, &mut seed::rng(11)).unwrap();
        let masks = if masks {
            DropoutMasks::sample(exs.len(), hp.sentence_dim(), 0.5, &mut seed::rng(12))
        } else {
            DropoutMasks::identity(exs.len())
        };
        let (_, grads) = gradients_with_masks(&exs, &params, phase, &masks, true).unwrap();
        let dense = grads.dense(&params);
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for (t, (_, grad)) in dense.iter().enumerate() {
            for (i, &analytic) in grad.iter().enumerate() {
                let orig = params.tensors_mut()[t].1[i];
                params.tensors_mut()[t].1[i] = orig + eps;
                let up = loss_with_masks(&exs, &params, phase, &masks).unwrap();
                params.tensors_mut()[t].1[i] = orig - eps;
                let down = loss_with_masks(&exs, &params, phase, &masks).unwrap();
                params.tensors_mut()[t].1[i] = orig;
                let numeric = (up - down) / (2.0 * eps);
                worst = worst.max((numeric - analytic).abs());
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for phase in [Phase::Pretrain, Phase::Finetune] {
            for masks in [false, true] {
                let err = finite_difference_max_error(phase, masks);
                assert!(err < 1e-8, "{phase:?} masks={masks}: {err}");
            }
        }
    }

    #[test]
    fn pretraining_ignores_twohop_and_rejects_empty_onehop() {
        let hp = tiny_hp();
        let (vocab, exs) = toy_examples(&hp);
        let params = ModelParams::init(hp, vocab.len(), 3, &mut seed::rng(1)).unwrap();
        let mut stripped = exs[0].clone();
        stripped.twohop.clear();
        let a = evaluate_loss(&[&exs[0]], &params, Phase::Pretrain).unwrap();
        let b = evaluate_loss(&[&stripped], &params, Phase::Pretrain).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            evaluate_loss(&[&exs[3]], &params, Phase::Pretrain),
            Err(Error::EmptyBag(_))
        ));
        assert!(matches!(evaluate_loss(&[], &params, Phase::Pretrain), Err(Error::EmptyBatch)));
    }

    #[test]
    fn pretraining_leaves_gate_untouched() {
        let hp = tiny_hp();
        let (vocab, exs) = toy_examples(&hp);
        let exs: Vec<&Example> = exs.iter().take(3).collect();
        let params = ModelParams::init(hp, vocab.len(), 3, &mut seed::rng(1)).unwrap();
        let (_, g) = gradients_with_masks(&exs, &params, Phase::Pretrain, &DropoutMasks::identity(3), true).unwrap();
        assert!(g.gate_weights.iter().all(|&x| x == 0.0));
        assert_eq!(g.gate_bias, 0.0);
    }

    #[test]
    fn pad_rows_never_change() {
        let hp = tiny_hp();
        let (vocab, exs) = toy_examples(&hp);
        let mut params = ModelParams::init(hp, vocab.len(), 3, &mut seed::rng(3)).unwrap();
        let cfg = TrainConfig {
            phase: Phase::Finetune,
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::finetune()
        };
        for e in 1..=3 {
            sgd_epoch(&exs, &mut params, &cfg, e).unwrap();
        }
        assert!(params.embeddings.word.row(crate::encoder::PAD_ID).iter().all(|&x| x == 0.0));
        assert!(params.embeddings.pos_head.row(hp.pos_pad_row()).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn training_lowers_loss_and_is_deterministic() {
        let hp = tiny_hp();
        let (vocab, exs) = toy_examples(&hp);
        let init = ModelParams::init(hp, vocab.len(), 3, &mut seed::rng(5)).unwrap();
        let cfg = TrainConfig {
            phase: Phase::Finetune,
            learning_rate: 0.5,
            dropout: 0.0,
            epochs: 40,
            batch_size: 2,
            ..TrainConfig::finetune()
        };
        let refs: Vec<&Example> = exs.iter().collect();
        let before = evaluate_loss(&refs, &init, Phase::Finetune).unwrap();
        let mut log = Vec::new();
        let a = train_phase(&exs, &exs, init.clone(), &cfg, &mut log).unwrap();
        let after = evaluate_loss(&refs, &a, Phase::Finetune).unwrap();
        assert!(after < before * 0.5, "{before} -> {after}");
        assert_eq!(log.len(), 40);
        let b = train_phase(&exs, &exs, init, &cfg, &mut Vec::new()).unwrap();
        assert_eq!(a, b);
        assert!(log_to_csv(&log).starts_with("epoch,phase,train_loss,dev_loss,wall_seconds\n1,finetune,"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::pretrain().validate().is_ok());
        for bad in [
            TrainConfig { dropout: 1.0, ..TrainConfig::pretrain() },
            TrainConfig { batch_size: 0, ..TrainConfig::pretrain() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::pretrain() },
            TrainConfig { cap: 0, ..TrainConfig::pretrain() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        let f = TrainConfig::finetune();
        assert_eq!((f.learning_rate, f.epochs, f.dropout, f.batch_size), (0.002, 50, 0.5, 64));
    }
}
