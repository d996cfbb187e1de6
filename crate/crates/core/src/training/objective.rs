//! Cross-entropy objective over labeled pairs and its exact gradient.

use rand::Rng;
use rayon::prelude::*;

use super::{Gradients, ModelParams, Phase, TrainConfig};
use crate::aggregation::{attention_backward, fuse_backward, fuse_bags, score_relations, selective_attention};
use crate::dataset::Example;
use crate::encoder::{encode, encode_backward, EncodedSentence};
use crate::error::{Error, Result};
use crate::tensor::axpy;

/// Examples per work unit when gradients are computed in parallel. Partial
/// sums are combined in chunk order, so results do not depend on threads.
const CHUNK: usize = 4;

/// Inverted-dropout masks on the fused representation, one per example.
/// `None` means identity.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks(pub Vec<Option<Vec<f64>>>);

impl DropoutMasks {
    pub fn identity(n: usize) -> Self {
        Self(vec![None; n])
    }

    /// Keeps each coordinate with probability `1 − p`, scaling kept ones by
    /// `1/(1 − p)`. Draws nothing when `p = 0`.
    pub fn sample<R: Rng + ?Sized>(n: usize, dim: usize, p: f64, rng: &mut R) -> Self {
        if p <= 0.0 {
            return Self::identity(n);
        }
        let keep = 1.0 / (1.0 - p);
        Self(
            (0..n)
                .map(|_| Some((0..dim).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()))
                .collect(),
        )
    }
}

fn log_softmax_at(scores: &[f64], k: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores[k] - lse
}

/// Loss of one example; with `grads`, also accumulates `scale · ∂loss/∂θ`.
fn example_objective(
    ex: &Example,
    params: &ModelParams,
    phase: Phase,
    mask: Option<&[f64]>,
    grads: Option<(&mut Gradients, f64, bool)>,
) -> Result<f64> {
    let gold = ex.label.relation;
    if gold >= params.n_relations() {
        return Err(Error::Dimension(format!("relation {gold} outside the relation matrix")));
    }
    let use_twohop = phase == Phase::Finetune && !ex.twohop.is_empty();
    if ex.onehop.is_empty() && !use_twohop {
        return Err(Error::EmptyBag(match phase {
            Phase::Pretrain => "pretraining needs a nonempty 1-hop bag",
            Phase::Finetune => "fine-tuning needs a nonempty 1-hop or 2-hop bag",
        }));
    }
    let q = params.relations.query(gold);
    let encode_bag = |bag: &[std::sync::Arc<crate::encoder::IndexedSentence>]| -> Result<Vec<EncodedSentence>> {
        bag.iter().map(|s| encode(s, &params.embeddings, &params.conv)).collect()
    };
    let enc_s = encode_bag(&ex.onehop)?;
    let enc_t = if use_twohop { encode_bag(&ex.twohop)? } else { Vec::new() };
    let reps_s: Vec<&[f64]> = enc_s.iter().map(|e| e.rep.as_slice()).collect();
    let reps_t: Vec<&[f64]> = enc_t.iter().map(|e| e.rep.as_slice()).collect();

    let bag_s = (!reps_s.is_empty()).then(|| selective_attention(&reps_s, q)).transpose()?;
    let bag_t = (!reps_t.is_empty()).then(|| selective_attention(&reps_t, q)).transpose()?;
    let fused = fuse_bags(
        bag_s.as_ref().map(|b| b.vector.as_slice()),
        bag_t.as_ref().map(|b| b.vector.as_slice()),
        q,
        &params.gate,
    )?;
    let r: Vec<f64> = match mask {
        Some(m) => fused.vector.iter().zip(m).map(|(x, k)| x * k).collect(),
        None => fused.vector.clone(),
    };
    let (scores, probs) = score_relations(&r, &params.relations)?;
    let loss = -log_softmax_at(&scores, gold);

    let Some((g, scale, encoder_trainable)) = grads else {
        return Ok(loss);
    };

    // Softmax + cross-entropy.
    let mut d_o: Vec<f64> = probs.iter().map(|p| scale * p).collect();
    d_o[gold] -= scale;
    for (k, &dk) in d_o.iter().enumerate() {
        axpy(dk, &r, g.relation_weights.row_mut(k));
    }
    axpy(1.0, &d_o, &mut g.relation_bias);
    let mut d_r = params.relations.weights.matvec_t(&d_o);
    if let Some(m) = mask {
        d_r.iter_mut().zip(m).for_each(|(x, k)| *x *= k);
    }

    // Gate.
    let mut d_q = vec![0.0; q.len()];
    let (d_h, d_h_t) = match (&bag_s, &bag_t) {
        (Some(hs), Some(ht)) => {
            let fg = fuse_backward(&hs.vector, &ht.vector, q, &params.gate, fused.beta, &d_r);
            axpy(1.0, &fg.d_gate_weights, &mut g.gate_weights);
            g.gate_bias += fg.d_gate_bias;
            axpy(1.0, &fg.d_query, &mut d_q);
            (Some(fg.d_h), Some(fg.d_h_t))
        }
        (Some(_), None) => (Some(d_r), None),
        (None, Some(_)) => (None, Some(d_r)),
        (None, None) => unreachable!("checked above"),
    };

    // Attention and encoder.
    let bags = [(&bag_s, &reps_s, &enc_s, &ex.onehop, d_h), (&bag_t, &reps_t, &enc_t, &ex.twohop, d_h_t)];
    for (bag, reps, encs, sentences, d_bag) in bags {
        let (Some(bag), Some(d_bag)) = (bag, d_bag) else { continue };
        let (d_reps, d_q_att) = attention_backward(reps, q, bag, &d_bag);
        axpy(1.0, &d_q_att, &mut d_q);
        if encoder_trainable {
            for ((s, cache), d_rep) in sentences.iter().zip(encs).zip(&d_reps) {
                encode_backward(s, cache, d_rep, &params.conv, &params.hp, &mut g.encoder);
            }
        }
    }
    axpy(1.0, &d_q, g.relation_weights.row_mut(gold));
    Ok(loss)
}

/// `J = −(1/|batch|) Σ log P(r_i | S_i, S^T_i)` under fixed dropout masks.
pub fn loss_with_masks(batch: &[&Example], params: &ModelParams, phase: Phase, masks: &DropoutMasks) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let losses: Vec<f64> = batch
        .par_iter()
        .zip(&masks.0)
        .map(|(ex, m)| example_objective(ex, params, phase, m.as_deref(), None))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}

/// Loss and exact gradient under fixed dropout masks.
pub fn gradients_with_masks(
    batch: &[&Example],
    params: &ModelParams,
    phase: Phase,
    masks: &DropoutMasks,
    encoder_trainable: bool,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<(f64, Gradients)> = batch
        .par_chunks(CHUNK)
        .zip(masks.0.par_chunks(CHUNK))
        .map(|(exs, ms)| {
            let mut g = Gradients::zeros(params);
            let mut loss = 0.0;
            for (ex, m) in exs.iter().zip(ms) {
                loss += example_objective(ex, params, phase, m.as_deref(), Some((&mut g, scale, encoder_trainable)))?;
            }
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut total = Gradients::zeros(params);
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        total.add_assign(g);
    }
    Ok((loss * scale, total))
}

/// Training-mode loss: dropout masks are drawn from `rng`.
pub fn compute_loss<R: Rng + ?Sized>(batch: &[&Example], params: &ModelParams, cfg: &TrainConfig, rng: &mut R) -> Result<f64> {
    let masks = DropoutMasks::sample(batch.len(), params.hp.sentence_dim(), cfg.dropout, rng);
    loss_with_masks(batch, params, cfg.phase, &masks)
}

/// Training-mode loss and gradient. Draws the same masks as [`compute_loss`]
/// given an identically seeded `rng`.
pub fn compute_gradients<R: Rng + ?Sized>(
    batch: &[&Example],
    params: &ModelParams,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    let masks = DropoutMasks::sample(batch.len(), params.hp.sentence_dim(), cfg.dropout, rng);
    gradients_with_masks(batch, params, cfg.phase, &masks, !cfg.freeze_encoder)
}

/// Inference-mode loss (no dropout).
pub fn evaluate_loss(batch: &[&Example], params: &ModelParams, phase: Phase) -> Result<f64> {
    loss_with_masks(batch, params, phase, &DropoutMasks::identity(batch.len()))
}
