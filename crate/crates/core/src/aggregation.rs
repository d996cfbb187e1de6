//! Hierarchical bag aggregation: relation-query selective attention inside
//! each bag, a learned gate that mixes the 1-hop and 2-hop bag vectors, and
//! the relation scorer whose rows double as the attention queries.

use std::sync::Arc;

use rand::Rng;

use crate::encoder::{encode, IndexedSentence};
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, sigmoid, softmax, Matrix};
use crate::training::ModelParams;

/// Relation matrix `M` (one row per relation, also the query `q_r`) and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationMatrix {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl RelationMatrix {
    pub fn init<R: Rng + ?Sized>(n_relations: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            weights: Matrix::uniform(n_relations, dim, 0.05, rng),
            bias: (0..n_relations).map(|_| rng.gen_range(-0.05..0.05)).collect(),
        }
    }

    pub fn n_relations(&self) -> usize {
        self.weights.rows()
    }

    pub fn query(&self, relation: usize) -> &[f64] {
        self.weights.row(relation)
    }
}

/// Gate weights over `[h; h^T; q_r]` and scalar bias.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl GateParams {
    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self {
            weights: (0..3 * dim).map(|_| rng.gen_range(-0.05..0.05)).collect(),
            bias: rng.gen_range(-0.05..0.05),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BagRepresentation {
    pub vector: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinalRepresentation {
    pub vector: Vec<f64>,
    /// Weight of the 1-hop bag. Exactly 1 or 0 when one bag is missing.
    pub beta: f64,
}

/// `e_i = q·s_i`, `α = softmax(e)`, `h = Σ α_i s_i`.
pub fn selective_attention<S: AsRef<[f64]>>(reps: &[S], query: &[f64]) -> Result<BagRepresentation> {
    if reps.is_empty() {
        return Err(Error::EmptyBag("selective attention needs at least one sentence"));
    }
    if reps.iter().any(|s| s.as_ref().len() != query.len()) {
        return Err(Error::Dimension("sentence and query dimensions differ".into()));
    }
    let scores: Vec<f64> = reps.iter().map(|s| dot(query, s.as_ref())).collect();
    let alpha = softmax(&scores);
    let mut vector = vec![0.0; query.len()];
    for (s, &a) in reps.iter().zip(&alpha) {
        axpy(a, s.as_ref(), &mut vector);
    }
    Ok(BagRepresentation { vector, alpha })
}

/// Backward of [`selective_attention`]: returns `(d s_i for each i, d q)`.
pub fn attention_backward<S: AsRef<[f64]>>(
    reps: &[S],
    query: &[f64],
    bag: &BagRepresentation,
    d_h: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d_alpha: Vec<f64> = reps.iter().map(|s| dot(d_h, s.as_ref())).collect();
    let mean = dot(&bag.alpha, &d_alpha);
    let mut d_query = vec![0.0; query.len()];
    let d_reps = reps
        .iter()
        .zip(&bag.alpha)
        .zip(&d_alpha)
        .map(|((s, &a), &da)| {
            let d_e = a * (da - mean);
            axpy(d_e, s.as_ref(), &mut d_query);
            let mut ds: Vec<f64> = d_h.iter().map(|g| a * g).collect();
            axpy(d_e, query, &mut ds);
            ds
        })
        .collect();
    (d_reps, d_query)
}

/// `β = σ(W·[h; h^T; q] + b)`, `r = β h + (1−β) h^T`. A missing bag forces
/// `β` to the matching endpoint.
pub fn fuse_bags(
    h: Option<&[f64]>,
    h_t: Option<&[f64]>,
    query: &[f64],
    gate: &GateParams,
) -> Result<FinalRepresentation> {
    match (h, h_t) {
        (None, None) => Err(Error::EmptyBag("both 1-hop and 2-hop bags are empty")),
        (Some(h), None) => Ok(FinalRepresentation { vector: h.to_vec(), beta: 1.0 }),
        (None, Some(t)) => Ok(FinalRepresentation { vector: t.to_vec(), beta: 0.0 }),
        (Some(h), Some(t)) => {
            let d = query.len();
            if h.len() != d || t.len() != d || gate.weights.len() != 3 * d {
                return Err(Error::Dimension("gate input dimensions differ".into()));
            }
            let w = &gate.weights;
            let z = dot(&w[..d], h) + dot(&w[d..2 * d], t) + dot(&w[2 * d..], query) + gate.bias;
            let beta = sigmoid(z);
            let vector = h.iter().zip(t).map(|(a, b)| beta * a + (1.0 - beta) * b).collect();
            Ok(FinalRepresentation { vector, beta })
        }
    }
}

/// Gradients produced by [`fuse_backward`] for the two-bag case.
pub struct FuseGrads {
    pub d_h: Vec<f64>,
    pub d_h_t: Vec<f64>,
    pub d_query: Vec<f64>,
    pub d_gate_weights: Vec<f64>,
    pub d_gate_bias: f64,
}

/// Backward of the two-bag branch of [`fuse_bags`].
pub fn fuse_backward(h: &[f64], h_t: &[f64], query: &[f64], gate: &GateParams, beta: f64, d_r: &[f64]) -> FuseGrads {
    let d = query.len();
    let d_beta: f64 = d_r.iter().zip(h.iter().zip(h_t)).map(|(g, (a, b))| g * (a - b)).sum();
    let d_z = d_beta * beta * (1.0 - beta);
    let w = &gate.weights;
    let mut d_h: Vec<f64> = d_r.iter().map(|g| beta * g).collect();
    let mut d_h_t: Vec<f64> = d_r.iter().map(|g| (1.0 - beta) * g).collect();
    axpy(d_z, &w[..d], &mut d_h);
    axpy(d_z, &w[d..2 * d], &mut d_h_t);
    let d_query = w[2 * d..].iter().map(|x| d_z * x).collect();
    let d_gate_weights = h.iter().chain(h_t).chain(query).map(|x| d_z * x).collect();
    FuseGrads {
        d_h,
        d_h_t,
        d_query,
        d_gate_weights,
        d_gate_bias: d_z,
    }
}

/// `o = M r + d` and `softmax(o)`.
pub fn score_relations(r: &[f64], rel: &RelationMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if r.len() != rel.weights.cols() || rel.bias.len() != rel.weights.rows() {
        return Err(Error::Dimension(format!(
            "representation has {} entries, relation matrix is {:?}",
            r.len(),
            rel.weights.shape()
        )));
    }
    let mut scores = rel.weights.matvec(r);
    axpy(1.0, &rel.bias, &mut scores);
    let probs = softmax(&scores);
    Ok((scores, probs))
}

/// Per-relation confidence for one entity pair. Sentences are encoded once;
/// for each relation `r` the bags are attended with `q_r`, fused with the
/// gate conditioned on `q_r`, scored, and the probability of `r` is kept.
/// An empty `twohop` reproduces the 1-hop-only model exactly.
pub fn predict_pair(
    onehop: &[Arc<IndexedSentence>],
    twohop: &[Arc<IndexedSentence>],
    params: &ModelParams,
) -> Result<Vec<f64>> {
    if onehop.is_empty() && twohop.is_empty() {
        return Err(Error::EmptyBag("prediction needs a nonempty 1-hop or 2-hop bag"));
    }
    let encode_all = |bag: &[Arc<IndexedSentence>]| -> Result<Vec<Vec<f64>>> {
        bag.iter()
            .map(|s| Ok(encode(s, &params.embeddings, &params.conv)?.rep))
            .collect()
    };
    let s = encode_all(onehop)?;
    let s_t = encode_all(twohop)?;
    let n_r = params.relations.n_relations();
    (0..n_r)
        .map(|r| {
            let q = params.relations.query(r);
            let h = (!s.is_empty()).then(|| selective_attention(&s, q)).transpose()?;
            let h_t = (!s_t.is_empty()).then(|| selective_attention(&s_t, q)).transpose()?;
            let fused = fuse_bags(
                h.as_ref().map(|b| b.vector.as_slice()),
                h_t.as_ref().map(|b| b.vector.as_slice()),
                q,
                &params.gate,
            )?;
            let (_, probs) = score_relations(&fused.vector, &params.relations)?;
            Ok(probs[r])
        })
        .collect()
}
