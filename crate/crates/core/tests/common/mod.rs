//! Independent reference implementations and generators shared by the
//! integration tests. Oracles favour the most literal formulation over speed.

#![allow(dead_code)]

pub mod experiment;

use std::collections::BTreeSet;

use rand::Rng;
use twohop::corpus::{EntityPair, MentionSpan, SentenceInstance, Split};
use twohop::encoder::{ConvLayer, EmbeddingTables, IndexedSentence, PAD_ID};
use twohop::tables::{Cell, Criterion, WebTable};
use twohop::training::ModelParams;

/// `(pair, anchor pair, table id, criterion)`.
pub type AnchorEdge = (EntityPair, EntityPair, String, Criterion);

/// Linked-cell ratio per column, recounted cell by cell.
fn is_ne_column(table: &WebTable, col: usize, threshold: f64) -> bool {
    let nonempty: Vec<&Cell> = table
        .rows
        .iter()
        .map(|row| &row[col])
        .filter(|c| !c.text.trim().is_empty())
        .collect();
    let linked = nonempty.iter().filter(|c| c.entity_id.is_some()).count();
    linked >= 1 && (linked as f64) >= threshold * nonempty.len() as f64
}

/// Anchor edges by brute force: every candidate entity pair of a table is
/// tested against every other one with the two table criteria.
pub fn brute_force_anchors(tables: &[WebTable], threshold: f64) -> BTreeSet<AnchorEdge> {
    let mut out = BTreeSet::new();
    for table in tables {
        let ne: Vec<usize> = (0..table.n_cols()).filter(|&c| is_ne_column(table, c, threshold)).collect();
        let Some(&subject) = ne.first() else { continue };
        let eid = |r: usize, c: usize| table.rows[r][c].entity_id.clone();
        let topic = table.page_entity_id.clone();
        let subject_entities: BTreeSet<String> = (0..table.n_rows()).filter_map(|r| eid(r, subject)).collect();

        // Ordered column pairs with the subject column on one side.
        let column_pairs: Vec<(usize, usize)> = ne
            .iter()
            .flat_map(|&c1| ne.iter().map(move |&c2| (c1, c2)))
            .filter(|&(c1, c2)| c1 != c2 && (c1 == subject || c2 == subject))
            .collect();
        // Candidate pairs: anything a row or the topic can put together.
        let mut candidates: BTreeSet<EntityPair> = BTreeSet::new();
        for r in 0..table.n_rows() {
            for &(c1, c2) in &column_pairs {
                if let (Some(h), Some(t)) = (eid(r, c1), eid(r, c2)) {
                    candidates.insert(EntityPair::new(h, t));
                }
            }
        }
        if let Some(t) = &topic {
            for s in &subject_entities {
                candidates.insert(EntityPair::new(t.clone(), s.clone()));
                candidates.insert(EntityPair::new(s.clone(), t.clone()));
            }
        }
        candidates.retain(|p| p.head != p.tail);

        // Column pairs under which a candidate occurs in some row.
        let occurs_in = |p: &EntityPair| -> BTreeSet<(usize, usize)> {
            column_pairs
                .iter()
                .copied()
                .filter(|&(c1, c2)| {
                    (0..table.n_rows()).any(|r| eid(r, c1).as_ref() == Some(&p.head) && eid(r, c2).as_ref() == Some(&p.tail))
                })
                .collect()
        };
        let columns: Vec<(EntityPair, BTreeSet<(usize, usize)>)> =
            candidates.iter().map(|p| (p.clone(), occurs_in(p))).collect();
        let topic_subject =
            |p: &EntityPair| topic.as_ref() == Some(&p.head) && subject_entities.contains(&p.tail);
        let subject_topic =
            |p: &EntityPair| topic.as_ref() == Some(&p.tail) && subject_entities.contains(&p.head);

        for (x, x_cols) in &columns {
            for (y, y_cols) in &columns {
                if x == y {
                    continue;
                }
                let mut add = |criterion| {
                    out.insert((x.clone(), y.clone(), table.table_id.clone(), criterion));
                };
                if topic_subject(x) && topic_subject(y) {
                    add(Criterion::TopicSubject);
                }
                if subject_topic(x) && subject_topic(y) {
                    add(Criterion::SubjectTopic);
                }
                if x_cols.intersection(y_cols).next().is_some() {
                    add(Criterion::RowPair);
                }
            }
        }
    }
    out
}

/// Random table over a small entity pool so that repeats and collisions with
/// the topic are common. Some cells are plain text, some empty.
pub fn random_table<R: Rng>(rng: &mut R, id: usize, pool: usize) -> WebTable {
    let n_rows = rng.gen_range(1..=20);
    let n_cols = rng.gen_range(1..=6);
    let linked_share: Vec<f64> = (0..n_cols).map(|_| [0.0, 0.3, 0.6, 1.0][rng.gen_range(0..4)]).collect();
    let rows = (0..n_rows)
        .map(|_| {
            (0..n_cols)
                .map(|c| {
                    let roll: f64 = rng.gen();
                    if roll < 0.1 {
                        Cell::plain("")
                    } else if rng.gen::<f64>() < linked_share[c] {
                        let e = format!("E{}", rng.gen_range(0..pool));
                        Cell::linked(e.clone(), e)
                    } else {
                        Cell::plain(format!("w{}", rng.gen_range(0..50)))
                    }
                })
                .collect()
        })
        .collect();
    let page = rng.gen_bool(0.7).then(|| format!("E{}", rng.gen_range(0..pool)));
    WebTable::new(format!("t{id}"), page, rows).expect("random table is valid")
}

/// Random sentence of length 3..=`max_len` with two disjoint mentions and a
/// sprinkle of PAD tokens outside the mentions.
pub fn random_sentence<R: Rng>(rng: &mut R, words: &[&str], max_len: usize, pad_share: f64) -> SentenceInstance {
    let n = rng.gen_range(3..=max_len);
    // Four distinct cuts give two nonempty, disjoint spans [a, b) and [c, d).
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, n + 1, 4).into_vec();
    cuts.sort_unstable();
    let (a, b, c, d) = (cuts[0], cuts[1], cuts[2], cuts[3]);
    let in_mention = |i: usize| (a..b).contains(&i) || (c..d).contains(&i);
    let tokens = (0..n)
        .map(|i| {
            if !in_mention(i) && rng.gen::<f64>() < pad_share {
                twohop::encoder::PAD_TOKEN.to_owned()
            } else {
                words[rng.gen_range(0..words.len())].to_owned()
            }
        })
        .collect();
    let first = MentionSpan { entity_id: "X".into(), start: a, end: b };
    let second = MentionSpan { entity_id: "Y".into(), start: c, end: d };
    let (head, tail) = if rng.gen_bool(0.5) { (first, second) } else { (second, first) };
    SentenceInstance {
        id: format!("s{}", rng.gen::<u32>()),
        tokens,
        head,
        tail,
        split: Split::Train,
    }
}

/// Segment of token `i`: 0 up to the earlier mention's last token, 1 up to the
/// later mention's last token, 2 afterwards.
pub fn segment_of(sentence: &SentenceInstance, i: usize) -> usize {
    let first_end = sentence.head.end.min(sentence.tail.end);
    let second_end = sentence.head.end.max(sentence.tail.end);
    if i < first_end {
        0
    } else if i < second_end {
        1
    } else {
        2
    }
}

/// Naive PCNN: scalar convolution with implicit zero padding, per-segment max
/// over non-PAD tokens (empty segment gives 0), then `tanh`.
pub fn naive_pcnn(
    sentence: &SentenceInstance,
    indexed: &IndexedSentence,
    tables: &EmbeddingTables,
    conv: &ConvLayer,
) -> Vec<f64> {
    let n = indexed.words.len();
    let kw = tables.word.cols();
    let kp = tables.pos_head.cols();
    let ki = kw + 2 * kp;
    let x = |t: usize, d: usize| -> f64 {
        if d < kw {
            tables.word.get(indexed.words[t], d)
        } else if d < kw + kp {
            tables.pos_head.get(indexed.pos_head[t], d - kw)
        } else {
            tables.pos_tail.get(indexed.pos_tail[t], d - kw - kp)
        }
    };
    let m = conv.kernel.cols() / ki;
    let half = (m as i64 - 1) / 2;
    let nf = conv.kernel.rows();
    let mut best: Vec<Option<f64>> = vec![None; 3 * nf];
    for i in 0..n {
        if indexed.words[i] == PAD_ID {
            continue;
        }
        let seg = segment_of(sentence, i);
        for j in 0..nf {
            let mut h = conv.bias[j];
            for k in 0..m {
                let t = i as i64 + k as i64 - half;
                if t < 0 || t >= n as i64 {
                    continue;
                }
                for d in 0..ki {
                    h += conv.kernel.get(j, k * ki + d) * x(t as usize, d);
                }
            }
            let slot = &mut best[seg * nf + j];
            *slot = Some(slot.map_or(h, |b: f64| b.max(h)));
        }
    }
    best.into_iter().map(|b| b.unwrap_or(0.0).tanh()).collect()
}

/// Straight-line evaluation of attention, gate and scorer for relation query
/// `r`. Returns `(alpha_1hop, alpha_2hop, beta, probabilities)`.
pub fn reference_forward(
    s: &[Vec<f64>],
    s_t: &[Vec<f64>],
    params: &ModelParams,
    r: usize,
) -> (Vec<f64>, Vec<f64>, f64, Vec<f64>) {
    let m = &params.relations.weights;
    let dim = m.cols();
    let q: Vec<f64> = (0..dim).map(|k| m.get(r, k)).collect();
    let attend = |bag: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) {
        let e: Vec<f64> = bag.iter().map(|v| (0..dim).map(|k| q[k] * v[k]).sum()).collect();
        let z: f64 = e.iter().map(|x| x.exp()).sum();
        let alpha: Vec<f64> = e.iter().map(|x| x.exp() / z).collect();
        let h = (0..dim).map(|k| bag.iter().zip(&alpha).map(|(v, a)| a * v[k]).sum()).collect();
        (alpha, h)
    };
    let (alpha, h) = if s.is_empty() { (Vec::new(), Vec::new()) } else { attend(s) };
    let (alpha_t, h_t) = if s_t.is_empty() { (Vec::new(), Vec::new()) } else { attend(s_t) };
    let (beta, rep): (f64, Vec<f64>) = if s_t.is_empty() {
        (1.0, h)
    } else if s.is_empty() {
        (0.0, h_t)
    } else {
        let w = &params.gate.weights;
        let mut z = params.gate.bias;
        for k in 0..dim {
            z += w[k] * h[k] + w[dim + k] * h_t[k] + w[2 * dim + k] * q[k];
        }
        let beta = 1.0 / (1.0 + (-z).exp());
        (beta, (0..dim).map(|k| beta * h[k] + (1.0 - beta) * h_t[k]).collect())
    };
    let o: Vec<f64> = (0..m.rows())
        .map(|i| params.relations.bias[i] + (0..dim).map(|k| m.get(i, k) * rep[k]).sum::<f64>())
        .collect();
    let z: f64 = o.iter().map(|x| x.exp()).sum();
    (alpha, alpha_t, beta, o.iter().map(|x| x.exp() / z).collect())
}
