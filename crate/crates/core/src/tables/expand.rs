use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::index::sample;

use super::AnchorIndex;
use crate::corpus::{BagKind, BagMap, EntityPair, SentenceBag};
use crate::error::{Error, Result};
use crate::seed;

/// Builds the 2-hop bag of `pair`: the union of the 1-hop bags of all its
/// anchors, without duplicates and without sentences from the pair's own bag.
/// Bags larger than `cap` are down-sampled without replacement using a stream
/// derived from `(seed, pair)`; the sample keeps union order.
pub fn expand_bag(
    pair: &EntityPair,
    index: &AnchorIndex,
    train_bags: &BagMap,
    cap: usize,
    seed: u64,
) -> Result<SentenceBag> {
    if cap == 0 {
        return Err(Error::Config("2-hop bag cap must be at least 1".into()));
    }
    let own: HashSet<&str> = train_bags
        .get(pair)
        .map(|b| b.sentences.iter().map(|s| s.id.as_str()).collect())
        .unwrap_or_default();
    let mut seen = HashSet::new();
    let mut union = Vec::new();
    for anchor in index.anchor_pairs(pair) {
        let Some(bag) = train_bags.get(anchor) else { continue };
        for s in &bag.sentences {
            if !own.contains(s.id.as_str()) && seen.insert(s.id.as_str()) {
                union.push(Arc::clone(s));
            }
        }
    }
    if union.len() > cap {
        let mut rng = seed::rng(seed::derive_n(seed::derive(seed, "twohop-cap"), pair.stable_key()));
        let mut keep = sample(&mut rng, union.len(), cap).into_vec();
        keep.sort_unstable();
        union = keep.into_iter().map(|i| Arc::clone(&union[i])).collect();
    }
    Ok(SentenceBag {
        pair: pair.clone(),
        sentences: union,
        kind: BagKind::TwoHop,
    })
}
