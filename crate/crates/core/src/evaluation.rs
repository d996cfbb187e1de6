//! Held-out evaluation: predicted facts are ranked by confidence and compared
//! with the labeled test facts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::predict_pair;
use crate::corpus::{EntityPair, LabeledPair, RelationVocabulary, NA_INDEX};
use crate::dataset::ExampleBuilder;
use crate::encoder::IndexedSentence;
use crate::error::{Error, Result};
use crate::seed;
use crate::tables::AnchorIndex;
use crate::training::ModelParams;

/// Recall levels reported in [`EvalReport::p_at`].
pub const RECALL_LEVELS: [f64; 3] = [0.1, 0.2, 0.3];

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub pair: EntityPair,
    pub relation: usize,
    pub score: f64,
}

/// Sorts by score descending, then by `(pair, relation)`.
pub fn rank_facts(mut predictions: Vec<Prediction>) -> Vec<Prediction> {
    predictions.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.pair.cmp(&b.pair))
            .then_with(|| a.relation.cmp(&b.relation))
    });
    predictions
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub rank: usize,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub n_gold: usize,
}

impl PrCurve {
    /// Trapezoidal area under the (recall, precision) polyline, starting at
    /// recall 0 with the first point's precision and ending at the largest
    /// recall reached.
    pub fn auc(&self) -> f64 {
        let Some(first) = self.points.first() else { return 0.0 };
        let mut area = 0.0;
        let (mut r0, mut p0) = (0.0, first.precision);
        for pt in &self.points {
            area += (pt.recall - r0) * (pt.precision + p0) / 2.0;
            r0 = pt.recall;
            p0 = pt.precision;
        }
        area
    }

    /// Precision at the first rank whose recall reaches `level`.
    pub fn precision_at_recall(&self, level: f64) -> Option<f64> {
        self.points.iter().find(|p| p.recall >= level).map(|p| p.precision)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,recall,precision\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.rank, p.recall, p.precision);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub auc: f64,
    /// Recall level (`"0.1"`, ...) → precision; levels never reached are absent.
    pub p_at: BTreeMap<String, f64>,
    pub n_gold: usize,
    pub n_predictions: usize,
}

/// PR curve of a ranked list against the gold facts, plus the summary report.
pub fn pr_metrics(
    ranked: &[Prediction],
    gold: &BTreeSet<(EntityPair, usize)>,
    mode: TestMode,
) -> Result<(PrCurve, EvalReport)> {
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let n_gold = gold.len() as f64;
    let mut hits = 0usize;
    let points = ranked
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if gold.contains(&(p.pair.clone(), p.relation)) {
                hits += 1;
            }
            PrPoint {
                rank: i + 1,
                recall: hits as f64 / n_gold,
                precision: hits as f64 / (i + 1) as f64,
            }
        })
        .collect();
    let curve = PrCurve {
        points,
        n_gold: gold.len(),
    };
    let p_at = RECALL_LEVELS
        .iter()
        .filter_map(|&x| curve.precision_at_recall(x).map(|p| (x.to_string(), p)))
        .collect();
    let report = EvalReport {
        mode: mode.name().to_owned(),
        auc: curve.auc(),
        p_at,
        n_gold: gold.len(),
        n_predictions: ranked.len(),
    };
    Ok((curve, report))
}

/// Which test pairs are evaluated and how many 1-hop sentences they keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestMode {
    /// Pairs with at least one sentence, all sentences kept.
    Overall,
    /// Pairs with exactly one sentence.
    Single,
    /// Pairs with two or more sentences, one sampled.
    One { seed: u64 },
    /// Pairs with two or more sentences, two sampled.
    Two { seed: u64 },
    /// Pairs with two or more sentences, all kept.
    All,
    /// Pairs without sentences whose 2-hop bag is nonempty.
    EmptyOnehop,
}

impl TestMode {
    pub const NAMES: [&'static str; 6] = ["overall", "single", "one", "two", "all", "empty-onehop"];

    /// `seed` is used by the sampling modes only.
    pub fn from_name(name: &str, seed: u64) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "overall" => Self::Overall,
            "single" => Self::Single,
            "one" => Self::One { seed },
            "two" => Self::Two { seed },
            "all" => Self::All,
            "empty-onehop" => Self::EmptyOnehop,
            other => return Err(Error::Config(format!("unknown test mode {other:?}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Overall => "overall",
            Self::Single => "single",
            Self::One { .. } => "one",
            Self::Two { .. } => "two",
            Self::All => "all",
            Self::EmptyOnehop => "empty-onehop",
        }
    }
}

impl fmt::Display for TestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s, 0)
    }
}

/// An entity pair with its 1-hop and 2-hop bags.
#[derive(Clone, Debug, PartialEq)]
pub struct PairBags<T> {
    pub pair: EntityPair,
    pub onehop: Vec<T>,
    pub twohop: Vec<T>,
}

/// Selects and trims pairs for `mode`. The 2-hop bag is always kept whole.
pub fn filter_test_mode<T: Clone>(pairs: &[PairBags<T>], mode: TestMode) -> Vec<PairBags<T>> {
    let subsample = |p: &PairBags<T>, k: usize, seed: u64| {
        let mut rng = seed::rng(seed::derive_n(seed::derive(seed, "test-mode"), p.pair.stable_key()));
        let mut keep = sample(&mut rng, p.onehop.len(), k.min(p.onehop.len())).into_vec();
        keep.sort_unstable();
        PairBags {
            pair: p.pair.clone(),
            onehop: keep.into_iter().map(|i| p.onehop[i].clone()).collect(),
            twohop: p.twohop.clone(),
        }
    };
    pairs
        .iter()
        .filter_map(|p| {
            let n = p.onehop.len();
            match mode {
                TestMode::Overall => (n >= 1).then(|| p.clone()),
                TestMode::Single => (n == 1).then(|| p.clone()),
                TestMode::All => (n >= 2).then(|| p.clone()),
                TestMode::One { seed } => (n >= 2).then(|| subsample(p, 1, seed)),
                TestMode::Two { seed } => (n >= 2).then(|| subsample(p, 2, seed)),
                TestMode::EmptyOnehop => (n == 0 && !p.twohop.is_empty()).then(|| p.clone()),
            }
        })
        .collect()
}

pub type IndexedPair = PairBags<Arc<IndexedSentence>>;

/// Distinct pairs of `labels` with indexed bags. 2-hop bags are built only
/// when `twohop` is given as `(index, cap, seed)`.
pub fn collect_pairs(
    builder: &ExampleBuilder<'_>,
    labels: &[LabeledPair],
    twohop: Option<(&AnchorIndex, usize, u64)>,
) -> Result<Vec<IndexedPair>> {
    let mut seen = BTreeSet::new();
    let distinct: Vec<LabeledPair> = labels.iter().filter(|l| seen.insert(l.pair.clone())).cloned().collect();
    Ok(builder
        .examples(&distinct, twohop)?
        .into_iter()
        .map(|e| PairBags {
            pair: e.label.pair,
            onehop: e.onehop,
            twohop: e.twohop,
        })
        .collect())
}

/// Non-NA facts among `labels` restricted to `pairs`.
pub fn gold_facts<T>(labels: &[LabeledPair], pairs: &[PairBags<T>]) -> BTreeSet<(EntityPair, usize)> {
    let kept: BTreeSet<&EntityPair> = pairs.iter().map(|p| &p.pair).collect();
    labels
        .iter()
        .filter(|l| l.relation != NA_INDEX && kept.contains(&l.pair))
        .map(|l| (l.pair.clone(), l.relation))
        .collect()
}

/// One prediction per (pair, non-NA relation), scored in parallel.
pub fn score_pairs(pairs: &[IndexedPair], params: &ModelParams) -> Result<Vec<Prediction>> {
    let per_pair: Vec<Vec<Prediction>> = pairs
        .par_iter()
        .map(|p| {
            let probs = predict_pair(&p.onehop, &p.twohop, params)?;
            Ok(probs
                .into_iter()
                .enumerate()
                .filter(|&(r, _)| r != NA_INDEX)
                .map(|(relation, score)| Prediction {
                    pair: p.pair.clone(),
                    relation,
                    score,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_pair.into_iter().flatten().collect())
}

pub struct EvalOutcome {
    pub report: EvalReport,
    pub curve: PrCurve,
    pub ranked: Vec<Prediction>,
}

/// Filters `pairs` for `mode`, scores them and computes the metrics against
/// the non-NA labels of the kept pairs.
pub fn evaluate(
    pairs: &[IndexedPair],
    labels: &[LabeledPair],
    params: &ModelParams,
    mode: TestMode,
) -> Result<EvalOutcome> {
    let kept = filter_test_mode(pairs, mode);
    let gold = gold_facts(labels, &kept);
    let ranked = rank_facts(score_pairs(&kept, params)?);
    let (curve, report) = pr_metrics(&ranked, &gold, mode)?;
    Ok(EvalOutcome { report, curve, ranked })
}

/// `predictions.jsonl`: one `{"head", "tail", "relation", "score"}` per line.
pub fn predictions_to_jsonl(ranked: &[Prediction], relations: &RelationVocabulary) -> String {
    #[derive(Serialize)]
    struct Row<'a> {
        head: &'a str,
        tail: &'a str,
        relation: &'a str,
        score: f64,
    }
    let mut out = String::new();
    for p in ranked {
        let row = Row {
            head: &p.pair.head,
            tail: &p.pair.tail,
            relation: relations.name(p.relation),
            score: p.score,
        };
        out.push_str(&serde_json::to_string(&row).expect("prediction serialises"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(h: &str, r: usize, score: f64) -> Prediction {
        Prediction {
            pair: EntityPair::new(h, "t"),
            relation: r,
            score,
        }
    }

    #[test]
    fn ranking_sorts_descending_with_lexical_ties() {
        assert!(rank_facts(Vec::new()).is_empty());
        let ranked = rank_facts(vec![pred("a", 1, 0.9), pred("b", 1, 0.1), pred("c", 1, 0.5)]);
        let heads: Vec<_> = ranked.iter().map(|p| p.pair.head.as_str()).collect();
        assert_eq!(heads, ["a", "c", "b"]);
        let ranked = rank_facts(vec![pred("b", 2, 0.5), pred("b", 1, 0.5), pred("a", 3, 0.5)]);
        let keys: Vec<_> = ranked.iter().map(|p| (p.pair.head.as_str(), p.relation)).collect();
        assert_eq!(keys, [("a", 3), ("b", 1), ("b", 2)]);
    }

    #[test]
    fn hit_miss_hit_curve() {
        let ranked = vec![pred("a", 1, 0.9), pred("b", 1, 0.8), pred("c", 1, 0.7)];
        let gold: BTreeSet<_> = [(EntityPair::new("a", "t"), 1), (EntityPair::new("c", "t"), 1)].into();
        let (curve, report) = pr_metrics(&ranked, &gold, TestMode::Overall).unwrap();
        let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(pts, vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0)]);
        assert_eq!(report.p_at["0.3"], 1.0);
        let expected = 0.5 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0;
        assert!((report.auc - expected).abs() < 1e-15);
        assert_eq!((report.n_gold, report.n_predictions), (2, 3));
    }

    #[test]
    fn perfect_ranking_has_unit_auc() {
        let ranked: Vec<_> = (0..5).map(|i| pred(&format!("e{i}"), 1, 1.0 - i as f64 / 10.0)).collect();
        let gold: BTreeSet<_> = ranked.iter().take(4).map(|p| (p.pair.clone(), 1)).collect();
        let (curve, report) = pr_metrics(&ranked, &gold, TestMode::Overall).unwrap();
        assert!(curve.points[..4].iter().all(|p| p.precision == 1.0));
        assert_eq!(report.auc, 1.0);
    }

    #[test]
    fn unreached_levels_are_absent() {
        let ranked = vec![pred("a", 1, 0.9)];
        let gold: BTreeSet<_> = (0..20).map(|i| (EntityPair::new(format!("g{i}"), "t"), 1)).collect();
        let (_, report) = pr_metrics(&ranked, &gold, TestMode::Overall).unwrap();
        assert!(report.p_at.is_empty());
        assert_eq!(report.auc, 0.0);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["p_at"], serde_json::json!({}));
    }

    #[test]
    fn empty_gold_is_an_error() {
        assert!(matches!(pr_metrics(&[], &BTreeSet::new(), TestMode::All), Err(Error::EmptyGold)));
    }

    fn bags(sizes: &[usize]) -> Vec<PairBags<usize>> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| PairBags {
                pair: EntityPair::new(format!("p{i}"), "t"),
                onehop: (0..n).collect(),
                twohop: vec![99],
            })
            .collect()
    }

    #[test]
    fn mode_partition() {
        let singles = bags(&[1, 1, 1]);
        assert_eq!(filter_test_mode(&singles, TestMode::Single).len(), 3);
        assert!(filter_test_mode(&singles, TestMode::All).is_empty());

        let mixed = bags(&[1, 2, 3, 0]);
        assert_eq!(filter_test_mode(&mixed, TestMode::Single).len(), 1);
        assert_eq!(filter_test_mode(&mixed, TestMode::All).len(), 2);
        assert_eq!(filter_test_mode(&mixed, TestMode::Overall).len(), 3);
        let two = filter_test_mode(&mixed, TestMode::Two { seed: 4 });
        assert_eq!(two.iter().map(|p| p.onehop.len()).collect::<Vec<_>>(), [2, 2]);
        assert_eq!(two[0].onehop, vec![0, 1]);
        assert!(two.iter().all(|p| p.twohop == vec![99]));
        let one = filter_test_mode(&mixed, TestMode::One { seed: 4 });
        assert!(one.iter().all(|p| p.onehop.len() == 1));
        assert_eq!(one, filter_test_mode(&mixed, TestMode::One { seed: 4 }));
        let empty = filter_test_mode(&mixed, TestMode::EmptyOnehop);
        assert_eq!(empty.len(), 1);
        assert_eq!(empty[0].pair.head, "p3");
    }

    #[test]
    fn mode_names_round_trip() {
        for name in TestMode::NAMES {
            assert_eq!(TestMode::from_name(name, 1).unwrap().name(), name);
        }
        assert_eq!(TestMode::from_name("EMPTY_ONEHOP", 0).unwrap(), TestMode::EmptyOnehop);
        assert!(TestMode::from_name("most", 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let curve = PrCurve {
            points: vec![PrPoint {
                rank: 1,
                recall: 0.5,
                precision: 1.0,
            }],
            n_gold: 2,
        };
        assert_eq!(curve.to_csv(), "rank,recall,precision\n1,0.5,1\n");
    }
}
