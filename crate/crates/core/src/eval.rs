//! Filtered link-prediction ranking and MRR / Hits@N metrics.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::kg::{FilterIndex, SplitKind, Triple};
use crate::model::KgeModel;
use crate::{Error, Result};

/// Anything that can score a triple in a client's local id space.
pub trait TripleScorer: Sync {
    fn score(&self, head: u32, relation: u32, tail: u32) -> f64;
}

impl TripleScorer for KgeModel {
    fn score(&self, head: u32, relation: u32, tail: u32) -> f64 {
        KgeModel::score(self, head, relation, tail)
    }
}

impl<F> TripleScorer for F
where
    F: Fn(u32, u32, u32) -> f64 + Sync,
{
    fn score(&self, head: u32, relation: u32, tail: u32) -> f64 {
        self(head, relation, tail)
    }
}

/// Scores through id maps, e.g. a client's local ids looked up in a pooled model.
pub struct MappedScorer<'a, S> {
    pub inner: &'a S,
    pub entities: &'a [u32],
    pub relations: &'a [u32],
}

impl<S: TripleScorer> TripleScorer for MappedScorer<'_, S> {
    fn score(&self, head: u32, relation: u32, tail: u32) -> f64 {
        self.inner.score(
            self.entities[head as usize],
            self.relations[relation as usize],
            self.entities[tail as usize],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directions {
    Tail,
    Head,
    #[default]
    Both,
}

impl FromStr for Directions {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tail" => Ok(Directions::Tail),
            "head" => Ok(Directions::Head),
            "both" => Ok(Directions::Both),
            other => Err(format!("unknown direction `{other}` (expected tail, head or both)")),
        }
    }
}

/// A link-prediction query: `(h, r, ?)` or `(?, r, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    Tail { head: u32, relation: u32 },
    Head { relation: u32, tail: u32 },
}

impl Query {
    fn complete(self, entity: u32) -> Triple {
        match self {
            Query::Tail { head, relation } => Triple::new(head, relation, entity),
            Query::Head { relation, tail } => Triple::new(entity, relation, tail),
        }
    }

    fn is_filtered(self, entity: u32, filter: &FilterIndex) -> bool {
        let known = match self {
            Query::Tail { head, relation } => filter.tails(head, relation),
            Query::Head { relation, tail } => filter.heads(tail, relation),
        };
        known.is_some_and(|s| s.contains(&entity))
    }
}

/// Filtered rank of `truth` among candidate entities `0..num_candidates`.
///
/// Candidates forming other known triples are skipped. Ties count at the
/// mean rank of the tied block, rounded up: `1 + higher + ceil(equal / 2)`.
pub fn rank<S: TripleScorer + ?Sized>(
    scorer: &S,
    query: Query,
    truth: u32,
    num_candidates: u32,
    filter: &FilterIndex,
) -> usize {
    assert!(truth < num_candidates, "truth entity outside the candidate set");
    let t = query.complete(truth);
    let target = scorer.score(t.head, t.relation, t.tail);
    let mut higher = 0usize;
    let mut equal = 0usize;
    for c in 0..num_candidates {
        if c == truth || query.is_filtered(c, filter) {
            continue;
        }
        let t = query.complete(c);
        let s = scorer.score(t.head, t.relation, t.tail);
        if s > target {
            higher += 1;
        } else if s == target {
            equal += 1;
        }
    }
    1 + higher + equal.div_ceil(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits5: f64,
    pub hits10: f64,
    pub count: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        if ranks.is_empty() {
            return Metrics::default();
        }
        let n = ranks.len() as f64;
        let frac = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Metrics {
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            hits1: frac(1),
            hits5: frac(5),
            hits10: frac(10),
            count: ranks.len(),
        }
    }
}

/// Ranks for every query generated from `triples`, tail query before head
/// query per triple. Queries run in parallel; the result order is fixed.
pub fn ranks<S: TripleScorer + ?Sized>(
    scorer: &S,
    triples: &[Triple],
    num_candidates: u32,
    filter: &FilterIndex,
    directions: Directions,
) -> Vec<usize> {
    let mut queries = Vec::with_capacity(triples.len() * 2);
    for t in triples {
        if matches!(directions, Directions::Tail | Directions::Both) {
            queries.push((Query::Tail { head: t.head, relation: t.relation }, t.tail));
        }
        if matches!(directions, Directions::Head | Directions::Both) {
            queries.push((Query::Head { relation: t.relation, tail: t.tail }, t.head));
        }
    }
    queries
        .par_iter()
        .map(|(q, truth)| rank(scorer, *q, *truth, num_candidates, filter))
        .collect()
}

pub fn evaluate<S: TripleScorer + ?Sized>(
    scorer: &S,
    triples: &[Triple],
    num_candidates: u32,
    filter: &FilterIndex,
    directions: Directions,
) -> Metrics {
    Metrics::from_ranks(&ranks(scorer, triples, num_candidates, filter, directions))
}

/// Average of per-client metrics weighted by their query counts.
pub fn weighted_average(per_client: &[Metrics]) -> Metrics {
    let total: usize = per_client.iter().map(|m| m.count).sum();
    if total == 0 {
        return Metrics::default();
    }
    let w = |f: fn(&Metrics) -> f64| {
        per_client
            .iter()
            .map(|m| f(m) * m.count as f64)
            .sum::<f64>()
            / total as f64
    };
    Metrics {
        mrr: w(|m| m.mrr),
        hits1: w(|m| m.hits1),
        hits5: w(|m| m.hits5),
        hits10: w(|m| m.hits10),
        count: total,
    }
}

/// One line of a metrics log.
///
/// Text form, tab-separated: `step client split mrr hits1 hits5 hits10`,
/// where `step` is the round (federated) or epoch (single, entire), `client`
/// is a client id or `avg`, and metric values use shortest round-trip
/// formatting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub client: Option<usize>,
    pub split: SplitKind,
    pub metrics: Metrics,
}

pub const METRICS_HEADER: &str = "#step\tclient\tsplit\tmrr\thits1\thits5\thits10";

impl fmt::Display for MetricsRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metrics;
        match self.client {
            Some(c) => write!(f, "{}\t{c}", self.step)?,
            None => write!(f, "{}\tavg", self.step)?,
        }
        write!(
            f,
            "\t{}\t{}\t{}\t{}\t{}",
            self.split, m.mrr, m.hits1, m.hits5, m.hits10
        )
    }
}

impl FromStr for MetricsRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = |message: String| Error::Format {
            what: "metrics record",
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [step, client, split, mrr, h1, h5, h10] = fields.as_slice() else {
            return Err(bad(format!("expected 7 fields in `{line}`")));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
        Ok(MetricsRecord {
            step: step.parse().map_err(|_| bad(format!("bad step `{step}`")))?,
            client: match *client {
                "avg" => None,
                c => Some(c.parse().map_err(|_| bad(format!("bad client `{c}`")))?),
            },
            split: split.parse().map_err(bad)?,
            metrics: Metrics {
                mrr: num(mrr)?,
                hits1: num(h1)?,
                hits5: num(h5)?,
                hits10: num(h10)?,
                count: 0,
            },
        })
    }
}

pub fn format_log(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_log(text: &str) -> Result<Vec<MetricsRecord>> {
    text.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(_: u32, _: u32, _: u32) -> f64 {
        1.0
    }

    #[test]
    fn strictly_highest_truth_ranks_first() {
        let scorer = |_: u32, _: u32, t: u32| if t == 3 { 10.0 } else { t as f64 };
        let q = Query::Tail { head: 0, relation: 0 };
        assert_eq!(rank(&scorer, q, 3, 10, &FilterIndex::new()), 1);
    }

    #[test]
    fn all_ties_take_rounded_up_mean_rank() {
        let q = Query::Tail { head: 0, relation: 0 };
        assert_eq!(rank(&constant, q, 4, 10, &FilterIndex::new()), 6);
        assert_eq!(rank(&constant, q, 0, 1, &FilterIndex::new()), 1);
        assert_eq!(rank(&constant, q, 0, 2, &FilterIndex::new()), 2);
    }

    #[test]
    fn filtering_removes_known_competitors_but_keeps_truth() {
        let scorer = |_: u32, _: u32, t: u32| t as f64;
        let mut filter = FilterIndex::new();
        filter.insert(Triple::new(0, 0, 9));
        filter.insert(Triple::new(0, 0, 8));
        filter.insert(Triple::new(0, 0, 5));
        let q = Query::Tail { head: 0, relation: 0 };
        // Unfiltered rank of 5 among 0..10 is 5; 8 and 9 are filtered out.
        assert_eq!(rank(&scorer, q, 5, 10, &FilterIndex::new()), 5);
        assert_eq!(rank(&scorer, q, 5, 10, &filter), 3);
        let hq = Query::Head { relation: 0, tail: 5 };
        assert_eq!(rank(&|h: u32, _: u32, _: u32| h as f64, hq, 0, 10, &filter), 10);
    }

    #[test]
    fn metric_arithmetic() {
        let m = Metrics::from_ranks(&[1, 4]);
        assert_eq!(m.mrr, 0.625);
        assert_eq!(m.hits1, 0.5);
        assert_eq!(m.hits5, 1.0);
        let perfect = Metrics::from_ranks(&[1, 1, 1]);
        assert_eq!((perfect.mrr, perfect.hits1, perfect.hits10), (1.0, 1.0, 1.0));
    }

    #[test]
    fn weighted_average_by_query_count() {
        let a = Metrics { mrr: 0.4, count: 100, ..Default::default() };
        let b = Metrics { mrr: 0.2, count: 300, ..Default::default() };
        assert!((weighted_average(&[a, b]).mrr - 0.25).abs() < 1e-15);
        let c = Metrics { mrr: 0.3, count: 100, ..Default::default() };
        assert!((weighted_average(&[a, c]).mrr - 0.35).abs() < 1e-15);
        assert_eq!(weighted_average(&[a]).mrr, 0.4);
        assert_eq!(weighted_average(&[a]).count, 100);
    }

    #[test]
    fn direction_modes_change_query_count() {
        let triples = [Triple::new(0, 0, 1), Triple::new(1, 0, 2)];
        let f = FilterIndex::new();
        assert_eq!(evaluate(&constant, &triples, 3, &f, Directions::Tail).count, 2);
        assert_eq!(evaluate(&constant, &triples, 3, &f, Directions::Both).count, 4);
    }

    #[test]
    fn records_round_trip_through_text() {
        let r = MetricsRecord {
            step: 15,
            client: Some(2),
            split: SplitKind::Valid,
            metrics: Metrics { mrr: 0.1 + 0.2, hits1: 0.0, hits5: 0.5, hits10: 1.0 / 3.0, count: 7 },
        };
        let avg = MetricsRecord { client: None, ..r };
        let parsed = parse_log(&format_log(&[r, avg])).unwrap();
        assert_eq!(parsed[0].metrics.mrr, r.metrics.mrr);
        assert_eq!(parsed[0].metrics.hits10, r.metrics.hits10);
        assert_eq!(parsed[1].client, None);
        assert_eq!(parsed[0].client, Some(2));
        assert!("1\tx\tvalid\t0\t0\t0\t0".parse::<MetricsRecord>().is_err());
    }
}
