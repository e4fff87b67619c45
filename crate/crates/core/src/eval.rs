//! Coverage / recall / precision / F1 counting, false-alarm rate and
//! sliced reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LabeledQuery, LinkResult};

pub const REPORT_VERSION: u32 = 1;

/// Raw counts behind every metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    /// All test queries.
    pub total: u64,
    /// Queries labeled with exactly one brand entity (NIL excluded).
    pub l_single: u64,
    /// Queries predicted as a single entity.
    pub p_single: u64,
    /// Single predictions equal to the single gold entity.
    pub correct: u64,
}

impl EvalCounts {
    pub fn add(&mut self, gold: &LabeledQuery, pred: &LinkResult) {
        self.total += 1;
        let gold = gold.single_brand();
        self.l_single += gold.is_some() as u64;
        if let Some(p) = pred.outcome.single_entity() {
            self.p_single += 1;
            self.correct += (Some(p) == gold) as u64;
        }
    }

    pub fn merge(self, o: EvalCounts) -> EvalCounts {
        EvalCounts {
            total: self.total + o.total,
            l_single: self.l_single + o.l_single,
            p_single: self.p_single + o.p_single,
            correct: self.correct + o.correct,
        }
    }
}

/// Counts over `(gold, prediction)` pairs. Order-invariant.
pub fn score<'a>(preds: impl IntoIterator<Item = (&'a LabeledQuery, &'a LinkResult)>) -> EvalCounts {
    let mut c = EvalCounts::default();
    for (g, p) in preds {
        c.add(g, p);
    }
    c
}

/// A percentage that may be undefined (zero denominator); undefined values
/// read as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub undefined: bool,
}

impl Metric {
    fn ratio(num: u64, den: u64) -> Metric {
        if den == 0 {
            Metric {
                value: 0.0,
                undefined: true,
            }
        } else {
            Metric {
                value: 100.0 * num as f64 / den as f64,
                undefined: false,
            }
        }
    }

    /// Two decimals, with a trailing `*` when undefined.
    pub fn render(&self) -> String {
        format!("{:.2}{}", self.value, if self.undefined { "*" } else { "" })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: Metric,
    pub precision: Metric,
    pub coverage: Metric,
    pub f1: Metric,
}

pub fn f1(p: Metric, r: Metric) -> Metric {
    if p.undefined || r.undefined {
        return Metric {
            value: 0.0,
            undefined: true,
        };
    }
    let value = if p.value + r.value == 0.0 {
        0.0
    } else {
        2.0 * p.value * r.value / (p.value + r.value)
    };
    Metric { value, undefined: false }
}

pub fn metrics(c: &EvalCounts) -> Metrics {
    let recall = Metric::ratio(c.correct, c.l_single);
    let precision = Metric::ratio(c.correct, c.p_single);
    Metrics {
        recall,
        precision,
        coverage: Metric::ratio(c.p_single, c.total),
        f1: f1(precision, recall),
    }
}

/// Percentage of (non-branded) queries on which a brand was asserted.
pub fn false_alarm_rate<'a>(preds: impl IntoIterator<Item = (&'a LabeledQuery, &'a LinkResult)>) -> Result<f64> {
    let (mut n, mut fa) = (0u64, 0u64);
    for (g, p) in preds {
        if !g.is_non_branded() {
            return Err(Error::invalid("false alarm input", "every query must be gold non-branded"));
        }
        n += 1;
        fa += p.outcome.is_single() as u64;
    }
    if n == 0 {
        return Err(Error::EmptyInput("non-branded predictions"));
    }
    Ok(100.0 * fa as f64 / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub key: String,
    /// Share of all queries, percent.
    pub share: f64,
    pub counts: EvalCounts,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub version: u32,
    pub title: String,
    /// Ordered by descending share, then key.
    pub slices: Vec<SliceRow>,
    /// Unweighted mean over slices of each metric.
    pub macro_average: Metrics,
    pub overall: SliceRow,
}

fn mean(ms: &[Metric]) -> Metric {
    let defined: Vec<f64> = ms.iter().filter(|m| !m.undefined).map(|m| m.value).collect();
    if defined.is_empty() {
        return Metric {
            value: 0.0,
            undefined: true,
        };
    }
    Metric {
        value: defined.iter().sum::<f64>() / defined.len() as f64,
        undefined: false,
    }
}

/// Per-slice counts and metrics plus their macro average.
pub fn report<'a, F>(
    title: &str,
    slice_fn: F,
    preds: impl IntoIterator<Item = (&'a LabeledQuery, &'a LinkResult)>,
) -> MetricReport
where
    F: Fn(&LabeledQuery) -> String,
{
    let mut by: BTreeMap<String, EvalCounts> = BTreeMap::new();
    let mut all = EvalCounts::default();
    for (g, p) in preds {
        by.entry(slice_fn(g)).or_default().add(g, p);
        all.add(g, p);
    }
    let share = |c: &EvalCounts| Metric::ratio(c.total, all.total).value;
    let mut slices: Vec<SliceRow> = by
        .into_iter()
        .map(|(key, counts)| SliceRow {
            share: share(&counts),
            metrics: metrics(&counts),
            key,
            counts,
        })
        .collect();
    slices.sort_by(|a, b| b.counts.total.cmp(&a.counts.total).then_with(|| a.key.cmp(&b.key)));
    let pick = |f: fn(&Metrics) -> Metric| mean(&slices.iter().map(|s| f(&s.metrics)).collect::<Vec<_>>());
    let macro_average = Metrics {
        recall: pick(|m| m.recall),
        precision: pick(|m| m.precision),
        coverage: pick(|m| m.coverage),
        f1: pick(|m| m.f1),
    };
    MetricReport {
        version: REPORT_VERSION,
        title: title.to_string(),
        overall: SliceRow {
            key: "overall".into(),
            share: if all.total > 0 { 100.0 } else { 0.0 },
            counts: all,
            metrics: metrics(&all),
        },
        slices,
        macro_average,
    }
}

pub fn by_language(q: &LabeledQuery) -> String {
    q.query().language().unwrap_or("unknown").to_string()
}

pub fn by_store(q: &LabeledQuery) -> String {
    q.query().store().as_str().to_string()
}

pub fn overall(_: &LabeledQuery) -> String {
    "overall".to_string()
}

impl MetricReport {
    /// Fixed-width text table; `*` marks undefined metrics.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:>8} {:>10} {:>8} {:>10} {:>8}",
            "slice", "share", "queries", "coverage", "recall", "precision", "f1"
        );
        let row = |s: &mut String, key: &str, share: String, n: String, m: &Metrics| {
            let _ = writeln!(
                s,
                "{:<16} {:>8} {:>8} {:>10} {:>8} {:>10} {:>8}",
                key,
                share,
                n,
                m.coverage.render(),
                m.recall.render(),
                m.precision.render(),
                m.f1.render()
            );
        };
        for r in &self.slices {
            row(&mut s, &r.key, format!("{:.2}", r.share), r.counts.total.to_string(), &r.metrics);
        }
        row(&mut s, "macro-average", "-".into(), "-".into(), &self.macro_average);
        let o = &self.overall;
        row(&mut s, &o.key, format!("{:.2}", o.share), o.counts.total.to_string(), &o.metrics);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BrandEntityId, Query, Source, StoreTag};

    fn lq(text: &str, ents: &[&str]) -> LabeledQuery {
        let q = Query::new(text, StoreTag::new("us").unwrap()).unwrap();
        if ents == ["NIL"] {
            return LabeledQuery::non_branded(q, Source::SL);
        }
        LabeledQuery::new(
            q,
            ents.iter().map(|s| s.to_lowercase()).collect(),
            ents.iter().map(|s| BrandEntityId::new(*s).unwrap()).collect(),
            Source::SL,
        )
        .unwrap()
    }
    fn single(e: &str) -> LinkResult {
        LinkResult::single(BrandEntityId::new(e).unwrap(), 0.9).unwrap()
    }

    #[test]
    fn four_query_example() {
        let gold: Vec<_> = (0..4).map(|i| lq("q", &[&format!("E{i}")])).collect();
        let preds = [single("E0"), single("E1"), LinkResult::no_prediction(), LinkResult::nil()];
        let c = score(gold.iter().zip(&preds));
        let m = metrics(&c);
        assert_eq!((m.recall.value, m.precision.value, m.coverage.value), (50.0, 100.0, 50.0));
    }

    #[test]
    fn undefined_precision_is_flagged() {
        let gold = [lq("q", &["E1"])];
        let m = metrics(&score(gold.iter().zip(&[LinkResult::nil()])));
        assert!(m.precision.undefined && m.precision.value == 0.0);
        assert_eq!(m.precision.render(), "0.00*");
        assert_eq!(m.recall.value, 0.0);
        assert_eq!(m.f1.value, 0.0);
    }

    #[test]
    fn wrong_single_counts_toward_predictions_only() {
        let c = score([lq("q", &["E1"])].iter().zip(&[single("E2")]));
        assert_eq!((c.p_single, c.correct), (1, 0));
    }

    #[test]
    fn perfect_model_on_reported_counts() {
        let c = EvalCounts {
            total: 28439,
            l_single: 24054,
            p_single: 24054,
            correct: 24054,
        };
        let m = metrics(&c);
        assert_eq!(m.recall.render(), "100.00");
        assert_eq!(m.precision.render(), "100.00");
        assert_eq!(m.coverage.render(), "84.58");
    }

    #[test]
    fn f1_identities() {
        let p = Metric {
            value: 70.0,
            undefined: false,
        };
        assert!((f1(p, p).value - 70.0).abs() < 1e-12);
        let zero = Metric {
            value: 0.0,
            undefined: false,
        };
        assert_eq!(f1(zero, p).value, 0.0);
    }

    #[test]
    fn false_alarms() {
        let gold: Vec<_> = (0..100).map(|_| lq("red shoes", &["NIL"])).collect();
        let preds: Vec<_> = (0..100).map(|i| if i < 3 { single("E1") } else { LinkResult::nil() }).collect();
        assert!((false_alarm_rate(gold.iter().zip(&preds)).unwrap() - 3.0).abs() < 1e-12);
        let nils: Vec<_> = (0..100).map(|_| LinkResult::nil()).collect();
        assert_eq!(false_alarm_rate(gold.iter().zip(&nils)).unwrap(), 0.0);
        assert!(false_alarm_rate(std::iter::empty()).is_err());
        assert!(false_alarm_rate([lq("nike", &["E1"])].iter().zip(&nils)).is_err());
    }

    #[test]
    fn macro_average_of_two_slices() {
        let mk = |lang: &str| {
            let q = Query::new("x", StoreTag::new("us").unwrap()).unwrap().with_language(lang);
            LabeledQuery::new(q, vec!["x".into()], vec![BrandEntityId::new("E1").unwrap()], Source::SL).unwrap()
        };
        // en: 2 of 5 correct (recall 40); de: 3 of 5 correct (recall 60).
        let gold: Vec<_> = (0..10).map(|i| mk(if i < 5 { "en" } else { "de" })).collect();
        let preds: Vec<_> = (0..10)
            .map(|i| if i < 2 || (5..8).contains(&i) { single("E1") } else { LinkResult::no_prediction() })
            .collect();
        let r = report("t", by_language, gold.iter().zip(&preds));
        assert_eq!(r.macro_average.recall.value, 50.0);
        let one = report("t", overall, gold.iter().zip(&preds));
        assert_eq!(one.macro_average, one.slices[0].metrics);
        assert!(r.to_table().contains("macro-average"));
    }
}
