//! Dataset construction: pseudo-queries from the brand dictionary,
//! strong-label mapping, weak labels from engagement logs, test-set
//! partitioning, training-set mixing and a synthetic corpus generator.

pub mod io;
pub mod synth;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gazetteer::{find_token_aligned, B2eRecord, BrandDictionary};
use crate::text;
use crate::types::{BrandEntityId, LabeledQuery, ProductType, Query, Source, StoreTag};

pub use synth::{gen_synthetic_corpus, CorpusFiles, CorpusSpec, SliceKind};

/// Annotated query: `brand_name` is empty for a non-branded query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrongLabelRecord {
    pub text: String,
    pub store: StoreTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub brand_name: String,
}

fn make_query(text: &str, store: &StoreTag, language: Option<&str>) -> Result<Query> {
    let q = Query::new(text, store.clone())?;
    Ok(match language {
        Some(l) => q.with_language(l),
        None => q,
    })
}

impl StrongLabelRecord {
    pub fn query(&self) -> Result<Query> {
        make_query(&self.text, &self.store, self.language.as_deref())
    }
}

/// Query–product engagement with the product's brand name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EngagementRepr", into = "EngagementRepr")]
pub struct EngagementRecord {
    pub query: Query,
    pub product_brand_name: String,
    pub association_strength: f64,
}

#[derive(Serialize, Deserialize)]
struct EngagementRepr {
    text: String,
    store: StoreTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    language: Option<String>,
    product_brand_name: String,
    strength: f64,
}

impl TryFrom<EngagementRepr> for EngagementRecord {
    type Error = Error;
    fn try_from(r: EngagementRepr) -> Result<Self> {
        if !(r.strength >= 0.0) || !r.strength.is_finite() {
            return Err(Error::invalid("engagement", "strength must be finite and non-negative"));
        }
        Ok(EngagementRecord {
            query: make_query(&r.text, &r.store, r.language.as_deref())?,
            product_brand_name: r.product_brand_name,
            association_strength: r.strength,
        })
    }
}

impl From<EngagementRecord> for EngagementRepr {
    fn from(r: EngagementRecord) -> Self {
        EngagementRepr {
            text: r.query.text().to_string(),
            store: r.query.store().clone(),
            language: r.query.language().map(str::to_string),
            product_brand_name: r.product_brand_name,
            strength: r.association_strength,
        }
    }
}

/// Query labeled with its product type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PtRecord {
    pub text: String,
    pub store: StoreTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub pt: ProductType,
}

impl PtRecord {
    pub fn query(&self) -> Result<Query> {
        make_query(&self.text, &self.store, self.language.as_deref())
    }
}

/// Each dictionary surface becomes a pseudo-query labeled with its entity.
/// Rows whose surface normalizes to nothing are skipped.
pub fn augment_b2e<'a>(b2e: impl IntoIterator<Item = &'a B2eRecord>) -> Vec<LabeledQuery> {
    b2e.into_iter()
        .filter_map(|r| {
            let q = Query::new(r.surface.as_str(), r.store.clone()).ok()?;
            LabeledQuery::new(q, vec![r.surface.clone()], vec![r.entity.clone()], Source::B2E).ok()
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StrongLabelStats {
    pub emitted: usize,
    pub non_branded: usize,
    pub multi_entity: usize,
    pub dropped_unmatched: usize,
    pub dropped_invalid: usize,
}

/// Resolves annotated brand names to entities by exact dictionary lookup in
/// the query's store. Unmatched names are dropped; multi-entity matches keep
/// every entity.
pub fn map_strong_labels<'a>(
    records: impl IntoIterator<Item = &'a StrongLabelRecord>,
    dict: &BrandDictionary,
) -> (Vec<LabeledQuery>, StrongLabelStats) {
    let mut stats = StrongLabelStats::default();
    let mut out = Vec::new();
    for r in records {
        let Ok(q) = r.query() else {
            stats.dropped_invalid += 1;
            continue;
        };
        let name = text::normalize(&r.brand_name);
        if name.is_empty() {
            stats.non_branded += 1;
            out.push(LabeledQuery::non_branded(q, Source::SL));
            continue;
        }
        let entities = dict.lookup(q.store(), name.as_str()).to_vec();
        if entities.is_empty() {
            stats.dropped_unmatched += 1;
            continue;
        }
        stats.multi_entity += (entities.len() > 1) as usize;
        out.push(LabeledQuery::new(q, vec![name.as_str().to_string()], entities, Source::SL).expect("valid label"));
    }
    stats.emitted = out.len();
    (out, stats)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WeakLabelStats {
    pub emitted: usize,
    pub below_threshold: usize,
    pub not_in_query: usize,
    pub not_in_dictionary: usize,
}

/// Labels a query with its engaged product's brand when the normalized brand
/// name occurs token-aligned in the normalized query.
pub fn gen_weak_labels<'a>(
    logs: impl IntoIterator<Item = &'a EngagementRecord>,
    strength_threshold: f64,
    dict: &BrandDictionary,
) -> (Vec<LabeledQuery>, WeakLabelStats) {
    let mut stats = WeakLabelStats::default();
    let mut out = Vec::new();
    for r in logs {
        if r.association_strength < strength_threshold {
            stats.below_threshold += 1;
            continue;
        }
        let name = text::normalize(&r.product_brand_name);
        if name.is_empty() || find_token_aligned(&r.query.normalized(), name.as_str()).is_none() {
            stats.not_in_query += 1;
            continue;
        }
        let entities = dict.lookup(r.query.store(), name.as_str()).to_vec();
        if entities.is_empty() {
            stats.not_in_dictionary += 1;
            continue;
        }
        out.push(
            LabeledQuery::new(r.query.clone(), vec![name.as_str().to_string()], entities, Source::WL)
                .expect("valid label"),
        );
    }
    stats.emitted = out.len();
    (out, stats)
}

/// Splits test records into single-entity ones (NIL included) and a count
/// of multi-entity ones.
pub fn build_test_set(records: impl IntoIterator<Item = LabeledQuery>) -> (Vec<LabeledQuery>, usize) {
    let mut single = Vec::new();
    let mut multi = 0;
    for r in records {
        if r.entities().len() == 1 {
            single.push(r);
        } else {
            multi += 1;
        }
    }
    (single, multi)
}

/// How the labeled sources are combined into one training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    pub cap_b2e: Option<usize>,
    pub cap_sl: Option<usize>,
    pub cap_wl: Option<usize>,
    /// Turn a k-entity label into k single-label examples; otherwise drop it.
    pub split_multi: bool,
    pub seed: u64,
}

impl Default for MixParams {
    fn default() -> Self {
        MixParams {
            cap_b2e: None,
            cap_sl: None,
            cap_wl: None,
            split_multi: true,
            seed: 0,
        }
    }
}

/// One training pair: input text and its label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub text: String,
    pub label: BrandEntityId,
}

/// What the classifier reads from a labeled query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// The whole query; NIL examples are kept.
    Query,
    /// The annotated brand-name mention; non-branded examples are skipped.
    Mention,
}

fn examples_of(r: &LabeledQuery, kind: InputKind, split_multi: bool, out: &mut Vec<Example>) {
    if r.entities().len() > 1 && !split_multi {
        return;
    }
    let text = match kind {
        InputKind::Query => r.query().text().to_string(),
        InputKind::Mention => match r.brand_names().first() {
            Some(n) => n.clone(),
            None => return,
        },
    };
    for e in r.entities() {
        out.push(Example {
            text: text.clone(),
            label: e.clone(),
        });
    }
}

/// Concatenates the sources with every example weighted equally; a source
/// over its cap is subsampled with a seeded shuffle.
pub fn mix_training(
    b2e: &[LabeledQuery],
    sl: &[LabeledQuery],
    wl: &[LabeledQuery],
    kind: InputKind,
    p: &MixParams,
) -> Vec<Example> {
    let mut out = Vec::new();
    for (i, (records, cap)) in [(b2e, p.cap_b2e), (sl, p.cap_sl), (wl, p.cap_wl)].into_iter().enumerate() {
        let mut part = Vec::new();
        for r in records {
            examples_of(r, kind, p.split_multi, &mut part);
        }
        if let Some(cap) = cap.filter(|&c| c < part.len()) {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            part.shuffle(&mut rng);
            part.truncate(cap);
        }
        out.extend(part);
    }
    out
}

/// Entities referenced by any record (NIL excluded).
pub fn referenced_entities<'a>(records: impl IntoIterator<Item = &'a LabeledQuery>) -> BTreeSet<BrandEntityId> {
    records
        .into_iter()
        .flat_map(|r| r.entities().iter().filter(|e| !e.is_nil()).cloned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gazetteer::build_dictionary;
    use proptest::prelude::*;

    fn us() -> StoreTag {
        StoreTag::new("us").unwrap()
    }
    fn e(s: &str) -> BrandEntityId {
        BrandEntityId::new(s).unwrap()
    }
    fn rec(s: &str, id: &str) -> B2eRecord {
        B2eRecord {
            store: us(),
            surface: s.into(),
            entity: e(id),
        }
    }
    fn dict() -> BrandDictionary {
        build_dictionary(vec![rec("nike", "E1"), rec("ab", "E1"), rec("ab", "E2")], None).unwrap().0
    }
    fn sl(text: &str, brand: &str) -> StrongLabelRecord {
        StrongLabelRecord {
            text: text.into(),
            store: us(),
            language: None,
            brand_name: brand.into(),
        }
    }
    fn eng(text: &str, brand: &str, s: f64) -> EngagementRecord {
        EngagementRecord {
            query: Query::new(text, us()).unwrap(),
            product_brand_name: brand.into(),
            association_strength: s,
        }
    }

    #[test]
    fn augment() {
        let out = augment_b2e(&[rec("nike", "E1")]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].query().text(), "nike");
        assert_eq!(out[0].entities(), &[e("E1")]);
        assert_eq!(out[0].source(), Source::B2E);
        assert!(augment_b2e(&[]).is_empty());
    }

    #[test]
    fn strong_labels() {
        let recs = [sl("nike shoes", "nike"), sl("puma shoes", "puma"), sl("ab charger", "ab"), sl("red shoes", "")];
        let (out, st) = map_strong_labels(&recs, &dict());
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].entities(), &[e("E1")]);
        assert_eq!(out[1].entities(), &[e("E1"), e("E2")]);
        assert!(out[2].is_non_branded());
        assert_eq!(st.dropped_unmatched, 1);
        assert_eq!(st.multi_entity, 1);
    }

    #[test]
    fn weak_labels() {
        let logs = [
            eng("nike running shoes", "Nike", 0.9),
            eng("running shoes", "nike", 0.9),
            eng("snikers bar", "nike", 0.9),
            eng("nike socks", "nike", 0.1),
        ];
        let (out, st) = gen_weak_labels(&logs, 0.5, &dict());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].brand_names(), &["nike".to_string()]);
        assert_eq!(out[0].entities(), &[e("E1")]);
        assert_eq!(out[0].source(), Source::WL);
        assert_eq!((st.not_in_query, st.below_threshold), (2, 1));
    }

    #[test]
    fn test_set_partition() {
        let (out, _) = map_strong_labels(&[sl("nike x", "nike"), sl("ab x", "ab"), sl("red x", "")], &dict());
        let (single, multi) = build_test_set(out);
        assert_eq!((single.len(), multi), (2, 1));
        assert!(single[1].is_non_branded());
        assert_eq!(build_test_set(vec![]), (vec![], 0));
    }

    #[test]
    fn mixing() {
        let (sl_out, _) = map_strong_labels(&[sl("ab charger", "ab"), sl("red x", "")], &dict());
        let b2e = augment_b2e(&[rec("nike", "E1"), rec("ab", "E2")]);
        let split = mix_training(&b2e, &sl_out, &[], InputKind::Query, &MixParams::default());
        assert_eq!(split.len(), 2 + 2 + 1);
        let keep = MixParams {
            split_multi: false,
            ..Default::default()
        };
        assert_eq!(mix_training(&b2e, &sl_out, &[], InputKind::Query, &keep).len(), 3);
        let mentions = mix_training(&b2e, &sl_out, &[], InputKind::Mention, &MixParams::default());
        assert!(mentions.iter().all(|x| !x.label.is_nil()));
        assert_eq!(mentions[2].text, "ab");
        let capped = MixParams {
            cap_b2e: Some(1),
            ..Default::default()
        };
        assert_eq!(mix_training(&b2e, &[], &[], InputKind::Query, &capped).len(), 1);
    }

    proptest! {
        #[test]
        fn weak_labels_are_token_aligned_substrings(
            words in proptest::collection::vec("[a-z]{1,6}", 1..6),
            brand in "[a-z]{1,6}",
            s in 0.0f64..1.0,
        ) {
            let d = build_dictionary(vec![rec(&brand, "E1")], None).unwrap().0;
            let logs = [eng(&words.join(" "), &brand, s)];
            let (out, _) = gen_weak_labels(&logs, 0.3, &d);
            for l in &out {
                prop_assert!(logs.iter().any(|r| r.query == *l.query()));
                let toks: Vec<&str> = l.query().text().split(' ').collect();
                prop_assert!(toks.contains(&l.brand_names()[0].as_str()));
            }
            prop_assert_eq!(out.len(), (s >= 0.3 && words.contains(&brand)) as usize);
        }

        #[test]
        fn test_set_partition_is_total(n_multi in 0usize..5, n_single in 0usize..5) {
            let mut recs = Vec::new();
            for _ in 0..n_multi { recs.push(sl("ab z", "ab")); }
            for _ in 0..n_single { recs.push(sl("nike z", "nike")); }
            let (out, _) = map_strong_labels(&recs, &dict());
            let (single, multi) = build_test_set(out);
            prop_assert_eq!(single.len() + multi, n_multi + n_single);
        }
    }
}
