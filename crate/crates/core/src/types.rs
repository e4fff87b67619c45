//! Domain vocabulary shared by every module: queries, brand entities,
//! mentions, scored candidates and link results.
//!
//! All types are immutable values. Their JSON shapes use the field names
//! below verbatim and are the canonical JSON-lines record format.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{self, NormalizedText};

/// Byte that separates the store code from the surface in dictionary keys.
/// Neither part may contain it.
pub const KEY_SEPARATOR: char = '\u{1f}';

/// Reserved identifier of the NIL entity ("this query carries no brand").
pub const NIL_ID: &str = "NIL";

/// Short code of a retail store / locale, e.g. `us` or `jp`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StoreTag(String);

impl StoreTag {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        if code.is_empty() {
            return Err(Error::invalid("store tag", "empty"));
        }
        if code.contains(KEY_SEPARATOR) {
            return Err(Error::invalid("store tag", "contains the key separator"));
        }
        Ok(StoreTag(code))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for StoreTag {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        StoreTag::new(s)
    }
}

impl From<StoreTag> for String {
    fn from(s: StoreTag) -> String {
        s.0
    }
}

impl fmt::Display for StoreTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A raw search query in a given store.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "QueryRepr", into = "QueryRepr")]
pub struct Query {
    text: String,
    store: StoreTag,
    language: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct QueryRepr {
    text: String,
    store: StoreTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    language: Option<String>,
}

impl Query {
    /// Fails when the text is empty after normalization.
    pub fn new(text: impl Into<String>, store: StoreTag) -> Result<Self> {
        let text = text.into();
        if text::normalize(&text).is_empty() {
            return Err(Error::invalid("query", "text is empty after normalization"));
        }
        Ok(Query {
            text,
            store,
            language: None,
        })
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = Some(language.into());
        self
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn store(&self) -> &StoreTag {
        &self.store
    }

    pub fn language(&self) -> Option<&str> {
        self.language.as_deref()
    }

    pub fn normalized(&self) -> NormalizedText {
        text::normalize(&self.text)
    }
}

impl TryFrom<QueryRepr> for Query {
    type Error = Error;
    fn try_from(r: QueryRepr) -> Result<Self> {
        let q = Query::new(r.text, r.store)?;
        Ok(match r.language {
            Some(l) => q.with_language(l),
            None => q,
        })
    }
}

impl From<Query> for QueryRepr {
    fn from(q: Query) -> Self {
        QueryRepr {
            text: q.text,
            store: q.store,
            language: q.language,
        }
    }
}

/// Globally unique brand identity. Exactly one value, [`BrandEntityId::nil`],
/// is the NIL sentinel.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "EntityRepr", into = "EntityRepr")]
pub struct BrandEntityId(String);

#[derive(Serialize, Deserialize)]
struct EntityRepr {
    id: String,
    is_nil: bool,
}

impl BrandEntityId {
    /// A regular brand entity. The NIL id and empty ids are rejected.
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("entity id", "empty"));
        }
        if id == NIL_ID {
            return Err(Error::invalid("entity id", "NIL is reserved"));
        }
        if id.contains(char::is_whitespace) {
            return Err(Error::invalid("entity id", format!("{id:?} contains whitespace")));
        }
        Ok(BrandEntityId(id))
    }

    pub fn nil() -> Self {
        BrandEntityId(NIL_ID.to_string())
    }

    /// Parses either a regular id or the literal `NIL`.
    pub fn parse(id: &str) -> Result<Self> {
        if id == NIL_ID {
            Ok(Self::nil())
        } else {
            Self::new(id)
        }
    }

    pub fn id(&self) -> &str {
        &self.0
    }

    pub fn is_nil(&self) -> bool {
        self.0 == NIL_ID
    }
}

impl TryFrom<EntityRepr> for BrandEntityId {
    type Error = Error;
    fn try_from(r: EntityRepr) -> Result<Self> {
        let e = BrandEntityId::parse(&r.id)?;
        if e.is_nil() != r.is_nil {
            return Err(Error::invalid("entity id", "is_nil flag disagrees with id"));
        }
        Ok(e)
    }
}

impl From<BrandEntityId> for EntityRepr {
    fn from(e: BrandEntityId) -> Self {
        let is_nil = e.is_nil();
        EntityRepr { id: e.0, is_nil }
    }
}

impl fmt::Display for BrandEntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A detected brand substring. `span` is a `[start, end)` range of
/// character offsets into the normalized query text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrandMention {
    pub surface: String,
    pub span: (usize, usize),
}

impl BrandMention {
    pub fn from_span(text: &NormalizedText, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > text.char_len() {
            return Err(Error::invalid(
                "mention span",
                format!("[{start}, {end}) outside text of {} chars", text.char_len()),
            ));
        }
        Ok(BrandMention {
            surface: text.slice(start, end).to_string(),
            span: (start, end),
        })
    }

    /// Checks the span invariant against the text the mention came from.
    pub fn is_consistent_with(&self, text: &NormalizedText) -> bool {
        let (s, e) = self.span;
        s < e && e <= text.char_len() && text.slice(s, e) == self.surface
    }
}

/// A candidate entity with a relevance score in `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScoredRepr")]
pub struct ScoredEntity {
    pub entity: BrandEntityId,
    pub score: f64,
}

#[derive(Deserialize)]
struct ScoredRepr {
    entity: BrandEntityId,
    score: f64,
}

impl ScoredEntity {
    pub fn new(entity: BrandEntityId, score: f64) -> Result<Self> {
        if !(score > 0.0 && score <= 1.0) {
            return Err(Error::invalid("score", format!("{score} not in (0, 1]")));
        }
        Ok(ScoredEntity { entity, score })
    }
}

impl TryFrom<ScoredRepr> for ScoredEntity {
    type Error = Error;
    fn try_from(r: ScoredRepr) -> Result<Self> {
        ScoredEntity::new(r.entity, r.score)
    }
}

/// Product-type code (opaque).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductType(pub String);

impl ProductType {
    pub fn new(code: impl Into<String>) -> Self {
        ProductType(code.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProductType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Single { candidate: ScoredEntity },
    Ambiguous { candidates: Vec<ScoredEntity> },
    /// The model asserts the query is non-branded.
    Nil,
    /// The linker abstained.
    NoPrediction,
}

impl Outcome {
    pub fn single_entity(&self) -> Option<&BrandEntityId> {
        match self {
            Outcome::Single { candidate } => Some(&candidate.entity),
            _ => None,
        }
    }

    pub fn is_single(&self) -> bool {
        matches!(self, Outcome::Single { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstainReason {
    /// Stage one found no mention.
    DetectorMiss,
    /// The matcher returned no candidates.
    NoCandidates,
    /// Every candidate was removed by product-type filtering.
    FilteredOut,
    /// Two or more candidates survived filtering.
    Ambiguous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    TwoStage,
    EndToEnd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum StageRecord {
    Detector {
        mention: Option<BrandMention>,
    },
    Candidates {
        matcher: String,
        candidates: Vec<ScoredEntity>,
    },
    ProductType {
        pt: Option<ProductType>,
    },
    Filter {
        pt_applied: bool,
        kept: Vec<BrandEntityId>,
        dropped: Vec<BrandEntityId>,
    },
    Abstain {
        reason: AbstainReason,
    },
    Branch {
        branch: Branch,
        outcome: Outcome,
        trace: Vec<StageRecord>,
    },
    Fusion {
        choice: Option<Branch>,
    },
}

/// Per-query linking outcome plus the provenance of how it was reached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub outcome: Outcome,
    pub trace: Vec<StageRecord>,
}

impl LinkResult {
    pub fn new(outcome: Outcome) -> Self {
        LinkResult {
            outcome,
            trace: Vec::new(),
        }
    }

    pub fn single(entity: BrandEntityId, score: f64) -> Result<Self> {
        if entity.is_nil() {
            return Err(Error::invalid("single outcome", "entity is NIL"));
        }
        Ok(Self::new(Outcome::Single {
            candidate: ScoredEntity::new(entity, score)?,
        }))
    }

    pub fn ambiguous(candidates: Vec<ScoredEntity>) -> Result<Self> {
        if candidates.len() < 2 {
            return Err(Error::invalid("ambiguous outcome", "needs two or more candidates"));
        }
        Ok(Self::new(Outcome::Ambiguous { candidates }))
    }

    pub fn nil() -> Self {
        Self::new(Outcome::Nil)
    }

    pub fn no_prediction() -> Self {
        Self::new(Outcome::NoPrediction)
    }

    /// Every entity mentioned anywhere in the outcome or trace.
    pub fn referenced_entities(&self) -> Vec<&BrandEntityId> {
        fn walk<'a>(trace: &'a [StageRecord], out: &mut Vec<&'a BrandEntityId>) {
            for r in trace {
                match r {
                    StageRecord::Candidates { candidates, .. } => {
                        out.extend(candidates.iter().map(|c| &c.entity))
                    }
                    StageRecord::Filter { kept, dropped, .. } => {
                        out.extend(kept.iter().chain(dropped));
                    }
                    StageRecord::Branch { outcome, trace, .. } => {
                        outcome_entities(outcome, out);
                        walk(trace, out);
                    }
                    _ => {}
                }
            }
        }
        fn outcome_entities<'a>(o: &'a Outcome, out: &mut Vec<&'a BrandEntityId>) {
            match o {
                Outcome::Single { candidate } => out.push(&candidate.entity),
                Outcome::Ambiguous { candidates } => out.extend(candidates.iter().map(|c| &c.entity)),
                _ => {}
            }
        }
        let mut out = Vec::new();
        outcome_entities(&self.outcome, &mut out);
        walk(&self.trace, &mut out);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    B2E,
    SL,
    WL,
}

/// A query with annotated brand names and the entities they resolve to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabeledRepr", into = "LabeledRepr")]
pub struct LabeledQuery {
    query: Query,
    brand_names: Vec<String>,
    entities: Vec<BrandEntityId>,
    source: Source,
}

#[derive(Serialize, Deserialize)]
struct LabeledRepr {
    query: Query,
    brand_names: Vec<String>,
    entities: Vec<BrandEntityId>,
    source: Source,
}

impl LabeledQuery {
    pub fn new(
        query: Query,
        brand_names: Vec<String>,
        entities: Vec<BrandEntityId>,
        source: Source,
    ) -> Result<Self> {
        let has_nil = entities.iter().any(BrandEntityId::is_nil);
        if brand_names.is_empty() != has_nil {
            return Err(Error::invalid(
                "labeled query",
                "non-branded examples must have no brand names and entities = [NIL]",
            ));
        }
        if has_nil && entities.len() != 1 {
            return Err(Error::invalid("labeled query", "NIL cannot be mixed with brands"));
        }
        Ok(LabeledQuery {
            query,
            brand_names,
            entities,
            source,
        })
    }

    pub fn non_branded(query: Query, source: Source) -> Self {
        LabeledQuery {
            query,
            brand_names: Vec::new(),
            entities: vec![BrandEntityId::nil()],
            source,
        }
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn brand_names(&self) -> &[String] {
        &self.brand_names
    }

    pub fn entities(&self) -> &[BrandEntityId] {
        &self.entities
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn is_non_branded(&self) -> bool {
        self.entities.len() == 1 && self.entities[0].is_nil()
    }

    /// The gold entity when exactly one brand entity is labeled.
    pub fn single_brand(&self) -> Option<&BrandEntityId> {
        match self.entities.as_slice() {
            [e] if !e.is_nil() => Some(e),
            _ => None,
        }
    }
}

impl TryFrom<LabeledRepr> for LabeledQuery {
    type Error = Error;
    fn try_from(r: LabeledRepr) -> Result<Self> {
        LabeledQuery::new(r.query, r.brand_names, r.entities, r.source)
    }
}

impl From<LabeledQuery> for LabeledRepr {
    fn from(l: LabeledQuery) -> Self {
        LabeledRepr {
            query: l.query,
            brand_names: l.brand_names,
            entities: l.entities,
            source: l.source,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(id: &str) -> BrandEntityId {
        BrandEntityId::new(id).unwrap()
    }

    #[test]
    fn single_constructor() {
        let r = LinkResult::single(e("E1"), 0.9).unwrap();
        assert_eq!(r.outcome.single_entity(), Some(&e("E1")));
        assert!(r.trace.is_empty());
        if let Outcome::Single { candidate } = &r.outcome {
            assert_eq!(candidate.score, 0.9);
        }
    }

    #[test]
    fn single_rejects_nil_and_bad_scores() {
        assert!(LinkResult::single(BrandEntityId::nil(), 0.9).is_err());
        assert!(LinkResult::single(e("E1"), 1.5).is_err());
        assert!(LinkResult::single(e("E1"), 0.0).is_err());
        assert!(LinkResult::single(e("E1"), f64::NAN).is_err());
    }

    #[test]
    fn nil_is_reserved() {
        assert!(BrandEntityId::new("NIL").is_err());
        assert!(BrandEntityId::parse("NIL").unwrap().is_nil());
        let bad = r#"{"id":"E1","is_nil":true}"#;
        assert!(serde_json::from_str::<BrandEntityId>(bad).is_err());
    }

    #[test]
    fn store_tag_rejects_separator() {
        assert!(StoreTag::new("").is_err());
        assert!(StoreTag::new("u\u{1f}s").is_err());
        assert_eq!(StoreTag::new("us").unwrap().as_str(), "us");
    }

    #[test]
    fn query_requires_text() {
        let us = StoreTag::new("us").unwrap();
        assert!(Query::new("   ", us.clone()).is_err());
        assert!(serde_json::from_str::<Query>(r#"{"text":"","store":"us"}"#).is_err());
        let q: Query = serde_json::from_str(r#"{"text":"Nike","store":"us","language":"en"}"#).unwrap();
        assert_eq!(q.language(), Some("en"));
    }

    #[test]
    fn labeled_query_nil_convention() {
        let q = Query::new("usb cable", StoreTag::new("us").unwrap()).unwrap();
        assert!(LabeledQuery::new(q.clone(), vec![], vec![e("E1")], Source::SL).is_err());
        assert!(LabeledQuery::new(q.clone(), vec!["x".into()], vec![BrandEntityId::nil()], Source::SL).is_err());
        let nb = LabeledQuery::non_branded(q, Source::SL);
        assert!(nb.is_non_branded());
        assert_eq!(nb.single_brand(), None);
    }

    #[test]
    fn json_shapes() {
        let r = LinkResult::single(e("E1"), 0.5).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(
            s,
            r#"{"outcome":{"kind":"single","candidate":{"entity":{"id":"E1","is_nil":false},"score":0.5}},"trace":[]}"#
        );
    }
}
