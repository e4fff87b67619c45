//! Store-keyed exact brand dictionary and the trie-based mention detector.

mod trie;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use log::warn;
use serde::Serialize;

use crate::container::{self, Dec, Enc, Kind};
use crate::error::{Error, FormatError, Result};
use crate::text::{self, NormalizedText};
use crate::types::{BrandEntityId, BrandMention, LabeledQuery, Query, StoreTag, KEY_SEPARATOR};

use trie::TokenTrie;

const DICT_KIND: Kind = Kind {
    magic: *b"BLDICT\0\0",
    version: 1,
    name: "dictionary snapshot",
};

/// Store-prefixed lookup key: `store + '\x1f' + surface`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SurfaceFormKey {
    pub store: StoreTag,
    pub surface: String,
}

impl SurfaceFormKey {
    pub fn new(store: StoreTag, surface: impl Into<String>) -> Result<Self> {
        let surface = surface.into();
        if surface.is_empty() {
            return Err(Error::invalid("surface form", "empty"));
        }
        if surface.contains(KEY_SEPARATOR) {
            return Err(Error::invalid("surface form", "contains the key separator"));
        }
        Ok(SurfaceFormKey { store, surface })
    }

    pub fn encode(&self) -> String {
        format!("{}{}{}", self.store, KEY_SEPARATOR, self.surface)
    }

    pub fn decode(key: &str) -> Result<Self> {
        let (store, surface) = key
            .split_once(KEY_SEPARATOR)
            .ok_or_else(|| Error::invalid("surface form key", "missing separator"))?;
        SurfaceFormKey::new(StoreTag::new(store)?, surface)
    }
}

/// One row of a brand-name-to-entity file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct B2eRecord {
    pub store: StoreTag,
    pub surface: String,
    pub entity: BrandEntityId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected_empty: usize,
    pub rejected_unknown: usize,
}

/// Exact (store, surface) → entities dictionary with a per-store token trie.
#[derive(Clone, Debug)]
pub struct BrandDictionary {
    entries: BTreeMap<String, Vec<BrandEntityId>>,
    tries: BTreeMap<StoreTag, TokenTrie>,
    entities: BTreeSet<BrandEntityId>,
}

/// Builds the dictionary. Records with an empty surface, the NIL entity, or
/// an entity outside `known` (when given) are rejected and counted.
pub fn build_dictionary<I>(
    records: I,
    known: Option<&BTreeSet<BrandEntityId>>,
) -> Result<(BrandDictionary, BuildReport)>
where
    I: IntoIterator<Item = B2eRecord>,
{
    let mut report = BuildReport::default();
    let mut entries: BTreeMap<String, BTreeSet<BrandEntityId>> = BTreeMap::new();
    let mut seen_any = false;
    for r in records {
        seen_any = true;
        let surface = text::normalize(&r.surface);
        if surface.is_empty() || surface.as_str().contains(KEY_SEPARATOR) {
            report.rejected_empty += 1;
            continue;
        }
        if r.entity.is_nil() || known.is_some_and(|k| !k.contains(&r.entity)) {
            report.rejected_unknown += 1;
            continue;
        }
        let key = SurfaceFormKey::new(r.store, surface.as_str())?.encode();
        if entries.entry(key).or_default().insert(r.entity) {
            report.accepted += 1;
        } else {
            report.duplicates += 1;
        }
    }
    if !seen_any {
        return Err(Error::EmptyInput("brand-name-to-entity records"));
    }
    if report.rejected_empty + report.rejected_unknown > 0 {
        warn!(
            "dictionary: rejected {} empty and {} unknown-entity records",
            report.rejected_empty, report.rejected_unknown
        );
    }
    let entries = entries
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().collect()))
        .collect();
    Ok((BrandDictionary::from_entries(entries)?, report))
}

impl BrandDictionary {
    fn from_entries(entries: BTreeMap<String, Vec<BrandEntityId>>) -> Result<Self> {
        let mut tries: BTreeMap<StoreTag, TokenTrie> = BTreeMap::new();
        let mut entities = BTreeSet::new();
        for (k, v) in &entries {
            let key = SurfaceFormKey::decode(k)?;
            tries
                .entry(key.store)
                .or_default()
                .insert(key.surface.split(' '));
            entities.extend(v.iter().cloned());
        }
        Ok(BrandDictionary {
            entries,
            tries,
            entities,
        })
    }

    /// Exact lookup; the surface is normalized first.
    pub fn lookup(&self, store: &StoreTag, surface: &str) -> &[BrandEntityId] {
        let surface = text::normalize(surface);
        if surface.is_empty() {
            return &[];
        }
        let key = format!("{}{}{}", store, KEY_SEPARATOR, surface.as_str());
        self.entries.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every entity referenced by some key.
    pub fn entities(&self) -> &BTreeSet<BrandEntityId> {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SurfaceFormKey, &[BrandEntityId])> + '_ {
        self.entries
            .iter()
            .map(|(k, v)| (SurfaceFormKey::decode(k).expect("keys validated on insert"), v.as_slice()))
    }

    /// Surfaces (any store) that map to `entity`.
    pub fn surfaces_by_entity(&self) -> HashMap<BrandEntityId, Vec<String>> {
        let mut out: HashMap<BrandEntityId, Vec<String>> = HashMap::new();
        for (k, v) in self.iter() {
            for e in v {
                out.entry(e.clone()).or_default().push(k.surface.clone());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &DICT_KIND, &self.to_payload())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        container::encode(&DICT_KIND, &self.to_payload())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let payload = container::decode(&DICT_KIND, bytes)?;
        let mut d = Dec::new(payload);
        let n = d.u64()? as usize;
        let mut entries = BTreeMap::new();
        for _ in 0..n {
            let key = d.str()?;
            let m = d.u32()? as usize;
            let mut ents = Vec::with_capacity(m);
            for _ in 0..m {
                let id = d.str()?;
                ents.push(BrandEntityId::new(id).map_err(|e| FormatError::Malformed(e.to_string()))?);
            }
            entries.insert(key, ents);
        }
        d.finish()?;
        Self::from_entries(entries)
    }

    fn to_payload(&self) -> Vec<u8> {
        let mut e = Enc::default();
        e.u64(self.entries.len() as u64);
        for (k, v) in &self.entries {
            e.str(k);
            e.u32(v.len() as u32);
            for id in v {
                e.str(id.id());
            }
        }
        e.buf
    }
}

/// Exact-match candidate generation for a detected mention. Never fuzzy.
pub fn lexical_match(
    dict: &BrandDictionary,
    mention: &BrandMention,
    store: &StoreTag,
) -> BTreeSet<BrandEntityId> {
    dict.lookup(store, &mention.surface).iter().cloned().collect()
}

/// Longest token-aligned dictionary surface in the normalized query; ties
/// on length go to the leftmost start.
pub fn trie_detect(dict: &BrandDictionary, query: &Query) -> Option<BrandMention> {
    let trie = dict.tries.get(query.store())?;
    let text = query.normalized();
    detect_in(trie, &text)
}

fn detect_in(trie: &TokenTrie, text: &NormalizedText) -> Option<BrandMention> {
    let spans = text.token_spans();
    let tokens: Vec<&str> = text.tokens().collect();
    let mut best: Option<(usize, usize)> = None;
    for start in 0..tokens.len() {
        if let Some(&n) = trie.prefix_matches(&tokens[start..]).last() {
            let (s, e) = (spans[start].0, spans[start + n - 1].1);
            if best.is_none_or(|(bs, be)| e - s > be - bs) {
                best = Some((s, e));
            }
        }
    }
    best.map(|(s, e)| BrandMention::from_span(text, s, e).expect("token spans are in bounds"))
}

/// Stage-one mention detection.
pub trait MentionDetector: Send + Sync {
    fn detect(&self, query: &Query) -> Option<BrandMention>;
}

impl MentionDetector for BrandDictionary {
    fn detect(&self, query: &Query) -> Option<BrandMention> {
        trie_detect(self, query)
    }
}

/// Replays gold mention annotations: the annotated brand name, located as a
/// token-aligned substring of the query.
#[derive(Clone, Debug, Default)]
pub struct OracleDetector {
    gold: HashMap<(StoreTag, String), String>,
}

impl OracleDetector {
    pub fn from_labeled<'a>(records: impl IntoIterator<Item = &'a LabeledQuery>) -> Self {
        let mut gold = HashMap::new();
        for r in records {
            if let Some(name) = r.brand_names().first() {
                let q = r.query().normalized();
                gold.insert(
                    (r.query().store().clone(), q.as_str().to_string()),
                    text::normalize(name).as_str().to_string(),
                );
            }
        }
        OracleDetector { gold }
    }
}

impl MentionDetector for OracleDetector {
    fn detect(&self, query: &Query) -> Option<BrandMention> {
        let text = query.normalized();
        let name = self.gold.get(&(query.store().clone(), text.as_str().to_string()))?;
        find_token_aligned(&text, name)
    }
}

/// First token-aligned occurrence of `needle` (already normalized) in `text`.
pub fn find_token_aligned(text: &NormalizedText, needle: &str) -> Option<BrandMention> {
    let needle_tokens: Vec<&str> = needle.split(' ').filter(|t| !t.is_empty()).collect();
    if needle_tokens.is_empty() {
        return None;
    }
    let tokens: Vec<&str> = text.tokens().collect();
    let spans = text.token_spans();
    let n = needle_tokens.len();
    (0..tokens.len().saturating_sub(n - 1))
        .find(|&i| tokens[i..i + n] == needle_tokens[..])
        .map(|i| BrandMention::from_span(text, spans[i].0, spans[i + n - 1].1).unwrap())
}
