//! Query normalization and hashed sparse features.
//!
//! Normalization is NFKC, lower-casing and whitespace collapsing. Features
//! are word n-grams plus boundary-padded character n-grams per token, hashed
//! with 64-bit FNV-1a into a fixed dimension, optionally IDF-weighted and
//! L2-normalized.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::canonical_combining_class;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Version of the hashing scheme; stored in every model file.
pub const HASH_VERSION: u32 = 1;

/// Smallest permitted hashed dimension.
pub const MIN_DIM: u32 = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalizedText {
    text: String,
    /// Byte offset of every char plus the end offset.
    char_bytes: Vec<usize>,
    token_spans: Vec<(usize, usize)>,
    /// For each normalized char, the index of the original char it came from.
    origin: Vec<usize>,
}

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn char_len(&self) -> usize {
        self.char_bytes.len() - 1
    }

    /// `[start, end)` char offsets of whitespace-delimited tokens.
    pub fn token_spans(&self) -> &[(usize, usize)] {
        &self.token_spans
    }

    /// Slice by char offsets.
    pub fn slice(&self, start: usize, end: usize) -> &str {
        &self.text[self.char_bytes[start]..self.char_bytes[end]]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.token_spans.iter().map(|&(s, e)| self.slice(s, e))
    }

    /// Maps a normalized char span back to original char offsets.
    pub fn original_span(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        if start >= end || end > self.origin.len() {
            return None;
        }
        Some((self.origin[start], self.origin[end - 1] + 1))
    }
}

fn fold(segment: &str) -> String {
    let mut cur: String = segment.nfkc().collect();
    for _ in 0..4 {
        let next: String = cur.chars().flat_map(char::to_lowercase).collect::<String>().nfkc().collect();
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Normalizes a raw string. Never fails; empty input gives empty output.
pub fn normalize(raw: &str) -> NormalizedText {
    // Group each starter with its trailing combining marks so that
    // composition happens inside a group and offsets map back per group.
    let chars: Vec<char> = raw.chars().collect();
    let mut out: Vec<(char, usize)> = Vec::with_capacity(chars.len());
    let mut pending_space = false;
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        i += 1;
        while i < chars.len() && canonical_combining_class(chars[i]) != 0 {
            i += 1;
        }
        let group: String = chars[start..i].iter().collect();
        for c in fold(&group).chars() {
            if c.is_whitespace() {
                pending_space = true;
            } else if c.is_control() {
                continue;
            } else {
                if pending_space && !out.is_empty() {
                    out.push((' ', start));
                }
                pending_space = false;
                out.push((c, start));
            }
        }
    }

    let mut text = String::with_capacity(out.len());
    let mut char_bytes = Vec::with_capacity(out.len() + 1);
    let mut origin = Vec::with_capacity(out.len());
    let mut token_spans = Vec::new();
    let mut tok_start = None;
    for (idx, &(c, o)) in out.iter().enumerate() {
        char_bytes.push(text.len());
        text.push(c);
        origin.push(o);
        if c == ' ' {
            if let Some(s) = tok_start.take() {
                token_spans.push((s, idx));
            }
        } else if tok_start.is_none() {
            tok_start = Some(idx);
        }
    }
    char_bytes.push(text.len());
    if let Some(s) = tok_start {
        token_spans.push((s, out.len()));
    }
    NormalizedText {
        text,
        char_bytes,
        token_spans,
        origin,
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: u32,
    indices: Vec<u32>,
    values: Vec<f32>,
}

impl SparseVector {
    pub fn zero(dim: u32) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn new(dim: u32, indices: Vec<u32>, values: Vec<f32>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid("sparse vector", "length mismatch"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sparse vector", "indices not strictly increasing"));
        }
        if indices.last().is_some_and(|&i| i >= dim) {
            return Err(Error::invalid("sparse vector", "index out of range"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sparse vector", "non-finite value"));
        }
        Ok(SparseVector { dim, indices, values })
    }

    /// Builds from unsorted (index, value) pairs, summing duplicates.
    pub fn from_pairs(dim: u32, mut pairs: Vec<(u32, f32)>) -> Self {
        pairs.sort_unstable_by_key(|p| p.0);
        let mut indices: Vec<u32> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f32> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        SparseVector { dim, indices, values }
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f32 {
        self.values.iter().map(|v| v * v).sum::<f32>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f32 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
        self
    }
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> f32 {
    let d = a.norm() * b.norm();
    if d == 0.0 {
        0.0
    } else {
        a.dot(b) / d
    }
}

/// IDF weights for the hashed features seen while fitting; every other
/// feature gets the `df = 0` weight.
#[derive(Clone, Debug, PartialEq)]
pub struct IdfTable {
    pub n_docs: u64,
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl IdfTable {
    pub fn weight(&self, feature: u32) -> f32 {
        match self.indices.binary_search(&feature) {
            Ok(p) => self.values[p],
            Err(_) => idf(self.n_docs, 0),
        }
    }
}

fn idf(n_docs: u64, df: u64) -> f32 {
    (((1 + n_docs) as f64 / (1 + df) as f64).ln() + 1.0) as f32
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeaturizerConfig {
    pub dim: u32,
    pub word_ngrams: u32,
    pub char_ngrams: (u32, u32),
    pub hash_version: u32,
    pub idf_table: Option<IdfTable>,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            dim: 1 << 20,
            word_ngrams: 2,
            char_ngrams: (2, 4),
            hash_version: HASH_VERSION,
            idf_table: None,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < MIN_DIM {
            return Err(Error::invalid("featurizer", format!("dim {} < 2^16", self.dim)));
        }
        let (lo, hi) = self.char_ngrams;
        if self.word_ngrams < 1 || lo < 1 || hi < lo {
            return Err(Error::invalid("featurizer", "n-gram orders must be >= 1 and min <= max"));
        }
        if self.hash_version != HASH_VERSION {
            return Err(Error::invalid(
                "featurizer",
                format!("hash version {} unsupported", self.hash_version),
            ));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a.
fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for &b in *p {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK ext A
        | 0x4E00..=0x9FFF    // CJK unified
        | 0xF900..=0xFAFF
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0x20000..=0x2FA1F)
}

/// Raw hashed term counts (no IDF, no normalization).
fn term_counts(text: &NormalizedText, cfg: &FeaturizerConfig) -> Vec<(u32, f32)> {
    let dim = cfg.dim as u64;
    let tokens: Vec<&str> = text.tokens().collect();
    let cjk: Vec<bool> = tokens.iter().map(|t| t.chars().any(is_cjk)).collect();
    let mut out = Vec::new();

    for n in 1..=cfg.word_ngrams as usize {
        if n > tokens.len() {
            break;
        }
        for start in 0..=tokens.len() - n {
            if cjk[start..start + n].iter().any(|&c| c) {
                continue;
            }
            let mut parts: Vec<&[u8]> = Vec::with_capacity(2 * n + 1);
            let tag = [b'w', n as u8];
            parts.push(&tag);
            for (k, t) in tokens[start..start + n].iter().enumerate() {
                if k > 0 {
                    parts.push(b" ");
                }
                parts.push(t.as_bytes());
            }
            out.push(((fnv1a(&parts) % dim) as u32, 1.0));
        }
    }

    let (lo, hi) = cfg.char_ngrams;
    let mut buf = [0u8; 4];
    for tok in &tokens {
        let padded: Vec<char> = std::iter::once(' ')
            .chain(tok.chars())
            .chain(std::iter::once(' '))
            .collect();
        for n in lo as usize..=hi as usize {
            if n > padded.len() {
                break;
            }
            for w in padded.windows(n) {
                let mut h: u64 = fnv1a(&[&[b'c', n as u8]]);
                for &c in w {
                    for &b in c.encode_utf8(&mut buf).as_bytes() {
                        h ^= b as u64;
                        h = h.wrapping_mul(0x0000_0100_0000_01b3);
                    }
                }
                out.push(((h % dim) as u32, 1.0));
            }
        }
    }
    out
}

/// Hashed word + char n-gram TF(-IDF) vector with unit L2 norm; the zero
/// vector for empty text.
pub fn featurize(text: &NormalizedText, cfg: &FeaturizerConfig) -> SparseVector {
    let mut v = SparseVector::from_pairs(cfg.dim, term_counts(text, cfg));
    if let Some(idf) = &cfg.idf_table {
        for (i, val) in v.indices.iter().zip(v.values.iter_mut()) {
            *val *= idf.weight(*i);
        }
    }
    v.normalized()
}

/// Convenience: normalize then featurize.
pub fn featurize_str(raw: &str, cfg: &FeaturizerConfig) -> SparseVector {
    featurize(&normalize(raw), cfg)
}

/// Fits `idf = ln((1 + N) / (1 + df)) + 1` over the corpus.
pub fn fit_idf<'a, I>(corpus: I, cfg: &FeaturizerConfig) -> Result<FeaturizerConfig>
where
    I: IntoIterator<Item = &'a NormalizedText>,
{
    let mut df: HashMap<u32, u64> = HashMap::new();
    let mut n_docs = 0u64;
    let mut seen = Vec::new();
    for doc in corpus {
        n_docs += 1;
        seen.clear();
        seen.extend(term_counts(doc, cfg).into_iter().map(|(i, _)| i));
        seen.sort_unstable();
        seen.dedup();
        for &i in &seen {
            *df.entry(i).or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::EmptyInput("idf corpus"));
    }
    let mut entries: Vec<(u32, u64)> = df.into_iter().collect();
    entries.sort_unstable();
    let (indices, values) = entries.into_iter().map(|(i, d)| (i, idf(n_docs, d))).unzip();
    Ok(FeaturizerConfig {
        idf_table: Some(IdfTable {
            n_docs,
            indices,
            values,
        }),
        ..cfg.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn normalize_examples() {
        let n = normalize("Red  NIKE Shoes ");
        assert_eq!(n.as_str(), "red nike shoes");
        assert_eq!(n.token_spans(), &[(0, 3), (4, 8), (9, 14)]);
        assert_eq!(normalize("").as_str(), "");
        assert!(normalize("").token_spans().is_empty());
        assert_eq!(normalize("ＮＩＫＥ").as_str(), "nike");
    }

    #[test]
    fn normalize_maps_back_to_original() {
        let raw = "  Red\tNIKE";
        let n = normalize(raw);
        assert_eq!(n.as_str(), "red nike");
        let (s, e) = n.original_span(4, 8).unwrap();
        let orig: String = raw.chars().skip(s).take(e - s).collect();
        assert_eq!(orig, "NIKE");
    }

    #[test]
    fn normalize_composes_combining_marks() {
        assert_eq!(normalize("Cafe\u{301}").as_str(), "café");
    }

    #[test]
    fn featurize_is_deterministic_and_unit() {
        let cfg = FeaturizerConfig::default();
        let a = featurize_str("nike", &cfg);
        assert_eq!(a, featurize_str("nike", &cfg));
        let b = featurize_str("nike shoes", &cfg);
        assert!((b.dot(&b) - 1.0).abs() < 1e-6);
        assert!(featurize_str("", &cfg).nnz() == 0);
    }

    /// Exhaustive char n-gram sets (same padding as the featurizer).
    fn char_ngrams(s: &str) -> BTreeSet<String> {
        let p: Vec<char> = format!(" {s} ").chars().collect();
        (2..=4).flat_map(|n| p.windows(n).map(|w| w.iter().collect()).collect::<Vec<String>>()).collect()
    }

    #[test]
    fn misspelling_is_closer_than_unrelated_brand() {
        // Oracle: n-gram set overlap orders the pairs the same way.
        let ov = |a: &str, b: &str| char_ngrams(a).intersection(&char_ngrams(b)).count();
        assert!(ov("nike", "nikee") > ov("nike", "sony"));
        assert_eq!(ov("nike", "sony"), 0);

        let cfg = FeaturizerConfig::default();
        let nike = featurize_str("nike", &cfg);
        let c1 = cosine(&nike, &featurize_str("nikee", &cfg));
        let c2 = cosine(&nike, &featurize_str("sony", &cfg));
        assert!(c1 > c2, "{c1} vs {c2}");
        assert!(c1 > 0.5);
    }

    #[test]
    fn cjk_uses_char_ngrams_only() {
        let cfg = FeaturizerConfig::default();
        let v = featurize_str("ナイキ", &cfg);
        // " ナイキ " has 4 + 3 + 2 char n-grams of orders 2..4; no word features.
        assert_eq!(v.nnz(), 9);
        let w = featurize_str("nike", &cfg);
        // 1 word + (5 + 4 + 3) char n-grams.
        assert_eq!(w.nnz(), 13);
    }

    #[test]
    fn idf_formula() {
        let cfg = FeaturizerConfig::default();
        let doc = normalize("nike");
        let fitted = fit_idf([&doc], &cfg).unwrap();
        let table = fitted.idf_table.as_ref().unwrap();
        for &i in featurize(&doc, &cfg).indices() {
            assert!((table.weight(i) - 1.0).abs() < 1e-6);
        }
        let absent = featurize_str("zzzz", &cfg).indices()[0];
        assert!(!table.indices.contains(&absent));
        assert!((table.weight(absent) - (2f32.ln() + 1.0)).abs() < 1e-6);

        let d2 = normalize("nike shoes");
        let fitted = fit_idf([&doc, &d2], &cfg).unwrap();
        let t = fitted.idf_table.unwrap();
        let both = featurize(&doc, &cfg).indices()[0];
        let shoes_only = featurize_str("shoes", &cfg)
            .indices()
            .iter()
            .copied()
            .find(|i| !featurize(&doc, &cfg).indices().contains(i))
            .unwrap();
        assert!(t.weight(both) < t.weight(shoes_only));
    }

    #[test]
    fn idf_rejects_empty_corpus() {
        let empty: Vec<NormalizedText> = vec![];
        assert!(matches!(
            fit_idf(&empty, &FeaturizerConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = FeaturizerConfig::default();
        assert!(c.validate().is_ok());
        c.dim = 1000;
        assert!(c.validate().is_err());
        let c = FeaturizerConfig {
            char_ngrams: (0, 3),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[ a-zA-Z0-9éÉüÜ\t\u{3000}ＡＢｃ１ナイキ漢字\u{301}]{0,24}").unwrap()
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in text_strategy()) {
            let once = normalize(&s);
            let twice = normalize(once.as_str());
            prop_assert_eq!(once.as_str(), twice.as_str());
            prop_assert_eq!(once.token_spans(), twice.token_spans());
        }

        #[test]
        fn cosine_symmetric_and_bounded(a in text_strategy(), b in text_strategy()) {
            let cfg = FeaturizerConfig::default();
            let (va, vb) = (featurize_str(&a, &cfg), featurize_str(&b, &cfg));
            let c1 = cosine(&va, &vb);
            prop_assert_eq!(c1, cosine(&vb, &va));
            prop_assert!((0.0..=1.0 + 1e-5).contains(&c1));
            if !va.is_zero() {
                prop_assert!((va.norm() - 1.0).abs() < 1e-5);
            }
        }
    }
}
