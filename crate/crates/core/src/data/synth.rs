//! Deterministic synthetic brand universe: entities with surface variants,
//! product types, labeled queries, engagement logs and a sliced test set.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{write_b2e_tsv, write_jsonl};
use super::{EngagementRecord, PtRecord, StrongLabelRecord};
use crate::error::{Error, Result};
use crate::gazetteer::B2eRecord;
use crate::ptfilter::{mine_associations, PtAssociations};
use crate::types::{BrandEntityId, LabeledQuery, ProductType, Query, Source, StoreTag};

const CONSONANTS: &[u8] = b"bdfgkmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const FINALS: &[u8] = b"nrkst";

const NOUNS: &[&str] = &[
    "shoes", "cable", "charger", "laptop", "headphones", "backpack", "jacket", "watch", "camera", "blender",
    "kettle", "sofa", "lamp", "pillow", "towel", "bottle", "mug", "toaster", "drill", "hammer", "tent",
    "helmet", "gloves", "socks", "shirt", "jeans", "dress", "perfume", "shampoo", "lipstick", "toy", "puzzle",
    "guitar", "keyboard", "mouse", "monitor", "speaker", "router", "printer", "phone", "tablet", "stroller",
    "vacuum", "mattress", "blanket", "scarf", "sunglasses", "wallet", "umbrella", "candle",
];

const QUALIFIERS: &[&str] = &["garden", "travel", "office", "baby", "outdoor", "kitchen", "gaming", "sport"];

const MODIFIERS: &[&str] = &[
    "red", "blue", "black", "white", "green", "pink", "grey", "large", "small", "mini", "kids", "mens",
    "womens", "cheap", "best", "new", "organic", "wireless", "waterproof", "leather", "cotton", "steel",
    "wooden", "portable", "premium", "classic", "vintage", "slim", "heavy", "soft", "warm", "light",
    "electric", "smart", "foldable", "compact", "deluxe", "basic", "pro", "eco",
];

/// Parameters of the synthetic universe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_entities: usize,
    /// 1..=4 of: full name, abbreviation / transliteration, vowel-dropped spelling.
    pub surface_variants_per_entity: usize,
    /// `language:store` pairs, e.g. `en:us`.
    pub languages: Vec<String>,
    /// Branded strongly-labeled training queries.
    pub n_branded_queries: usize,
    /// Non-branded strongly-labeled training queries.
    pub n_nonbranded_queries: usize,
    pub n_engagement: usize,
    pub pt_space_size: usize,
    /// Fraction of entities that share one surface with a partner entity.
    pub shared_fraction: f64,
    pub n_test_branded: usize,
    pub n_test_misspelled: usize,
    pub n_test_nonbranded: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_entities: 5000,
            surface_variants_per_entity: 3,
            languages: vec!["en:us".into(), "de:de".into(), "ja:jp".into()],
            n_branded_queries: 20000,
            n_nonbranded_queries: 6000,
            n_engagement: 20000,
            pt_space_size: 40,
            shared_fraction: 0.15,
            n_test_branded: 4000,
            n_test_misspelled: 1000,
            n_test_nonbranded: 5000,
            seed: 42,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::invalid("corpus spec", r.to_string()));
        if self.n_entities < 2 {
            return bad("n_entities must be >= 2");
        }
        if !(1..=4).contains(&self.surface_variants_per_entity) {
            return bad("surface_variants_per_entity must be in 1..=4");
        }
        if self.languages.is_empty() {
            return bad("at least one language:store pair required");
        }
        for l in &self.languages {
            let Some((lang, store)) = l.split_once(':') else {
                return bad("languages entries must be language:store");
            };
            if lang.is_empty() {
                return bad("empty language code");
            }
            StoreTag::new(store)?;
        }
        if self.pt_space_size < 2 || self.pt_space_size > NOUNS.len() * (QUALIFIERS.len() + 1) {
            return bad("pt_space_size out of range");
        }
        if !(0.0..=1.0).contains(&self.shared_fraction) {
            return bad("shared_fraction must be within [0, 1]");
        }
        Ok(())
    }

    fn stores(&self) -> Vec<(String, StoreTag)> {
        self.languages
            .iter()
            .map(|l| {
                let (lang, store) = l.split_once(':').expect("validated");
                (lang.to_string(), StoreTag::new(store).expect("validated"))
            })
            .collect()
    }
}

/// Test-set slice of a synthetic query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    /// Branded with a dictionary surface owned by one entity.
    Seen,
    /// Branded with a single-edit misspelling of the entity's name.
    Misspelled,
    /// Branded with a surface shared by two entities with disjoint PTs.
    Shared,
    NonBranded,
}

impl fmt::Display for SliceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SliceKind::Seen => "seen",
            SliceKind::Misspelled => "misspelled",
            SliceKind::Shared => "shared",
            SliceKind::NonBranded => "non_branded",
        })
    }
}

impl FromStr for SliceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(SliceKind::Seen),
            "misspelled" => Ok(SliceKind::Misspelled),
            "shared" => Ok(SliceKind::Shared),
            "non_branded" => Ok(SliceKind::NonBranded),
            _ => Err(Error::invalid("slice kind", s.to_string())),
        }
    }
}

/// Paths of the files written by [`gen_synthetic_corpus`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusFiles {
    pub b2e: PathBuf,
    pub strong_labels: PathBuf,
    pub engagement: PathBuf,
    pub pt_assoc: PathBuf,
    pub pt_train: PathBuf,
    pub test: PathBuf,
    /// One `slice<TAB>pt` line per test query.
    pub test_slices: PathBuf,
    /// Gold PT of each test query, as PT records.
    pub test_pt: PathBuf,
}

impl CorpusFiles {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusFiles {
            b2e: dir.join("b2e.tsv"),
            strong_labels: dir.join("sl.jsonl"),
            engagement: dir.join("engagement.jsonl"),
            pt_assoc: dir.join("pt_assoc.tsv"),
            pt_train: dir.join("pt_train.jsonl"),
            test: dir.join("test.jsonl"),
            test_slices: dir.join("test_slices.tsv"),
            test_pt: dir.join("test_pt.jsonl"),
        }
    }
}

/// Everything the generator produces, in memory.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub b2e: Vec<B2eRecord>,
    pub strong_labels: Vec<StrongLabelRecord>,
    pub engagement: Vec<EngagementRecord>,
    pub pt_assoc: PtAssociations,
    pub pt_train: Vec<PtRecord>,
    /// Gold labels fixed at generation time.
    pub test: Vec<LabeledQuery>,
    pub test_slices: Vec<SliceKind>,
    pub test_pts: Vec<ProductType>,
    /// Surfaces owned by two entities, with their owners.
    pub shared_surfaces: Vec<(StoreTag, String, [BrandEntityId; 2])>,
}

struct Entity {
    id: BrandEntityId,
    store: usize,
    name: String,
    surfaces: Vec<String>,
    pts: Vec<usize>,
}

fn pt_code(i: usize) -> ProductType {
    ProductType::new(format!("pt{i:03}"))
}

fn pt_noun(i: usize) -> String {
    let noun = NOUNS[i % NOUNS.len()];
    match i / NOUNS.len() {
        0 => noun.to_string(),
        q => format!("{} {noun}", QUALIFIERS[q - 1]),
    }
}

fn katakana(c: u8, v: u8) -> &'static str {
    const ROWS: &[(u8, [&str; 5])] = &[
        (b'k', ["カ", "キ", "ク", "ケ", "コ"]),
        (b'g', ["ガ", "ギ", "グ", "ゲ", "ゴ"]),
        (b's', ["サ", "シ", "ス", "セ", "ソ"]),
        (b'z', ["ザ", "ジ", "ズ", "ゼ", "ゾ"]),
        (b't', ["タ", "チ", "ツ", "テ", "ト"]),
        (b'd', ["ダ", "ヂ", "ヅ", "デ", "ド"]),
        (b'n', ["ナ", "ニ", "ヌ", "ネ", "ノ"]),
        (b'p', ["パ", "ピ", "プ", "ペ", "ポ"]),
        (b'b', ["バ", "ビ", "ブ", "ベ", "ボ"]),
        (b'm', ["マ", "ミ", "ム", "メ", "モ"]),
        (b'r', ["ラ", "リ", "ル", "レ", "ロ"]),
        (b'f', ["ファ", "フィ", "フ", "フェ", "フォ"]),
        (b'v', ["ヴァ", "ヴィ", "ヴ", "ヴェ", "ヴォ"]),
    ];
    let vi = VOWELS.iter().position(|&x| x == v).expect("vowel");
    ROWS.iter().find(|r| r.0 == c).expect("consonant").1[vi]
}

fn final_kana(c: u8) -> &'static str {
    match c {
        b'n' => "ン",
        b'r' => "ル",
        b'k' => "ク",
        b's' => "ス",
        _ => "ト",
    }
}

/// A brand name as consonant-vowel syllables plus an optional final consonant.
struct Name {
    syllables: Vec<(u8, u8)>,
    last: Option<u8>,
}

impl Name {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.gen_range(2..=3);
        let syllables = (0..n)
            .map(|_| (*CONSONANTS.choose(rng).unwrap(), *VOWELS.choose(rng).unwrap()))
            .collect();
        let last = rng.gen_bool(0.4).then(|| *FINALS.choose(rng).unwrap());
        Name { syllables, last }
    }

    fn latin(&self) -> String {
        let mut s: String = self.syllables.iter().flat_map(|&(c, v)| [c as char, v as char]).collect();
        s.extend(self.last.map(|c| c as char));
        s
    }

    fn abbreviation(&self) -> String {
        let (c, v) = self.syllables[0];
        let mut s = String::from_iter([c as char, v as char]);
        s.extend(self.syllables[1..].iter().map(|&(c, _)| c as char));
        s
    }

    fn vowel_dropped(&self) -> String {
        let mut s = String::new();
        for (i, &(c, v)) in self.syllables.iter().enumerate() {
            s.push(c as char);
            if i != 1 {
                s.push(v as char);
            }
        }
        s.extend(self.last.map(|c| c as char));
        s
    }

    fn transliterated(&self, japanese: bool) -> String {
        if japanese {
            let mut s: String = self.syllables.iter().map(|&(c, v)| katakana(c, v)).collect();
            s.extend(self.last.map(final_kana));
            return s;
        }
        let latin = self.latin();
        let mut s = latin.replace('k', "c").replace('v', "w").replace('z', "s").replace('f', "ph");
        if s == latin {
            s.push('h');
        }
        s
    }
}

struct Generator {
    rng: ChaCha8Rng,
    vocab: HashSet<String>,
    used: HashSet<String>,
}

impl Generator {
    fn fresh(&self, s: &str) -> bool {
        !self.used.contains(s) && !self.vocab.contains(s)
    }

    /// Claims `s`, or `s` with the smallest numeric suffix that is free.
    fn claim(&mut self, s: String) -> String {
        let mut out = s.clone();
        let mut k = 2;
        while !self.fresh(&out) {
            out = format!("{s}{k}");
            k += 1;
        }
        self.used.insert(out.clone());
        out
    }

    fn pt_phrase(&mut self, pt: usize) -> String {
        if self.rng.gen_bool(0.5) {
            format!("{} {}", MODIFIERS.choose(&mut self.rng).unwrap(), pt_noun(pt))
        } else {
            pt_noun(pt)
        }
    }

    fn non_branded(&mut self, n_pts: usize) -> (String, usize) {
        let pt = self.rng.gen_range(0..n_pts);
        let noun = pt_noun(pt);
        let text = match self.rng.gen_range(0..3) {
            0 => noun,
            1 => format!("{} {noun}", MODIFIERS.choose(&mut self.rng).unwrap()),
            _ => {
                let m: Vec<_> = MODIFIERS.choose_multiple(&mut self.rng, 2).collect();
                format!("{} {} {noun}", m[0], m[1])
            }
        };
        (text, pt)
    }

    /// Single-character edit of `name` (first character kept) that is not
    /// a known surface or vocabulary word.
    fn misspell(&mut self, name: &str) -> Option<String> {
        let chars: Vec<char> = name.chars().collect();
        for _ in 0..32 {
            let mut c = chars.clone();
            let pos = self.rng.gen_range(1..c.len());
            let letter = (b'a' + self.rng.gen_range(0..26u8)) as char;
            match self.rng.gen_range(0..4) {
                0 => c[pos] = letter,
                1 if c.len() > 4 => {
                    c.remove(pos);
                }
                2 => c.insert(pos, letter),
                _ if pos + 1 < c.len() => c.swap(pos, pos + 1),
                _ => continue,
            }
            let s: String = c.into_iter().collect();
            if s != name && self.fresh(&s) {
                return Some(s);
            }
        }
        None
    }
}

/// Builds the synthetic corpus in memory.
pub fn generate(spec: &CorpusSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let stores = spec.stores();
    let mut vocab: HashSet<String> = MODIFIERS.iter().chain(NOUNS).chain(QUALIFIERS).map(|s| s.to_string()).collect();
    vocab.extend(CONSONANTS.iter().map(|&c| (c as char).to_string()));
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        vocab,
        used: HashSet::new(),
    };

    // Entities and their surfaces.
    let mut entities: Vec<Entity> = Vec::with_capacity(spec.n_entities);
    for i in 0..spec.n_entities {
        let store = g.rng.gen_range(0..stores.len());
        let japanese = stores[store].0 == "ja";
        let name = loop {
            let n = Name::random(&mut g.rng);
            if g.fresh(&n.latin()) {
                break n;
            }
        };
        let full = g.claim(name.latin());
        let mut variants = vec![full.clone()];
        let mut extra = vec![name.abbreviation(), name.vowel_dropped(), name.transliterated(japanese)];
        if japanese {
            extra.rotate_right(1);
        }
        for v in extra.into_iter().take(spec.surface_variants_per_entity - 1) {
            variants.push(g.claim(v));
        }
        let k = g.rng.gen_range(1..=2usize).min(spec.pt_space_size);
        let pts: BTreeSet<usize> = (0..k).map(|_| g.rng.gen_range(0..spec.pt_space_size)).collect();
        entities.push(Entity {
            id: BrandEntityId::new(format!("B{i:06}"))?,
            store,
            name: full,
            surfaces: variants,
            pts: pts.into_iter().collect(),
        });
    }

    // Shared surfaces: partner B takes over one surface of A and gets PTs disjoint from A's.
    let mut shared_surfaces = Vec::new();
    let mut shared_keys: HashSet<(usize, String)> = HashSet::new();
    let n_pairs = ((spec.n_entities as f64 * spec.shared_fraction) / 2.0).round() as usize;
    let mut order: Vec<usize> = (0..spec.n_entities).collect();
    order.shuffle(&mut g.rng);
    let mut by_store: Vec<Vec<usize>> = vec![Vec::new(); stores.len()];
    for i in order {
        by_store[entities[i].store].push(i);
    }
    let mut pairs = Vec::new();
    'outer: for list in &by_store {
        for ch in list.chunks_exact(2) {
            if pairs.len() == n_pairs {
                break 'outer;
            }
            pairs.push((ch[0], ch[1]));
        }
    }
    let slot = (spec.surface_variants_per_entity > 1) as usize;
    for &(a, b) in &pairs {
        let surface = entities[a].surfaces[slot].clone();
        g.used.remove(&entities[b].surfaces[slot]);
        entities[b].surfaces[slot] = surface.clone();
        let taken: BTreeSet<usize> = entities[a].pts.iter().copied().collect();
        let free: Vec<usize> = (0..spec.pt_space_size).filter(|p| !taken.contains(p)).collect();
        let k = g.rng.gen_range(1..=2usize).min(free.len());
        let mut pts: Vec<usize> = free.choose_multiple(&mut g.rng, k).copied().collect();
        pts.sort_unstable();
        entities[b].pts = pts;
        let (ea, eb) = (entities[a].id.clone(), entities[b].id.clone());
        let owners = if ea < eb { [ea, eb] } else { [eb, ea] };
        shared_keys.insert((entities[a].store, surface.clone()));
        shared_surfaces.push((stores[entities[a].store].1.clone(), surface, owners));
    }
    shared_surfaces.sort();

    let b2e: Vec<B2eRecord> = entities
        .iter()
        .flat_map(|e| {
            e.surfaces.iter().map(|s| B2eRecord {
                store: stores[e.store].1.clone(),
                surface: s.clone(),
                entity: e.id.clone(),
            })
        })
        .collect();
    let pt_assoc = mine_associations(
        entities
            .iter()
            .flat_map(|e| e.pts.iter().map(|&p| (e.id.clone(), pt_code(p)))),
    );

    let mut seen_texts: HashSet<(usize, String)> = HashSet::new();
    let branded = |g: &mut Generator, e: &Entity| -> (String, String, usize) {
        let surface = e.surfaces.choose(&mut g.rng).unwrap().clone();
        let pt = *e.pts.choose(&mut g.rng).unwrap();
        let text = format!("{surface} {}", g.pt_phrase(pt));
        (text, surface, pt)
    };
    let query = |store: usize, text: &str| -> Result<Query> {
        Ok(Query::new(text, stores[store].1.clone())?.with_language(&stores[store].0))
    };

    // Strongly-labeled training queries and PT training data.
    let mut strong_labels = Vec::new();
    let mut pt_train = Vec::new();
    let mut push_sl = |store: usize, text: String, brand: String, pt: usize, seen: &mut HashSet<(usize, String)>| {
        seen.insert((store, text.clone()));
        let (lang, tag) = &stores[store];
        pt_train.push(PtRecord {
            text: text.clone(),
            store: tag.clone(),
            language: Some(lang.clone()),
            pt: pt_code(pt),
        });
        strong_labels.push(StrongLabelRecord {
            text,
            store: tag.clone(),
            language: Some(lang.clone()),
            brand_name: brand,
        });
    };
    for _ in 0..spec.n_branded_queries {
        let e = &entities[g.rng.gen_range(0..entities.len())];
        let (text, surface, pt) = branded(&mut g, e);
        push_sl(e.store, text, surface, pt, &mut seen_texts);
    }
    for _ in 0..spec.n_nonbranded_queries {
        let store = g.rng.gen_range(0..stores.len());
        let (text, pt) = g.non_branded(spec.pt_space_size);
        push_sl(store, text, String::new(), pt, &mut seen_texts);
    }

    // Engagement logs: mostly the engaged brand's own queries, some noise.
    let mut engagement = Vec::with_capacity(spec.n_engagement);
    for _ in 0..spec.n_engagement {
        let e = &entities[g.rng.gen_range(0..entities.len())];
        let r: f64 = g.rng.gen();
        let text = if r < 0.8 {
            branded(&mut g, e).0
        } else {
            g.non_branded(spec.pt_space_size).0
        };
        let product = if !(0.7..0.8).contains(&r) {
            e.name.clone()
        } else {
            entities[g.rng.gen_range(0..entities.len())].name.clone()
        };
        seen_texts.insert((e.store, text.clone()));
        engagement.push(EngagementRecord {
            query: query(e.store, &text)?,
            product_brand_name: product,
            association_strength: (g.rng.gen::<f64>() * 1000.0).round() / 1000.0,
        });
    }

    // Held-out test queries with generation-time gold labels.
    let mut test = Vec::new();
    let mut test_slices = Vec::new();
    let mut test_pts = Vec::new();
    let fresh_text = |store: usize, text: &str, seen: &mut HashSet<(usize, String)>| seen.insert((store, text.to_string()));
    let budget = |n: usize| 50 * n + 1000;
    let mut tries = 0;
    while test_slices.iter().filter(|k| **k != SliceKind::NonBranded).count() < spec.n_test_branded {
        tries += 1;
        if tries > budget(spec.n_test_branded) {
            return Err(Error::invalid("corpus spec", "cannot draw enough distinct branded test queries"));
        }
        let e = &entities[g.rng.gen_range(0..entities.len())];
        let (text, surface, pt) = branded(&mut g, e);
        if !fresh_text(e.store, &text, &mut seen_texts) {
            continue;
        }
        let kind = if shared_keys.contains(&(e.store, surface.clone())) {
            SliceKind::Shared
        } else {
            SliceKind::Seen
        };
        test.push(LabeledQuery::new(query(e.store, &text)?, vec![surface], vec![e.id.clone()], Source::SL)?);
        test_slices.push(kind);
        test_pts.push(pt_code(pt));
    }
    let mut made = 0;
    tries = 0;
    while made < spec.n_test_misspelled {
        tries += 1;
        if tries > budget(spec.n_test_misspelled) {
            return Err(Error::invalid("corpus spec", "cannot draw enough misspelled test queries"));
        }
        let e = &entities[g.rng.gen_range(0..entities.len())];
        if shared_keys.contains(&(e.store, e.name.clone())) {
            continue;
        }
        let Some(typo) = g.misspell(&e.name) else { continue };
        let pt = *e.pts.choose(&mut g.rng).unwrap();
        let text = format!("{typo} {}", g.pt_phrase(pt));
        if !fresh_text(e.store, &text, &mut seen_texts) {
            continue;
        }
        test.push(LabeledQuery::new(query(e.store, &text)?, vec![typo], vec![e.id.clone()], Source::SL)?);
        test_slices.push(SliceKind::Misspelled);
        test_pts.push(pt_code(pt));
        made += 1;
    }
    made = 0;
    tries = 0;
    while made < spec.n_test_nonbranded {
        tries += 1;
        if tries > budget(spec.n_test_nonbranded) {
            return Err(Error::invalid("corpus spec", "cannot draw enough distinct non-branded test queries"));
        }
        let store = g.rng.gen_range(0..stores.len());
        let (text, pt) = g.non_branded(spec.pt_space_size);
        if !fresh_text(store, &text, &mut seen_texts) {
            continue;
        }
        test.push(LabeledQuery::non_branded(query(store, &text)?, Source::SL));
        test_slices.push(SliceKind::NonBranded);
        test_pts.push(pt_code(pt));
        made += 1;
    }

    Ok(SyntheticCorpus {
        b2e,
        strong_labels,
        engagement,
        pt_assoc,
        pt_train,
        test,
        test_slices,
        test_pts,
        shared_surfaces,
    })
}

impl SyntheticCorpus {
    pub fn test_pt_records(&self) -> Vec<PtRecord> {
        self.test
            .iter()
            .zip(&self.test_pts)
            .map(|(r, pt)| PtRecord {
                text: r.query().text().to_string(),
                store: r.query().store().clone(),
                language: r.query().language().map(str::to_string),
                pt: pt.clone(),
            })
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<CorpusFiles> {
        std::fs::create_dir_all(dir)?;
        let files = CorpusFiles::in_dir(dir);
        write_b2e_tsv(&files.b2e, &self.b2e)?;
        write_jsonl(&files.strong_labels, &self.strong_labels)?;
        write_jsonl(&files.engagement, &self.engagement)?;
        self.pt_assoc.save_tsv(&files.pt_assoc)?;
        write_jsonl(&files.pt_train, &self.pt_train)?;
        write_jsonl(&files.test, &self.test)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(&files.test_slices)?);
        for (k, pt) in self.test_slices.iter().zip(&self.test_pts) {
            writeln!(w, "{k}\t{}", pt.as_str())?;
        }
        w.flush()?;
        write_jsonl(&files.test_pt, &self.test_pt_records())?;
        Ok(files)
    }
}

/// Reads a `slice<TAB>pt` file written alongside the synthetic test set.
pub fn read_test_slices(path: &Path) -> Result<Vec<(SliceKind, ProductType)>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let err = |reason: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                reason,
            };
            let (k, pt) = l.split_once('\t').ok_or_else(|| err("expected slice<TAB>pt".into()))?;
            Ok((k.parse().map_err(|e: Error| err(e.to_string()))?, ProductType::new(pt)))
        })
        .collect()
}

/// Generates the corpus and writes it under `dir`.
pub fn gen_synthetic_corpus(spec: &CorpusSpec, dir: &Path) -> Result<CorpusFiles> {
    generate(spec)?.write(dir)
}
