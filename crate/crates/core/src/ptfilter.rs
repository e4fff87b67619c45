//! Product-type based disambiguation: entity → PT association tables, a
//! pluggable query PT predictor and the candidate filter.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{self, Dec, Enc, Kind};
use crate::error::{Error, FormatError, Result};
use crate::text::{self, FeaturizerConfig, SparseVector};
use crate::types::{AbstainReason, BrandEntityId, LinkResult, Outcome, ProductType, Query, ScoredEntity, StageRecord};
use crate::xmc::{self, log_sigmoid, SparseLayer, TrainParams};

const PT_KIND: Kind = Kind {
    magic: *b"BLPTCLF\0",
    version: 1,
    name: "pt classifier",
};

/// Minimum predictor confidence for a PT to be used as a filter.
pub const PT_CONFIDENCE: f64 = 0.5;

/// Known product types per entity. Entities never impressed are absent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PtAssociations {
    table: BTreeMap<BrandEntityId, BTreeSet<ProductType>>,
}

impl PtAssociations {
    pub fn get(&self, e: &BrandEntityId) -> Option<&BTreeSet<ProductType>> {
        self.table.get(e)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BrandEntityId, &BTreeSet<ProductType>)> {
        self.table.iter()
    }

    /// Reads `entity_id<TAB>pt_code` rows and aggregates them.
    pub fn load_tsv(path: &Path) -> Result<Self> {
        Ok(mine_associations(read_pairs(path)?))
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (e, pts) in &self.table {
            for pt in pts {
                writeln!(w, "{}\t{}", e.id(), pt.as_str())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads an impressions / associations TSV as `(entity, pt)` pairs.
pub fn read_pairs(path: &Path) -> Result<Vec<(BrandEntityId, ProductType)>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            reason,
        };
        let (e, pt) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected entity_id<TAB>pt_code".into()))?;
        let e = BrandEntityId::new(e.trim()).map_err(|err| parse_err(err.to_string()))?;
        let pt = pt.trim();
        if pt.is_empty() {
            return Err(parse_err("empty pt code".into()));
        }
        out.push((e, ProductType::new(pt)));
    }
    Ok(out)
}

/// Aggregates distinct product types per entity.
pub fn mine_associations(impressions: impl IntoIterator<Item = (BrandEntityId, ProductType)>) -> PtAssociations {
    let mut table: BTreeMap<BrandEntityId, BTreeSet<ProductType>> = BTreeMap::new();
    for (e, pt) in impressions {
        table.entry(e).or_default().insert(pt);
    }
    PtAssociations { table }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    TwoStage,
    EndToEnd,
}

/// Drops candidates whose known PT set excludes `pt_q` (unknown sets are
/// kept), then resolves the survivors according to `mode`.
pub fn filter_candidates(
    cands: &[ScoredEntity],
    pt_q: Option<&ProductType>,
    assoc: &PtAssociations,
    mode: FilterMode,
) -> LinkResult {
    let (kept, dropped): (Vec<&ScoredEntity>, Vec<&ScoredEntity>) = cands.iter().partition(|c| match pt_q {
        None => true,
        Some(pt) => assoc.get(&c.entity).is_none_or(|set| set.contains(pt)),
    });
    let mut trace = vec![StageRecord::Filter {
        pt_applied: pt_q.is_some(),
        kept: kept.iter().map(|c| c.entity.clone()).collect(),
        dropped: dropped.iter().map(|c| c.entity.clone()).collect(),
    }];
    let abstain = |reason| StageRecord::Abstain { reason };
    let outcome = if kept.is_empty() {
        trace.push(abstain(if cands.is_empty() {
            AbstainReason::NoCandidates
        } else {
            AbstainReason::FilteredOut
        }));
        Outcome::NoPrediction
    } else {
        let pick = match mode {
            FilterMode::TwoStage if kept.len() > 1 => None,
            FilterMode::TwoStage => Some(kept[0]),
            FilterMode::EndToEnd => kept
                .iter()
                .copied()
                .min_by(|a, b| b.score.total_cmp(&a.score).then(a.entity.cmp(&b.entity))),
        };
        match pick {
            None => {
                trace.push(abstain(AbstainReason::Ambiguous));
                Outcome::NoPrediction
            }
            Some(c) if c.entity.is_nil() => Outcome::Nil,
            Some(c) => Outcome::Single { candidate: c.clone() },
        }
    };
    LinkResult { outcome, trace }
}

/// Query product-type classifier.
pub trait PtPredictor: Send + Sync {
    fn predict(&self, query: &Query) -> Option<ProductType>;
}

/// Never predicts a PT; filtering is skipped.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoPtPredictor;

impl PtPredictor for NoPtPredictor {
    fn predict(&self, _: &Query) -> Option<ProductType> {
        None
    }
}

/// Looks up gold PTs by `(store, normalized text)`.
#[derive(Clone, Debug, Default)]
pub struct OraclePtPredictor {
    gold: HashMap<(String, String), ProductType>,
}

impl OraclePtPredictor {
    pub fn new(pairs: impl IntoIterator<Item = (Query, ProductType)>) -> Self {
        let gold = pairs
            .into_iter()
            .map(|(q, pt)| ((q.store().as_str().to_string(), q.normalized().as_str().to_string()), pt))
            .collect();
        OraclePtPredictor { gold }
    }
}

impl PtPredictor for OraclePtPredictor {
    fn predict(&self, query: &Query) -> Option<ProductType> {
        let key = (query.store().as_str().to_string(), query.normalized().as_str().to_string());
        self.gold.get(&key).cloned()
    }
}

/// Flat one-vs-all logistic classifier over the shared featurizer.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPtPredictor {
    featurizer: FeaturizerConfig,
    pts: Vec<ProductType>,
    layer: SparseLayer,
}

impl LinearPtPredictor {
    pub fn product_types(&self) -> &[ProductType] {
        &self.pts
    }

    /// Per-PT sigmoid scores, in `product_types()` order. Empty for a
    /// query with no features.
    pub fn scores(&self, query: &Query) -> Vec<f64> {
        self.scores_for(&text::featurize(&query.normalized(), &self.featurizer))
    }

    pub fn scores_for(&self, x: &SparseVector) -> Vec<f64> {
        if x.is_zero() || x.dim() != self.featurizer.dim {
            return Vec::new();
        }
        (0..self.pts.len())
            .map(|c| log_sigmoid(self.layer.margin(c, x) as f64).exp())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &PT_KIND, &self.payload())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        container::encode(&PT_KIND, &self.payload())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Dec::new(container::decode(&PT_KIND, bytes)?);
        let featurizer = xmc::decode_featurizer(&mut d)?;
        let n = d.u64()? as usize;
        let mut pts = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            pts.push(ProductType::new(d.str()?));
        }
        let layer = SparseLayer::decode(&mut d, featurizer.dim)?;
        d.finish()?;
        if layer.n_cols() != pts.len() {
            return Err(FormatError::Malformed("pt column count".into()).into());
        }
        Ok(LinearPtPredictor { featurizer, pts, layer })
    }

    fn payload(&self) -> Vec<u8> {
        let mut e = Enc::default();
        xmc::encode_featurizer(&mut e, &self.featurizer);
        e.u64(self.pts.len() as u64);
        for pt in &self.pts {
            e.str(pt.as_str());
        }
        self.layer.encode(&mut e);
        e.buf
    }
}

impl PtPredictor for LinearPtPredictor {
    fn predict(&self, query: &Query) -> Option<ProductType> {
        self.predict_vector(&text::featurize(&query.normalized(), &self.featurizer))
    }
}

impl LinearPtPredictor {
    /// Argmax PT, or `None` below [`PT_CONFIDENCE`] or for a zero vector.
    pub fn predict_vector(&self, x: &SparseVector) -> Option<ProductType> {
        let scores = self.scores_for(x);
        let (best, s) = scores
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (i, &s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((i, s)),
            })?;
        (s >= PT_CONFIDENCE).then(|| self.pts[best].clone())
    }
}

/// Trains the baseline PT classifier; PT classes are ordered by code.
pub fn train_pt_baseline(
    data: impl IntoIterator<Item = (Query, ProductType)>,
    featurizer: FeaturizerConfig,
    params: &TrainParams,
) -> Result<LinearPtPredictor> {
    featurizer.validate()?;
    let data: Vec<(Query, ProductType)> = data.into_iter().collect();
    if data.is_empty() {
        return Err(Error::EmptyInput("pt training data"));
    }
    let pts: Vec<ProductType> = data
        .iter()
        .map(|(_, pt)| pt.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&ProductType, usize> = pts.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let examples: Vec<_> = data
        .iter()
        .map(|(q, pt)| (text::featurize(&q.normalized(), &featurizer), index[pt]))
        .collect();
    let layer = xmc::train_flat(&examples, pts.len(), params)?;
    Ok(LinearPtPredictor { featurizer, pts, layer })
}
