//! Tree-structured extreme multi-class classifier.
//!
//! Labels are clustered into a balanced tree; every tree node (and every
//! label) owns a sparse linear scorer trained one-vs-siblings. Inference
//! is a level-wise beam search whose path score is the product of the
//! per-node sigmoids.

mod chunk;
mod cluster;
mod layer;
pub(crate) mod solver;
mod train;

use std::collections::HashMap;
use std::path::Path;

use crate::container::{self, Dec, Enc, Kind};
use crate::error::{Error, FormatError, Result};
use crate::text::{self, FeaturizerConfig, IdfTable, SparseVector};
use crate::types::{BrandEntityId, BrandMention, Query, ScoredEntity};

pub use cluster::{build_tree, LabelTree};
pub use layer::SparseLayer;
pub use train::{train, TrainParams, TrainReport};
pub(crate) use train::train_flat;

pub(crate) use layer::Column;

const MODEL_KIND: Kind = Kind {
    magic: *b"BLXMC\0\0\0",
    version: 1,
    name: "xmc model",
};

/// Ordered label set plus one clustering feature vector per label.
#[derive(Clone, Debug)]
pub struct LabelSpace {
    labels: Vec<BrandEntityId>,
    features: Vec<SparseVector>,
    index: HashMap<BrandEntityId, usize>,
}

impl LabelSpace {
    /// Labels are reordered by ascending id (features follow them).
    pub fn new(labels: Vec<BrandEntityId>, features: Vec<SparseVector>) -> Result<Self> {
        if labels.len() != features.len() {
            return Err(Error::invalid("label space", "one feature vector per label required"));
        }
        if labels.len() < 2 {
            return Err(Error::invalid("label space", "needs at least two labels"));
        }
        let mut pairs: Vec<_> = labels.into_iter().zip(features).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("label space", "duplicate label"));
        }
        let (labels, features): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let index = labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        Ok(LabelSpace {
            labels,
            features,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[BrandEntityId] {
        &self.labels
    }

    pub fn feature(&self, i: usize) -> &SparseVector {
        &self.features[i]
    }

    pub fn index_of(&self, e: &BrandEntityId) -> Option<usize> {
        self.index.get(e).copied()
    }

    pub fn has_nil(&self) -> bool {
        self.labels.iter().any(BrandEntityId::is_nil)
    }
}

/// Accumulates label features as the unit-normalized sum of every input
/// attached to a label (surface forms and training inputs alike).
pub struct LabelSpaceBuilder {
    dim: u32,
    labels: Vec<BrandEntityId>,
    index: HashMap<BrandEntityId, usize>,
    sums: Vec<HashMap<u32, f32>>,
}

impl LabelSpaceBuilder {
    pub fn new(dim: u32, labels: impl IntoIterator<Item = BrandEntityId>) -> Self {
        let mut labels: Vec<_> = labels.into_iter().collect();
        labels.sort();
        labels.dedup();
        let index = labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        let sums = vec![HashMap::new(); labels.len()];
        LabelSpaceBuilder {
            dim,
            labels,
            index,
            sums,
        }
    }

    pub fn add(&mut self, label: &BrandEntityId, x: &SparseVector) -> Result<()> {
        let i = *self
            .index
            .get(label)
            .ok_or_else(|| Error::invalid("label", format!("{label} not in label space")))?;
        for (f, v) in x.iter() {
            *self.sums[i].entry(f).or_default() += v;
        }
        Ok(())
    }

    pub fn build(self) -> Result<LabelSpace> {
        let dim = self.dim;
        let features = self
            .sums
            .into_iter()
            .map(|m| SparseVector::from_pairs(dim, m.into_iter().collect()).normalized())
            .collect();
        LabelSpace::new(self.labels, features)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamParams {
    pub beam_size: usize,
    pub top_k: usize,
    pub score_floor: f64,
}

impl Default for BeamParams {
    fn default() -> Self {
        BeamParams {
            beam_size: 10,
            top_k: 5,
            score_floor: 0.0,
        }
    }
}

impl BeamParams {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size < 1 {
            return Err(Error::invalid("beam params", "beam_size must be >= 1"));
        }
        Ok(())
    }
}

/// `ln σ(m)`, the per-node score transform in log space.
pub fn log_sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        -(-m).exp().ln_1p()
    } else {
        m - m.exp().ln_1p()
    }
}

/// Path log-score → score in `(0, 1]`.
pub fn path_score(log_score: f64) -> f64 {
    log_score.exp().max(f64::MIN_POSITIVE)
}

#[derive(Clone, Debug, PartialEq)]
pub struct XmcModel {
    labels: Vec<BrandEntityId>,
    tree: LabelTree,
    layers: Vec<SparseLayer>,
    featurizer: FeaturizerConfig,
    /// Derived from `layers`; not serialized.
    index: Vec<chunk::LayerIndex>,
}

impl XmcModel {
    pub(crate) fn new(
        labels: Vec<BrandEntityId>,
        tree: LabelTree,
        layers: Vec<SparseLayer>,
        featurizer: FeaturizerConfig,
    ) -> Self {
        debug_assert_eq!(tree.n_layers(), layers.len());
        let index = chunk::LayerIndex::build_all(&tree, &layers, featurizer.dim);
        XmcModel {
            labels,
            tree,
            layers,
            featurizer,
            index,
        }
    }

    pub fn labels(&self) -> &[BrandEntityId] {
        &self.labels
    }

    pub fn tree(&self) -> &LabelTree {
        &self.tree
    }

    pub fn layer(&self, l: usize) -> &SparseLayer {
        &self.layers[l]
    }

    pub fn featurizer(&self) -> &FeaturizerConfig {
        &self.featurizer
    }

    pub fn has_nil(&self) -> bool {
        self.labels.iter().any(BrandEntityId::is_nil)
    }

    pub fn nnz(&self) -> usize {
        self.layers.iter().map(SparseLayer::nnz).sum()
    }

    /// Level-wise beam search. Returns up to `top_k` labels with score at
    /// least `score_floor`, by descending score then ascending label id.
    pub fn beam_predict(&self, x: &SparseVector, params: &BeamParams) -> Result<Vec<ScoredEntity>> {
        params.validate()?;
        if x.dim() != self.featurizer.dim {
            return Err(Error::DimMismatch {
                expected: self.featurizer.dim,
                found: x.dim(),
            });
        }
        if x.nnz() == 0 || params.top_k == 0 {
            return Ok(Vec::new());
        }
        let last = self.tree.n_layers() - 1;
        let mut beam: Vec<(usize, f64)> = vec![(0, 0.0)];
        let mut next: Vec<(usize, f64)> = Vec::new();
        let mut margins = Vec::new();
        for l in 0..=last {
            next.clear();
            let layer = &self.layers[l];
            for &(node, s) in &beam {
                self.index[l].margins(node, x, layer, &mut margins);
                let first = self.tree.children(l, node).start;
                for (k, &m) in margins.iter().enumerate() {
                    next.push((first + k, s + log_sigmoid(m as f64)));
                }
            }
            if l < last && next.len() > params.beam_size {
                next.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                next.truncate(params.beam_size);
            }
            std::mem::swap(&mut beam, &mut next);
        }
        let mut out: Vec<(usize, f64)> = beam
            .into_iter()
            .map(|(slot, ls)| (self.tree.label_at(slot), path_score(ls)))
            .filter(|&(_, s)| s >= params.score_floor)
            .collect();
        out.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.truncate(params.top_k);
        Ok(out
            .into_iter()
            .map(|(l, s)| ScoredEntity {
                entity: self.labels[l].clone(),
                score: s,
            })
            .collect())
    }

    pub fn predict_text(&self, raw: &str, params: &BeamParams) -> Result<Vec<ScoredEntity>> {
        self.beam_predict(&text::featurize_str(raw, &self.featurizer), params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &MODEL_KIND, &self.to_payload())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        container::encode(&MODEL_KIND, &self.to_payload())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let payload = container::decode(&MODEL_KIND, bytes)?;
        let mut d = Dec::new(payload);
        let featurizer = decode_featurizer(&mut d)?;
        let n = d.u64()? as usize;
        let mut labels = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let id = d.str()?;
            labels.push(BrandEntityId::parse(&id).map_err(|e| FormatError::Malformed(e.to_string()))?);
        }
        let tree = LabelTree::decode(&mut d)?;
        let mut layers = Vec::with_capacity(tree.n_layers());
        for l in 0..tree.n_layers() {
            let layer = SparseLayer::decode(&mut d, featurizer.dim)?;
            if layer.n_cols() != tree.n_nodes(l) {
                return Err(FormatError::Malformed(format!("layer {l} column count")).into());
            }
            layers.push(layer);
        }
        d.finish()?;
        if tree.n_labels() != labels.len() {
            return Err(FormatError::Malformed("label count disagrees with tree".into()).into());
        }
        Ok(XmcModel::new(labels, tree, layers, featurizer))
    }

    fn to_payload(&self) -> Vec<u8> {
        let mut e = Enc::default();
        encode_featurizer(&mut e, &self.featurizer);
        e.u64(self.labels.len() as u64);
        for l in &self.labels {
            e.str(l.id());
        }
        self.tree.encode(&mut e);
        for layer in &self.layers {
            layer.encode(&mut e);
        }
        e.buf
    }
}

pub(crate) fn encode_featurizer(e: &mut Enc, f: &FeaturizerConfig) {
    e.u32(f.hash_version);
    e.u32(f.dim);
    e.u32(f.word_ngrams);
    e.u32(f.char_ngrams.0);
    e.u32(f.char_ngrams.1);
    match &f.idf_table {
        None => e.u8(0),
        Some(t) => {
            e.u8(1);
            e.u64(t.n_docs);
            e.u32s(&t.indices);
            e.f32s(&t.values);
        }
    }
}

pub(crate) fn decode_featurizer(d: &mut Dec<'_>) -> Result<FeaturizerConfig> {
    let hash_version = d.u32()?;
    let f = FeaturizerConfig {
        hash_version,
        dim: d.u32()?,
        word_ngrams: d.u32()?,
        char_ngrams: (d.u32()?, d.u32()?),
        idf_table: match d.u8()? {
            0 => None,
            1 => Some(IdfTable {
                n_docs: d.u64()?,
                indices: d.u32s()?,
                values: d.f32s()?,
            }),
            t => return Err(FormatError::Malformed(format!("idf tag {t}")).into()),
        },
    };
    f.validate()
        .map_err(|e| FormatError::Malformed(e.to_string()))?;
    Ok(f)
}

/// End-to-end training settings: featurizer, tree shape and solver.
#[derive(Clone, Debug, PartialEq)]
pub struct XmcConfig {
    pub dim: u32,
    pub use_idf: bool,
    pub branching: usize,
    pub max_leaf: usize,
    pub seed: u64,
    pub train: TrainParams,
}

impl Default for XmcConfig {
    fn default() -> Self {
        XmcConfig {
            dim: FeaturizerConfig::default().dim,
            use_idf: true,
            branching: 16,
            max_leaf: 100,
            seed: 0,
            train: TrainParams::default(),
        }
    }
}

/// Fits the featurizer (IDF over the example texts), builds label features
/// from the examples plus the given `(entity, surface)` pairs, clusters the
/// labels and trains every node. The label space is every label seen in
/// either input.
pub fn fit(
    examples: &[crate::data::Example],
    surfaces: &[(BrandEntityId, String)],
    cfg: &XmcConfig,
) -> Result<(XmcModel, TrainReport)> {
    use rayon::prelude::*;
    if examples.is_empty() {
        return Err(Error::EmptyInput("training examples"));
    }
    let base = FeaturizerConfig {
        dim: cfg.dim,
        ..Default::default()
    };
    base.validate()?;
    let featurizer = if cfg.use_idf {
        let texts: Vec<_> = examples.par_iter().map(|e| text::normalize(&e.text)).collect();
        text::fit_idf(texts.iter(), &base)?
    } else {
        base
    };
    let xs: Vec<SparseVector> = examples
        .par_iter()
        .map(|e| text::featurize_str(&e.text, &featurizer))
        .collect();
    let labels = examples
        .iter()
        .map(|e| e.label.clone())
        .chain(surfaces.iter().map(|(e, _)| e.clone()));
    let mut builder = LabelSpaceBuilder::new(featurizer.dim, labels);
    for (e, s) in surfaces {
        builder.add(e, &text::featurize_str(s, &featurizer))?;
    }
    for (e, x) in examples.iter().zip(&xs) {
        builder.add(&e.label, x)?;
    }
    let space = builder.build()?;
    let tree = build_tree(&space, cfg.branching, cfg.max_leaf, cfg.seed)?;
    log::info!(
        "label tree: {} labels, depth {}, widest layer {}",
        space.len(),
        tree.depth(),
        tree.widest_layer()
    );
    let data: Vec<(SparseVector, BrandEntityId)> =
        xs.into_iter().zip(examples.iter().map(|e| e.label.clone())).collect();
    train(&data, &space, &tree, featurizer, &cfg.train)
}

/// Free-function form of [`XmcModel::beam_predict`].
pub fn beam_predict(model: &XmcModel, x: &SparseVector, params: &BeamParams) -> Result<Vec<ScoredEntity>> {
    model.beam_predict(x, params)
}

/// Mention-to-entity matching: featurize the mention surface and search.
pub fn m2e_match(model: &XmcModel, mention: &BrandMention, params: &BeamParams) -> Result<Vec<ScoredEntity>> {
    model.predict_text(&mention.surface, params)
}

/// Query-to-entity prediction over the full normalized query; NIL is
/// ranked like any other label.
pub fn q2e_predict(model: &XmcModel, query: &Query, params: &BeamParams) -> Result<Vec<ScoredEntity>> {
    if !model.has_nil() {
        return Err(Error::invalid("q2e model", "label space lacks the NIL label"));
    }
    model.beam_predict(&text::featurize(&query.normalized(), &model.featurizer), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::featurize_str;
    use proptest::prelude::*;

    fn id(s: &str) -> BrandEntityId {
        BrandEntityId::parse(s).unwrap()
    }

    /// Exhaustive reference: scores every label by walking its root path.
    fn exhaustive(model: &XmcModel, x: &SparseVector, top_k: usize) -> Vec<(usize, f64)> {
        let tree = model.tree();
        let last = tree.n_layers() - 1;
        let dense: HashMap<u32, f32> = x.iter().collect();
        let margin = |l: usize, c: usize| -> f32 {
            let (idx, val) = model.layer(l).column(c);
            let mut acc = 0.0f32;
            for (f, w) in idx.iter().zip(val) {
                if let Some(v) = dense.get(f) {
                    acc += w * v;
                }
            }
            acc + model.layer(l).bias(c)
        };
        let ups: Vec<Vec<u32>> = (0..tree.n_layers()).map(|l| tree.parents(l)).collect();
        let mut out = Vec::new();
        for slot in 0..tree.n_nodes(last) {
            let mut nodes = vec![slot];
            for l in (1..=last).rev() {
                nodes.push(ups[l][*nodes.last().unwrap()] as usize);
            }
            nodes.reverse();
            let mut ls = 0.0f64;
            for (l, &c) in nodes.iter().enumerate() {
                let m = margin(l, c) as f64;
                ls += if m >= 0.0 { -(-m).exp().ln_1p() } else { m - m.exp().ln_1p() };
            }
            out.push((tree.label_at(slot), ls.exp().max(f64::MIN_POSITIVE)));
        }
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        out.truncate(top_k);
        out
    }

    fn toy() -> (XmcModel, Vec<(SparseVector, BrandEntityId)>) {
        let cfg = FeaturizerConfig::default();
        let brands = ["nike", "adidas", "sony", "canon", "lego", "puma", "apple", "bosch"];
        let mut data = Vec::new();
        let mut b = LabelSpaceBuilder::new(cfg.dim, brands.iter().map(|s| id(&s.to_uppercase())));
        for s in brands {
            for q in [s.to_string(), format!("{s} shoes"), format!("{s} case"), format!("buy {s}")] {
                let x = featurize_str(&q, &cfg);
                b.add(&id(&s.to_uppercase()), &x).unwrap();
                data.push((x, id(&s.to_uppercase())));
            }
        }
        let space = b.build().unwrap();
        let tree = build_tree(&space, 2, 2, 9).unwrap();
        let (m, rep) = train(&data, &space, &tree, cfg, &TrainParams::default()).unwrap();
        assert_eq!(rep.n_classifiers, tree.n_nodes(0) + tree.n_nodes(1) + tree.n_nodes(2));
        (m, data)
    }

    #[test]
    fn label_space_rules() {
        let v = || SparseVector::zero(1 << 16);
        assert!(LabelSpace::new(vec![id("A")], vec![v()]).is_err());
        assert!(LabelSpace::new(vec![id("A"), id("A")], vec![v(), v()]).is_err());
        let s = LabelSpace::new(vec![id("B"), id("A"), BrandEntityId::nil()], vec![v(), v(), v()]).unwrap();
        assert_eq!(s.labels()[0], id("A"));
        assert!(s.has_nil());
        assert_eq!(s.index_of(&id("B")), Some(1));
    }

    #[test]
    fn trained_model_recovers_training_labels() {
        let (m, _) = toy();
        for brand in ["nike", "sony", "bosch"] {
            let top = m.predict_text(&format!("{brand} shoes"), &BeamParams::default()).unwrap();
            assert_eq!(top[0].entity, id(&brand.to_uppercase()), "{top:?}");
        }
    }

    #[test]
    fn full_beam_matches_exhaustive_bitwise() {
        let (m, data) = toy();
        let p = BeamParams {
            beam_size: m.tree().widest_layer(),
            top_k: 8,
            score_floor: 0.0,
        };
        for (x, _) in &data {
            let got: Vec<(usize, f64)> = m
                .beam_predict(x, &p)
                .unwrap()
                .into_iter()
                .map(|s| (m.labels().iter().position(|l| *l == s.entity).unwrap(), s.score))
                .collect();
            assert_eq!(got, exhaustive(&m, x, 8));
        }
    }

    #[test]
    fn beam_edge_cases() {
        let (m, _) = toy();
        assert!(m.beam_predict(&SparseVector::zero(m.featurizer().dim), &BeamParams::default()).unwrap().is_empty());
        assert!(matches!(
            m.beam_predict(&SparseVector::zero(1 << 17), &BeamParams::default()),
            Err(Error::DimMismatch { .. })
        ));
        let zero_beam = BeamParams {
            beam_size: 0,
            ..Default::default()
        };
        assert!(m.predict_text("nike", &zero_beam).is_err());
        let floor = BeamParams {
            score_floor: 1.0,
            ..Default::default()
        };
        assert!(m.predict_text("nike", &floor).unwrap().is_empty());
        let q = Query::new("nike", crate::types::StoreTag::new("us").unwrap()).unwrap();
        assert!(q2e_predict(&m, &q, &BeamParams::default()).is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let (m, data) = toy();
        let bytes = m.to_bytes();
        let back = XmcModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        let p = BeamParams::default();
        for (x, _) in &data {
            assert_eq!(m.beam_predict(x, &p).unwrap(), back.beam_predict(x, &p).unwrap());
        }
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 3] ^= 0x40;
        assert!(matches!(XmcModel::from_bytes(&bad), Err(Error::Format(FormatError::ChecksumMismatch))));
        assert!(matches!(
            XmcModel::from_bytes(&bytes[..n - 1]),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
    }

    fn random_model(seed: u64, n_labels: usize, branching: usize, max_leaf: usize) -> XmcModel {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cfg = FeaturizerConfig {
            dim: 1 << 16,
            ..Default::default()
        };
        let labels: Vec<_> = (0..n_labels).map(|i| id(&format!("L{i:04}"))).collect();
        let feats: Vec<_> = (0..n_labels)
            .map(|i| featurize_str(&format!("label{i} {}", i % 5), &cfg))
            .collect();
        let space = LabelSpace::new(labels, feats).unwrap();
        let tree = build_tree(&space, branching, max_leaf, seed).unwrap();
        let layers = (0..tree.n_layers())
            .map(|l| {
                SparseLayer::from_columns(
                    (0..tree.n_nodes(l))
                        .map(|_| {
                            let mut idx: Vec<u32> = (0..rng.gen_range(0..12)).map(|_| rng.gen_range(0..64)).collect();
                            idx.sort_unstable();
                            idx.dedup();
                            let values = idx.iter().map(|_| rng.gen_range(-3.0f32..3.0)).collect();
                            Column {
                                indices: idx,
                                values,
                                bias: rng.gen_range(-1.0f32..1.0),
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        XmcModel::new(space.labels().to_vec(), tree, layers, cfg)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn sibling_margins_match_columns(
            seed in 0u64..1000,
            n in 2usize..80,
            feats in proptest::collection::vec((0u32..64, -1.0f32..1.0), 1..40),
        ) {
            let m = random_model(seed, n, 3, 4);
            let x = SparseVector::from_pairs(1 << 16, feats);
            let mut out = Vec::new();
            for l in 0..m.tree().n_layers() {
                let n_parents = if l == 0 { 1 } else { m.tree().n_nodes(l - 1) };
                for p in 0..n_parents {
                    m.index[l].margins(p, &x, m.layer(l), &mut out);
                    let want: Vec<u32> = m.tree().children(l, p).map(|c| m.layer(l).margin(c, &x).to_bits()).collect();
                    prop_assert_eq!(out.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), want);
                }
            }
        }

        #[test]
        fn beam_wide_as_tree_is_exact(
            seed in 0u64..1000,
            n in 2usize..60,
            branching in 2usize..5,
            max_leaf in 1usize..6,
            feats in proptest::collection::vec((0u32..64, 0.1f32..1.0), 1..10),
        ) {
            let m = random_model(seed, n, branching, max_leaf);
            let x = SparseVector::from_pairs(1 << 16, feats);
            let p = BeamParams { beam_size: m.tree().widest_layer(), top_k: n, score_floor: 0.0 };
            let got: Vec<(usize, f64)> = m.beam_predict(&x, &p).unwrap().into_iter()
                .map(|s| (m.labels().iter().position(|l| *l == s.entity).unwrap(), s.score)).collect();
            prop_assert_eq!(got, exhaustive(&m, &x, n));
        }

        #[test]
        fn beam_output_is_well_formed(
            seed in 0u64..1000,
            n in 2usize..60,
            beam in 1usize..6,
            top_k in 0usize..8,
            floor in 0.0f64..0.5,
            feats in proptest::collection::vec((0u32..64, 0.1f32..1.0), 1..10),
        ) {
            let m = random_model(seed, n, 3, 2);
            let x = SparseVector::from_pairs(1 << 16, feats);
            let out = m.beam_predict(&x, &BeamParams { beam_size: beam, top_k, score_floor: floor }).unwrap();
            prop_assert!(out.len() <= top_k);
            for w in out.windows(2) {
                prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].entity < w[1].entity));
            }
            let mut seen = std::collections::BTreeSet::new();
            for s in &out {
                prop_assert!(s.score > 0.0 && s.score <= 1.0 && s.score >= floor);
                prop_assert!(seen.insert(s.entity.clone()));
            }
        }
    }
}
