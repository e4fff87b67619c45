//! Inference latency versus label-space size.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::synth::{generate, CorpusSpec};
use crate::data::{augment_b2e, mix_training, InputKind, MixParams};
use crate::error::{Error, Result};
use crate::gazetteer::build_dictionary;
use crate::text::{self, SparseVector};
use crate::xmc::{fit, BeamParams, XmcConfig, XmcModel};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchParams {
    pub sizes: Vec<usize>,
    /// Timed queries per size.
    pub n_queries: usize,
    /// Timed passes over the query set; the mean is over all calls.
    pub repeats: usize,
    pub beam: BeamParams,
    pub xmc: XmcConfig,
    /// Strongly-labeled training queries per label.
    pub queries_per_label: usize,
    pub seed: u64,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            sizes: vec![5_000, 50_000],
            n_queries: 2000,
            repeats: 3,
            beam: BeamParams::default(),
            xmc: XmcConfig::default(),
            queries_per_label: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_labels: usize,
    pub depth: usize,
    pub widest_layer: usize,
    pub nnz: usize,
    pub train_secs: f64,
    pub mean_latency_us: f64,
}

/// Synthetic model with `n_labels` brand labels plus the query vectors
/// used for timing (held-out synthetic test queries).
pub fn synthetic_model(n_labels: usize, p: &BenchParams) -> Result<(XmcModel, Vec<SparseVector>, f64)> {
    let spec = CorpusSpec {
        n_entities: n_labels,
        surface_variants_per_entity: 2,
        languages: vec!["en:us".into()],
        n_branded_queries: n_labels * p.queries_per_label,
        n_nonbranded_queries: 0,
        n_engagement: 0,
        shared_fraction: 0.0,
        n_test_branded: p.n_queries,
        n_test_misspelled: 0,
        n_test_nonbranded: 0,
        seed: p.seed,
        ..Default::default()
    };
    let corpus = generate(&spec)?;
    let (dict, _) = build_dictionary(corpus.b2e.clone(), None)?;
    let b2e = augment_b2e(&corpus.b2e);
    let (sl, _) = crate::data::map_strong_labels(&corpus.strong_labels, &dict);
    let examples = mix_training(&b2e, &sl, &[], InputKind::Query, &MixParams::default());
    let surfaces: Vec<_> = corpus.b2e.iter().map(|r| (r.entity.clone(), r.surface.clone())).collect();
    let t = Instant::now();
    let (model, _) = fit(&examples, &surfaces, &XmcConfig { seed: p.seed, ..p.xmc.clone() })?;
    let train_secs = t.elapsed().as_secs_f64();
    let xs = corpus
        .test
        .iter()
        .map(|q| text::featurize(&q.query().normalized(), model.featurizer()))
        .collect();
    Ok((model, xs, train_secs))
}

/// Mean wall-clock time of one `beam_predict` call, in microseconds.
pub fn mean_latency_us(model: &XmcModel, xs: &[SparseVector], beam: &BeamParams, repeats: usize) -> Result<f64> {
    if xs.is_empty() || repeats == 0 {
        return Err(Error::EmptyInput("benchmark queries"));
    }
    for x in xs.iter().take(100) {
        std::hint::black_box(model.beam_predict(x, beam)?);
    }
    let t = Instant::now();
    for _ in 0..repeats {
        for x in xs {
            std::hint::black_box(model.beam_predict(x, beam)?);
        }
    }
    Ok(t.elapsed().as_secs_f64() * 1e6 / (xs.len() * repeats) as f64)
}

pub fn run_bench(p: &BenchParams) -> Result<Vec<BenchRow>> {
    p.beam.validate()?;
    let mut rows = Vec::new();
    for &n in &p.sizes {
        log::info!("bench: training synthetic model with {n} labels");
        let (model, xs, train_secs) = synthetic_model(n, p)?;
        let lat = mean_latency_us(&model, &xs, &p.beam, p.repeats)?;
        rows.push(BenchRow {
            n_labels: model.labels().len(),
            depth: model.tree().depth(),
            widest_layer: model.tree().widest_layer(),
            nnz: model.nnz(),
            train_secs,
            mean_latency_us: lat,
        });
    }
    Ok(rows)
}

/// Fixed-width scaling table; the ratio column is relative to the first row.
pub fn render_table(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>10} {:>6} {:>8} {:>12} {:>10} {:>14} {:>8}",
        "labels", "depth", "widest", "nnz", "train_s", "latency_us", "ratio"
    );
    let base = rows.first().map(|r| r.mean_latency_us).unwrap_or(1.0);
    for r in rows {
        let _ = writeln!(
            s,
            "{:>10} {:>6} {:>8} {:>12} {:>10.2} {:>14.2} {:>8.2}",
            r.n_labels,
            r.depth,
            r.widest_layer,
            r.nnz,
            r.train_secs,
            r.mean_latency_us,
            r.mean_latency_us / base
        );
    }
    s
}
