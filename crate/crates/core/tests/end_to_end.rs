//! Small synthetic universe run through every linker, plus persistence
//! round trips of the trained artifacts.

use std::sync::Arc;

use brandlink::data::synth::{generate, gen_synthetic_corpus, read_test_slices, CorpusSpec, SliceKind};
use brandlink::data::{
    augment_b2e, gen_weak_labels, io, map_strong_labels, mix_training, InputKind, MixParams, PtRecord,
};
use brandlink::eval::{false_alarm_rate, metrics, score};
use brandlink::gazetteer::{build_dictionary, BrandDictionary};
use brandlink::pipeline::{link_batch, LinkMode, LinkerConfig, Matcher, M2E_SCORE_FLOOR};
use brandlink::ptfilter::{train_pt_baseline, LinearPtPredictor, PtAssociations};
use brandlink::xmc::{fit, BeamParams, XmcConfig, XmcModel};
use brandlink::{LabeledQuery, Query};

fn small_spec() -> CorpusSpec {
    CorpusSpec {
        n_entities: 300,
        n_branded_queries: 1500,
        n_nonbranded_queries: 400,
        n_engagement: 1500,
        n_test_branded: 300,
        n_test_misspelled: 100,
        n_test_nonbranded: 300,
        seed: 5,
        ..Default::default()
    }
}

struct Setup {
    test: Vec<LabeledQuery>,
    slices: Vec<SliceKind>,
    dict: Arc<BrandDictionary>,
    q2e: Arc<XmcModel>,
    m2e: Arc<XmcModel>,
    pt: Arc<LinearPtPredictor>,
    assoc: PtAssociations,
}

fn setup() -> Setup {
    let corpus = generate(&small_spec()).unwrap();
    let (dict, _) = build_dictionary(corpus.b2e.clone(), None).unwrap();
    let b2e = augment_b2e(&corpus.b2e);
    let (sl, _) = map_strong_labels(&corpus.strong_labels, &dict);
    let (wl, _) = gen_weak_labels(&corpus.engagement, 0.5, &dict);
    let surfaces: Vec<_> = corpus.b2e.iter().map(|r| (r.entity.clone(), r.surface.clone())).collect();
    let train = |kind| {
        let ex = mix_training(&b2e, &sl, &wl, kind, &MixParams::default());
        Arc::new(fit(&ex, &surfaces, &XmcConfig::default()).unwrap().0)
    };
    let pairs = corpus.pt_train.iter().map(|r| (r.query().unwrap(), r.pt.clone()));
    let pt = train_pt_baseline(pairs, Default::default(), &Default::default()).unwrap();
    Setup {
        q2e: train(InputKind::Query),
        m2e: train(InputKind::Mention),
        dict: Arc::new(dict),
        pt: Arc::new(pt),
        assoc: corpus.pt_assoc.clone(),
        slices: corpus.test_slices.clone(),
        test: corpus.test,
    }
}

fn config(s: &Setup) -> LinkerConfig {
    LinkerConfig {
        detector: s.dict.clone(),
        matcher: Some(Matcher::Lexical(s.dict.clone())),
        q2e: Some((s.q2e.clone(), BeamParams::default())),
        pt: s.pt.clone(),
        assoc: Arc::new(s.assoc.clone()),
        fusion: true,
    }
}

#[test]
fn all_modes_link_the_test_set() {
    let s = setup();
    let cfg = config(&s);
    let m2e_cfg = LinkerConfig {
        matcher: Some(Matcher::M2e {
            model: s.m2e.clone(),
            beam: BeamParams {
                score_floor: M2E_SCORE_FLOOR,
                ..Default::default()
            },
        }),
        fusion: false,
        ..cfg.clone()
    };
    let queries: Vec<Query> = s.test.iter().map(|r| r.query().clone()).collect();

    let lexical = link_batch(&cfg, LinkMode::Lexical, &queries).unwrap();
    let q2e = link_batch(&cfg, LinkMode::Q2e, &queries).unwrap();
    let fused = link_batch(&cfg, LinkMode::Fused, &queries).unwrap();
    let m2e = link_batch(&m2e_cfg, LinkMode::M2e, &queries).unwrap();
    for res in [&lexical, &q2e, &fused, &m2e] {
        assert_eq!(res.len(), queries.len());
    }

    // Fusion keeps every lexical single.
    for (l, f) in lexical.iter().zip(&fused) {
        if let Some(e) = l.outcome.single_entity() {
            assert_eq!(f.outcome.single_entity(), Some(e));
        }
    }

    let seen: Vec<_> = s
        .test
        .iter()
        .zip(&q2e)
        .zip(&s.slices)
        .filter(|(_, k)| **k == SliceKind::Seen)
        .map(|(p, _)| p)
        .collect();
    let m = metrics(&score(seen.iter().copied()));
    assert!(m.recall.value > 80.0, "seen recall {}", m.recall.render());

    let nonbranded: Vec<_> = s
        .test
        .iter()
        .zip(&lexical)
        .zip(&s.slices)
        .filter(|(_, k)| **k == SliceKind::NonBranded)
        .map(|(p, _)| p)
        .collect();
    assert!(!nonbranded.is_empty());
    assert!(false_alarm_rate(nonbranded.iter().copied()).unwrap() < 5.0);
}

#[test]
fn linking_is_repeatable() {
    let s = setup();
    let cfg = config(&s);
    let queries: Vec<Query> = s.test.iter().take(200).map(|r| r.query().clone()).collect();
    let a = link_batch(&cfg, LinkMode::Fused, &queries).unwrap();
    let b = link_batch(&cfg, LinkMode::Fused, &queries).unwrap();
    assert_eq!(a, b);
}

#[test]
fn artifacts_round_trip_through_disk() {
    let s = setup();
    let dir = tempfile::tempdir().unwrap();

    let p = dir.path().join("q2e.bin");
    s.q2e.save(&p).unwrap();
    let q2e = XmcModel::load(&p).unwrap();
    let beam = BeamParams::default();
    for r in s.test.iter().take(50) {
        let x = r.query().text();
        assert_eq!(q2e.predict_text(x, &beam).unwrap(), s.q2e.predict_text(x, &beam).unwrap());
    }

    let p = dir.path().join("dict.bin");
    s.dict.save(&p).unwrap();
    assert_eq!(BrandDictionary::load(&p).unwrap().to_bytes(), s.dict.to_bytes());

    let p = dir.path().join("pt.bin");
    s.pt.save(&p).unwrap();
    assert_eq!(&LinearPtPredictor::load(&p).unwrap(), s.pt.as_ref());

    let p = dir.path().join("assoc.tsv");
    s.assoc.save_tsv(&p).unwrap();
    assert_eq!(PtAssociations::load_tsv(&p).unwrap(), s.assoc);
}

#[test]
fn written_corpus_reads_back() {
    let spec = CorpusSpec {
        n_entities: 50,
        n_branded_queries: 100,
        n_nonbranded_queries: 20,
        n_engagement: 100,
        n_test_branded: 40,
        n_test_misspelled: 10,
        n_test_nonbranded: 30,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let files = gen_synthetic_corpus(&spec, dir.path()).unwrap();
    let corpus = generate(&spec).unwrap();

    assert_eq!(io::read_b2e_tsv(&files.b2e).unwrap(), corpus.b2e);
    let test: Vec<LabeledQuery> = io::read_jsonl(&files.test).unwrap();
    assert_eq!(test, corpus.test);
    let slices = read_test_slices(&files.test_slices).unwrap();
    assert_eq!(slices.len(), test.len());
    assert_eq!(slices.iter().map(|s| s.0).collect::<Vec<_>>(), corpus.test_slices);
    let pts: Vec<PtRecord> = io::read_jsonl(&files.test_pt).unwrap();
    assert_eq!(pts.len(), test.len());
}
