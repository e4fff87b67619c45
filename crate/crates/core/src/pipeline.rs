//! The linkers: two-stage (detect → match → PT filter), end-to-end
//! query classification, and the fusion of the two.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gazetteer::{lexical_match, BrandDictionary, MentionDetector};
use crate::ptfilter::{filter_candidates, FilterMode, PtAssociations, PtPredictor};
use crate::types::{AbstainReason, Branch, LinkResult, Outcome, Query, ScoredEntity, StageRecord};
use crate::xmc::{m2e_match, q2e_predict, BeamParams, XmcModel};

/// Default score floor for mention-to-entity candidates; without one every
/// beam returns `top_k` candidates and the two-stage filter always abstains.
pub const M2E_SCORE_FLOOR: f64 = 0.5;

/// Candidate generator for a detected mention.
#[derive(Clone)]
pub enum Matcher {
    Lexical(Arc<BrandDictionary>),
    M2e { model: Arc<XmcModel>, beam: BeamParams },
}

impl Matcher {
    pub fn name(&self) -> &'static str {
        match self {
            Matcher::Lexical(_) => "lexical",
            Matcher::M2e { .. } => "m2e",
        }
    }
}

#[derive(Clone)]
pub struct LinkerConfig {
    pub detector: Arc<dyn MentionDetector>,
    pub matcher: Option<Matcher>,
    pub q2e: Option<(Arc<XmcModel>, BeamParams)>,
    pub pt: Arc<dyn PtPredictor>,
    pub assoc: Arc<PtAssociations>,
    pub fusion: bool,
}

impl fmt::Debug for LinkerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinkerConfig")
            .field("matcher", &self.matcher.as_ref().map(Matcher::name))
            .field("q2e", &self.q2e.is_some())
            .field("associations", &self.assoc.len())
            .field("fusion", &self.fusion)
            .finish()
    }
}

impl LinkerConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(Matcher::M2e { beam, .. }) = &self.matcher {
            beam.validate()?;
        }
        if let Some((model, beam)) = &self.q2e {
            beam.validate()?;
            if !model.has_nil() {
                return Err(Error::invalid("q2e model", "label space lacks the NIL label"));
            }
        }
        if self.fusion && (self.matcher.is_none() || self.q2e.is_none()) {
            return Err(Error::invalid("linker config", "fusion needs a two-stage matcher and a q2e model"));
        }
        Ok(())
    }

    /// Checks that the components `mode` needs are configured.
    pub fn validate_for(&self, mode: LinkMode) -> Result<()> {
        self.validate()?;
        let ok = match mode {
            LinkMode::Lexical => matches!(self.matcher, Some(Matcher::Lexical(_))),
            LinkMode::M2e => matches!(self.matcher, Some(Matcher::M2e { .. })),
            LinkMode::Q2e => self.q2e.is_some(),
            LinkMode::Fused => self.fusion,
        };
        if !ok {
            return Err(Error::invalid("linker config", format!("missing components for mode {mode}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    Lexical,
    M2e,
    Q2e,
    Fused,
}

impl fmt::Display for LinkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkMode::Lexical => "lexical",
            LinkMode::M2e => "m2e",
            LinkMode::Q2e => "q2e",
            LinkMode::Fused => "fused",
        })
    }
}

impl FromStr for LinkMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lexical" => Ok(LinkMode::Lexical),
            "m2e" => Ok(LinkMode::M2e),
            "q2e" => Ok(LinkMode::Q2e),
            "fused" => Ok(LinkMode::Fused),
            _ => Err(Error::invalid("mode", format!("unknown mode {s:?}"))),
        }
    }
}

fn with_prefix(mut prefix: Vec<StageRecord>, r: LinkResult) -> LinkResult {
    prefix.extend(r.trace);
    LinkResult {
        outcome: r.outcome,
        trace: prefix,
    }
}

/// Mention detection, candidate matching, then two-stage PT filtering.
pub fn link_two_stage(cfg: &LinkerConfig, query: &Query) -> LinkResult {
    let Some(matcher) = &cfg.matcher else {
        return LinkResult::no_prediction();
    };
    let mention = cfg.detector.detect(query);
    let mut trace = vec![StageRecord::Detector {
        mention: mention.clone(),
    }];
    let Some(mention) = mention else {
        trace.push(StageRecord::Abstain {
            reason: AbstainReason::DetectorMiss,
        });
        return LinkResult {
            outcome: Outcome::NoPrediction,
            trace,
        };
    };
    let candidates: Vec<ScoredEntity> = match matcher {
        Matcher::Lexical(dict) => lexical_match(dict, &mention, query.store())
            .into_iter()
            .map(|entity| ScoredEntity { entity, score: 1.0 })
            .collect(),
        Matcher::M2e { model, beam } => m2e_match(model, &mention, beam).unwrap_or_default(),
    };
    trace.push(StageRecord::Candidates {
        matcher: matcher.name().into(),
        candidates: candidates.clone(),
    });
    let pt = if candidates.len() > 1 { cfg.pt.predict(query) } else { None };
    trace.push(StageRecord::ProductType { pt: pt.clone() });
    with_prefix(trace, filter_candidates(&candidates, pt.as_ref(), &cfg.assoc, FilterMode::TwoStage))
}

/// Whole-query classification (NIL included), then end-to-end PT filtering.
pub fn link_end_to_end(cfg: &LinkerConfig, query: &Query) -> LinkResult {
    let Some((model, beam)) = &cfg.q2e else {
        return LinkResult::no_prediction();
    };
    let candidates = q2e_predict(model, query, beam).unwrap_or_default();
    let mut trace = vec![StageRecord::Candidates {
        matcher: "q2e".into(),
        candidates: candidates.clone(),
    }];
    let pt = if candidates.len() > 1 { cfg.pt.predict(query) } else { None };
    trace.push(StageRecord::ProductType { pt: pt.clone() });
    with_prefix(trace, filter_candidates(&candidates, pt.as_ref(), &cfg.assoc, FilterMode::EndToEnd))
}

/// Fixed-priority fusion of the two branch results: a two-stage Single
/// wins; otherwise an end-to-end Single or Nil; otherwise no prediction.
pub fn fuse(two_stage: &Outcome, end_to_end: &Outcome) -> (Outcome, Option<Branch>) {
    if two_stage.is_single() {
        (two_stage.clone(), Some(Branch::TwoStage))
    } else if end_to_end.is_single() || *end_to_end == Outcome::Nil {
        (end_to_end.clone(), Some(Branch::EndToEnd))
    } else {
        (Outcome::NoPrediction, None)
    }
}

pub fn link_fused(cfg: &LinkerConfig, query: &Query) -> LinkResult {
    let (a, b) = rayon::join(|| link_two_stage(cfg, query), || link_end_to_end(cfg, query));
    let (outcome, choice) = fuse(&a.outcome, &b.outcome);
    LinkResult {
        outcome,
        trace: vec![
            StageRecord::Branch {
                branch: Branch::TwoStage,
                outcome: a.outcome,
                trace: a.trace,
            },
            StageRecord::Branch {
                branch: Branch::EndToEnd,
                outcome: b.outcome,
                trace: b.trace,
            },
            StageRecord::Fusion { choice },
        ],
    }
}

pub fn link(cfg: &LinkerConfig, mode: LinkMode, query: &Query) -> LinkResult {
    match mode {
        LinkMode::Lexical | LinkMode::M2e => link_two_stage(cfg, query),
        LinkMode::Q2e => link_end_to_end(cfg, query),
        LinkMode::Fused => link_fused(cfg, query),
    }
}

/// Links a batch in parallel; output order follows input order.
pub fn link_batch(cfg: &LinkerConfig, mode: LinkMode, queries: &[Query]) -> Result<Vec<LinkResult>> {
    cfg.validate_for(mode)?;
    Ok(queries.par_iter().map(|q| link(cfg, mode, q)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gazetteer::{build_dictionary, B2eRecord};
    use crate::ptfilter::{mine_associations, NoPtPredictor, OraclePtPredictor};
    use crate::types::{BrandEntityId, ProductType, StoreTag};

    fn e(s: &str) -> BrandEntityId {
        BrandEntityId::parse(s).unwrap()
    }
    fn us() -> StoreTag {
        StoreTag::new("us").unwrap()
    }
    fn q(s: &str) -> Query {
        Query::new(s, us()).unwrap()
    }

    fn lexical_cfg(rows: &[(&str, &str)], assoc: PtAssociations, pt: Arc<dyn PtPredictor>) -> LinkerConfig {
        let recs = rows.iter().map(|(s, id)| B2eRecord {
            store: us(),
            surface: s.to_string(),
            entity: e(id),
        });
        let (dict, _) = build_dictionary(recs, None).unwrap();
        let dict = Arc::new(dict);
        LinkerConfig {
            detector: dict.clone(),
            matcher: Some(Matcher::Lexical(dict)),
            q2e: None,
            pt,
            assoc: Arc::new(assoc),
            fusion: false,
        }
    }

    #[test]
    fn two_stage_examples() {
        let cfg = lexical_cfg(&[("nike", "E1")], PtAssociations::default(), Arc::new(NoPtPredictor));
        assert_eq!(link_two_stage(&cfg, &q("nike shoes")).outcome.single_entity(), Some(&e("E1")));
        let miss = link_two_stage(&cfg, &q("red shoes"));
        assert_eq!(miss.outcome, Outcome::NoPrediction);
        assert_eq!(miss.trace[0], StageRecord::Detector { mention: None });
        assert!(miss.trace.contains(&StageRecord::Abstain {
            reason: AbstainReason::DetectorMiss
        }));

        let assoc = mine_associations(vec![
            (e("E1"), ProductType::new("charger")),
            (e("E2"), ProductType::new("toy")),
        ]);
        let pt = OraclePtPredictor::new(vec![(q("ab charger"), ProductType::new("charger"))]);
        let cfg = lexical_cfg(&[("ab", "E1"), ("ab", "E2")], assoc, Arc::new(pt));
        assert_eq!(link_two_stage(&cfg, &q("ab charger")).outcome.single_entity(), Some(&e("E1")));
        assert_eq!(link_two_stage(&cfg, &q("ab thing")).outcome, Outcome::NoPrediction);
    }

    #[test]
    fn fusion_priority() {
        let s = |id: &str| Outcome::Single {
            candidate: ScoredEntity::new(e(id), 0.7).unwrap(),
        };
        assert_eq!(fuse(&s("E1"), &s("E2")), (s("E1"), Some(Branch::TwoStage)));
        assert_eq!(fuse(&Outcome::NoPrediction, &s("E2")), (s("E2"), Some(Branch::EndToEnd)));
        assert_eq!(fuse(&Outcome::NoPrediction, &Outcome::Nil), (Outcome::Nil, Some(Branch::EndToEnd)));
        assert_eq!(fuse(&Outcome::NoPrediction, &Outcome::NoPrediction), (Outcome::NoPrediction, None));
    }

    #[test]
    fn config_validation() {
        let mut cfg = lexical_cfg(&[("nike", "E1")], PtAssociations::default(), Arc::new(NoPtPredictor));
        assert!(cfg.validate_for(LinkMode::Lexical).is_ok());
        assert!(cfg.validate_for(LinkMode::Q2e).is_err());
        cfg.fusion = true;
        assert!(cfg.validate().is_err());
        assert_eq!("fused".parse::<LinkMode>().unwrap(), LinkMode::Fused);
        assert!("nope".parse::<LinkMode>().is_err());
    }
}
