//! Brand entity linking for short e-commerce search queries.
//!
//! The crate provides three linkers over a shared set of components:
//!
//! * a two-stage linker: mention detection, then candidate matching (exact
//!   store-keyed dictionary lookup or a mention-to-entity classifier), then
//!   product-type filtering;
//! * an end-to-end linker that classifies the whole query into the brand
//!   label space (including a NIL label for non-branded queries) with a
//!   tree-structured extreme classifier;
//! * a fusion linker that prefers the lexical two-stage answer and falls
//!   back to the end-to-end answer.
//!
//! Dataset construction, a synthetic corpus generator and the evaluation
//! harness live in [`data`] and [`eval`].

pub mod bench;
pub mod config;
mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod gazetteer;
pub mod pipeline;
pub mod ptfilter;
pub mod text;
pub mod types;
pub mod xmc;

pub use error::{Error, FormatError, Result};
pub use types::{
    AbstainReason, BrandEntityId, BrandMention, LabeledQuery, LinkResult, Outcome, ProductType,
    Query, ScoredEntity, Source, StageRecord, StoreTag,
};
