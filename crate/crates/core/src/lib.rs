//! Multi-stage cross-market ranking.
//!
//! Market files are parsed into [`InteractionStore`]s, fused across market
//! combinations, scored by classical collaborative-filtering recommenders and
//! then ensembled twice: a grouped power-weighted linear blend and a
//! LambdaRank gradient-boosted tree ranker trained under grouped
//! cross-validation. Every slate is ranked with the same total order
//! (primary score, secondary score, item token).

pub mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod linear;
pub mod market;
pub mod order;
pub mod par;
pub mod pipeline;
pub mod ranker;
pub mod recommenders;
pub mod store;
pub mod synth;
pub mod table;
pub mod tuner;

pub use error::{Error, Result};
pub use market::{CandidateSlate, MarketBundle, MarketId, RatingTriple};
pub use store::{IdMap, InteractionStore};
