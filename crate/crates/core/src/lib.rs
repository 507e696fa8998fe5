//! Contract-grounded replenishment planning.
//!
//! Contract text is loaded into a [`corpus::Corpus`], turned into typed
//! constraint records ([`schema`]), consolidated into one value per
//! applicability key ([`consolidate`]), compiled into a planning model and
//! solved exactly over a quantized order grid ([`planmodel`]). The
//! [`orchestrate`] module drives the verify/repair loop and human gates;
//! [`microbench`] quantifies the cost of unverified extraction.

pub mod corpus;
pub mod schema;
pub mod consolidate;
pub mod planmodel;
pub mod microbench;
pub mod orchestrate;

pub use consolidate::{consolidate, ConsolidatedConstraintSet, ConsolidationPolicy, GateRequest};
pub use corpus::{Corpus, EvidenceSpan};
pub use orchestrate::{GateResolution, Outcome, Pipeline, RunConfig, RunStatus};
pub use planmodel::{Plan, PlanningInstance, PlanningModel};
pub use schema::{ConstraintRecord, MasterData, NormalizedConstraint};
