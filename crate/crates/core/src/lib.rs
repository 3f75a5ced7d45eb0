//! Desk-scale autonomous optical network: a deterministic multi-domain
//! simulator (long-haul backbone, DCI metro, intra-datacenter fabric)
//! operated by a hierarchical multi-agent system that exchanges
//! identity-carrying handoffs.
//!
//! The crate is organised bottom-up:
//!
//! - [`optical`]: topology and analytic physical-layer models.
//! - [`failure`]: failure injection, detection, classification, localization.
//! - [`traffic`]: demand generation, fabric allocation, RWA, rerouting.
//! - [`control`]: per-domain controllers with information isolation.
//! - [`agent`]: ReAct execution loop and decision backends.
//! - [`coi`]: handoff encoding, pseudo-system injection, declarations.
//! - [`orchestration`]: the planner's plan tracking table.
//! - [`retriever`]: lexical retrieval over the troubleshooting corpus.
//! - [`harness`]: lifecycle tasks, checkpoints, trials and reports.

pub mod agent;
pub mod coi;
pub mod control;
pub mod domain;
pub mod failure;
pub mod harness;
pub mod optical;
pub mod orchestration;
pub mod retriever;
pub mod traffic;

pub use domain::{AgentId, DomainId, ElementId};
