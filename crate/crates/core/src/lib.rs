//! Psychometric measurement harness for chat models.
//!
//! The crate covers the full measurement workflow:
//!
//! * [`measure`] — instrument schema (items, anchors, scoring maps), schema
//!   validation, and content-validity statistics from expert reviews.
//! * [`persona`] — trait-combination personas and their seeding prompts.
//! * [`protocol`] — controlled administration of measures against a chat
//!   endpoint (or the simulant), with retries, bounded concurrency, and a
//!   resumable append-only transcript store.
//! * [`scoring`] — rule-based conversion of raw transcripts into item and
//!   measure scores.
//! * [`stats`] — descriptives plus the reliability/validity battery
//!   (Spearman with exact small-n permutation p, split-half with the
//!   Spearman-Brown correction, Shapiro-Wilk, Mardia bivariate normality).
//! * [`simulant`] — a deterministic synthetic respondent with a configurable
//!   latent-bias model, used as the verification oracle in place of a live
//!   endpoint.
//! * [`report`] — analysis-report assembly and rendering.

pub mod measure;
pub mod persona;
pub mod protocol;
pub mod report;
pub mod scoring;
pub mod simulant;
pub mod stats;
