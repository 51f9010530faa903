//! Literature mining of sex-stratified blood-pressure statistics.
//!
//! The pipeline reads PubMed baseline XML, keeps abstracts that mention
//! blood pressure in mmHg, asks an extraction backend for ten variables
//! (male/female counts plus SBP/DBP mean and SD per sex), validates and
//! grounds the answers against the abstract text, and fits weighted 2-D
//! Gaussian mixtures over (SBP, DBP) study means per sex.

pub mod analysis;
pub mod corpus;
pub mod exec;
pub mod extraction;
pub mod numfmt;
pub mod pipeline;
pub mod synth;
pub mod validation;

pub use exec::Exec;
