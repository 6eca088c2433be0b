//! Tour-based activity pattern generation.
//!
//! The pipeline ingests travel-diary surveys, converts trips into
//! tour-structured activity schedules, derives daily patterns anchored on a
//! primary activity, trains per-group classifiers and regressors (random
//! forests and entity-embedding neural networks), and generates complete
//! daily patterns through a two-stage cascade: primary activity attributes
//! first, then stops, sub-tour, and secondary activities conditioned on
//! that skeleton.
//!
//! A seeded synthetic survey generator with planted structure stands in for
//! proprietary survey data, so the whole pipeline is reproducible and
//! testable end to end.

pub mod builder;
pub mod encoding;
pub mod evaluation;
pub mod forest;
pub mod ingest;
pub mod nn;
pub mod schedule;
