//! Curriculum-driven instructor-agent configuration and engagement analytics
//! for student–agent chat transcripts.

pub mod curriculum;
pub mod evaluator;
pub mod metrics;
pub mod pipeline;
pub mod promptgen;
pub mod report;
pub mod rounding;
pub mod synth;
pub mod transcript;
