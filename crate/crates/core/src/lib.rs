//! Black-box program synthesis from probabilistic control-flow sketches.
//!
//! Given a function signature and an executable oracle, the engine samples
//! input-output examples, predicts likely fragments of control flow, samples
//! sketches built from those fragments and fills them by enumerative search
//! until a candidate agrees with the oracle on every example.

pub mod spec;
pub mod ir;
pub mod fragments;
pub mod models;
pub mod synth;
pub mod harness;
