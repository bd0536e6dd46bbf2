//! Grammar-constrained translation of natural language into linear temporal
//! logic, end to end and self-contained:
//!
//! * [`ltl`] — the LTL surface language: formulas, token vocabulary, parser,
//!   renderer.
//! * [`grammar`] — an incremental recognizer that knows, at every decoding
//!   step, exactly which tokens keep the output well formed.
//! * [`decode`] — logit masking, constrained softmax, and budget-aware greedy
//!   decoding that always terminates in an accepting state.
//! * [`loss`] — standard and grammar-forced cross-entropy with exact analytic
//!   gradients.
//! * [`model`] — a small gated-recurrent encoder/decoder with dot-product
//!   attention and hand-written backpropagation; deterministic training.
//! * [`lifting`] — atomic-proposition lifting: span labels, placeholder
//!   substitution, grounding, and an averaged-perceptron span tagger.
//! * [`datagen`] — synthetic corpus generation over three disjoint domain
//!   lexicons, with co-reference and concatenation stress constructions.
//! * [`par`] — data-parallel map with a sequential fallback (feature
//!   `parallel`).

pub mod datagen;
pub mod decode;
pub mod grammar;
pub mod lifting;
pub mod loss;
pub mod ltl;
pub mod model;
pub mod par;
