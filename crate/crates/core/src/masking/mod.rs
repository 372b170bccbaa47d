//! Drop-probability policies and mask sampling.
//!
//! Mask polarity throughout the crate: an entry of `1` means the edge or unit
//! is **dropped** and the effective weights are `(1 - M) ⊙ W`. This is the
//! opposite of the keep-mask convention used by many frameworks.

mod baselines;
mod ddc;
mod policy;
mod recalibrate;

pub use baselines::{
    dropconnect_mask, dropout_mask, inverted_dropout_scale, standout_drop_probs, standout_keep_prob,
};
pub use ddc::{
    candidate_probs, ddc_candidate_probs, ddc_drop_probs, generate_ddc_mask, generate_variant_mask,
    realized_drop_rate, sample_outcome, scored_drop_probs,
};
pub use policy::{Direction, DropKind, DropPolicy, MaskOutcome, ScoreSource};
pub use recalibrate::{keep_scale, masked_weights, recalibrated_forward};
