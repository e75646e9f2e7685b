//! Slot-attention set prediction for relational triple extraction.
//!
//! Pipeline: [`encoder`] turns a sentence into contextual token features, [`slot_attn`]
//! refines a fixed budget of slots against them, [`heads`] reads a candidate triple out
//! of every slot, and [`set_match`] aligns candidates to gold triples for the loss.

pub mod autodiff;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod heads;
pub mod model;
pub mod set_match;
pub mod slot_attn;
pub mod trainer;

pub use error::{Error, Result};
