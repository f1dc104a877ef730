//! Deciding and counting solutions of the m-th moment k-subset-sum problem
//! over finite fields, for evaluation sets that are images of monomials and
//! Dickson polynomials.

pub mod charsum;
pub mod counting;
pub mod error;
pub mod evalsets;
pub mod field;
pub mod moments;
pub mod regimes;

pub use error::{Error, Result};
pub use evalsets::{EvalSetDesc, ImageSet};
pub use field::{FieldCtx, FieldElement};
pub use regimes::{decide, Answer, DecideConfig, Decider, DecisionOutcome, Regime};
