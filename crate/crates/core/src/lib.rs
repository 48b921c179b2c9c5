//! Online semimeasures and the enumeration games behind the asymmetry of
//! online Kolmogorov complexity.
//!
//! The crate is organised bottom-up:
//!
//! * [`bits`], [`num`] and [`interval`] provide bit strings, exact rationals and
//!   outward-rounded interval arithmetic.
//! * [`semimeasure`], [`factorize`], [`stream`] and [`chain`] hold exact
//!   semimeasure trees, online-constraint validation, minimal online folds, the
//!   odd/even factorization of computable semimeasures and the chain-rule
//!   stream combinators.
//! * [`game`] is the referee for the Alice-vs-Bob enumeration games.
//! * [`strategies`] contains Alice's explicit strategies and the inductive
//!   constructions of the sequence omega together with the decoder.
//! * [`upper`] implements the mixed norms, the balanced/unbalanced o/p
//!   construction and the certified epsilon search.
//! * [`oracle`] solves small discretized games by backward induction.

pub mod bits;
pub mod chain;
pub mod error;
pub mod factorize;
pub mod game;
pub mod interval;
pub mod num;
pub mod oracle;
pub mod semimeasure;
pub mod strategies;
pub mod stream;
pub mod upper;

pub use bits::BitString;
pub use error::{Error, Result};
pub use num::Q;
pub use semimeasure::{MassAssignment, OnlineConstraint, OnlineMassAssignment, Violation};
