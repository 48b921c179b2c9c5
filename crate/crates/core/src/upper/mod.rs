//! Upper-bound construction: mixed norms, the o/p pair rule and its
//! certification, and the search for the largest admissible epsilon.

pub mod construction;
pub mod inequalities;
pub mod norms;
pub mod search;

pub use construction::{
    assemble_semimeasures, certify_history, Assembly, MixedNormVector, OpBuilder, UpperBoundParams,
};
pub use inequalities::{cauchy_check, certify_conditions, holder_check, InequalityReport};
pub use norms::{norm_io, norm_io_iv, norm_oi, norm_oi_iv};
pub use search::{epsilon_search, SearchConfig, SearchReport};
