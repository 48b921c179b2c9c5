//! Alice's explicit strategies and the inductive constructions of omega.

pub mod alice;
pub mod omega;
pub mod omega23;

pub use alice::{Alice23, Alice34};
pub use omega::{build_omega, decode_block, decode_f, OmegaConstruction, OmegaParams};
pub use omega23::{build_omega_23, Omega23};
