//! Weighted ℓ1 sparse recovery with exact small-scale certification of the
//! weighted null space and restricted isometry properties.
//!
//! - [`sparsity`]: weights, sparse functions, supports, best s-term selection, partitions.
//! - [`solver`]: weighted basis pursuit and its noise-aware variant.
//! - [`certify`]: RIP, NSP and robust-NSP constants by exhaustive enumeration.
//! - [`construct`]: partial unitary samplers and the NSP-without-RIP-NSP counterexample.
//! - [`bounds`]: closed-form constants and error budgets.

pub mod bounds;
pub mod certify;
pub mod construct;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod solver;
pub mod sparsity;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use sparsity::{SparseModel, SparsityBudget, Support, WeightProfile};
