//! Classification of homogeneous constant-coefficient differential operators
//! (injective ellipticity, cancellation, cocancellation, weak cancellation),
//! construction of compatibility operators, and spectral experiments probing
//! the endpoint `L¹` estimates these properties govern.

pub mod classifier;
pub mod compatibility;
pub mod error;
pub mod lab;
pub mod operator;
pub mod report;
pub mod subspace;

pub use error::{Error, Result};
pub use operator::{catalog, MultiIndex, Operator, SymbolMatrix};
pub use subspace::{Subspace, TolerancePolicy};
