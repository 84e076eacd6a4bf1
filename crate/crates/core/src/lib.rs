//! Strategic quantizer design for a population of boundedly-rational senders.
//!
//! A two-dimensional source `(X, S)` is classified into `M` messages by one of
//! three cognitive-hierarchy sender types: an honest level-0 sender, a level-1
//! sender that best-responds to the honest estimates, and a level-2 sender that
//! best-responds to the estimates a receiver would form for a Poisson mixture of
//! the lower levels. The receiver knows the true population and forms
//! conditional-mean estimates of `X`.

pub mod design;
pub mod error;
pub mod experiment;
pub mod nonstrategic;
pub mod quadrature;
pub mod quantizer;
pub mod receiver;
pub mod source;
pub mod strategic;
pub mod types;

pub use design::{DescentConfig, DesignResult, SenderLevel};
pub use error::{Error, Result};
pub use nonstrategic::{lloyd_max, lloyd_max_with, LloydConfig};
pub use quantizer::{BoundaryMatrix, EstimateVector};
pub use receiver::{evaluate_population, EquilibriumReport};
pub use source::{GaussianParams, GridSpec, SourceModel};
pub use strategic::{design_full_info, design_level1, design_level2, level2_gradient};
pub use types::TypePmf;
