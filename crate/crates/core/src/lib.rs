//! Estimation of Almost Ideal Demand System share equations and their
//! nested extensions from weekly price and quantity panels.

pub mod aids;
pub mod cli;
pub mod diagnostics;
pub mod elasticity;
pub mod error;
pub mod indices;
pub mod model;
pub mod panel;
pub mod report;
pub mod sur;
pub mod synth;

pub use aids::{fit_aids, lr_test, FitResult, LrResult};
pub use error::{AidsError, ErrorKind, Result};
pub use model::{CoefficientSet, ModelId, ModelSpec};
pub use panel::{compute_shares, load_panel, MarketPanel, SharePanel};
