//! Symmetric-matrix calculus for good spectral functions: evaluation,
//! goodness probes, subdifferentials, the positive-definite subgradient
//! construction, and the Frobenius Cauchy–Schwarz inequality.

mod good;
mod matrix;
mod subgradient;

pub use good::{
    check_goodness, eval_good, frobenius_cs_gap, frobenius_cs_scale, GoodFunctionSpec,
    GoodKind, GoodnessReport, PropertyOutcome,
};
pub use matrix::{Eigen, SymMatrix, MAX_DIM};
pub use subgradient::{
    beta_min, construct_pd_subgradient, directional_derivative_fd, sample_unit_trace_psd,
    subgradient_at, support_representation_check, Subgradient,
};

