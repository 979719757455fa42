//! Reference numerics: exact pmf tables, local limit approximations,
//! lattice potential theory, and transient-walk constants.

pub mod escape;
pub mod green;
pub mod negbinom;
pub mod special;

pub use escape::{
    escape_constants, green_at, late_return_estimate, pair_thick_tail,
    simulate_escape_probability, EscapeConstants, EscapeMethod,
};
pub use green::{
    fit_c0, green_column, green_exact, hitting_probability, mean_exit_time, C0Fit,
    HittingComparison, HittingQuery,
};
pub use negbinom::{
    local_clt_approx, local_clt_approx_with, moderate_tail_logratio, pmf as negbinom_pmf,
    pmf_shifted as negbinom_pmf_shifted, NegBinomTable, TailSide, DEFAULT_RHO, SIGMA2, SUCCESS_P,
};
pub use special::{
    bm_maxabs_cdf, invert_log_threshold, psi_log_threshold, psi_threshold, re_expansion_m,
    simulate_maxabs_probability,
};
