//! Numerical studies of focal calibration against temperature scaling.
//!
//! Every result type serializes to JSON and writes a CSV table.

pub mod bounds;
pub mod landscape;
pub mod matching;
pub mod scans;

pub use bounds::{bound_check, check_sandwich, theoretical_bounds, BoundResult};
pub use landscape::{focal_risk_minimizer, loss_landscape_table, LandscapeTable, DEFAULT_PERCENTILES};
pub use matching::{
    default_line_gammas, linear_fit_gamma_inv_t, minimax_match_binary, minimax_match_simplex, LinearFit, LogitGrid, MatchConfig,
    MatchResult, TSearch,
};
pub use scans::{confidence_raising_census, confidence_raising_scan, convexity_scan, properness_scan, random_interior_truths, ConfidenceReport, ProperReport};
