//! Focal calibration: the calibration map implied by focal loss, its inverse,
//! the properized focal loss, focal temperature scaling, calibration metrics,
//! and numerical studies comparing focal calibration with temperature scaling.

pub mod analysis;
pub mod calibrator;
pub mod data;
pub mod error;
pub mod fitting;
pub mod focal;
pub mod format;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod prob;
pub mod roots;
pub mod synthetic;

pub use calibrator::{focal_temperature_transform, CalibratorParams, Family};
pub use data::{ingest_csv, ingest_reader, LabeledLogits};
pub use error::{CalibError, Result};
pub use fitting::{
    apply_calibrator, fit_focal_temperature, fit_focal_temperature_line, fit_temperature, Criterion, FitResult,
    GridSpec,
};
pub use focal::{
    focal_calib_binary, focal_calib_binary_logit, focal_calib_inverse_binary, focal_calib_inverse_multiclass,
    focal_calib_multiclass, focal_log_odds,
};
pub use loss::{
    brier_score, cross_entropy, focal_loss, focal_loss_grad, focal_loss_second_deriv, properized_focal_loss,
};
pub use metrics::{ece_equal_mass, error_rate, nll, reliability_table, BinTable, PredictionBatch};
pub use prob::{softmax, temperature_scale, LogitVector, ProbVector, Temperature};
