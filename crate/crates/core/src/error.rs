use thiserror::Error;

/// Errors raised by the core operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violated its documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    /// A CUFF motor command was requested before the device was calibrated.
    #[error("CUFF calibration required")]
    CalibrationRequired,
    /// A metric was requested for a trial outside its index group
    /// (success-only metric on a failed trial or the reverse).
    #[error("metric not applicable: {0}")]
    NotApplicable(&'static str),
    /// Every paired difference is zero, so no test can be computed.
    #[error("degenerate sample: all paired differences are zero")]
    DegenerateSample,
}
