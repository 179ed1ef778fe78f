use thiserror::Error;

pub type Result<T> = std::result::Result<T, CbwError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CbwError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("Cramér-Rao bound is unbounded: Fisher information vanishes at phi = {phi}")]
    UnboundedCrlb { phi: f64 },

    #[error("search interval width {width} is not below one fringe period {period}")]
    AmbiguousInterval { width: f64, period: f64 },

    #[error("phase is unidentifiable: fringe visibility b is zero")]
    Unidentifiable,

    #[error("signal has no AC power")]
    ZeroAcPower,
}

impl CbwError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        CbwError::Domain(msg.into())
    }
}
