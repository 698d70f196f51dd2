use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("path too short: total length {length:.3} m is below the sample interval {interval:.3} m")]
    PathTooShort { length: f64, interval: f64 },

    #[error("point ({x:.2}, {y:.2}) is beyond the lateral gate of {gate:.1} m")]
    BeyondLateralGate { x: f64, y: f64, gate: f64 },

    #[error("offset {d:.3} m exceeds the curvature radius {radius:.3} m at s = {s:.2}")]
    OffsetExceedsCurvature { d: f64, radius: f64, s: f64 },

    #[error("arc length {s:.2} outside path range [0, {s_max:.2}]")]
    ArcLengthOutOfRange { s: f64, s_max: f64 },

    #[error("root section not found: ego pose lies inside an obstacle")]
    RootSectionNotFound,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, PlannerError>;
