use thiserror::Error;

/// Errors raised by the library. Variants map onto CLI exit codes through
/// [`Error::is_numerical`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero mass: ball B({center}, {radius}) carries no mass")]
    ZeroMass { center: String, radius: f64 },
    #[error("empty set")]
    EmptySet,
    #[error("set does not meet the ball B({center}, {radius})")]
    EmptyIntersection { center: String, radius: f64 },
    #[error("unbounded analytic set: directed distance from an unclipped shape is infinite")]
    UnboundedSet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("point lies on the cone axis (|tau| = {0:e})")]
    OnAxis(f64),
    #[error("point is not on the cone (distance {0:e})")]
    NotOnCone(f64),
    #[error("point is the cone apex")]
    AtApex,
    #[error("degenerate spectrum: eigen gap {gap:.4} below threshold {threshold}")]
    DegenerateSpectrum { gap: f64, threshold: f64 },
    #[error("quadric coefficients outside the admissible window: {0}")]
    CoefficientWindow(String),
    #[error("point {index} has |P(x)| = {value:e} > eps = {eps:e}")]
    ValueWindow { index: usize, value: f64, eps: f64 },
    #[error("no intersection of the ray with the set within the window")]
    NoIntersection,
    #[error("projection along eta is ill conditioned: angle {angle:.4} rad exceeds {limit:.4}")]
    ProjectionIllConditioned { angle: f64, limit: f64 },
    #[error("insufficient data: {0}")]
    InsufficientPairs(String),
    #[error("point outside the chart domain")]
    OutsideChartDomain,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical procedure on valid input, as opposed
    /// to malformed input or violated preconditions.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroMass { .. }
                | Error::DegenerateSpectrum { .. }
                | Error::NoIntersection
                | Error::ProjectionIllConditioned { .. }
                | Error::InsufficientPairs(_)
                | Error::EmptyIntersection { .. }
                | Error::Numerical(_)
        )
    }

    pub(crate) fn empty_intersection(center: &crate::geom::Point, radius: f64) -> Self {
        Error::EmptyIntersection { center: crate::geom::fmt_point(center), radius }
    }

    pub(crate) fn zero_mass(center: &crate::geom::Point, radius: f64) -> Self {
        Error::ZeroMass { center: crate::geom::fmt_point(center), radius }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
