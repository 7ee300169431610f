use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("abscissa {s} outside road range [0, {s_max}]")]
    OutOfRange { s: f64, s_max: f64 },

    #[error("Frenet singularity at (s={s}, r={r}): 1 - r*c(s) = {denom}")]
    Singular { s: f64, r: f64, denom: f64 },

    #[error("invalid road: {0}")]
    InvalidRoad(String),

    #[error("degenerate triangle: abscissae {0} and {1} coincide")]
    DegenerateTriangle(f64, f64),

    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),

    #[error("trajectory does not cover the requested window: {0}")]
    Coverage(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("vehicle {j} relative to {i}: desired offset lies on the protected wedge axis, no rule applies")]
    UnrepresentableShape { j: usize, i: usize },

    #[error("offset ({s}, {r}) lies in the protected region A0")]
    OffsetInProtectedRegion { s: f64, r: f64 },

    #[error("vehicle {i} does not have higher priority than vehicle {j}")]
    PriorityOrder { i: usize, j: usize },

    #[error("formations are not isomorphic (priority lists differ)")]
    NotIsomorphic,

    #[error("reconfiguration planning failed: {0}")]
    PlanningFailure(String),

    #[error("invalid formation: {0}")]
    InvalidFormation(String),

    #[error("heading error {theta} rad at t={time} for vehicle {vehicle} exceeds the forward-motion limit")]
    HeadingLimit { vehicle: usize, time: f64, theta: f64 },

    #[error("initial state violates hard bounds: {0}")]
    InfeasibleInitialState(String),

    #[error("collision between vehicles {a} and {b} at t={time}")]
    Collision { a: usize, b: usize, time: f64 },

    #[error("scenario errors:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Scenario(Vec<FieldError>),

    #[error("trace format: {0}")]
    TraceFormat(String),

    #[error("io: {0}")]
    Io(String),
}

/// A located scenario error: dotted field path plus the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub reason: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
