use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("relative velocity is zero: co-moving pair has no finite interaction time")]
    ZeroRelativeVelocity,

    #[error("coincident positions: bearing to the partner is undefined")]
    CoincidentPositions,

    #[error("particle is at its goal point: bearing rate undefined")]
    AtGoal,

    #[error("lambda = 0 selects the exact nonlocal model; no scaled parameters exist")]
    LambdaZero,

    #[error("degenerate least-squares stencil ({neighbors} neighbors, condition {condition:.3e})")]
    DegenerateStencil { neighbors: usize, condition: f64 },

    #[error("unstable step: particle {particle} moved {moved:.3} m, more than the support radius {h:.3} m")]
    UnstableStep { particle: usize, moved: f64, h: f64 },

    #[error("seeding overfull: {requested} particles per group do not fit {capacity} lattice sites (spacing {spacing} m)")]
    Overfull {
        requested: usize,
        capacity: usize,
        spacing: f64,
    },

    #[error("mismatched run configs: {0}")]
    MismatchedConfigs(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("psi table cache: {0}")]
    PsiCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
