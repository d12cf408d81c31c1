use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown fractal family: {0}")]
    UnknownFamily(String),

    #[error("level {level} exceeds vertex budget {budget} (estimated {estimate} vertices)")]
    VertexBudget {
        level: u32,
        budget: usize,
        estimate: usize,
    },

    #[error("unknown vertex id {0}")]
    UnknownVertex(usize),

    #[error("potential belongs to a different graph")]
    DomainMismatch,

    #[error("incompatible blowup pair: model cells {0} and {1} touch but their fractal copies share no vertex")]
    BlowupGluing(usize, usize),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("graph too large for dense spectrum ({size} vertices, cap {cap}); use time stepping instead")]
    SpectrumCap { size: usize, cap: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
