use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("time {t} outside the interpolation bracket [{lo}, {hi}]")]
    Range { t: f64, lo: f64, hi: f64 },

    #[error("target time {target} not reached after {steps} steps (reached {reached})")]
    IterationLimit {
        target: f64,
        reached: f64,
        steps: usize,
    },

    #[error("field intensity {intensity} below lower bound {lower} at x = {x:?}")]
    Domain {
        intensity: f64,
        lower: f64,
        x: [f64; 3],
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
