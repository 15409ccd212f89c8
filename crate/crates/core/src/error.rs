use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// The fixed-step integrator lost too much accuracy.
    #[error("integrator accuracy error: {0}")]
    Integrator(String),

    #[error(
        "rank-deficient design matrix: numerical rank {rank} < {required} \
         (condition estimate {condition:.3e}); more or better spread initial states are needed"
    )]
    RankDeficient {
        rank: usize,
        required: usize,
        condition: f64,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("degenerate prediction: {0}")]
    DegeneratePrediction(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("stage `{stage}` failed (seed {seed}): {source}")]
    Stage {
        stage: &'static str,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at_stage(self, stage: &'static str, seed: u64) -> Self {
        Error::Stage {
            stage,
            seed,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the CLI: 2 for configuration and input
    /// problems, 3 for numeric or convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Size(_)
            | Error::Contract(_)
            | Error::Input(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::Integrator(_)
            | Error::RankDeficient { .. }
            | Error::Numeric(_)
            | Error::Divergence { .. }
            | Error::DegeneratePrediction(_)
            | Error::UndefinedMetric(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
