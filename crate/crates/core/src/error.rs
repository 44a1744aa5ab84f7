use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("chart mismatch: vector based in chart {vector} but point lies in chart {point}")]
    ChartMismatch { point: usize, vector: usize },

    #[error("point {coords:?} lies outside every chart interior")]
    OutsideCharts { coords: Vec<f64> },

    #[error("segment {segment} has chord {length} exceeding the injectivity radius {limit}")]
    SegmentTooLong {
        segment: usize,
        length: f64,
        limit: f64,
    },

    #[error("fiber Hessian is not symmetric (asymmetry {asymmetry:e} at {witness})")]
    Asymmetric { asymmetry: f64, witness: String },

    #[error("fiber Hessian has negative eigenvalue {eigenvalue:e} at {witness}: (L1) fails")]
    NotConvex { eigenvalue: f64, witness: String },

    #[error("Newton iteration for the Legendre transform did not converge (residual {residual:e} after {iterations} iterations)")]
    LegendreDiverged { residual: f64, iterations: usize },

    #[error("integration step size underflow at t = {t}: the flow appears to blow up, so completeness ({assumption}) is violated")]
    StepUnderflow { t: f64, assumption: &'static str },

    #[error("singular fiber Hessian at t = {t}")]
    SingularFiberHessian { t: f64 },

    #[error(
        "{stage}: no convergence after {iterations} iterations (gradient norm {gradient_norm:e})"
    )]
    NoConvergence {
        stage: &'static str,
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("modification verification failed after safety-factor escalation: {0}")]
    ModificationFailed(String),

    #[error(
        "Morse index unstable under mesh doubling: ({m}, {m_star}) at N, ({m2}, {m2_star}) at 2N"
    )]
    UnstableIndex {
        m: usize,
        m_star: usize,
        m2: usize,
        m2_star: usize,
    },

    #[error("sweep family maximum diverged to {level}: misconfigured family")]
    FamilyDiverged { level: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
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
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
