use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("no vehicles")]
    NoVehicles,

    #[error("vehicle overlap: gap {gap} m")]
    VehicleOverlap { gap: f64 },

    #[error("infeasible packing: could not place vehicle {index} after {attempts} attempts")]
    InfeasiblePacking { index: usize, attempts: usize },

    #[error("invalid warm start: non-finite cost at the initial guess")]
    InvalidWarmStart,

    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),

    #[error("data error: vehicle {vehicle_id} at row {row}: {reason}")]
    Data {
        vehicle_id: i64,
        row: usize,
        reason: String,
    },

    #[error("parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("time {t} s out of range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("empty log")]
    EmptyLog,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
