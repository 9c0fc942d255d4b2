use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid calendar date {year:04}-{month:02}-{day:02}")]
    InvalidDate { year: i32, month: u32, day: u32 },
    #[error("hour out of range: {0} (expected [0, 24))")]
    HourOutOfRange(f64),
    #[error("coordinate out of range: {0}")]
    CoordinateOutOfRange(String),
    #[error("sun below horizon, shadow undefined (altitude {0:.3}°)")]
    SunBelowHorizon(f64),
    #[error("invalid occluder: {0}")]
    InvalidOccluder(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("singular homography (|det| = {0:.3e})")]
    SingularHomography(f64),
    #[error("shadow hole outside footprint")]
    HoleOutsideFootprint,
    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),
    #[error("missing calibration homography")]
    MissingCalibration,
    #[error("mask dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("no lanes detected in any benign scene")]
    NoBenignLanes,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("malformed {format} at line {line}: {detail}")]
    Parse {
        format: String,
        line: usize,
        detail: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image decode error: {0}")]
    ImageDecode(String),
    #[error("detector subprocess failed: {0}")]
    DetectorSubprocess(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
