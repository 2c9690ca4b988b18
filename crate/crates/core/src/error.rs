use thiserror::Error;

/// Errors raised by the pipeline stages.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("expected {expected} channel(s), got {actual}")]
    ChannelCount { expected: u8, actual: u8 },
    #[error("sample point ({x}, {y}) outside {width}x{height} raster")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("no paper region found")]
    NoPaperFound,
    #[error("empty input")]
    EmptyInput,
    #[error("points are collinear; no hull")]
    DegenerateHull,
    #[error("hull has {0} vertices; a quadrilateral needs at least 4")]
    NotAQuad(usize),
    #[error("corners do not form a strictly convex quadrilateral")]
    NotConvex,
    #[error("singular system: three of the four correspondences are collinear")]
    SingularSystem,
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("window {window} does not fit a {width}x{height} image")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },
    #[error("frame {got} does not follow frame {last}")]
    FrameOrder { last: u64, got: u64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("structuring element is empty or has even sides")]
    BadStructuringElement,
}

pub type Result<T> = std::result::Result<T, Error>;
