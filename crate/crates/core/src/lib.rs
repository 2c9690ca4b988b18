pub mod error;
pub mod exec;
pub mod ink;
pub mod perspective;
pub mod pipeline;
pub mod quad;
pub mod raster;
pub mod segment;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
pub use exec::Exec;
pub use raster::{BinaryMask, Point2, Raster};
