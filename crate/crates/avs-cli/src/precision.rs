//! Pipeline element precision selected through the AVS_PRECISION env var.

use avs_core::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// Reads AVS_PRECISION (f32 | f64), defaulting to f32.
pub fn from_env() -> Result<Precision> {
    match std::env::var("AVS_PRECISION") {
        Err(_) => Ok(Precision::F32),
        Ok(v) => match v.as_str() {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::InvalidArgument(format!(
                "AVS_PRECISION must be f32 or f64, got {other}"
            ))),
        },
    }
}
