use thiserror::Error;

use super::OscArg;

/// Numeric shape an attribute expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    /// 0–255 value (alpha, color channels). Floats are read as normalized
    /// intensities and scaled by 255.
    Byte,
    Int,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Int(i64),
    Float(f64),
}

impl Scalar {
    pub fn as_f64(self) -> f64 {
        match self {
            Scalar::Int(v) => v as f64,
            Scalar::Float(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoerceError {
    #[error("expected a number, got {0}")]
    UncoercibleValue(String),
}

/// Converts an OSC argument to the scalar shape `target` expects.
///
/// Float to integer rounds half away from zero. A float aimed at a byte
/// attribute is a normalized intensity: it is multiplied by 255 before
/// rounding (so 0.5 → 128) and saturates at the byte range, which keeps the
/// mapping monotone. Integers widen to floats exactly below 2^24 in
/// magnitude. Range clamping is left to the attribute.
pub fn coerce(value: &OscArg, target: ScalarKind) -> Result<Scalar, CoerceError> {
    match (value, target) {
        (OscArg::Int(v), ScalarKind::Float) => Ok(Scalar::Float(f64::from(*v))),
        (OscArg::Int(v), _) => Ok(Scalar::Int(i64::from(*v))),
        (OscArg::Float(v), _) if !v.is_finite() => Err(CoerceError::UncoercibleValue(format!("{v}"))),
        (OscArg::Float(v), ScalarKind::Float) => Ok(Scalar::Float(f64::from(*v))),
        (OscArg::Float(v), ScalarKind::Int) => Ok(Scalar::Int(f64::from(*v).round() as i64)),
        (OscArg::Float(v), ScalarKind::Byte) => {
            let scaled = (f64::from(*v) * 255.0).round().clamp(0.0, 255.0);
            Ok(Scalar::Int(scaled as i64))
        }
        (OscArg::Str(s), _) => Err(CoerceError::UncoercibleValue(format!("string {s:?}"))),
        (OscArg::Blob(b), _) => Err(CoerceError::UncoercibleValue(format!("blob of {} bytes", b.len()))),
    }
}
