use thiserror::Error;

/// A parameter failed validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("{name} = {value} violates {constraint}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ParamError::NonFinite { name, value })
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64, ParamError> {
    finite(name, value)?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(ParamError::OutOfRange {
            name,
            value,
            constraint: "> 0",
        })
    }
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64, ParamError> {
    finite(name, value)?;
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(ParamError::OutOfRange {
            name,
            value,
            constraint: ">= 0",
        })
    }
}

pub(crate) fn unit_interval(name: &'static str, value: f64) -> Result<f64, ParamError> {
    finite(name, value)?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ParamError::OutOfRange {
            name,
            value,
            constraint: "in [0, 1]",
        })
    }
}
