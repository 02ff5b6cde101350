use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} = {value} is outside the allowed range {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("angle grid is not strictly increasing at index {index}")]
    UnorderedGrid { index: usize },

    #[error("{0}")]
    Degenerate(String),

    #[error("rejection sampler exceeded {0} iterations")]
    SamplerExhausted(u64),
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64, range: &'static str) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(ModelError::Domain { name, value, range })
    }
}
