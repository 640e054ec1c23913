// `!(x > 0.0)` is used on purpose so that NaN fails validation; small fixed-size matrices read
// best with explicit indices; quadrature nodes keep every published digit.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::excessive_precision)]

pub mod cli;
pub mod config;
pub mod epr_analysis;
pub mod estimation;
pub mod error;
pub mod hybrid_chain;
pub mod model_core;
pub mod optomech_cavity;
pub mod pipeline;
pub mod presets;
pub mod quadrature;
pub mod spin_oscillator;
pub mod synthetic_data;
pub mod wiener_filter;

pub use error::{Error, Result};
