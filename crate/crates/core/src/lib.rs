pub mod error;
pub mod linalg;
pub mod quantile_lp;
pub mod simplex;

pub use error::{Error, Result};
pub mod cancor;
pub mod crq;
pub mod features;
pub mod panel_io;
pub mod inference;
pub mod synth;
pub mod forecast;
pub mod pipeline;
pub mod cli;
