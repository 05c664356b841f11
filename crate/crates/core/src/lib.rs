//! Age-dependent dynamic pricing for keeping a content provider's Age of
//! Information low while paying crowdsourced users to sample updates.

pub mod cli;
pub mod error;
pub mod fixed_point;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod riccati;
pub mod sim;
pub mod steady_state;

pub use error::{Error, Result};
pub use model::ModelParams;
