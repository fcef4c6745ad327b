//! Testing whether two time-varying quantile regression curves coincide up
//! to a horizontal shift in rescaled time.

pub mod bandwidth;
pub mod check_loss;
pub mod error;
pub mod inverse_shift;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod lrv;
pub mod quantile_fit;
pub mod report;
pub mod simulate;
pub mod testing;

pub use error::{Error, Result, Warning};
