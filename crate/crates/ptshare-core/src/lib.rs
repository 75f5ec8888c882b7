pub mod dispatch;
pub mod error;
pub mod kkt;
pub mod linearization;
pub mod mechanism;
pub mod milp;
pub mod network;
pub mod traffic;

pub use error::{Error, Result};
