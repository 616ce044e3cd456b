//! Transfer entropy measurement and decomposition.
//!
//! - [`series`]: multichannel series, windows, splits, CSV I/O.
//! - [`boolnet`]: synchronous Boolean network simulator.
//! - [`discrete_info`]: plugin entropy / mutual information / transfer entropy.
//! - [`autodiff`]: small reverse-mode engine with dense layers and Adam.
//! - [`ib`]: Gaussian bottlenecks, InfoNCE, the Lagrangian and β schedule.
//! - [`decomposer`]: trains distributed bottlenecks on the source past or
//!   the target future and reads out transfer entropy and its shares.

pub mod autodiff;
pub mod boolnet;
pub mod decomposer;
pub mod discrete_info;
pub mod error;
pub mod ib;
pub mod series;

pub use error::{Error, Result};
