pub mod error;
pub mod experiments;
pub mod he;
pub mod mpc;
pub mod linprot;
pub mod packing;
pub mod party;
pub mod ring;
pub mod train;
pub mod transport;

pub use error::{Error, Result};
