//! Linear layers between a data-owning client and a compute server.
//!
//! The direct protocol sends both operands encrypted and has the server multiply ciphertexts.
//! The precomputed protocol moves those products offline: the server multiplies encryptions of
//! random masks ahead of time, and online it only multiplies ciphertexts by masked plaintexts.

mod plan;
mod pool;
mod protocol;

pub use plan::{BilinearPlan, LinearOp, Slot};
pub use pool::{MaskPair, MaskStore, PlanKey, PoolEntry, TriplePool};
pub use protocol::{bn_affine, LinClient, LinServer, PlanCache};
