//! Software-in-the-loop simulator for a small UUV with a fault-tolerant
//! replanning loop: perception raises a confirmed fault flag, a reasoner
//! proposes a strategy, a deterministic solver certifies it, and guidance
//! flies it.

pub mod bus;
pub mod dynamics;
pub mod estimator;
pub mod geometry;
pub mod guidance;
pub mod perception;
pub mod reasoner;
pub mod scenario;
pub mod sensors;
pub mod solver;
pub mod units;
