//! System identification for networked linear control systems.
//!
//! The crate provides dynamic mode decomposition (DMD), DMD with control
//! (DMDc) and a network variant that runs DMDc on every local subsystem of a
//! directed interconnection graph and composes the results into block
//! matrices with structural zeros wherever the graph has no edge.
//!
//! Module map:
//!
//! * [`numkernel`]: SVD, pseudoinverse, eigendecomposition, norms.
//! * [`topology`]: state/input vertices, edges, local subsystems.
//! * [`sysmodel`]: ground-truth linear network systems, simulation, generators.
//! * [`dmdcore`]: exact and reduced DMD / DMDc.
//! * [`netdmdc`]: per-node identification and block assembly.
//! * [`bench`]: seeded recovery-error sweeps and result export.

pub mod bench;
pub mod dmdcore;
mod error;
pub mod netdmdc;
pub mod numkernel;
pub mod sysmodel;
pub mod topology;

pub use error::{Error, Result};
pub use numkernel::{Matrix, TruncationRule};

pub use topology::NetworkTopology;
