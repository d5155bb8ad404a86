//! Mixture-kernel Metropolis-Hastings: component-wise local moves combined
//! with an exploration proposal in hyperspherical coordinates around an
//! anchor. Also ships the benchmark targets, an IID reference oracle and
//! convergence diagnostics.

pub mod diagnostics;
pub mod geometry;
pub mod kernel;
pub mod oracle;
pub mod parent;
pub mod proposal;
pub mod rng;
pub mod stats;
pub mod targets;

pub use geometry::{Point, PolarVector};
pub use kernel::{ChainRecord, ChainState, KernelConfig, KernelKind, TransitionOutcome};
pub use parent::{ParentModel, Rtf, RtfClass};
pub use rng::RandomStream;
pub use targets::{make_target, TargetModel};
