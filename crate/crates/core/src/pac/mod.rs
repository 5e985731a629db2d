//! Accelerated proximal atomic coordination over a [`Decomposition`].
//!
//! Each round every atom takes a proximal primal step, extrapolates its
//! primal and equality-dual iterates, sends â to the holders of its copies,
//! updates the coordination duals of the copies it holds and sends ν̂ back
//! to the owners. Both exchanges are barriers.

mod atom;
mod config;
mod run;
mod transport;

pub use atom::{atomic_lagrangian, extrapolate, AtomState, Subproblem};
pub use config::{AtomGains, EqualityMode, GainOverride, GammaRule, PacConfig, Schedule};
pub use run::{run, write_trace, PacResult, TraceRow};
pub use transport::{Message, Payload, Transport};
