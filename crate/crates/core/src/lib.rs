//! Tracer driver for a finite-domain solver: trace model, event patterns,
//! the in-process filtering driver, the wire protocol to an external
//! analyzer, the mediator, and the overhead harness.

pub mod bench;
pub mod driver;
pub mod intset;
pub mod kernel;
pub mod matcher;
pub mod mediator;
pub mod pattern;
pub mod record;
pub mod trace;
pub mod wire;
