//! Allocation-only analysis core for cohort progression studies.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithm of the
//! toolkit: the time-ordered feature store with its leakage guard, prerequisite
//! graph metrics and scheduling, trajectory archetype mining, cross-fitted
//! double machine learning, the agent-based cohort simulator and the factorial
//! policy laboratory. File formats and the command line live in the `cohortlab`
//! crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod archetype;
pub mod curriculum;
pub mod dml;
pub mod fingerprint;
pub mod linalg;
mod math;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod temporal;

pub use curriculum::{Course, Curriculum, CurriculumSpec, EdgeKind, GraduationRule, Parity, PrereqEdge};
pub use temporal::{Dataset, ObservationWindow, StudentRecord};
