//! Shared test fixtures and independently written oracles. Nothing in here
//! calls the solver under test; results are produced from first principles so
//! they can arbitrate.

pub mod diff;
pub mod lq;
pub mod riccati;
