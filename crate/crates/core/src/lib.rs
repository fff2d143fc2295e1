//! Concurrence of assistance for four-qubit pure states.
//!
//! Parties A and B keep the final state while C and D measure. [`assist::csharp`]
//! is the optimum over joint measurements on CD, [`assist::cflat`] the optimum over
//! local von Neumann measurements, and [`povm`] searches four-outcome POVMs on the
//! first assistant for lower bounds beyond the projective value.

pub mod assist;
pub mod cli;
pub mod error;
pub mod factor;
pub mod linalg;
pub mod mc;
pub mod optim;
pub mod povm;
pub mod state;

pub use error::{Error, Result};
