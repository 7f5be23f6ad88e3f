//! Spectral toolkit for the regularized Landau–Pekar equations.
//!
//! The electron wave function `ψ` lives on a periodic position lattice and the
//! classical field `φ` on the paired frequency lattice. Modules build from the
//! transform layer ([`spectral`]) up to ground states, linear response,
//! traveling waves, effective masses and real-time dynamics.

mod descent;
pub mod dynamics;
pub mod effective_mass;
pub mod error;
pub mod ground_state;
pub mod io;
pub mod linear_response;
pub mod medium;
pub mod model;
mod parallel;
pub mod spectral;
pub mod state;
pub mod traveling_wave;

pub use error::{Error, Result};
pub use parallel::configure_threads_from_env;
