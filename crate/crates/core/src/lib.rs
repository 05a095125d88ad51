//! Surrogate modeling of nonlinear state-space systems with physics-informed
//! neural networks.
//!
//! Two architectures are provided: the classical PINC, where a feed-forward
//! network maps `(x0, u0, t)` to the state at time `t`, and the
//! domain-decoupled variant (DD-PINN), where the network outputs the
//! coefficients of an analytic Ansatz function `g(a, t)` so that time
//! derivatives are available in closed form and the initial condition is
//! satisfied exactly. The crate also contains the benchmark systems
//! (mass-spring-damper, five-mass chain, two-link manipulator), a fixed-step
//! RK4 reference integrator, Latin-hypercube sampling, the training stack
//! (Adam, learning-rate annealing, plateau scheduling) and self-loop rollout
//! evaluation.

pub mod ansatz;
pub mod autodiff;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod model;
pub mod rollout;
pub mod sample;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
