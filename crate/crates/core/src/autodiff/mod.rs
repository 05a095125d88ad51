//! Minimal differentiation engine: an analytic GELU, forward-mode dual
//! numbers, a feed-forward network with Glorot initialization, and a
//! reverse-mode gradient tape over network forwards, Ansatz evaluations and
//! MSE reductions.

pub mod dual;
pub mod gelu;
pub mod mlp;
pub mod tape;

pub use dual::{Dual, Scalar};
pub use gelu::gelu;
pub use mlp::{Mlp, MlpGradients};
pub use tape::{NodeId, Tape};
