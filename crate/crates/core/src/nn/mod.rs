//! Reverse-mode autodiff, parameter storage, layers, and optimization.

pub mod adam;
pub mod graph;
pub mod layers;
pub mod params;

pub use adam::{Adam, AdamConfig};
pub use graph::{expect_shape, Graph, Var};
pub use params::{uniform_init, zeros, Binder, Params};
