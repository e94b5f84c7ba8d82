//! Rotationally symmetric Ricci flow on S^{n+1} and S¹×S^n with surgery.

pub mod bryant;
pub mod cap;
pub mod curvature;
pub mod error;
pub mod evolution;
pub mod flow;
pub mod monitors;
pub mod profile;
pub mod smooth;
pub mod state;
pub mod stencil;
pub mod surgery;

pub use error::{FlowError, Result};

#[cfg(test)]
mod tests;
