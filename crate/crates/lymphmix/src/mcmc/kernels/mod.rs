//! Family-specific Metropolis-within-Gibbs kernels.

pub mod count;
pub mod gaussian;
pub mod joint;
