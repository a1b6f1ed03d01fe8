//! Augmented causal effect estimation.
//!
//! * [`numerics`]: matrices, SVD, MLP with backprop, Adam, RNG streams.
//! * [`scm`]: structural causal models, do-oracles, graph algorithms and
//!   benchmark generators.
//! * [`proxy`]: latent-confounder proxies from a constrained factor model.
//! * [`diffusion`]: conditional score-based generator with transfer learning.
//! * [`effects`]: Monte Carlo and bias-corrected treatment effect estimators.

pub mod numerics;
pub mod scm;
pub mod proxy;
pub mod diffusion;
pub mod effects;
