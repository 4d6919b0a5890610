//! Solvers and stability analysis for a two-agent capital accumulation game
//! with recursive preferences and consumption-dependent discounting.
//!
//! The crate covers three equilibrium concepts over a shared technology:
//!
//! * [`autarky`] — each agent alone: steady states, value iteration, and the
//!   consumption bound that delimits an individual strategy space;
//! * [`openloop`] — precommitment equilibria: the stationary point, policy
//!   derivatives, Jacobian spectrum, and stable-manifold slopes;
//! * [`markov`] — state-feedback equilibria: deflated stationary points, the
//!   nine-case stability classifier, and the policy-operator fixed point.
//!
//! [`model`] holds the parametric families and validation, [`numerics`] the
//! root-finding and grid-function machinery shared by the solvers.

pub mod autarky;
pub mod markov;
pub mod model;
pub mod numerics;
pub mod openloop;

pub use model::{
    canonical_m1, marginal_bundle, validate_model, Agent, DiscountFamily, MarginalBundle,
    ModelError, ModelSpec, TechnologyFamily, UtilityFamily, ValidationReport,
};
