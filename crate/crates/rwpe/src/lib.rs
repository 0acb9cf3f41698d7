//! Random walks in periodic environments on `Z^d`.
//!
//! The jump law of the walk at a lattice point `x` depends only on `x`
//! modulo a sublattice `M = M_1 Z x ... x M_d Z`, so the walk projects onto
//! a finite Markov chain on the torus `T = Z^d / M`. This crate computes the
//! exact asymptotic law of the walk from that finite chain and cross-checks
//! everything with a seeded Monte Carlo engine:
//!
//! * [`environment`]: periodic environments, with torus geometry, per-site
//!   jump laws, a JSON file format, and generators for reference families
//!   (tilted conductance models, the near-orthogonal drift example).
//! * [`induced_chain`]: the projected chain on the torus, with transition
//!   matrix, stationary distribution, conditional jump means, irreducibility
//!   and period.
//! * [`asymptotics`]: the almost-sure drift vector and the Gaussian
//!   diffusion matrix, via the fundamental matrix of the chain, with an
//!   independent truncated autocovariance-series oracle.
//! * [`reversibility`]: cycle-balance check, potential function, average
//!   negative gradient, and rational direction approximation for
//!   level-crossing experiments.
//! * [`simulator`]: reproducible replica simulation, with trajectory
//!   sampling (direct and two-stage), empirical drift/covariance estimates,
//!   half-space hitting frequencies, and the exact one-dimensional
//!   interval-exit probability.
//!
//! Replica-level parallelism is provided by rayon behind the `parallel`
//! feature (enabled by default). Disabling it yields a fully sequential
//! build; both produce bit-identical statistics because every replica draws
//! from its own counter-derived random stream and results are merged in
//! replica order.

pub mod asymptotics;
pub mod environment;
pub mod induced_chain;
pub mod reversibility;
pub mod simulator;

pub use nalgebra;

pub use asymptotics::{
    diffusion_matrix, drift, fundamental_matrix, green_kubo_truncated, AsymptoticSummary,
};
pub use environment::{
    make_counterexample, make_tilted_conductance, parse_environment, parse_environment_with,
    serialize_environment, Environment, EnvironmentError, JumpLaw, ParseOptions, TorusDims,
    ValidationReport,
};
pub use induced_chain::{
    build_transition_matrix, irreducibility_and_period, jump_means, stationary_distribution,
    InducedChain,
};
pub use reversibility::{
    approximate_appropriate_direction, average_negative_gradient, best_rational_approximation,
    check_reversible, potential, CycleCheck, DirectionApprox, PotentialField, Rational,
};
pub use simulator::{
    estimate_covariance, estimate_drift, exit_probability_1d_exact, exit_probability_1d_mc,
    hitting_probability, sample_path, sample_trajectory, sample_two_stage, ExitEstimate,
    HittingEstimate, RngStream, TrajectoryStats,
};
