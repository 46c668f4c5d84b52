//! Numerical laboratory for mean field games whose player dynamics are
//! nonlinear Markov processes of Levy-Khintchine type (diffusion + drift +
//! finite-activity jumps, with coefficients depending on the population law),
//! together with the limiting first-order (deterministic) mean field game.
//!
//! The crate is organised around the objects of that theory:
//!
//! - [`measures`]: weighted particle clouds on `R^d` and on path space,
//!   second moments, pushforwards and 2-Wasserstein distances;
//! - [`generator`]: generator specifications `(G, f, nu)` with control set and
//!   payoffs, the derived total noise `Sigma` and effective drift `b`, exact
//!   generator action on a closed family of test functions, and the
//!   `epsilon` sequence quantifying distance to the deterministic limit;
//! - [`dynamics`]: controlled characteristics of the deterministic game
//!   (RK4 integration, payoff accumulation, Hamiltonian and argmax control);
//! - [`simulator`]: Euler-Maruyama particle simulation with Bernoulli
//!   thinning for jumps and martingale-problem residual checks;
//! - [`value`]: backward grid sweeps for the stochastic HJB and the
//!   deterministic Hamilton-Jacobi equation, plus the deviation inequality;
//! - [`equilibrium`]: damped Picard fixed-point computation of the
//!   probabilistic and minimax equilibria with self-consistency reports;
//! - [`scenario`] / [`harness`]: configuration schema, convergence studies of
//!   the stochastic games toward the deterministic limit, and quantitative
//!   moment/coupling bound audits.
//!
//! All operations are deterministic given a seed, independent of the number
//! of worker threads. The `parallel` feature (on by default) enables
//! rayon-based data parallelism over particles and grid nodes; without it the
//! same code runs sequentially.

pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod exec;
pub mod generator;
pub mod grid;
pub mod harness;
pub mod io;
pub mod measures;
pub mod scenario;
pub mod simulator;
pub mod value;

pub use error::{MfgError, Result};
pub use grid::TimeGrid;
pub use measures::{EmpiricalMeasure, FlowOfProbabilities, PathMeasure, W2Method};
