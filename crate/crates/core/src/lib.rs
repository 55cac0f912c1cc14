//! Rate-optimal degree distributions for irregular LDPC ensembles on the
//! binary erasure channel.
//!
//! The library designs edge-perspective variable-node degree distributions
//! λ(x) for a fixed check-node distribution ρ(x) and erasure probability ε.
//! The density-evolution success condition λ(1 − ρ(1 − x)) ≤ x/ε on (0, ε]
//! is an infinite family of linear constraints on λ. Instead of sampling it
//! on a grid, the constraint polynomial P(x) = x − λ(1 − ρ(1 − εx)) is
//! required to be nonnegative on [0, 1] exactly, via a Gram-matrix
//! (sum-of-squares) certificate: P ≥ 0 on [0, 1] iff its image under
//! Π(x) = (1 + x²)^q P(x²/(1 + x²)) is nonnegative on all of ℝ, which is a
//! linear matrix inequality. Maximizing Σ λ_i/i under that LMI maximizes the
//! design rate with no relaxation.
//!
//! Modules:
//! - [`ensemble`]: degree distributions, rate/capacity/gap arithmetic.
//! - [`polyops`]: dense univariate polynomials, P(x) and the Π transform.
//! - [`sosrep`]: assembly of the rate-maximization SDP and certificate checks.
//! - [`sdpcore`]: the embedded primal-dual interior-point SDP solver.
//! - [`baseline_lp`]: the discretized-LP heuristic used as a baseline.
//! - [`desim`]: density-evolution simulation and BP-threshold search, the
//!   independent oracle that verifies every design.

pub mod baseline_lp;
pub mod desim;
pub mod ensemble;
pub mod polyops;
pub mod sdpcore;
pub mod sosrep;

#[cfg(test)]
pub(crate) mod testutil;

pub use ensemble::{
    capacity_and_gap, code_rate, de_margin, ChannelParam, DegreeDistribution, DesignResult,
    DistributionKind, DistributionSpec,
};
pub use polyops::DensePolynomial;
pub use sdpcore::{SdpProblem, SdpSolution, SolveOptions, SolveStatus};
