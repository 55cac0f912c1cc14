//! Density-evolution oracle: fixed-point iteration of the BEC recursion
//! x_{t+1} = ε·λ(1 − ρ(1 − x_t)) and bisection search for the BP threshold.
//!
//! This module is the independent check on the optimizer: it never looks at
//! Gram matrices, only at the recursion itself, so agreement between the two
//! is evidence rather than tautology.

use serde::Serialize;

use crate::ensemble::{
    self, code_rate, de_margin, ChannelParam, DegreeDistribution, DesignResult, EnsembleError,
};

/// Iteration controls for one density-evolution run.
#[derive(Debug, Clone, Copy)]
pub struct DeOptions {
    pub max_iter: usize,
    pub exit_tol: f64,
}

impl Default for DeOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            exit_tol: 1e-12,
        }
    }
}

/// Absolute iterate change below which the recursion is considered stalled.
const STALL_TOL: f64 = 1e-15;

/// Trajectory of erasure fractions from the all-erased start x₀ = ε.
///
/// `converged_to_zero` is true only when the final value reached the exit
/// tolerance; a stalled positive fixed point counts as non-convergence.
#[derive(Debug, Clone, Serialize)]
pub struct DeReport {
    pub trajectory: Vec<f64>,
    pub converged_to_zero: bool,
    pub final_value: f64,
    pub iterations_used: usize,
}

pub fn de_trajectory(
    lambda: &DegreeDistribution,
    rho: &DegreeDistribution,
    epsilon: ChannelParam,
    options: &DeOptions,
) -> Result<DeReport, EnsembleError> {
    ensemble::expect_kinds(lambda, rho)?;
    let eps = epsilon.epsilon();
    let mut x = eps;
    let mut trajectory = vec![x];
    let mut iterations_used = 0;
    for _ in 0..options.max_iter {
        let next = eps * lambda.eval(1.0 - rho.eval(1.0 - x));
        iterations_used += 1;
        trajectory.push(next);
        let stalled = (next - x).abs() <= STALL_TOL;
        x = next;
        if x <= options.exit_tol || stalled {
            break;
        }
    }
    Ok(DeReport {
        converged_to_zero: x <= options.exit_tol,
        final_value: x,
        iterations_used,
        trajectory,
    })
}

/// BP threshold sup{ε : density evolution converges to zero}, by bisection
/// on ε to the requested width.
///
/// The probes run with a much deeper iteration budget than the trajectory
/// default: optimal designs are tangent to the constraint at several points,
/// and crossing each near-tangency costs O(1/√margin) iterations. At the
/// 5000-iteration default the measured threshold of a boundary design can
/// trail ε by 1e−3; the larger budget brings the censoring error under the
/// bisection width.
pub fn bp_threshold(
    lambda: &DegreeDistribution,
    rho: &DegreeDistribution,
    tol: f64,
) -> Result<f64, EnsembleError> {
    ensemble::expect_kinds(lambda, rho)?;
    let options = DeOptions {
        max_iter: 200_000,
        exit_tol: 1e-12,
    };
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let report = de_trajectory(lambda, rho, ChannelParam::new(mid)?, &options)?;
        if report.converged_to_zero {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Independent verification of a design: margin sampling, threshold, and
/// rate recomputation, with the pass criteria pinned in one place.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub grid_size: usize,
    pub min_margin: f64,
    pub threshold: f64,
    pub rate_recomputed: f64,
    pub margin_ok: bool,
    pub threshold_ok: bool,
    pub rate_ok: bool,
    pub pass: bool,
}

/// Margin tolerance: optimizer designs sit on the constraint boundary, so
/// tiny negative sampling dips at solver accuracy are allowed.
const MARGIN_TOL: f64 = 1e-6;
/// Verified threshold may trail the design ε by at most this much.
const THRESHOLD_SLACK: f64 = 1e-4;
/// Rate recomputation must agree to this tolerance.
const RATE_TOL: f64 = 1e-10;

pub fn verify_design(
    design: &DesignResult,
    grid_size: usize,
) -> Result<VerificationReport, EnsembleError> {
    let eps = design.epsilon;
    let mut min_margin = f64::INFINITY;
    for k in 0..=grid_size {
        let x = eps.epsilon() * (k as f64 / grid_size as f64);
        min_margin = min_margin.min(de_margin(&design.lambda, &design.rho, eps, x)?);
    }
    let threshold = bp_threshold(&design.lambda, &design.rho, 1e-5)?;
    let rate_recomputed = code_rate(&design.lambda, &design.rho)?;

    let margin_ok = min_margin >= -MARGIN_TOL;
    let threshold_ok = threshold >= eps.epsilon() - THRESHOLD_SLACK;
    let rate_ok = (rate_recomputed - design.rate).abs() <= RATE_TOL;
    Ok(VerificationReport {
        grid_size,
        min_margin,
        threshold,
        rate_recomputed,
        margin_ok,
        threshold_ok,
        rate_ok,
        pass: margin_ok && threshold_ok && rate_ok,
    })
}

/// Convenience: rate/capacity summary for an (λ, ρ, ε) triple that did not
/// come out of the optimizer, e.g. hand-written configs under verification.
pub fn design_from_parts(
    lambda: DegreeDistribution,
    rho: DegreeDistribution,
    epsilon: ChannelParam,
) -> Result<DesignResult, EnsembleError> {
    DesignResult::new(lambda, rho, epsilon, false)
}
