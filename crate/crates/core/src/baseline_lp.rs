//! The prior-art discretized linear-programming heuristic, kept as the
//! comparison baseline: sample the density-evolution constraint on a finite
//! grid of (0, ε] and solve the resulting LP. Designs found this way are
//! only grid-feasible; the continuous constraint can be violated between
//! grid points, which is exactly what the exact SDP route eliminates.
//!
//! The LP is deliberately solved through the same interior-point core as the
//! SDP, encoded with one slack per grid point on the diagonal of the PSD
//! block, to keep a single optimizer code path.

use serde::Serialize;
use thiserror::Error;

use crate::ensemble::{
    de_margin, ChannelParam, DegreeDistribution, DesignResult, DistributionKind, EnsembleError,
};
use crate::sdpcore::{self, Bound, SdpProblem, SolveOptions, SolveStatus};
use crate::sosrep::{self, SosError};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("LP solve failed with status {status:?}")]
    NoSolution { status: SolveStatus },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Sdp(#[from] sdpcore::SdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScheme {
    Uniform,
    Clustered,
}

/// Strictly increasing sample points in (0, ε].
#[derive(Debug, Clone)]
pub struct DiscretizationGrid {
    points: Vec<f64>,
    scheme: GridScheme,
}

impl DiscretizationGrid {
    pub fn uniform(epsilon: ChannelParam, n: usize) -> Result<Self, BaselineError> {
        if n == 0 {
            return Err(BaselineError::BadInput("grid needs at least 1 point".into()));
        }
        let eps = epsilon.epsilon();
        // Multiply by the ratio (≤ 1) so the last point is exactly ε and
        // rounding can never push a point past it.
        Ok(Self {
            points: (1..=n).map(|k| eps * (k as f64 / n as f64)).collect(),
            scheme: GridScheme::Uniform,
        })
    }

    /// Cosine-spaced points, denser near both 0 and ε where the DE
    /// constraint tends to bind.
    pub fn clustered(epsilon: ChannelParam, n: usize) -> Result<Self, BaselineError> {
        if n == 0 {
            return Err(BaselineError::BadInput("grid needs at least 1 point".into()));
        }
        let eps = epsilon.epsilon();
        Ok(Self {
            points: (1..=n)
                .map(|k| eps * (0.5 * (1.0 - (std::f64::consts::PI * k as f64 / n as f64).cos())))
                .collect(),
            scheme: GridScheme::Clustered,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A grid-feasible design. `certificate_ok` on the inner design is always
/// false: there is no nonnegativity certificate, only satisfaction at the
/// sample points. `max_violation` measures how negative the continuous
/// margin gets between them.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineDesign {
    pub design: DesignResult,
    pub objective: f64,
    pub max_violation: f64,
    pub grid_size: usize,
}

/// Sampling resolution for the continuous-violation measurement.
const VIOLATION_GRID: usize = 100_000;

/// Maximizes Σ λ_i/i subject to the DE constraint enforced only at the grid
/// points: Σ_i λ_i (1 − ρ(1 − x_k))^(i−1) ≤ x_k/ε. Encoded with slack
/// variables on the diagonal of the PSD block and solved by the shared
/// interior-point core.
pub fn discretized_optimize(
    rho: &DegreeDistribution,
    epsilon: ChannelParam,
    dv_max: u32,
    grid: &DiscretizationGrid,
) -> Result<BaselineDesign, BaselineError> {
    if dv_max < 2 {
        return Err(BaselineError::BadInput(format!(
            "dv_max must be at least 2, got {dv_max}"
        )));
    }
    if rho.kind() != DistributionKind::Check {
        return Err(BaselineError::BadInput("rho must be a check distribution".into()));
    }
    if grid.is_empty() {
        return Err(BaselineError::BadInput("empty grid".into()));
    }
    let eps = epsilon.epsilon();
    if grid.points().iter().any(|&x| x <= 0.0 || x > eps) {
        return Err(BaselineError::BadInput(
            "grid points must lie in (0, epsilon]".into(),
        ));
    }

    let m = (dv_max - 1) as usize;
    let n_pts = grid.len();
    let objective: Vec<f64> = (2..=dv_max).map(|i| 1.0 / f64::from(i)).collect();
    let mut problem = SdpProblem::new(m, n_pts, objective);
    for i in 0..m {
        problem.set_bound(i, Bound::boxed(0.0, 1.0));
    }
    for (k, &x) in grid.points().iter().enumerate() {
        let g = 1.0 - rho.eval(1.0 - x);
        let free: Vec<(usize, f64)> = (0..m).map(|i| (i, g.powi(i as i32 + 1))).collect();
        problem.add_equality(free, vec![(k, k, 1.0)], x / eps);
    }
    problem.add_equality((0..m).map(|i| (i, 1.0)).collect(), Vec::new(), 1.0);

    let solution = sdpcore::solve(&problem, &SolveOptions::default())?;
    let usable = matches!(solution.status, SolveStatus::Optimal)
        || (matches!(solution.status, SolveStatus::MaxIterations)
            && solution.primal_residual <= 1e-6
            && solution.dual_gap_estimate <= 1e-5);
    if !usable {
        return Err(BaselineError::NoSolution {
            status: solution.status,
        });
    }

    let lambda = sosrep::clean_lambda(&solution.free_values)?;
    let design = DesignResult::new(lambda, rho.clone(), epsilon, false)?;

    let mut min_margin = f64::INFINITY;
    for k in 0..=VIOLATION_GRID {
        let x = eps * (k as f64 / VIOLATION_GRID as f64);
        min_margin = min_margin.min(de_margin(&design.lambda, &design.rho, epsilon, x)?);
    }
    Ok(BaselineDesign {
        design,
        objective: solution.objective_value,
        max_violation: (-min_margin).max(0.0),
        grid_size: n_pts,
    })
}

/// One row of a grid-refinement sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub objective: f64,
    pub rate: f64,
    pub max_violation: f64,
    pub lambda: DegreeDistribution,
}

/// Runs the discretized optimizer over uniform grids of the given sizes.
/// Larger grids add constraints, so objectives are non-increasing in n.
pub fn grid_sweep(
    rho: &DegreeDistribution,
    epsilon: ChannelParam,
    dv_max: u32,
    n_values: &[usize],
) -> Result<Vec<SweepRow>, BaselineError> {
    if n_values.is_empty() {
        return Err(BaselineError::BadInput("no grid sizes given".into()));
    }
    n_values
        .iter()
        .map(|&n| {
            let grid = DiscretizationGrid::uniform(epsilon, n)?;
            let result = discretized_optimize(rho, epsilon, dv_max, &grid)?;
            Ok(SweepRow {
                n,
                objective: result.objective,
                rate: result.design.rate,
                max_violation: result.max_violation,
                lambda: result.design.lambda,
            })
        })
        .collect()
}
