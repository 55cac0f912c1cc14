//! Self-contained dense semidefinite programming solver for problems with
//! free scalar variables (optionally box-bounded), linear equality
//! constraints, and a single PSD matrix block.
//!
//! The solver is a primal-dual path-following interior-point method with
//! HKM scaling and a Mehrotra-style predictor-corrector step; see [`ipm`]
//! internals. Diagonal-only PSD blocks (every constraint touches only
//! diagonal entries) are detected and run through the same loop with the
//! cone arithmetic specialized to elementwise operations, which is what the
//! discretized-LP baseline relies on.

mod ipm;

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("matrix is not symmetric (max asymmetry {0})")]
    NotSymmetric(f64),
}

/// One linear equality: Σ free coefficients · f + ⟨A, X⟩ = rhs, where the
/// symmetric constraint matrix A is stored by its upper triangle and the
/// inner product counts off-diagonal entries with multiplicity two.
#[derive(Debug, Clone)]
pub struct EqualityRow {
    pub free: Vec<(usize, f64)>,
    pub psd: Vec<(usize, usize, f64)>,
    pub rhs: f64,
}

/// Box bounds for one free variable; `None` on a side means unbounded.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bound {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Bound {
    pub fn boxed(lower: f64, upper: f64) -> Self {
        Self {
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    pub fn free() -> Self {
        Self::default()
    }
}

/// Equality-constrained SDP with free scalar variables and one PSD block.
///
/// The objective is a linear form over the free variables and is always
/// maximized. Symmetric matrix entries (i, j) and (j, i) share one stored
/// coefficient, applied with multiplicity two off the diagonal.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    num_free: usize,
    psd_dim: usize,
    objective: Vec<f64>,
    bounds: Vec<Bound>,
    equalities: Vec<EqualityRow>,
}

impl SdpProblem {
    /// Creates a problem with all free variables unbounded; adjust with
    /// [`Self::set_bound`].
    pub fn new(num_free: usize, psd_dim: usize, objective: Vec<f64>) -> Self {
        Self {
            num_free,
            psd_dim,
            objective,
            bounds: vec![Bound::free(); num_free],
            equalities: Vec::new(),
        }
    }

    pub fn set_bound(&mut self, var: usize, bound: Bound) {
        self.bounds[var] = bound;
    }

    /// Adds Σ cᵢ fᵢ + ⟨A, X⟩ = rhs. Off-diagonal PSD coordinates may be given
    /// in either order; they are normalized to the upper triangle.
    pub fn add_equality(
        &mut self,
        free: Vec<(usize, f64)>,
        psd: Vec<(usize, usize, f64)>,
        rhs: f64,
    ) {
        let psd = psd
            .into_iter()
            .map(|(i, j, c)| if i <= j { (i, j, c) } else { (j, i, c) })
            .collect();
        self.equalities.push(EqualityRow { free, psd, rhs });
    }

    pub fn num_free(&self) -> usize {
        self.num_free
    }

    pub fn psd_dim(&self) -> usize {
        self.psd_dim
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn bounds(&self) -> &[Bound] {
        &self.bounds
    }

    pub fn equalities(&self) -> &[EqualityRow] {
        &self.equalities
    }

    /// Structural validation; run before iteration so malformed input never
    /// reaches the solver loop.
    pub fn validate(&self) -> Result<(), SdpError> {
        if self.psd_dim < 1 {
            return Err(SdpError::Malformed("psd_dim must be at least 1".into()));
        }
        if self.objective.len() != self.num_free {
            return Err(SdpError::Malformed(format!(
                "objective has {} entries for {} free variables",
                self.objective.len(),
                self.num_free
            )));
        }
        if self.bounds.len() != self.num_free {
            return Err(SdpError::Malformed("bounds length mismatch".into()));
        }
        for (v, b) in self.bounds.iter().enumerate() {
            if let (Some(l), Some(u)) = (b.lower, b.upper) {
                if l > u {
                    return Err(SdpError::Malformed(format!(
                        "variable {v} has empty box [{l}, {u}]"
                    )));
                }
            }
            for side in [b.lower, b.upper].into_iter().flatten() {
                if !side.is_finite() {
                    return Err(SdpError::Malformed(format!(
                        "variable {v} has non-finite bound"
                    )));
                }
            }
        }
        for c in &self.objective {
            if !c.is_finite() {
                return Err(SdpError::Malformed("non-finite objective".into()));
            }
        }
        for (r, row) in self.equalities.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(SdpError::Malformed(format!("equality {r}: non-finite rhs")));
            }
            for &(i, c) in &row.free {
                if i >= self.num_free {
                    return Err(SdpError::Malformed(format!(
                        "equality {r}: free variable {i} out of range"
                    )));
                }
                if !c.is_finite() {
                    return Err(SdpError::Malformed(format!(
                        "equality {r}: non-finite coefficient"
                    )));
                }
            }
            for &(i, j, c) in &row.psd {
                if i > j || j >= self.psd_dim {
                    return Err(SdpError::Malformed(format!(
                        "equality {r}: matrix entry ({i}, {j}) out of range"
                    )));
                }
                if !c.is_finite() {
                    return Err(SdpError::Malformed(format!(
                        "equality {r}: non-finite matrix coefficient"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump for debugging against external tools: one equality per
    /// line as sparse index-value pairs, then the right-hand side. Not a
    /// stable format.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "free {} psd {}", self.num_free, self.psd_dim);
        let obj: Vec<String> = self.objective.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "maximize {}", obj.join(" "));
        for (v, b) in self.bounds.iter().enumerate() {
            if b.lower.is_some() || b.upper.is_some() {
                let _ = writeln!(
                    out,
                    "bound {v} {} {}",
                    b.lower.map_or("-inf".into(), |l| l.to_string()),
                    b.upper.map_or("inf".into(), |u| u.to_string()),
                );
            }
        }
        for row in &self.equalities {
            let mut line = String::from("eq");
            for &(i, c) in &row.free {
                let _ = write!(line, " f{i}:{c}");
            }
            for &(i, j, c) in &row.psd {
                let _ = write!(line, " X{i},{j}:{c}");
            }
            let _ = write!(line, " rhs:{}", row.rhs);
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

/// Terminal state of [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

/// Solver output. `primal_residual` and `dual_gap_estimate` are relative
/// measures (scaled by 1 + the norms of the problem data and objectives
/// respectively); for `Optimal` they are below the solve tolerances.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub free_values: Vec<f64>,
    pub psd_matrix: DMatrix<f64>,
    pub objective_value: f64,
    pub primal_residual: f64,
    pub dual_gap_estimate: f64,
    pub iterations: usize,
}

/// Iteration controls. The defaults match the design envelope of small dense
/// blocks (order up to ~100).
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_gap: 1e-7,
            max_iter: 200,
        }
    }
}

/// Solves the problem. Deterministic: identical inputs and options produce
/// identical iterates. `max_iterations` and `numerical_failure` are reported
/// through the status, never as errors; `Err` is reserved for structurally
/// malformed input.
pub fn solve(problem: &SdpProblem, options: &SolveOptions) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    Ok(ipm::run(problem, options))
}

/// Minimum eigenvalue test: `(min_eigenvalue ≥ −tol, min_eigenvalue)`.
/// The input must be symmetric to within 1e−12 relative to its magnitude.
pub fn psd_check(matrix: &DMatrix<f64>, tol: f64) -> Result<(bool, f64), SdpError> {
    if matrix.nrows() != matrix.ncols() {
        return Err(SdpError::Malformed("matrix is not square".into()));
    }
    let scale = matrix.amax().max(1.0);
    let mut asym: f64 = 0.0;
    for i in 0..matrix.nrows() {
        for j in (i + 1)..matrix.ncols() {
            asym = asym.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    if asym > 1e-12 * scale {
        return Err(SdpError::NotSymmetric(asym));
    }
    let sym = (matrix + matrix.transpose()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let min_eig = eig.eigenvalues.min();
    Ok((min_eig >= -tol, min_eig))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_default(problem: &SdpProblem) -> SdpSolution {
        solve(problem, &SolveOptions::default()).unwrap()
    }

    /// max t subject to the 1×1 block [1 − t] ⪰ 0.
    fn scalar_bound_problem() -> SdpProblem {
        let mut p = SdpProblem::new(1, 1, vec![1.0]);
        p.add_equality(vec![(0, 1.0)], vec![(0, 0, 1.0)], 1.0);
        p
    }

    #[test]
    fn scalar_bound_reaches_one() {
        let sol = solve_default(&scalar_bound_problem());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.free_values[0] - 1.0).abs() < 1e-6, "t = {}", sol.free_values[0]);
        assert!(sol.primal_residual <= 1e-8);
        assert!(sol.dual_gap_estimate <= 1e-7);
    }

    /// max b subject to [[1, b], [b, 1]] ⪰ 0; the determinant forces b ≤ 1.
    fn correlation_problem() -> SdpProblem {
        let mut p = SdpProblem::new(1, 2, vec![1.0]);
        p.add_equality(vec![], vec![(0, 0, 1.0)], 1.0);
        p.add_equality(vec![], vec![(1, 1, 1.0)], 1.0);
        // X_01 − b = 0 (the off-diagonal inner product doubles the entry).
        p.add_equality(vec![(0, -1.0)], vec![(0, 1, 0.5)], 0.0);
        p
    }

    #[test]
    fn correlation_bound_reaches_one() {
        let sol = solve_default(&correlation_problem());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.free_values[0] - 1.0).abs() < 1e-6, "b = {}", sol.free_values[0]);
    }

    /// x² + bx + 1 ≥ 0 on [0, 1] through the Π transform: q = 2 and
    /// Π(x) = 1 + (b+2)x² + (2+b)x⁴, with a 3×3 Gram block. `direction` is
    /// the objective coefficient on b.
    fn quadratic_family_problem(direction: f64) -> SdpProblem {
        let mut p = SdpProblem::new(1, 3, vec![direction]);
        p.add_equality(vec![], vec![(0, 0, 1.0)], 1.0); // Π_0 = 1
        p.add_equality(vec![], vec![(0, 1, 1.0)], 0.0); // Π_1 = 0
        p.add_equality(vec![(0, -1.0)], vec![(0, 2, 1.0), (1, 1, 1.0)], 2.0); // Π_2 = b + 2
        p.add_equality(vec![], vec![(1, 2, 1.0)], 0.0); // Π_3 = 0
        p.add_equality(vec![(0, -1.0)], vec![(2, 2, 1.0)], 2.0); // Π_4 = 2 + b
        p
    }

    #[test]
    fn quadratic_family_minimization_gives_minus_two() {
        // Minimizing b drives the polynomial to (x − 1)², i.e. b = −2.
        let sol = solve_default(&quadratic_family_problem(-1.0));
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(
            (sol.free_values[0] + 2.0).abs() < 1e-6,
            "b = {}",
            sol.free_values[0]
        );
    }

    #[test]
    fn quadratic_family_maximization_is_unbounded() {
        let sol = solve_default(&quadratic_family_problem(1.0));
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn trivially_infeasible_sign_constraint() {
        // X_00 = −1 contradicts X ⪰ 0.
        let mut p = SdpProblem::new(0, 1, vec![]);
        p.add_equality(vec![], vec![(0, 0, 1.0)], -1.0);
        let sol = solve_default(&p);
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn solution_satisfies_equalities() {
        let p = quadratic_family_problem(-1.0);
        let sol = solve_default(&p);
        for row in p.equalities() {
            let mut v = 0.0;
            for &(i, c) in &row.free {
                v += c * sol.free_values[i];
            }
            for &(i, j, c) in &row.psd {
                v += if i == j {
                    c * sol.psd_matrix[(i, i)]
                } else {
                    c * (sol.psd_matrix[(i, j)] + sol.psd_matrix[(j, i)])
                };
            }
            assert!((v - row.rhs).abs() <= 1e-8, "residual {}", (v - row.rhs).abs());
        }
        let (psd_ok, _) = psd_check(&sol.psd_matrix, 1e-9).unwrap();
        assert!(psd_ok);
    }

    #[test]
    fn weak_duality_on_desk_problems() {
        // Hand-verifiable feasible points give objective lower bounds, and
        // the known optima are upper bounds.
        let sol = solve_default(&scalar_bound_problem());
        assert!(sol.objective_value <= 1.0 + 1e-6);
        assert!(sol.objective_value >= 0.0 - 1e-6); // t = 0, X = I feasible

        let sol = solve_default(&correlation_problem());
        assert!(sol.objective_value <= 1.0 + 1e-6);
        assert!(sol.objective_value >= 0.0 - 1e-6); // b = 0, X = I feasible

        let sol = solve_default(&quadratic_family_problem(-1.0));
        assert!(-sol.free_values[0] <= 2.0 + 1e-6); // b ≥ −2 over the family
        assert!(-sol.free_values[0] >= 0.0 - 1e-6); // b = 0 feasible
    }

    #[test]
    fn status_invariant_under_row_scaling() {
        let base = quadratic_family_problem(-1.0);
        let base_sol = solve_default(&base);

        let mut scaled = SdpProblem::new(1, 3, vec![-1.0]);
        for row in base.equalities() {
            scaled.add_equality(
                row.free.iter().map(|&(i, c)| (i, c * 1e3)).collect(),
                row.psd.iter().map(|&(i, j, c)| (i, j, c * 1e3)).collect(),
                row.rhs * 1e3,
            );
        }
        let scaled_sol = solve_default(&scaled);
        assert_eq!(base_sol.status, scaled_sol.status);
        assert!((base_sol.free_values[0] - scaled_sol.free_values[0]).abs() < 1e-6);
    }

    #[test]
    fn consecutive_solves_are_identical() {
        let p = quadratic_family_problem(-1.0);
        let a = solve_default(&p);
        let b = solve_default(&p);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.free_values, b.free_values);
        assert_eq!(a.objective_value, b.objective_value);
    }

    #[test]
    fn diagonal_block_runs_as_linear_program() {
        // max f0 + 2 f1 with f0 ≥ 0, 0 ≤ f1 ≤ 3, f0 + f1 ≤ 4, 2 f0 + f1 ≥ 2.
        // The optimum is 7 at (1, 3). Slacks live on the block diagonal.
        let mut p = SdpProblem::new(2, 2, vec![1.0, 2.0]);
        p.set_bound(0, Bound { lower: Some(0.0), upper: None });
        p.set_bound(1, Bound::boxed(0.0, 3.0));
        p.add_equality(vec![(0, 1.0), (1, 1.0)], vec![(0, 0, 1.0)], 4.0);
        p.add_equality(vec![(0, 2.0), (1, 1.0)], vec![(1, 1, -1.0)], 2.0);
        let sol = solve_default(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective_value - 7.0).abs() < 1e-6);
        assert!((sol.free_values[0] - 1.0).abs() < 1e-6);
        assert!((sol.free_values[1] - 3.0).abs() < 1e-6);
        // The returned block is the diagonal slack matrix.
        assert!(sol.psd_matrix[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed_before_iterating() {
        let mut p = SdpProblem::new(1, 1, vec![f64::NAN]);
        p.add_equality(vec![(0, 1.0)], vec![], 1.0);
        assert!(solve(&p, &SolveOptions::default()).is_err());
    }

    #[test]
    fn psd_check_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        let (ok, min) = psd_check(&id, 1e-9).unwrap();
        assert!(ok);
        assert!((min - 1.0).abs() < 1e-12);

        let d = DMatrix::from_diagonal(&nalgebra::dvector![1.0, -0.5]);
        let (ok, min) = psd_check(&d, 1e-9).unwrap();
        assert!(!ok);
        assert!((min + 0.5).abs() < 1e-12);

        let ones = DMatrix::from_element(2, 2, 1.0);
        let (ok, min) = psd_check(&ones, 1e-9).unwrap();
        assert!(ok);
        assert!(min.abs() < 1e-12);
    }

    #[test]
    fn psd_check_rejects_asymmetric() {
        let mut m = DMatrix::<f64>::identity(2, 2);
        m[(0, 1)] = 0.5;
        assert!(matches!(
            psd_check(&m, 1e-9),
            Err(SdpError::NotSymmetric(_))
        ));
    }

    #[test]
    fn validate_rejects_out_of_range_indices() {
        let mut p = SdpProblem::new(1, 2, vec![1.0]);
        p.add_equality(vec![(3, 1.0)], vec![], 0.0);
        assert!(p.validate().is_err());

        let mut p = SdpProblem::new(0, 2, vec![]);
        p.add_equality(vec![], vec![(0, 2, 1.0)], 0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn validate_rejects_empty_box() {
        let mut p = SdpProblem::new(1, 1, vec![1.0]);
        p.set_bound(0, Bound::boxed(1.0, 0.0));
        assert!(p.validate().is_err());
    }

    #[test]
    fn dump_text_mentions_every_row() {
        let mut p = SdpProblem::new(1, 2, vec![1.0]);
        p.set_bound(0, Bound::boxed(0.0, 1.0));
        p.add_equality(vec![(0, 1.0)], vec![(0, 0, 1.0)], 1.0);
        p.add_equality(vec![], vec![(0, 1, 1.0)], 0.0);
        let dump = p.dump_text();
        assert!(dump.contains("free 1 psd 2"));
        assert_eq!(dump.matches("\neq").count() + dump.starts_with("eq") as usize, 2);
        assert!(dump.contains("X0,1:1"));
    }
}
