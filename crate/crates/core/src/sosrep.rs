//! Rate-maximization SDP assembly and Gram-certificate checking.
//!
//! The density-evolution constraint is equivalent to P(x) ≥ 0 on [0, 1] for
//! P(x) = x − λ(1 − ρ(1 − εx)), and P is affine in the unknown λ. Its image
//! Π under the interval-to-line transform is nonnegative on ℝ exactly when
//! some PSD matrix B reproduces Π's coefficients as anti-diagonal sums, so
//! rate maximization becomes: maximize Σ λ_i/i over Σ λ_i = 1, 0 ≤ λ_i ≤ 1,
//! Π_l(λ) = Σ_{i+j=l} B_ij, B ⪰ 0: a finite SDP with no discretization.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::ensemble::{
    ChannelParam, DegreeDistribution, DesignResult, DistributionKind, EnsembleError,
};
use crate::polyops::{pi_transform, pi_transform_with_degree, DensePolynomial};
use crate::sdpcore::{self, Bound, SdpProblem, SdpSolution, SolveOptions, SolveStatus};

/// Extracted λ entries below this magnitude are treated as exact zeros:
/// optimal designs are sparse, and non-support degrees carry only barrier
/// residue at convergence.
const LAMBDA_CLAMP: f64 = 1e-7;
/// Allowed mass lost to clamping before renormalization is refused.
const RENORM_DRIFT: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SosError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("no design extracted: solver returned {status:?}")]
    NoDesign { status: SolveStatus },
    #[error("solver diagnostic: {0}")]
    Diagnostic(String),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Sdp(#[from] sdpcore::SdpError),
}

/// One coefficient Π_l as an affine function of (λ_2, …, λ_dv_max).
#[derive(Debug, Clone)]
pub struct AffineCoefficient {
    pub constant: f64,
    pub gradient: Vec<f64>,
}

impl AffineCoefficient {
    pub fn evaluate(&self, lambda: &[f64]) -> f64 {
        self.constant
            + self
                .gradient
                .iter()
                .zip(lambda)
                .map(|(g, l)| g * l)
                .sum::<f64>()
    }
}

/// The 2q+1 target coefficients Π_0..Π_2q of the rate SDP, affine in λ. The
/// Gram block has order q+1; odd-index targets are identically zero in λ.
#[derive(Debug, Clone)]
pub struct GramConstraintSystem {
    pub q: usize,
    pub dv_max: u32,
    pub target_coefficients: Vec<AffineCoefficient>,
}

impl GramConstraintSystem {
    pub fn build(
        rho: &DegreeDistribution,
        epsilon: ChannelParam,
        dv_max: u32,
    ) -> Result<Self, SosError> {
        if dv_max < 2 {
            return Err(SosError::BadInput(format!(
                "dv_max must be at least 2, got {dv_max}"
            )));
        }
        if rho.kind() != DistributionKind::Check {
            return Err(SosError::BadInput("rho must be a check distribution".into()));
        }
        let dc = rho.max_degree() as usize;
        let q = (dv_max as usize - 1) * (dc - 1);

        // Π is linear in P, and P = x − Σ λ_i g^(i−1), so the targets are
        // the transform of the x term minus λ-weighted transforms of powers
        // of g(x) = 1 − ρ(1 − εx).
        let base = pi_transform_with_degree(&DensePolynomial::monomial(1, 1.0), q)
            .expect("q >= 1 covers the x term");
        let inner = DensePolynomial::new(vec![1.0, -epsilon.epsilon()]);
        let g = &DensePolynomial::constant(1.0)
            - &DensePolynomial::from_distribution(rho).compose(&inner);
        // g(0) = 1 − ρ(1) vanishes identically; pin the stored constant to
        // exact zero so the target gradients at l = 0 stay structurally
        // empty (irregular ρ leaves ~1e−16 of normalization roundoff here).
        let mut g_coeffs = g.coeffs().to_vec();
        if let Some(c0) = g_coeffs.first_mut() {
            debug_assert!(c0.abs() < 1e-9, "g constant term {c0} should vanish");
            *c0 = 0.0;
        }
        let g = DensePolynomial::new(g_coeffs);

        let m = (dv_max - 1) as usize;
        let mut columns = Vec::with_capacity(m);
        let mut g_power = g.clone(); // g^(i−1) for i = 2
        for _ in 0..m {
            columns.push(
                pi_transform_with_degree(&g_power, q)
                    .expect("deg g^(i-1) = (i-1)(dc-1) <= q"),
            );
            g_power = &g_power * &g;
        }

        let target_coefficients = (0..=2 * q)
            .map(|l| AffineCoefficient {
                constant: base.coeff(l),
                gradient: columns.iter().map(|col| -col.coeff(l)).collect(),
            })
            .collect();
        Ok(Self {
            q,
            dv_max,
            target_coefficients,
        })
    }

    pub fn gram_dim(&self) -> usize {
        self.q + 1
    }

    /// Evaluates all Π_l at a concrete λ vector (indexed from degree 2).
    pub fn evaluate(&self, lambda: &[f64]) -> Vec<f64> {
        self.target_coefficients
            .iter()
            .map(|a| a.evaluate(lambda))
            .collect()
    }
}

/// PSD certificate for nonnegativity. `gram` and `min_eigenvalue` are stated
/// in max-normalized units (the polynomial divided by `scale` = max(1,
/// ‖Π‖∞)); `reconstruction_residual` is the backward-relative anti-diagonal
/// error of [`gram_residual`]. Absolute tolerances are meaningless at raw Π
/// magnitudes, which reach 1e10 for realistic ensembles; the normalized
/// quantities keep the acceptance thresholds scale-free.
#[derive(Debug, Clone)]
pub struct FeasibilityCertificate {
    pub gram: DMatrix<f64>,
    pub scale: f64,
    pub min_eigenvalue: f64,
    pub reconstruction_residual: f64,
}

impl FeasibilityCertificate {
    pub fn accepted(&self) -> bool {
        self.min_eigenvalue >= -1e-9 && self.reconstruction_residual <= 1e-7
    }

    pub fn summary(&self) -> CertificateSummary {
        CertificateSummary {
            dim: self.gram.nrows(),
            scale: self.scale,
            min_eigenvalue: self.min_eigenvalue,
            reconstruction_residual: self.reconstruction_residual,
            accepted: self.accepted(),
            gram_row_major: self.gram.transpose().as_slice().to_vec(),
        }
    }
}

/// Serializable certificate dump for result files.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub dim: usize,
    pub scale: f64,
    pub min_eigenvalue: f64,
    pub reconstruction_residual: f64,
    pub accepted: bool,
    pub gram_row_major: Vec<f64>,
}

/// Outcome of the nonnegativity check: a certificate, or a point of [0, 1]
/// where the polynomial is provably negative.
#[derive(Debug, Clone)]
pub enum NonnegOutcome {
    Certificate(FeasibilityCertificate),
    Refutation { witness: f64, value: f64 },
}

/// Builds the rate-maximization SDP: free variables λ_2..λ_dv_max boxed in
/// [0, 1], one PSD block of order q+1, the 2q+1 coefficient equalities plus
/// normalization, and objective Σ λ_i/i.
pub fn build_rate_sdp(
    rho: &DegreeDistribution,
    epsilon: ChannelParam,
    dv_max: u32,
) -> Result<SdpProblem, SosError> {
    let sys = GramConstraintSystem::build(rho, epsilon, dv_max)?;
    let m = (dv_max - 1) as usize;
    let objective: Vec<f64> = (2..=dv_max).map(|i| 1.0 / f64::from(i)).collect();
    let mut problem = SdpProblem::new(m, sys.gram_dim(), objective);
    for i in 0..m {
        problem.set_bound(i, Bound::boxed(0.0, 1.0));
    }
    for (l, target) in sys.target_coefficients.iter().enumerate() {
        // ⟨A_l, B⟩ − Σ grad_i λ_i = constant_l, A_l = ones on anti-diagonal l.
        let free: Vec<(usize, f64)> = target
            .gradient
            .iter()
            .enumerate()
            .filter(|(_, g)| **g != 0.0)
            .map(|(i, g)| (i, -*g))
            .collect();
        let mut psd = Vec::new();
        let lo = l.saturating_sub(sys.q);
        for i in lo..=l / 2 {
            psd.push((i, l - i, 1.0));
        }
        problem.add_equality(free, psd, target.constant);
    }
    problem.add_equality((0..m).map(|i| (i, 1.0)).collect(), Vec::new(), 1.0);
    Ok(problem)
}

/// Accepts solutions the optimizer finished cleanly or stopped just short of
/// tolerance on. Iteration caps and stagnation both report the best iterate
/// reached; if its feasibility and gap are good enough for the ±0.005 rate
/// targets downstream, the design is extracted and the independent
/// density-evolution verification has the final word.
fn near_optimal(solution: &SdpSolution) -> bool {
    match solution.status {
        SolveStatus::Optimal => true,
        SolveStatus::MaxIterations | SolveStatus::NumericalFailure => {
            solution.primal_residual <= 1e-5 && solution.dual_gap_estimate <= 1e-4
        }
        SolveStatus::Infeasible | SolveStatus::Unbounded => false,
    }
}

/// Zero-clamps and renormalizes a raw λ solution vector into a distribution
/// over degrees 2..=dv_max. Shared by the SDP and LP extraction paths.
pub(crate) fn clean_lambda(values: &[f64]) -> Result<DegreeDistribution, SosError> {
    let clamped: Vec<f64> = values
        .iter()
        .map(|&v| if v.abs() < LAMBDA_CLAMP { 0.0 } else { v })
        .collect();
    let sum: f64 = clamped.iter().sum();
    if (sum - 1.0).abs() > RENORM_DRIFT {
        return Err(SosError::Diagnostic(format!(
            "lambda mass after clamping is {sum}, beyond renormalization tolerance"
        )));
    }
    let pairs: Vec<(u32, f64)> = clamped
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i as u32 + 2, v / sum))
        .collect();
    if pairs.is_empty() {
        return Err(SosError::Diagnostic("lambda is identically zero".into()));
    }
    Ok(DegreeDistribution::from_pairs(
        DistributionKind::Variable,
        &pairs,
    )?)
}

/// Reads a design off a rate-SDP solution: cleaned λ, rate bookkeeping, and
/// the Gram certificate of the solver's B block. The certificate is checked
/// against the solver's own λ iterate (before clamping), which is the point
/// B actually certifies; the cleaned design is independently verified by
/// density evolution downstream.
pub fn extract_design(
    problem: &SdpProblem,
    solution: &SdpSolution,
    rho: &DegreeDistribution,
    epsilon: ChannelParam,
) -> Result<(DesignResult, FeasibilityCertificate), SosError> {
    if !near_optimal(solution) {
        return Err(SosError::NoDesign {
            status: solution.status,
        });
    }
    let dv_max = problem.num_free() as u32 + 1;
    let sys = GramConstraintSystem::build(rho, epsilon, dv_max)?;

    let raw_targets = sys.evaluate(&solution.free_values);
    let pi_raw = DensePolynomial::new(raw_targets);
    let certificate = certificate_for(&pi_raw, &solution.psd_matrix)?;

    let lambda = clean_lambda(&solution.free_values)?;
    let design = DesignResult::new(lambda, rho.clone(), epsilon, certificate.accepted())?;
    Ok((design, certificate))
}

/// Least-squares rounding of a numerical Gram matrix onto the coefficient
/// constraints. For an even polynomial the matrix is first symmetrized under
/// conjugation by diag((−1)^i): the average of B and E B E is still PSD,
/// keeps every even anti-diagonal sum, and zeroes the odd anti-diagonals
/// exactly; that is the checkerboard form an even polynomial's Gram can
/// always take. Remaining deficits Π_l − Σ B_ij are spread evenly over their
/// anti-diagonal; that correction has Frobenius norm equal to the residual
/// itself, so it moves eigenvalues by at most that much while making the
/// reconstruction exact to roundoff.
fn project_gram(pi: &DensePolynomial, gram: &mut DMatrix<f64>) {
    let order = gram.nrows();
    let even = pi
        .coeffs()
        .iter()
        .skip(1)
        .step_by(2)
        .all(|c| *c == 0.0);
    if even {
        for i in 0..order {
            for j in 0..order {
                if (i + j) % 2 == 1 {
                    gram[(i, j)] = 0.0;
                }
            }
        }
    }
    // Spread each deficit weighted by sqrt(B_ii B_jj): entries in rows whose
    // diagonal is (near) zero stay untouched, since writing into a zero row
    // makes the matrix indefinite by the full size of the write, and nonzero
    // entries are perturbed relative to their natural scale.
    for l in 0..=2 * (order - 1) {
        if even && l % 2 == 1 {
            continue;
        }
        let lo = l.saturating_sub(order - 1);
        let hi = l.min(order - 1);
        let mut diag_sum = 0.0;
        let mut weight_sum = 0.0;
        for i in lo..=hi {
            diag_sum += gram[(i, l - i)];
            weight_sum += (gram[(i, i)].max(0.0) * gram[(l - i, l - i)].max(0.0)).sqrt();
        }
        if weight_sum <= 0.0 {
            continue;
        }
        let deficit = pi.coeff(l) - diag_sum;
        for i in lo..=hi {
            let w = (gram[(i, i)].max(0.0) * gram[(l - i, l - i)].max(0.0)).sqrt();
            gram[(i, l - i)] += deficit * w / weight_sum;
        }
    }
}

fn certificate_for(
    pi: &DensePolynomial,
    gram: &DMatrix<f64>,
) -> Result<FeasibilityCertificate, SosError> {
    let mut rounded = gram.clone();
    project_gram(pi, &mut rounded);
    // The reconstruction residual is backward-relative and computed on raw
    // data; the eigenvalue bound is meaningful only after dividing the
    // matrix down to unit scale. Gram entries routinely dwarf the polynomial
    // coefficients (anti-diagonals cancel), so the matrix's own magnitude
    // participates in the scale.
    let scale = pi
        .coeffs()
        .iter()
        .fold(1.0f64, |acc, c| acc.max(c.abs()))
        .max(rounded.amax());
    let (_, mut min_eigenvalue) = sdpcore::psd_check(&(&rounded / scale), 1e-9)?;
    // Marginal iterates can land a hair outside the cone after rounding;
    // a few alternating projections (clip the spectrum, restore the
    // anti-diagonals) settle into the intersection when a true certificate
    // is nearby.
    for _ in 0..4 {
        if min_eigenvalue >= -1e-9 {
            break;
        }
        let sym = (&rounded + rounded.transpose()).scale(0.5);
        let mut eig = SymmetricEigen::new(sym);
        for v in eig.eigenvalues.iter_mut() {
            *v = v.max(0.0);
        }
        rounded = eig.recompose();
        project_gram(pi, &mut rounded);
        let (_, updated) = sdpcore::psd_check(&(&rounded / scale), 1e-9)?;
        min_eigenvalue = updated;
    }
    let reconstruction_residual = gram_residual(pi, &rounded)?;
    let gram_normalized = rounded / scale;
    Ok(FeasibilityCertificate {
        gram: gram_normalized,
        scale,
        min_eigenvalue,
        reconstruction_residual,
    })
}

/// Solve settings for the design pipeline: tighter than the solver defaults
/// so clamped λ entries land well below the cleanup threshold and Gram
/// certificates carry full accuracy. Extraction tolerates early stopping, so
/// tightening costs only iterations.
pub fn design_solve_options() -> SolveOptions {
    SolveOptions {
        tol_feas: 1e-9,
        tol_gap: 1e-9,
        max_iter: 300,
    }
}

/// Max anti-diagonal reconstruction error max_l |Π_l − Σ_{i+j=l} B_ij|,
/// measured backward-relative: each coefficient's error is compared against
/// the magnitudes actually summed on that anti-diagonal (floored at one).
/// Realistic Π coefficients reach 1e10, where an absolute tolerance would
/// sit below representable precision; the relative form asserts that B
/// reproduces Π to the stated number of digits.
///
/// The Gram order must cover the polynomial degree: deg(Π) ≤ 2(order − 1);
/// anti-diagonals beyond deg(Π) are compared against zero.
pub fn gram_residual(pi: &DensePolynomial, gram: &DMatrix<f64>) -> Result<f64, SosError> {
    if gram.nrows() != gram.ncols() {
        return Err(SosError::BadInput("gram matrix is not square".into()));
    }
    let order = gram.nrows();
    if pi.degree() > 2 * (order as i64 - 1) {
        return Err(SosError::BadInput(format!(
            "gram order {order} too small for polynomial degree {}",
            pi.degree()
        )));
    }
    let mut residual: f64 = 0.0;
    for l in 0..=2 * (order - 1) {
        let mut diag_sum = 0.0;
        let mut magnitude: f64 = 1.0;
        for i in l.saturating_sub(order - 1)..=l.min(order - 1) {
            diag_sum += gram[(i, l - i)];
            magnitude += gram[(i, l - i)].abs();
        }
        magnitude = magnitude.max(pi.coeff(l).abs());
        residual = residual.max((pi.coeff(l) - diag_sum).abs() / magnitude);
    }
    Ok(residual)
}

/// Decides p ≥ 0 on [0, 1], either by a Gram certificate for Π or by
/// exhibiting a concrete negative point. The feasibility SDP and the grid
/// search are independent routes; a refutation is only ever reported with an
/// evaluated witness p(x*) < −1e−12.
pub fn check_nonneg_on_01(p: &DensePolynomial) -> Result<NonnegOutcome, SosError> {
    if p.is_zero() {
        return Ok(NonnegOutcome::Certificate(FeasibilityCertificate {
            gram: DMatrix::zeros(1, 1),
            scale: 1.0,
            min_eigenvalue: 0.0,
            reconstruction_residual: 0.0,
        }));
    }
    let pi = pi_transform(p);
    let scale = pi
        .coeffs()
        .iter()
        .fold(1.0f64, |acc, c| acc.max(c.abs()));
    let pi_hat = pi.scale(1.0 / scale);
    let q = p.degree() as usize;

    let mut problem = SdpProblem::new(0, q + 1, Vec::new());
    for l in 0..=2 * q {
        let mut psd = Vec::new();
        for i in l.saturating_sub(q)..=l / 2 {
            psd.push((i, l - i, 1.0));
        }
        problem.add_equality(Vec::new(), psd, pi_hat.coeff(l));
    }
    let solution = sdpcore::solve(&problem, &design_solve_options())?;

    let mut rejected_cert = None;
    if near_optimal(&solution) {
        // The SDP was stated for Π/scale, so the returned Gram certifies the
        // normalized polynomial; fold the outer normalization back into the
        // certificate's scale.
        let mut cert = certificate_for(&pi_hat, &solution.psd_matrix)?;
        cert.scale *= scale;
        if cert.accepted() {
            return Ok(NonnegOutcome::Certificate(cert));
        }
        rejected_cert = Some(cert);
    }

    match refutation_witness(p) {
        Some((witness, value)) => Ok(NonnegOutcome::Refutation { witness, value }),
        None => match solution.status {
            SolveStatus::Infeasible => Err(SosError::Diagnostic(
                "solver reports infeasible but no negative point found on [0, 1]".into(),
            )),
            status => match rejected_cert {
                Some(cert) => Err(SosError::Diagnostic(format!(
                    "nonnegativity undecided: solver status {status:?}, certificate rejected \
                     (min_eig {:.3e}, reconstruction {:.3e}), no witness",
                    cert.min_eigenvalue, cert.reconstruction_residual
                ))),
                None => Err(SosError::Diagnostic(format!(
                    "nonnegativity undecided: solver status {status:?} and no witness"
                ))),
            },
        },
    }
}

/// Dense grid plus golden-section refinement around the minimizer.
fn refutation_witness(p: &DensePolynomial) -> Option<(f64, f64)> {
    let n = 10_000;
    let mut best_x = 0.0;
    let mut best_v = p.eval(0.0);
    for k in 1..=n {
        let x = k as f64 / n as f64;
        let v = p.eval(x);
        if v < best_v {
            best_v = v;
            best_x = x;
        }
    }
    let h = 1.0 / n as f64;
    let (mut lo, mut hi) = ((best_x - h).max(0.0), (best_x + h).min(1.0));
    let ratio = 0.5 * (3.0 - 5.0f64.sqrt());
    for _ in 0..80 {
        let a = lo + ratio * (hi - lo);
        let b = hi - ratio * (hi - lo);
        if p.eval(a) < p.eval(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let x = 0.5 * (lo + hi);
    let candidates = [x, best_x, 0.0, 1.0];
    let (witness, value) = candidates
        .iter()
        .map(|&c| (c, p.eval(c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    if value < -1e-12 {
        Some((witness, value))
    } else {
        None
    }
}
