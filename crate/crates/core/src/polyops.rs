//! Dense univariate polynomial arithmetic plus the two symbolic
//! constructions the optimizer is built on: the constraint polynomial
//! P(x) = x − λ(1 − ρ(1 − εx)) and the interval-to-line transform
//! Π(x) = (1 + x²)^q · P(x²/(1 + x²)).

use std::fmt;
use std::ops::{Add, Mul, Sub};

use thiserror::Error;

use crate::ensemble::{ChannelParam, DegreeDistribution};

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("monomial exponent must be at least 1, got {0}")]
    BadMonomialExponent(u32),
    #[error("requested transform degree {requested} below polynomial degree {actual}")]
    DegreeTooSmall { requested: usize, actual: i64 },
    #[error("cross-check sum overflows exact integer arithmetic (n={n}, parts={parts})")]
    OracleOverflow { n: u32, parts: usize },
}

/// Real univariate polynomial stored by ascending power.
///
/// Trailing zero coefficients are trimmed; the zero polynomial is the empty
/// list with degree −1 by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePolynomial {
    coeffs: Vec<f64>,
}

impl DensePolynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// c·x^k.
    pub fn monomial(k: usize, c: f64) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        Self::new(coeffs)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest power with a nonzero coefficient; −1 for the zero polynomial.
    pub fn degree(&self) -> i64 {
        self.coeffs.len() as i64 - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of x^j, zero beyond the stored degree.
    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs.get(j).copied().unwrap_or(0.0)
    }

    /// Horner-scheme evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::zero();
        }
        Self::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, c)| c * (i + 1) as f64)
                .collect(),
        )
    }

    /// self ∘ inner, by Horner over polynomial arithmetic.
    pub fn compose(&self, inner: &Self) -> Self {
        let mut acc = Self::zero();
        for &c in self.coeffs.iter().rev() {
            acc = &(&acc * inner) + &Self::constant(c);
        }
        acc
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut acc = Self::constant(1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Edge polynomial Σ_d c_d x^(d−1) of a degree distribution.
    pub fn from_distribution(dd: &DegreeDistribution) -> Self {
        let top = dd.max_degree() as usize;
        let mut coeffs = vec![0.0; top];
        for (d, c) in dd.coefficients() {
            coeffs[(d - 1) as usize] = c;
        }
        Self::new(coeffs)
    }
}

impl Add for &DensePolynomial {
    type Output = DensePolynomial;
    fn add(self, rhs: Self) -> DensePolynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut out = vec![0.0; n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in rhs.coeffs.iter().enumerate() {
            out[i] += c;
        }
        DensePolynomial::new(out)
    }
}

impl Sub for &DensePolynomial {
    type Output = DensePolynomial;
    fn sub(self, rhs: Self) -> DensePolynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut out = vec![0.0; n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in rhs.coeffs.iter().enumerate() {
            out[i] -= c;
        }
        DensePolynomial::new(out)
    }
}

impl Mul for &DensePolynomial {
    type Output = DensePolynomial;
    fn mul(self, rhs: Self) -> DensePolynomial {
        if self.is_zero() || rhs.is_zero() {
            return DensePolynomial::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        DensePolynomial::new(out)
    }
}

impl fmt::Display for DensePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (j, c) in self.coeffs.iter().enumerate() {
            if j > 0 {
                write!(f, " + ")?;
            }
            match j {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}·x")?,
                _ => write!(f, "{c}·x^{j}")?,
            }
        }
        Ok(())
    }
}

/// Constraint polynomial P(x) = x − λ(1 − ρ(1 − εx)), by exact polynomial
/// composition.
///
/// The constant coefficient vanishes identically (λ has no constant term and
/// ρ(1) = 1), so it is pinned to exact zero; the linear coefficient is
/// 1 − ε·λ₂·ρ′(1). The trimmed degree is (D_v − 1)(D_c − 1) whenever the top
/// weights of both distributions are nonzero.
pub fn p_coefficients(
    lambda: &DegreeDistribution,
    rho: &DegreeDistribution,
    epsilon: ChannelParam,
) -> DensePolynomial {
    let inner = DensePolynomial::new(vec![1.0, -epsilon.epsilon()]); // 1 − εx
    let rho_poly = DensePolynomial::from_distribution(rho);
    let g = &DensePolynomial::constant(1.0) - &rho_poly.compose(&inner); // 1 − ρ(1 − εx)
    let lambda_poly = DensePolynomial::from_distribution(lambda);
    let p = &DensePolynomial::monomial(1, 1.0) - &lambda_poly.compose(&g);
    let mut coeffs = p.coeffs;
    if let Some(c0) = coeffs.first_mut() {
        debug_assert!(c0.abs() < 1e-9, "constant term {c0} should vanish");
        *c0 = 0.0;
    }
    DensePolynomial::new(coeffs)
}

/// Exact binomial coefficient in integer arithmetic.
fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

/// Independent route to the coefficients of P(x) for monomial ρ(x) = x^n.
///
/// Expands (1 − (1 − εx)^n)^(i−1) combinatorially: the coefficient of x^j is
/// (−1)^(j+i−1) ε^j times the sum over compositions of j into i−1 parts, each
/// part r in 1..=n weighted by C(n, r). The inner sums are integers and are
/// accumulated exactly in u128, so this route shares no code with the
/// polynomial-composition path it cross-checks.
pub fn phi_cross_check(
    lambda: &DegreeDistribution,
    n: u32,
    epsilon: ChannelParam,
) -> Result<DensePolynomial, PolyError> {
    if n < 1 {
        return Err(PolyError::BadMonomialExponent(n));
    }
    let eps = epsilon.epsilon();
    let max_parts = (lambda.max_degree() - 1) as usize;
    let q = max_parts * n as usize;

    // comp_sum[m][j] = Σ over compositions of j into m parts, each in 1..=n,
    // of Π C(n, part).
    let mut comp_sum = vec![vec![0u128; q + 1]; max_parts + 1];
    comp_sum[0][0] = 1;
    let binom: Vec<u128> = (0..=n as u64)
        .map(|r| binomial_u128(n as u64, r))
        .collect::<Option<_>>()
        .ok_or(PolyError::OracleOverflow {
            n,
            parts: max_parts,
        })?;
    for m in 1..=max_parts {
        for j in m..=(m * n as usize).min(q) {
            let mut acc: u128 = 0;
            for r in 1..=(n as usize).min(j) {
                let term = comp_sum[m - 1][j - r]
                    .checked_mul(binom[r])
                    .ok_or(PolyError::OracleOverflow { n, parts: m })?;
                acc = acc
                    .checked_add(term)
                    .ok_or(PolyError::OracleOverflow { n, parts: m })?;
            }
            comp_sum[m][j] = acc;
        }
    }

    let mut coeffs = vec![0.0; q + 1];
    if q >= 1 {
        coeffs[1] = 1.0;
    }
    for (degree, weight) in lambda.coefficients() {
        let m = (degree - 1) as usize;
        for j in m..=m * n as usize {
            let sign = if (j + m).is_multiple_of(2) { 1.0 } else { -1.0 };
            let c = sign * eps.powi(j as i32) * comp_sum[m][j] as f64;
            coeffs[j] -= weight * c;
        }
    }
    coeffs[0] = 0.0;
    Ok(DensePolynomial::new(coeffs))
}

/// Π(x) = Σ_j p_j x^(2j) (1 + x²)^(q−j) with q = deg p, by direct expansion.
///
/// Evaluates pointwise to (1 + x²)^q · p(x²/(1 + x²)), so p ≥ 0 on [0, 1]
/// exactly when Π ≥ 0 on all of ℝ. All odd-index coefficients are exactly
/// zero. The zero polynomial maps to itself.
pub fn pi_transform(p: &DensePolynomial) -> DensePolynomial {
    if p.is_zero() {
        return DensePolynomial::zero();
    }
    pi_transform_with_degree(p, p.degree() as usize).expect("q = deg p is always valid")
}

/// Π transform with an explicit q ≥ deg p. Using a larger q multiplies the
/// result by the positive factor (1 + x²)^(q − deg p), preserving the
/// nonnegativity equivalence; the SDP assembly needs the structural q of the
/// ensemble family rather than the trimmed degree of one member.
pub fn pi_transform_with_degree(
    p: &DensePolynomial,
    q: usize,
) -> Result<DensePolynomial, PolyError> {
    if p.degree() > q as i64 {
        return Err(PolyError::DegreeTooSmall {
            requested: q,
            actual: p.degree(),
        });
    }
    if p.is_zero() {
        return Ok(DensePolynomial::zero());
    }
    // Powers of (1 + x²) up to q, in the compressed basis y = x²: row k holds
    // the binomial coefficients of (1 + y)^k.
    let one_plus = DensePolynomial::new(vec![1.0, 1.0]);
    let mut powers = Vec::with_capacity(q + 1);
    powers.push(DensePolynomial::constant(1.0));
    for _ in 1..=q {
        powers.push(&powers[powers.len() - 1] * &one_plus);
    }

    let mut even = vec![0.0; q + 1]; // coefficient of x^(2l) at index l
    for j in 0..=q {
        let pj = p.coeff(j);
        if pj == 0.0 {
            continue;
        }
        for (r, b) in powers[q - j].coeffs().iter().enumerate() {
            even[j + r] += pj * b;
        }
    }
    let mut coeffs = vec![0.0; 2 * q + 1];
    for (l, c) in even.into_iter().enumerate() {
        coeffs[2 * l] = c;
    }
    Ok(DensePolynomial::new(coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::DistributionKind;

    fn dist(kind: DistributionKind, pairs: &[(u32, f64)]) -> DegreeDistribution {
        DegreeDistribution::from_pairs(kind, pairs).unwrap()
    }

    #[test]
    fn eval_basics() {
        let p = DensePolynomial::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.eval(0.0), 1.0);
        assert_eq!(p.eval(1.0), 6.0);
        let q = DensePolynomial::new(vec![0.0, 1.0, -1.0]);
        assert_eq!(q.eval(0.5), 0.25);
    }

    #[test]
    fn zero_polynomial_convention() {
        let z = DensePolynomial::new(vec![0.0, 0.0]);
        assert!(z.is_zero());
        assert_eq!(z.degree(), -1);
        assert_eq!(z.eval(3.0), 0.0);
        assert_eq!(z.coeffs(), &[] as &[f64]);
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let p = DensePolynomial::new(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), 1);
        assert_eq!(p.coeffs(), &[1.0, 2.0]);
    }

    #[test]
    fn compose_squares_one_minus_x() {
        let outer = DensePolynomial::monomial(2, 1.0);
        let inner = DensePolynomial::new(vec![1.0, -1.0]);
        assert_eq!(outer.compose(&inner).coeffs(), &[1.0, -2.0, 1.0]);
    }

    #[test]
    fn compose_with_identity_is_identity() {
        let outer = DensePolynomial::new(vec![3.0, -1.0, 0.5, 2.0]);
        let x = DensePolynomial::monomial(1, 1.0);
        assert_eq!(outer.compose(&x), outer);
    }

    #[test]
    fn compose_matches_binomial_expansion() {
        // (1 − 2x)³ by the binomial theorem: 1 − 6x + 12x² − 8x³.
        let outer = DensePolynomial::monomial(3, 1.0);
        let inner = DensePolynomial::new(vec![1.0, -2.0]);
        assert_eq!(outer.compose(&inner).coeffs(), &[1.0, -6.0, 12.0, -8.0]);
    }

    #[test]
    fn p_coefficients_identity_maps() {
        // λ(y) = y, ρ(y) = y, ε = 0.5 ⇒ P = x − 0.5x.
        let lambda = dist(DistributionKind::Variable, &[(2, 1.0)]);
        let rho = dist(DistributionKind::Check, &[(2, 1.0)]);
        let p = p_coefficients(&lambda, &rho, ChannelParam::new(0.5).unwrap());
        assert_eq!(p.coeffs(), &[0.0, 0.5]);
    }

    #[test]
    fn p_coefficients_square_case() {
        // λ(y) = y², ρ(y) = y, ε → 1 gives P = x − x². ε must stay inside
        // (0, 1), so check the limit algebraically at ε = 1 − 1e-12.
        let lambda = dist(DistributionKind::Variable, &[(3, 1.0)]);
        let rho = dist(DistributionKind::Check, &[(2, 1.0)]);
        let eps = 1.0 - 1e-12;
        let p = p_coefficients(&lambda, &rho, ChannelParam::new(eps).unwrap());
        // P = x − (εx)² exactly.
        assert_eq!(p.coeff(0), 0.0);
        assert_eq!(p.coeff(1), 1.0);
        assert!((p.coeff(2) + eps * eps).abs() < 1e-15);
    }

    #[test]
    fn p_coefficients_reference_design() {
        let lambda = crate::testutil::table_x5_lambda();
        let rho = dist(DistributionKind::Check, &[(6, 1.0)]);
        let eps = ChannelParam::new(0.49).unwrap();
        let p = p_coefficients(&lambda, &rho, eps);
        assert_eq!(p.degree(), 30);
        assert_eq!(p.coeff(0), 0.0);
        // First-order term: 1 − ε·λ₂·ρ′(1), the closed form of the linear
        // coefficient. With the raw reference λ₂ = 0.4021 this would be
        // ≈ 0.01485; the fixture is rescaled, so compare against its own λ₂.
        let expected_p1 = 1.0 - 0.49 * lambda.coefficient(2) * 5.0;
        assert!((p.coeff(1) - expected_p1).abs() < 1e-12);
        let raw_p1: f64 = 1.0 - 0.49 * 0.4021 * 5.0;
        assert!((raw_p1 - 0.01485).abs() < 5e-5);
    }

    #[test]
    fn phi_cross_check_matches_identity_cases() {
        let lambda = dist(DistributionKind::Variable, &[(2, 1.0)]);
        let eps = ChannelParam::new(0.5).unwrap();
        let p = phi_cross_check(&lambda, 1, eps).unwrap();
        assert_eq!(p.coeffs(), &[0.0, 0.5]);

        let lambda = dist(DistributionKind::Variable, &[(3, 1.0)]);
        let eps = 1.0 - 1e-12;
        let p = phi_cross_check(&lambda, 1, ChannelParam::new(eps).unwrap()).unwrap();
        assert_eq!(p.coeff(1), 1.0);
        assert!((p.coeff(2) + eps * eps).abs() < 1e-15);
    }

    #[test]
    fn phi_cross_check_agrees_with_composition_on_reference_design() {
        let lambda = crate::testutil::table_x5_lambda();
        let rho = dist(DistributionKind::Check, &[(6, 1.0)]);
        let eps = ChannelParam::new(0.49).unwrap();
        let via_compose = p_coefficients(&lambda, &rho, eps);
        let via_phi = phi_cross_check(&lambda, 5, eps).unwrap();
        assert_eq!(via_compose.degree(), via_phi.degree());
        for j in 0..=via_compose.degree() as usize {
            let d = (via_compose.coeff(j) - via_phi.coeff(j)).abs();
            assert!(d <= 1e-9, "coefficient {j} differs by {d}");
        }
    }

    #[test]
    fn phi_cross_check_rejects_zero_exponent() {
        let lambda = dist(DistributionKind::Variable, &[(2, 1.0)]);
        assert!(phi_cross_check(&lambda, 0, ChannelParam::new(0.5).unwrap()).is_err());
    }

    #[test]
    fn pi_transform_hand_expansion() {
        // p = x − x², q = 2: Π = x²(1 + x²) − x⁴ = x².
        let p = DensePolynomial::new(vec![0.0, 1.0, -1.0]);
        let pi = pi_transform(&p);
        assert_eq!(pi.coeffs(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn pi_transform_quadratic_family() {
        // p = x² + bx + 1 ⇒ Π = (2+b)x⁴ + (b+2)x² + 1 for any b.
        for b in [0.3, -1.7, 2.0] {
            let p = DensePolynomial::new(vec![1.0, b, 1.0]);
            let pi = pi_transform(&p);
            assert_eq!(pi.coeff(0), 1.0);
            assert_eq!(pi.coeff(1), 0.0);
            assert!((pi.coeff(2) - (b + 2.0)).abs() < 1e-15);
            assert_eq!(pi.coeff(3), 0.0);
            assert!((pi.coeff(4) - (2.0 + b)).abs() < 1e-15);
        }
    }

    #[test]
    fn pi_transform_constant_and_zero() {
        assert_eq!(pi_transform(&DensePolynomial::constant(1.0)).coeffs(), &[1.0]);
        assert!(pi_transform(&DensePolynomial::zero()).is_zero());
    }

    #[test]
    fn pi_transform_odd_coefficients_exactly_zero() {
        let p = DensePolynomial::new(vec![0.25, -1.5, 0.0, 2.0, -0.75]);
        let pi = pi_transform(&p);
        for l in (1..=pi.degree() as usize).step_by(2) {
            assert_eq!(pi.coeff(l), 0.0);
        }
    }

    #[test]
    fn pi_transform_with_degree_rejects_small_q() {
        let p = DensePolynomial::new(vec![0.0, 1.0, -1.0]);
        assert!(pi_transform_with_degree(&p, 1).is_err());
    }

    #[test]
    fn pi_pointwise_identity_on_grid() {
        let p = DensePolynomial::new(vec![0.1, -0.4, 0.9, -0.2, 0.05]);
        let q = p.degree() as usize;
        let pi = pi_transform(&p);
        for k in 0..=200 {
            let t = -3.0 + 6.0 * k as f64 / 200.0;
            let w = 1.0 + t * t;
            let lhs = pi.eval(t);
            let rhs = w.powi(q as i32) * p.eval(t * t / w);
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!(
                ((lhs - rhs) / scale).abs() <= 1e-12,
                "mismatch at t={t}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn display_format() {
        let p = DensePolynomial::new(vec![1.0, 0.5, -2.0]);
        assert_eq!(p.to_string(), "1 + 0.5·x + -2·x^2");
        assert_eq!(DensePolynomial::zero().to_string(), "0");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn poly(max_degree: usize) -> impl Strategy<Value = DensePolynomial> {
            proptest::collection::vec(-1.0f64..1.0, 1..=max_degree + 1)
                .prop_map(DensePolynomial::new)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// compose distributes over evaluation.
            #[test]
            fn compose_evaluates_pointwise(f in poly(6), g in poly(4), x in -1.0f64..1.0) {
                let composed = f.compose(&g);
                let direct = f.eval(g.eval(x));
                let via = composed.eval(x);
                let tol = 1e-10 * direct.abs().max(1.0);
                prop_assert!((via - direct).abs() <= tol, "{via} vs {direct}");
            }

            /// Π evaluates to (1 + t²)^q p(t²/(1 + t²)) everywhere.
            #[test]
            fn pi_transform_pointwise(p in poly(8), t in -3.0f64..3.0) {
                prop_assume!(!p.is_zero());
                let q = p.degree() as i32;
                let pi = pi_transform(&p);
                let w = 1.0 + t * t;
                let lhs = pi.eval(t);
                let rhs = w.powi(q) * p.eval(t * t / w);
                let scale = lhs.abs().max(rhs.abs()).max(1.0);
                prop_assert!(((lhs - rhs) / scale).abs() <= 1e-9);
            }

            /// p ≥ 0 on [0, 1] exactly when Π ≥ 0 on the line, checked by
            /// dense sampling on low-degree fixtures.
            #[test]
            fn nonnegativity_transfers(p in poly(4)) {
                prop_assume!(!p.is_zero());
                let pi = pi_transform(&p);
                let p_min = (0..=400)
                    .map(|k| p.eval(k as f64 / 400.0))
                    .fold(f64::INFINITY, f64::min);
                let pi_min = (0..=400)
                    .map(|k| pi.eval(-6.0 + 12.0 * k as f64 / 400.0))
                    .fold(f64::INFINITY, f64::min);
                // Strict sign disagreements are the bug; near-zero minima on
                // either side are sampling artifacts.
                if p_min > 1e-6 {
                    prop_assert!(pi_min >= -1e-9, "p min {p_min} but pi min {pi_min}");
                }
                if pi_min > 1e-6 {
                    prop_assert!(p_min >= -1e-9, "pi min {pi_min} but p min {p_min}");
                }
            }

            /// Arithmetic identities under evaluation.
            #[test]
            fn ring_identities(a in poly(6), b in poly(6), x in -2.0f64..2.0) {
                let sum = (&a + &b).eval(x);
                let diff = (&a - &b).eval(x);
                let prod = (&a * &b).eval(x);
                let tol = 1e-10 * (a.eval(x).abs() + b.eval(x).abs()).max(1.0);
                prop_assert!((sum - (a.eval(x) + b.eval(x))).abs() <= tol);
                prop_assert!((diff - (a.eval(x) - b.eval(x))).abs() <= tol);
                let ptol = 1e-9 * (a.eval(x) * b.eval(x)).abs().max(1.0);
                prop_assert!((prod - a.eval(x) * b.eval(x)).abs() <= ptol);
            }
        }
    }
}
