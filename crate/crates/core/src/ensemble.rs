//! Edge-perspective degree distributions and ensemble rate arithmetic.
//!
//! A degree distribution assigns to each node degree d ≥ 2 the fraction of
//! edges attached to degree-d nodes. The induced edge polynomial is
//! Σ_d c_d x^(d−1); its coefficients are probabilities, so they are
//! nonnegative and sum to one.

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Tolerance on the normalization Σ c_d = 1 enforced at construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid degree distribution: {0}")]
    InvalidDistribution(ValidationReport),
    #[error("erasure probability must lie in (0, 1), got {0}")]
    EpsilonOutOfRange(f64),
    #[error("expected a {expected:?} distribution, got {actual:?}")]
    KindMismatch {
        expected: DistributionKind,
        actual: DistributionKind,
    },
    #[error("evaluation point {x} outside [0, {limit}]")]
    PointOutOfRange { x: f64, limit: f64 },
    #[error("cannot parse distribution spec {0:?}")]
    BadSpec(String),
}

/// Which side of the bipartite graph a distribution describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    Variable,
    Check,
}

/// One violated distribution invariant, with the offending degree where
/// applicable.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeFraction { degree: u32, value: f64 },
    FractionAboveOne { degree: u32, value: f64 },
    DegreeBelowTwo { degree: u32 },
    SumNotOne { sum: f64 },
    Empty,
    NonFinite { degree: u32, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeFraction { degree, value } => {
                write!(f, "fraction < 0 at degree {degree} (value {value})")
            }
            Violation::FractionAboveOne { degree, value } => {
                write!(f, "fraction > 1 at degree {degree} (value {value})")
            }
            Violation::DegreeBelowTwo { degree } => write!(f, "degree {degree} < 2"),
            Violation::SumNotOne { sum } => write!(f, "sum = {sum} ≠ 1"),
            Violation::Empty => write!(f, "no degrees present"),
            Violation::NonFinite { degree, value } => {
                write!(f, "non-finite fraction at degree {degree} (value {value})")
            }
        }
    }
}

/// Outcome of [`validate`]: either ok or the list of violated invariants.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return write!(f, "ok");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Checks a candidate coefficient map against the distribution invariants.
///
/// Accepts arbitrary maps and reports every violation rather than failing on
/// the first, so a config error message can name all problems at once.
pub fn validate(coefficients: &BTreeMap<u32, f64>) -> ValidationReport {
    let mut violations = Vec::new();
    if coefficients.is_empty() {
        violations.push(Violation::Empty);
        return ValidationReport { violations };
    }
    let mut sum = 0.0;
    for (&degree, &value) in coefficients {
        if !value.is_finite() {
            violations.push(Violation::NonFinite { degree, value });
            continue;
        }
        if degree < 2 {
            violations.push(Violation::DegreeBelowTwo { degree });
        }
        if value < 0.0 {
            violations.push(Violation::NegativeFraction { degree, value });
        }
        if value > 1.0 {
            violations.push(Violation::FractionAboveOne { degree, value });
        }
        sum += value;
    }
    // Σ c_d is exactly the edge polynomial at x = 1, so one check covers both
    // normalization invariants.
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        violations.push(Violation::SumNotOne { sum });
    }
    ValidationReport { violations }
}

/// Edge-perspective degree distribution: degree d ≥ 2 → fraction of edges.
///
/// Invariants are enforced at construction; every held value satisfies them,
/// so downstream operations never re-validate. Inputs off by more than
/// [`NORMALIZATION_TOL`] are rejected rather than silently renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    kind: DistributionKind,
    coefficients: BTreeMap<u32, f64>,
    max_degree: u32,
}

impl DegreeDistribution {
    pub fn new(
        kind: DistributionKind,
        coefficients: BTreeMap<u32, f64>,
    ) -> Result<Self, EnsembleError> {
        let report = validate(&coefficients);
        if !report.ok() {
            return Err(EnsembleError::InvalidDistribution(report));
        }
        let max_degree = *coefficients.keys().next_back().expect("non-empty");
        Ok(Self {
            kind,
            coefficients,
            max_degree,
        })
    }

    pub fn from_pairs(kind: DistributionKind, pairs: &[(u32, f64)]) -> Result<Self, EnsembleError> {
        Self::new(kind, pairs.iter().copied().collect())
    }

    /// Single-degree (regular) distribution {degree: 1.0}.
    pub fn regular(kind: DistributionKind, degree: u32) -> Result<Self, EnsembleError> {
        Self::from_pairs(kind, &[(degree, 1.0)])
    }

    /// Parses the compact monomial form "x^n", meaning the edge polynomial
    /// x^n, i.e. the single-degree distribution {n+1: 1.0}. The bare form
    /// "x" means x^1. The exponent is the edge-perspective exponent, one
    /// less than the node degree.
    pub fn parse_shorthand(kind: DistributionKind, spec: &str) -> Result<Self, EnsembleError> {
        let s = spec.trim();
        let n: u32 = if s == "x" {
            1
        } else {
            let exp = s
                .strip_prefix("x^")
                .ok_or_else(|| EnsembleError::BadSpec(spec.to_string()))?;
            exp.parse()
                .map_err(|_| EnsembleError::BadSpec(spec.to_string()))?
        };
        if n == 0 {
            return Err(EnsembleError::BadSpec(spec.to_string()));
        }
        Self::regular(kind, n + 1)
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// Iterates (degree, fraction) pairs in ascending degree order.
    pub fn coefficients(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.coefficients.iter().map(|(&d, &c)| (d, c))
    }

    pub fn coefficient(&self, degree: u32) -> f64 {
        self.coefficients.get(&degree).copied().unwrap_or(0.0)
    }

    /// Edge polynomial Σ_d c_d x^(d−1).
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients()
            .map(|(d, c)| c * x.powi((d - 1) as i32))
            .sum()
    }

    /// Derivative of the edge polynomial at x = 1: Σ_d c_d (d−1).
    pub fn derivative_at_one(&self) -> f64 {
        self.coefficients().map(|(d, c)| c * f64::from(d - 1)).sum()
    }

    /// Σ_d c_d / d, the reciprocal of the average node degree. Lies in
    /// (0, 0.5] because degrees start at 2.
    pub fn inverse_average(&self) -> f64 {
        self.coefficients().map(|(d, c)| c / f64::from(d)).sum()
    }

    /// If the distribution is a single monomial x^n (degree n+1 with weight
    /// one, other stored degrees zero-weight), returns n.
    pub fn as_monomial(&self) -> Option<u32> {
        let mut unit = None;
        for (d, c) in self.coefficients() {
            if (c - 1.0).abs() <= NORMALIZATION_TOL {
                unit = Some(d);
            } else if c != 0.0 {
                return None;
            }
        }
        unit.map(|d| d - 1)
    }
}

impl fmt::Display for DegreeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (d, c) in self.coefficients() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if d == 2 {
                write!(f, "{c}*x")?;
            } else {
                write!(f, "{c}*x^{}", d - 1)?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl Serialize for DegreeDistribution {
    /// Serializes as a map of string degree → fraction, e.g.
    /// `{"2": 0.4021, "3": 0.2137, "7": 0.3902}`.
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.coefficients.len()))?;
        for (d, c) in &self.coefficients {
            map.serialize_entry(&d.to_string(), c)?;
        }
        map.end()
    }
}

/// A distribution as it appears in configs: either the degree map or the
/// "x^n" shorthand. Resolved against a kind with [`Self::into_distribution`].
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DistributionSpec {
    Shorthand(String),
    Map(BTreeMap<String, f64>),
}

impl DistributionSpec {
    /// Parses from a command-line string: inline JSON map or "x^n".
    pub fn parse(s: &str) -> Self {
        let t = s.trim();
        if t.starts_with('{') {
            // Split "{"6": 0.48, "7": 0.52}" by hand so core stays free of a
            // JSON dependency; the CLI feeds well-formed JSON through serde.
            let inner = t.trim_start_matches('{').trim_end_matches('}');
            let mut map = BTreeMap::new();
            for part in inner.split(',') {
                if let Some((k, v)) = part.split_once(':') {
                    let key = k.trim().trim_matches('"').to_string();
                    if let Ok(val) = v.trim().parse::<f64>() {
                        map.insert(key, val);
                        continue;
                    }
                }
                return DistributionSpec::Shorthand(s.to_string());
            }
            DistributionSpec::Map(map)
        } else {
            DistributionSpec::Shorthand(t.to_string())
        }
    }

    pub fn into_distribution(
        self,
        kind: DistributionKind,
    ) -> Result<DegreeDistribution, EnsembleError> {
        match self {
            DistributionSpec::Shorthand(s) => DegreeDistribution::parse_shorthand(kind, &s),
            DistributionSpec::Map(m) => {
                let mut coefficients = BTreeMap::new();
                for (k, v) in m {
                    let d: u32 = k
                        .trim()
                        .parse()
                        .map_err(|_| EnsembleError::BadSpec(k.clone()))?;
                    coefficients.insert(d, v);
                }
                DegreeDistribution::new(kind, coefficients)
            }
        }
    }
}

/// Erasure probability ε of the channel, constrained to the open interval
/// (0, 1). Capacity is 1 − ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ChannelParam {
    epsilon: f64,
}

impl ChannelParam {
    pub fn new(epsilon: f64) -> Result<Self, EnsembleError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(EnsembleError::EpsilonOutOfRange(epsilon));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn capacity(&self) -> f64 {
        1.0 - self.epsilon
    }
}

pub(crate) fn expect_kinds(
    lambda: &DegreeDistribution,
    rho: &DegreeDistribution,
) -> Result<(), EnsembleError> {
    if lambda.kind() != DistributionKind::Variable {
        return Err(EnsembleError::KindMismatch {
            expected: DistributionKind::Variable,
            actual: lambda.kind(),
        });
    }
    if rho.kind() != DistributionKind::Check {
        return Err(EnsembleError::KindMismatch {
            expected: DistributionKind::Check,
            actual: rho.kind(),
        });
    }
    Ok(())
}

/// Design rate 1 − (Σ ρ_j/j)/(Σ λ_i/i). May be negative for bad pairs; the
/// value is reported as-is, never clamped.
pub fn code_rate(
    lambda: &DegreeDistribution,
    rho: &DegreeDistribution,
) -> Result<f64, EnsembleError> {
    expect_kinds(lambda, rho)?;
    Ok(1.0 - rho.inverse_average() / lambda.inverse_average())
}

/// Returns (capacity, delta) where capacity = 1 − ε and delta = 1 − rate/capacity.
pub fn capacity_and_gap(rate: f64, epsilon: ChannelParam) -> (f64, f64) {
    let capacity = epsilon.capacity();
    (capacity, 1.0 - rate / capacity)
}

/// Pointwise density-evolution margin x/ε − λ(1 − ρ(1 − x)).
///
/// Nonnegative at every x in [0, ε] exactly when the DE success condition
/// holds there. x outside [0, ε] is rejected.
pub fn de_margin(
    lambda: &DegreeDistribution,
    rho: &DegreeDistribution,
    epsilon: ChannelParam,
    x: f64,
) -> Result<f64, EnsembleError> {
    expect_kinds(lambda, rho)?;
    let eps = epsilon.epsilon();
    if !(0.0..=eps).contains(&x) {
        return Err(EnsembleError::PointOutOfRange { x, limit: eps });
    }
    if x == 0.0 {
        // ρ(1) = 1 and λ(0) = 0 identically; evaluating through floats can
        // leave an ulp of normalization roundoff, so pin the exact value.
        return Ok(0.0);
    }
    Ok(x / eps - lambda.eval(1.0 - rho.eval(1.0 - x)))
}

/// A designed ensemble with its rate bookkeeping and verification summary.
///
/// `threshold` is NaN until the density-evolution oracle fills it in via
/// [`Self::with_threshold`]; `certificate_ok` records whether the Gram
/// certificate of the optimizer was accepted.
#[derive(Debug, Clone, Serialize)]
pub struct DesignResult {
    pub lambda: DegreeDistribution,
    pub rho: DegreeDistribution,
    pub epsilon: ChannelParam,
    pub rate: f64,
    pub capacity: f64,
    pub delta: f64,
    pub threshold: f64,
    pub certificate_ok: bool,
}

impl DesignResult {
    pub fn new(
        lambda: DegreeDistribution,
        rho: DegreeDistribution,
        epsilon: ChannelParam,
        certificate_ok: bool,
    ) -> Result<Self, EnsembleError> {
        let rate = code_rate(&lambda, &rho)?;
        let (capacity, delta) = capacity_and_gap(rate, epsilon);
        Ok(Self {
            lambda,
            rho,
            epsilon,
            rate,
            capacity,
            delta,
            threshold: f64::NAN,
            certificate_ok,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}
