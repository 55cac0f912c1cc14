//! Shared unit-test fixtures.

use crate::ensemble::{DegreeDistribution, DistributionKind};

/// The x^5 reference design used across tests. Its raw fractions sum to
/// 1.006, not 1, so they are usable as a distribution only after rescaling;
/// the raw values and their sum are kept so tests can relate results back
/// to the unscaled numbers.
pub const X5_RAW: [(u32, f64); 3] = [(2, 0.4021), (3, 0.2137), (7, 0.3902)];
pub const X5_RAW_SUM: f64 = 0.4021 + 0.2137 + 0.3902;

pub fn table_x5_lambda() -> DegreeDistribution {
    let pairs: Vec<(u32, f64)> = X5_RAW.iter().map(|&(d, c)| (d, c / X5_RAW_SUM)).collect();
    DegreeDistribution::from_pairs(DistributionKind::Variable, &pairs).unwrap()
}
