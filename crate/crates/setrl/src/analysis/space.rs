//! Exact search-space accounting for exchangeable observations.
//!
//! An observation holds m objects, each taking one of n values. Read as
//! an ordered tuple there are n!/(n−m)! distinct observations; collapsed
//! under within-class exchangeability only the n!/(m!(n−m)!) value
//! multisets remain. The quotient is exactly m!, which factorials
//! overflow in 64 bits past m=20, so everything here is big-integer.

use num_bigint::BigUint;
use num_traits::One;

use super::AnalysisError;

/// Exact sizes of the ordered and exchangeable observation spaces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpaceSizeReport {
    /// Distinct values one object can take.
    pub n: u64,
    /// Objects per observation.
    pub m: u64,
    /// Ordered observations: n!/(n−m)!.
    pub ordered_size: BigUint,
    /// Observations up to within-class permutation: n!/(m!(n−m)!).
    pub invariant_size: BigUint,
    /// ordered_size / invariant_size = m!.
    pub reduction: BigUint,
}

fn factorial(k: u64) -> BigUint {
    let mut acc = BigUint::one();
    for i in 2..=k {
        acc *= i;
    }
    acc
}

/// m! exactly, the factor by which an invariant encoder shrinks the
/// observation space.
pub fn reduction_factor(m: u64) -> Result<BigUint, AnalysisError> {
    if m < 1 {
        return Err(AnalysisError::Domain(
            "reduction factor needs at least one object".into(),
        ));
    }
    Ok(factorial(m))
}

/// Evaluates both space sizes exactly for m objects over n values.
pub fn space_sizes(n: u64, m: u64) -> Result<SpaceSizeReport, AnalysisError> {
    if m < 1 || m > n {
        return Err(AnalysisError::Domain(format!(
            "need 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    // n!/(n-m)! as the falling product n·(n−1)···(n−m+1).
    let mut ordered = BigUint::one();
    for v in (n - m + 1)..=n {
        ordered *= v;
    }
    let reduction = factorial(m);
    let invariant = &ordered / &reduction;
    Ok(SpaceSizeReport {
        n,
        m,
        ordered_size: ordered,
        invariant_size: invariant,
        reduction,
    })
}
