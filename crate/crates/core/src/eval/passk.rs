//! Unbiased pass@k in exact rational arithmetic.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum PassAtKError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k={k} exceeds n={n}")]
    KAboveN { n: u64, k: u64 },
    #[error("c={c} exceeds n={n}")]
    CAboveN { n: u64, c: u64 },
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    // Each prefix product is itself a binomial, so the division is exact.
    (0..k).fold(BigUint::one(), |acc, i| acc * BigUint::from(n - i) / BigUint::from(i + 1))
}

/// `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k_exact(n: u64, c: u64, k: u64) -> Result<BigRational, PassAtKError> {
    if k == 0 {
        return Err(PassAtKError::ZeroK);
    }
    if k > n {
        return Err(PassAtKError::KAboveN { n, k });
    }
    if c > n {
        return Err(PassAtKError::CAboveN { n, c });
    }
    let miss = BigRational::new(binomial(n - c, k).into(), binomial(n, k).into());
    Ok(BigRational::one() - miss)
}

pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, PassAtKError> {
    pass_at_k_exact(n, c, k).map(|r| to_f64(&r))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn ratio(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn worked_values() {
        assert_eq!(pass_at_k(20, 20, 5).unwrap(), 1.0);
        assert_eq!(pass_at_k_exact(20, 10, 1).unwrap(), ratio(1, 2));
        assert_eq!(pass_at_k_exact(3, 1, 2).unwrap(), ratio(2, 3));
        assert_eq!(pass_at_k_exact(5, 0, 3).unwrap(), ratio(0, 1));
    }

    #[test]
    fn domain_errors() {
        assert_eq!(pass_at_k(5, 1, 0), Err(PassAtKError::ZeroK));
        assert_eq!(pass_at_k(5, 1, 6), Err(PassAtKError::KAboveN { n: 5, k: 6 }));
        assert_eq!(pass_at_k(5, 6, 1), Err(PassAtKError::CAboveN { n: 5, c: 6 }));
    }

    #[test]
    fn large_n_does_not_overflow() {
        assert_eq!(binomial(200, 100).to_string(), "90548514656103281165404177077484163874504589675413336841320");
        let p = pass_at_k(200, 1, 100).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }
}
