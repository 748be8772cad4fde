//! Fidelity metrics.

use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Sentinel PSNR for a zero-MSE comparison; far above any value attainable
/// with finite f64 MSE.
pub const PSNR_SENTINEL_DB: f64 = 1e4;

/// Mean squared error between equal-length vectors.
pub fn mse(a: &Vector, b: &Vector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len().max(1) as f64)
}

/// Relative L2 distance `‖a − b‖ / ‖b‖`.
pub fn rel_l2(a: &Vector, b: &Vector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(a.sub(b)?.norm() / b.norm().max(f64::MIN_POSITIVE))
}

/// Peak signal-to-noise ratio `10·log10(peak²/MSE)` in dB; a zero MSE maps
/// to the sentinel maximum.
pub fn compute_psnr(a: &Vector, b: &Vector, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidConfig(vec![format!("psnr peak must be positive, got {peak}")]));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_SENTINEL_DB);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_hit_the_sentinel() {
        let a = Vector::new(vec![1.0, 2.0]);
        assert_eq!(compute_psnr(&a, &a, 1.0).unwrap(), PSNR_SENTINEL_DB);
    }

    #[test]
    fn psnr_formula() {
        // peak = 1, MSE = 0.01 → 20 dB.
        let a = Vector::new(vec![0.1, 0.1]);
        let b = Vector::new(vec![0.0, 0.0]);
        let psnr = compute_psnr(&a, &b, 1.0).unwrap();
        assert!((psnr - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_errors() {
        let a = Vector::new(vec![0.1]);
        let b = Vector::new(vec![0.0, 0.0]);
        assert!(matches!(compute_psnr(&a, &b, 1.0), Err(Error::DimensionMismatch { .. })));
        assert!(compute_psnr(&a, &a, 0.0).is_err());
    }

    #[test]
    fn rel_l2_basics() {
        let a = Vector::new(vec![1.1, 0.0]);
        let b = Vector::new(vec![1.0, 0.0]);
        let r = rel_l2(&a, &b).unwrap();
        assert!((r - 0.1).abs() < 1e-12);
    }
}
