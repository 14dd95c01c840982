//! Closed-form W2 between Gaussian measures.

use std::cmp::Ordering;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::measures::{Covariance, GaussianMeasure};

fn check_dims(a: &GaussianMeasure, b: &GaussianMeasure) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Total order on Gaussians used to put each unordered pair in a canonical
/// orientation, so that `W2(a, b)` and `W2(b, a)` are the same floating-point
/// evaluation.
fn canonical_cmp(a: &GaussianMeasure, b: &GaussianMeasure) -> Ordering {
    lexicographic(a.mean(), b.mean()).then_with(|| {
        let (ca, cb) = (a.covariance_matrix(), b.covariance_matrix());
        lexicographic(ca.as_slice(), cb.as_slice())
    })
}

/// Bures-Wasserstein distance
/// `W2^2 = |m_a - m_b|^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2})`.
///
/// Matrix square roots come from symmetric eigendecompositions with
/// eigenvalues clamped at zero, so rank-deficient covariances are fine.
pub fn w2_gaussian(a: &GaussianMeasure, b: &GaussianMeasure) -> Result<f64> {
    check_dims(a, b)?;
    let (a, b) = match canonical_cmp(a, b) {
        Ordering::Equal => return Ok(0.0),
        Ordering::Greater => (b, a),
        Ordering::Less => (a, b),
    };
    if a.is_diag() && b.is_diag() {
        return w2_gaussian_diag(a, b);
    }
    let mean_sq: f64 = a.mean().iter().zip(b.mean()).map(|(x, y)| (x - y) * (x - y)).sum();
    let sa = a.covariance_sqrt();
    let cov_b = b.covariance_matrix();
    let inner = &sa * cov_b * &sa;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let trace = a.covariance_matrix().trace() + b.covariance_matrix().trace() - 2.0 * cross;
    Ok((mean_sq + trace.max(0.0)).sqrt())
}

/// Axis-aligned fast path: `W2^2 = |m_a - m_b|^2 + |s_a - s_b|^2`.
pub fn w2_gaussian_diag(a: &GaussianMeasure, b: &GaussianMeasure) -> Result<f64> {
    check_dims(a, b)?;
    let (sa, sb) = match (a.covariance(), b.covariance()) {
        (Covariance::DiagStd(sa), Covariance::DiagStd(sb)) => (sa, sb),
        _ => {
            return Err(Error::arg(
                "measure",
                "w2_gaussian_diag needs axis-aligned (diag_std) Gaussians",
            ))
        }
    };
    let mean_sq: f64 = a.mean().iter().zip(b.mean()).map(|(x, y)| (x - y) * (x - y)).sum();
    let std_sq: f64 = sa.iter().zip(sb).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((mean_sq + std_sq).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(mean: Vec<f64>, var: f64) -> GaussianMeasure {
        let d = mean.len();
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { var } else { 0.0 }).collect())
            .collect();
        GaussianMeasure::new(mean, cov).unwrap()
    }

    #[test]
    fn equal_covariance_reduces_to_mean_distance() {
        let w = w2_gaussian(&iso(vec![0.0, 0.0], 1.0), &iso(vec![3.0, 4.0], 1.0)).unwrap();
        assert!((w - 5.0).abs() < 1e-12);
    }

    #[test]
    fn identical_measures_are_at_zero() {
        let a = GaussianMeasure::new(vec![1.0, 2.0], vec![vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        assert_eq!(w2_gaussian(&a, &a.clone()).unwrap(), 0.0);
    }

    #[test]
    fn scale_family_matches_per_coordinate_quantile_oracle() {
        // N(0, s1^2) vs N(0, s2^2) on the line has quantile coupling
        // x -> (s2/s1) x, so W2 = |s1 - s2| per coordinate.
        for d in 1..6 {
            let w = w2_gaussian(&iso(vec![0.0; d], 1.0), &iso(vec![0.0; d], 4.0)).unwrap();
            let per_coord = (1.0f64 - 2.0).abs();
            assert!((w - (d as f64 * per_coord * per_coord).sqrt()).abs() < 1e-12);
            assert!((w - (d as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_symmetry() {
        let a = GaussianMeasure::new(vec![0.1, -2.0], vec![vec![2.0, 0.7], vec![0.7, 1.0]]).unwrap();
        let b = GaussianMeasure::new(vec![1.5, 0.0], vec![vec![0.5, -0.2], vec![-0.2, 3.0]]).unwrap();
        assert_eq!(w2_gaussian(&a, &b).unwrap().to_bits(), w2_gaussian(&b, &a).unwrap().to_bits());
    }

    #[test]
    fn diag_examples() {
        let a = GaussianMeasure::diag(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let b = GaussianMeasure::diag(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!((w2_gaussian_diag(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let c = GaussianMeasure::diag(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let fast = w2_gaussian_diag(&a, &c).unwrap();
        assert!((fast - 2f64.sqrt()).abs() < 1e-15);
        let full_a = GaussianMeasure::new(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let full_c = GaussianMeasure::new(vec![0.0, 0.0], vec![vec![4.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert!((w2_gaussian(&full_a, &full_c).unwrap() - fast).abs() < 1e-12);
        assert_eq!(w2_gaussian_diag(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn rank_deficient_covariance() {
        let a = GaussianMeasure::new(vec![0.0, 0.0], vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let b = GaussianMeasure::new(vec![0.0, 0.0], vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        // point mass at 0 vs a degenerate Gaussian: W2^2 = tr(S_a) = 2
        assert!((w2_gaussian(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let a = GaussianMeasure::diag(vec![0.0], vec![1.0]).unwrap();
        let b = GaussianMeasure::diag(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(w2_gaussian(&a, &b), Err(Error::DimensionMismatch { .. })));
    }
}
