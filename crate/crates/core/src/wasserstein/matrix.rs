use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Family;

/// Relative tolerance for accepting (and then symmetrizing) an ingested matrix.
pub const SYMMETRY_REL_TOL: f64 = 1e-9;
/// Absolute tolerance on the diagonal of an ingested matrix.
pub const ZERO_DIAG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "family")]
pub enum DistanceSource {
    Computed(Family),
    Ingested,
}

/// Symmetric matrix of pairwise W2 distances (not squared).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    source: DistanceSource,
    labels: Option<Vec<String>>,
}

impl DistanceMatrix {
    pub(crate) fn from_computed(n: usize, values: Vec<f64>, family: Family, labels: Option<Vec<String>>) -> Self {
        Self {
            n,
            values,
            source: DistanceSource::Computed(family),
            labels,
        }
    }

    /// Validates externally supplied distances. Asymmetry within
    /// [`SYMMETRY_REL_TOL`] is averaged away and reported as a warning;
    /// anything worse is an error naming the offending cell.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<(Self, Vec<String>)> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidDistanceMatrix("matrix is empty".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::InvalidDistanceMatrix(format!(
                "row {i} has {} entries, expected {n}",
                rows[i].len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::InvalidDistanceMatrix(format!("{} labels for n = {n}", l.len())));
            }
        }
        let mut warnings = Vec::new();
        let mut values = vec![0.0; n * n];
        let mut worst_asym = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let v = rows[i][j];
                if !v.is_finite() {
                    return Err(Error::InvalidDistanceMatrix(format!("entry ({i}, {j}) is not finite")));
                }
                if v < 0.0 {
                    return Err(Error::InvalidDistanceMatrix(format!("entry ({i}, {j}) = {v} is negative")));
                }
            }
            let d = rows[i][i];
            if d.abs() > ZERO_DIAG_TOL {
                return Err(Error::InvalidDistanceMatrix(format!("diagonal entry ({i}, {i}) = {d} is not zero")));
            }
            for j in (i + 1)..n {
                let (a, b) = (rows[i][j], rows[j][i]);
                let diff = (a - b).abs();
                if diff > SYMMETRY_REL_TOL * a.max(b) {
                    return Err(Error::InvalidDistanceMatrix(format!(
                        "entries ({i}, {j}) = {a} and ({j}, {i}) = {b} differ by {diff} (asymmetry beyond tolerance)"
                    )));
                }
                worst_asym = worst_asym.max(diff);
                let v = if a == b { a } else { 0.5 * (a + b) };
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        if worst_asym > 0.0 {
            warnings.push(format!(
                "matrix was slightly asymmetric (max difference {worst_asym:e}); symmetrized by averaging"
            ));
        }
        Ok((
            Self {
                n,
                values,
                source: DistanceSource::Ingested,
                labels,
            },
            warnings,
        ))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Row-major `n x n` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn source(&self) -> DistanceSource {
        self.source
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    /// Strict upper-triangle entries in row-major order.
    pub fn upper_triangle(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).flat_map(move |i| ((i + 1)..self.n).map(move |j| self.get(i, j)))
    }

    /// Reorders rows and columns: entry `(i, j)` of the result is `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        Self {
            n,
            values,
            source: self.source,
            labels: self.labels.as_ref().map(|l| perm.iter().map(|&p| l[p].clone()).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_valid() {
        let (m, w) = DistanceMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]], None).unwrap();
        assert!(w.is_empty());
        assert_eq!(m.source(), DistanceSource::Ingested);
    }

    #[test]
    fn rejects_gross_asymmetry() {
        let err = DistanceMatrix::from_rows(vec![vec![0.0, 1.0], vec![2.0, 0.0]], None).unwrap_err();
        assert!(err.to_string().contains("differ by 1"));
    }

    #[test]
    fn symmetrizes_tiny_asymmetry() {
        let (m, w) = DistanceMatrix::from_rows(vec![vec![0.0, 1.0000000001], vec![1.0, 0.0]], None).unwrap();
        assert_eq!(w.len(), 1);
        assert!((m.get(0, 1) - 1.00000000005).abs() < 1e-16);
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn rejects_negative_and_diagonal() {
        assert!(DistanceMatrix::from_rows(vec![vec![0.0, -1.0], vec![-1.0, 0.0]], None).is_err());
        assert!(DistanceMatrix::from_rows(vec![vec![1e-6, 1.0], vec![1.0, 0.0]], None).is_err());
        assert!(DistanceMatrix::from_rows(vec![vec![0.0, f64::NAN], vec![f64::NAN, 0.0]], None).is_err());
    }
}
