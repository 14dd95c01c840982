//! Exact quadratic Wasserstein distances within each supported family.

mod gaussian;
mod matrix;
pub mod oracle;
mod quantile;
pub mod simplex;

pub use gaussian::{w2_gaussian, w2_gaussian_diag};
pub use matrix::{DistanceMatrix, DistanceSource, SYMMETRY_REL_TOL, ZERO_DIAG_TOL};
pub use oracle::w2_discrete_oracle;
pub use quantile::{w2_empirical_1d, w2_gaussian_empirical_1d, w2_weighted_1d};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, Measure, MeasureCollection};

/// Default cap on `k1 * k2` for the exact discrete solver.
pub const DEFAULT_DISCRETE_CAP: usize = 4_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct W2Options {
    /// Worker threads for pairwise evaluation. `None` runs on the current
    /// rayon pool, `Some(1)` runs sequentially.
    pub workers: Option<usize>,
    /// Maximum number of cost-matrix entries for the exact discrete solver.
    pub discrete_cap: usize,
}

impl Default for W2Options {
    fn default() -> Self {
        Self {
            workers: None,
            discrete_cap: DEFAULT_DISCRETE_CAP,
        }
    }
}

impl W2Options {
    pub fn sequential() -> Self {
        Self {
            workers: Some(1),
            ..Self::default()
        }
    }
}

/// Optimal coupling with the dual potentials that certify it.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// `rows x cols`, row-major.
    pub plan: Vec<f64>,
    /// Squared-distance objective `<plan, C>`.
    pub cost: f64,
    pub certificate: DualCertificate,
}

#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
    /// `max(0, u_i + v_j - c_ij)` over all cells.
    pub max_dual_violation: f64,
    /// `|c_ij - u_i - v_j|` over cells carrying mass.
    pub max_slackness_gap: f64,
    pub dual_objective: f64,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }
}

fn squared_euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn squared_cost_matrix(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Vec<f64> {
    let mut cost = Vec::with_capacity(a.len() * b.len());
    for x in a.atoms() {
        for y in b.atoms() {
            cost.push(squared_euclidean(x, y));
        }
    }
    cost
}

/// Exact W2 between discrete measures with an optimal plan and dual certificate.
pub fn w2_discrete_exact(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cap: usize,
) -> Result<(f64, TransportPlan)> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let entries = a.len() * b.len();
    if entries > cap {
        return Err(Error::CapExceeded { entries, cap });
    }
    let cost = squared_cost_matrix(a, b);
    let sol = simplex::solve_transport(a.weights(), b.weights(), &cost)?;
    let mut max_dual_violation = 0.0f64;
    let mut max_slackness_gap = 0.0f64;
    for i in 0..sol.rows {
        for j in 0..sol.cols {
            let k = i * sol.cols + j;
            let reduced = cost[k] - sol.row_potentials[i] - sol.col_potentials[j];
            max_dual_violation = max_dual_violation.max(-reduced);
            if sol.plan[k] > 0.0 {
                max_slackness_gap = max_slackness_gap.max(reduced.abs());
            }
        }
    }
    let dual_objective = crate::numeric::compensated_sum(
        a.weights()
            .iter()
            .zip(&sol.row_potentials)
            .chain(b.weights().iter().zip(&sol.col_potentials))
            .map(|(w, p)| w * p),
    );
    let w = sol.objective.max(0.0).sqrt();
    Ok((
        w,
        TransportPlan {
            rows: sol.rows,
            cols: sol.cols,
            plan: sol.plan,
            cost: sol.objective,
            certificate: DualCertificate {
                row_potentials: sol.row_potentials,
                col_potentials: sol.col_potentials,
                max_dual_violation,
                max_slackness_gap,
                dual_objective,
            },
        },
    ))
}

fn discrete_1d(m: &DiscreteMeasure) -> Vec<f64> {
    m.atoms().map(|a| a[0]).collect()
}

/// W2 between two measures of compatible families.
///
/// Gaussians use the Bures formula (axis-aligned pairs take the fast path),
/// measures on the line use the quantile coupling, and discrete measures in
/// higher dimension use the exact network simplex.
pub fn w2(a: &Measure, b: &Measure, opts: &W2Options) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    match (a, b) {
        (Measure::Gaussian(x), Measure::Gaussian(y)) => w2_gaussian(x, y),
        (Measure::Empirical1D(x), Measure::Empirical1D(y)) => w2_empirical_1d(x, y),
        (Measure::Discrete(x), Measure::Discrete(y)) if x.dim() == 1 => {
            w2_weighted_1d(&discrete_1d(x), x.weights(), &discrete_1d(y), y.weights())
        }
        (Measure::Discrete(x), Measure::Discrete(y)) => {
            w2_discrete_exact(x, y, opts.discrete_cap).map(|(w, _)| w)
        }
        (Measure::Empirical1D(e), Measure::Discrete(d)) | (Measure::Discrete(d), Measure::Empirical1D(e)) => {
            let k = e.len();
            w2_weighted_1d(e.samples(), &vec![1.0 / k as f64; k], &discrete_1d(d), d.weights())
        }
        (Measure::Gaussian(g), Measure::Empirical1D(e)) | (Measure::Empirical1D(e), Measure::Gaussian(g)) => {
            let std = g.covariance_matrix()[(0, 0)].max(0.0).sqrt();
            w2_gaussian_empirical_1d(g.mean()[0], std, e)
        }
        _ => Err(Error::CrossFamily {
            left: a.family().to_string(),
            right: b.family().to_string(),
        }),
    }
}

/// Runs `f` on a pool of `workers` threads (or the current pool for `None`).
pub(crate) fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// All pairwise W2 distances of a collection. Each unordered pair is
/// evaluated exactly once; the result does not depend on the worker count.
pub fn pairwise_distances(c: &MeasureCollection, opts: &W2Options) -> Result<DistanceMatrix> {
    let n = c.len();
    let items = c.items();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let eval = |&(i, j): &(usize, usize)| w2(&items[i], &items[j], opts);
    let values: Vec<f64> = if opts.workers == Some(1) {
        pairs.iter().map(eval).collect::<Result<_>>()?
    } else {
        with_workers(opts.workers, || pairs.par_iter().map(eval).collect::<Result<Vec<f64>>>())??
    };
    let mut m = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[i * n + j] = v;
        m[j * n + i] = v;
    }
    Ok(DistanceMatrix::from_computed(
        n,
        m,
        c.family(),
        c.labels().map(|l| l.to_vec()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{Empirical1D, GaussianMeasure};

    #[test]
    fn point_masses_exact() {
        let a = DiscreteMeasure::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
        let b = DiscreteMeasure::new(vec![vec![3.0, 4.0]], vec![1.0]).unwrap();
        let (w, plan) = w2_discrete_exact(&a, &b, DEFAULT_DISCRETE_CAP).unwrap();
        assert_eq!(w, 5.0);
        assert_eq!(plan.plan, vec![1.0]);
    }

    #[test]
    fn identical_uniform_measures() {
        let a = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let (w, _) = w2_discrete_exact(&a, &a, DEFAULT_DISCRETE_CAP).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn two_atom_example() {
        let a = DiscreteMeasure::new(vec![vec![0.0], vec![2.0]], vec![0.5, 0.5]).unwrap();
        let b = DiscreteMeasure::new(vec![vec![0.0], vec![2.0]], vec![0.25, 0.75]).unwrap();
        let (w, plan) = w2_discrete_exact(&a, &b, DEFAULT_DISCRETE_CAP).unwrap();
        assert!((w - 1.0).abs() < 1e-15);
        assert!((plan.get(0, 1) - 0.25).abs() < 1e-15);
        assert!(plan.certificate.max_slackness_gap < 1e-8);
        assert!(plan.certificate.max_dual_violation < 1e-8);
    }

    #[test]
    fn cap_and_dimension_errors() {
        let a = DiscreteMeasure::uniform((0..10).map(|i| vec![i as f64, 0.0]).collect()).unwrap();
        assert!(matches!(w2_discrete_exact(&a, &a, 99), Err(Error::CapExceeded { entries: 100, cap: 99 })));
        let b = DiscreteMeasure::new(vec![vec![0.0]], vec![1.0]).unwrap();
        assert!(matches!(w2_discrete_exact(&a, &b, 1000), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn cross_family_is_rejected() {
        let g: Measure = GaussianMeasure::diag(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap().into();
        let d: Measure = DiscreteMeasure::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap().into();
        assert!(matches!(w2(&g, &d, &W2Options::default()), Err(Error::CrossFamily { .. })));
    }

    #[test]
    fn pairwise_small_cases() {
        let e: Measure = Empirical1D::new(vec![0.0, 1.0]).unwrap().into();
        let one = MeasureCollection::new(vec![e.clone()], None).unwrap();
        let d = pairwise_distances(&one, &W2Options::default()).unwrap();
        assert_eq!(d.n(), 1);
        assert_eq!(d.get(0, 0), 0.0);
        let same = MeasureCollection::new(vec![e.clone(), e.clone(), e], None).unwrap();
        let d = pairwise_distances(&same, &W2Options::default()).unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
    }
}
