//! Stability of the U-statistic when each measure is replaced by an estimate.
//!
//! For an `L`-Lipschitz transform, `|U_hat - U| <= 2 L n^{-1} sum_i W2(mu_hat_i, mu_i)`.
//! [`plugin_check`] computes both sides exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heterogeneity::u_statistic;
use crate::measures::{DiscreteMeasure, Empirical1D, Family, GaussianMeasure, Measure, MeasureCollection};
use crate::numeric::compensated_sum;
use crate::rng::{derive_seed, rng_from_seed};
use crate::transforms::Transform;
use crate::wasserstein::{pairwise_distances, w2, w2_gaussian_empirical_1d, with_workers, W2Options};

pub const DEFAULT_SURROGATE_ATOMS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct PluginOptions {
    pub w2: W2Options,
    /// Atoms per surrogate when Gaussian truth meets sample-based estimates.
    pub surrogate_atoms: usize,
    pub seed: u64,
}

impl Default for PluginOptions {
    fn default() -> Self {
        Self {
            w2: W2Options::default(),
            surrogate_atoms: DEFAULT_SURROGATE_ATOMS,
            seed: 0,
        }
    }
}

/// How Gaussian truth measures were replaced by sample-based surrogates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateInfo {
    pub atoms: usize,
    pub seed: u64,
    /// `W2(surrogate_i, truth_i)`, available exactly on the line only.
    pub conversion_errors: Option<Vec<f64>>,
    /// U-statistic on the Gaussian truth itself.
    pub u_true_gaussian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginReport {
    pub n: usize,
    pub u_true: f64,
    pub u_plugin: f64,
    pub observed_gap: f64,
    pub bound: f64,
    pub per_unit_errors: Vec<f64>,
    pub mean_error: f64,
    pub lipschitz_l: f64,
    pub transform_used: Transform,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub surrogate: Option<SurrogateInfo>,
}

impl PluginReport {
    pub fn within_bound(&self, tol: f64) -> bool {
        self.observed_gap <= self.bound + tol
    }
}

/// `2 L n^{-1} sum errors`.
pub fn plugin_bound(lipschitz: f64, errors: &[f64]) -> f64 {
    2.0 * lipschitz * compensated_sum(errors.iter().copied()) / errors.len() as f64
}

/// Draws the surrogate for one Gaussian truth measure.
fn surrogate(g: &GaussianMeasure, atoms: usize, seed: u64, line: bool) -> Result<(Measure, Option<f64>)> {
    let mut rng = rng_from_seed(seed);
    let points = g.sample(atoms, &mut rng);
    if line {
        let e = Empirical1D::new(points.into_iter().map(|p| p[0]).collect())?;
        let std = g.covariance_matrix()[(0, 0)].max(0.0).sqrt();
        let err = w2_gaussian_empirical_1d(g.mean()[0], std, &e)?;
        Ok((e.into(), Some(err)))
    } else {
        Ok((DiscreteMeasure::uniform(points)?.into(), None))
    }
}

/// Compares the U-statistic on `truth` with the one on `approx`.
///
/// A Gaussian truth paired with sample-based estimates has no exact W2 in
/// general. In that case each truth measure is replaced by a seeded i.i.d.
/// surrogate of `opts.surrogate_atoms` atoms and both sides of the inequality
/// are evaluated on the surrogates; the report carries the surrogate
/// conversion errors (exact on the line) and the Gaussian U-statistic.
/// One-dimensional Gaussian truth against empirical estimates is exact and
/// needs no surrogate.
pub fn plugin_check(
    truth: &MeasureCollection,
    approx: &MeasureCollection,
    t: Transform,
    opts: &PluginOptions,
) -> Result<PluginReport> {
    let lipschitz_l = t.lipschitz().ok_or_else(|| Error::NotLipschitz(t.to_string()))?;
    let n = truth.len();
    if approx.len() != n {
        return Err(Error::InvalidCollection(format!(
            "truth has {n} measures, approximation has {}",
            approx.len()
        )));
    }
    if n < 2 {
        return Err(Error::TooFewMeasures { required: 2, found: n });
    }
    if truth.dimension() != approx.dimension() {
        return Err(Error::DimensionMismatch {
            expected: truth.dimension(),
            found: approx.dimension(),
        });
    }
    let gaussian_truth = matches!(truth.family(), Family::Gaussian | Family::GaussianDiag);
    let gaussian_approx = matches!(approx.family(), Family::Gaussian | Family::GaussianDiag);
    let exact_line = truth.dimension() == 1 && approx.family() == Family::Empirical1D;
    let mut surrogate_info = None;
    let converted;
    let truth_eff = if gaussian_truth && !gaussian_approx && !exact_line {
        if opts.surrogate_atoms == 0 {
            return Err(Error::arg("surrogate_atoms", "must be positive"));
        }
        let line = truth.dimension() == 1;
        let built: Vec<(Measure, Option<f64>)> = with_workers(opts.w2.workers, || {
            truth
                .items()
                .par_iter()
                .enumerate()
                .map(|(i, m)| match m {
                    Measure::Gaussian(g) => surrogate(g, opts.surrogate_atoms, derive_seed(opts.seed, &[i as u64]), line),
                    _ => unreachable!("collection is homogeneous"),
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let errors: Option<Vec<f64>> = built.iter().map(|(_, e)| *e).collect();
        let u_true_gaussian = u_statistic(&pairwise_distances(truth, &opts.w2)?, t)?;
        converted = MeasureCollection::new(built.into_iter().map(|(m, _)| m).collect(), None)?;
        surrogate_info = Some(SurrogateInfo {
            atoms: opts.surrogate_atoms,
            seed: opts.seed,
            conversion_errors: errors,
            u_true_gaussian,
        });
        &converted
    } else {
        truth
    };

    let per_unit_errors: Vec<f64> = with_workers(opts.w2.workers, || {
        approx
            .items()
            .par_iter()
            .zip(truth_eff.items())
            .map(|(a, b)| w2(a, b, &opts.w2))
            .collect::<Result<Vec<f64>>>()
    })??;
    let u_true = u_statistic(&pairwise_distances(truth_eff, &opts.w2)?, t)?;
    let u_plugin = u_statistic(&pairwise_distances(approx, &opts.w2)?, t)?;
    let mean_error = compensated_sum(per_unit_errors.iter().copied()) / n as f64;
    Ok(PluginReport {
        n,
        u_true,
        u_plugin,
        observed_gap: (u_plugin - u_true).abs(),
        bound: plugin_bound(lipschitz_l, &per_unit_errors),
        per_unit_errors,
        mean_error,
        lipschitz_l,
        transform_used: t,
        surrogate: surrogate_info,
    })
}
