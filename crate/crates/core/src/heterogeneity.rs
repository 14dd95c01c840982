//! One-sample inference on a distance matrix: the pairwise U-statistic, the
//! empirical eccentricities, the variance estimate and the Wald interval,
//! plus the degeneracy and moment diagnostics.
//!
//! Kernel values `psi(d_ij)` are evaluated on the fly from the distance
//! matrix. Row sums are computed per row (possibly in parallel) and every
//! reduction runs in a fixed order, so results do not depend on the number
//! of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::MeasureCollection;
use crate::normal;
use crate::numeric::CompensatedSum;
use crate::transforms::Transform;
use crate::wasserstein::{w2, DistanceMatrix, W2Options};

pub const DEFAULT_LEVEL: f64 = 0.95;

/// Default cut-off on `sigma2_hat / var(h)` below which a sample is flagged
/// as first-order degenerate: `2 / sqrt(n)`.
///
/// Under degeneracy the ratio is `O_p(1/n)`, otherwise it stays bounded away
/// from zero, so a cut-off shrinking like `n^{-1/2}` separates the two.
pub fn default_degeneracy_threshold(n: usize) -> f64 {
    2.0 / (n as f64).sqrt()
}

fn require_n(d: &DistanceMatrix, required: usize) -> Result<()> {
    if d.n() < required {
        return Err(Error::TooFewMeasures {
            required,
            found: d.n(),
        });
    }
    Ok(())
}

fn pairs(n: usize) -> f64 {
    n as f64 * (n as f64 - 1.0) / 2.0
}

/// `(n choose 2)^{-1} sum_{i<j} psi(d_ij)`, summed row-major over the upper triangle.
pub fn u_statistic(d: &DistanceMatrix, t: Transform) -> Result<f64> {
    require_n(d, 2)?;
    let s: CompensatedSum = d.upper_triangle().map(|x| t.eval(x)).collect();
    Ok(s.value() / pairs(d.n()))
}

/// `sum_{j != i} psi(d_ij)` for every `i`.
fn row_sums(d: &DistanceMatrix, t: Transform) -> Vec<f64> {
    let n = d.n();
    (0..n)
        .into_par_iter()
        .map(|i| {
            d.row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &x)| t.eval(x))
                .collect::<CompensatedSum>()
                .value()
        })
        .collect()
}

fn eccentricities_from(rows: &[f64], u: f64) -> Vec<f64> {
    let m = rows.len() as f64 - 1.0;
    rows.iter().map(|r| r / m - u).collect()
}

/// `g_i = (n-1)^{-1} sum_{j != i} psi(d_ij) - U_n`.
pub fn eccentricities(d: &DistanceMatrix, t: Transform) -> Result<Vec<f64>> {
    let u = u_statistic(d, t)?;
    Ok(eccentricities_from(&row_sums(d, t), u))
}

/// `4 (n-1)^{-1} sum g_i^2`.
pub fn variance_hat(g: &[f64]) -> Result<f64> {
    if g.len() < 2 {
        return Err(Error::TooFewMeasures {
            required: 2,
            found: g.len(),
        });
    }
    let s: CompensatedSum = g.iter().map(|x| x * x).collect();
    Ok(4.0 * s.value() / (g.len() as f64 - 1.0))
}

/// Symmetric Wald interval `estimate -/+ z_{(1+level)/2} * std_error`.
pub fn confidence_interval(estimate: f64, std_error: f64, level: f64) -> Result<(f64, f64)> {
    if !(std_error >= 0.0) {
        return Err(Error::arg("std_error", format!("must be >= 0, got {std_error}")));
    }
    let z = normal::two_sided_critical(level)?;
    Ok((estimate - z * std_error, estimate + z * std_error))
}

/// Materialized kernel values `psi(d_ij)` for `i < j`, row-major.
pub fn kernel_values(d: &DistanceMatrix, t: Transform) -> Vec<f64> {
    d.upper_triangle().map(|x| t.eval(x)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyDiagnostic {
    /// `sigma2_hat / var(h)`; `None` when every kernel value is equal.
    pub ratio: Option<f64>,
    pub flagged: bool,
    pub threshold: f64,
    pub sigma2_hat: f64,
    /// Sample variance (divisor `m - 1`) of the `m = n(n-1)/2` kernel values.
    pub kernel_variance: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Compares the projection variance estimate with the pair-level kernel
/// variance. Flags when the ratio falls below `threshold` (default
/// [`default_degeneracy_threshold`]) while the kernel still varies, or when
/// all kernel values coincide.
pub fn degeneracy_diagnostic(
    d: &DistanceMatrix,
    t: Transform,
    threshold: Option<f64>,
) -> Result<DegeneracyDiagnostic> {
    require_n(d, 4)?;
    let threshold = threshold.unwrap_or_else(|| default_degeneracy_threshold(d.n()));
    if !(threshold > 0.0) {
        return Err(Error::arg("threshold", format!("must be positive, got {threshold}")));
    }
    let g = eccentricities(d, t)?;
    let sigma2_hat = variance_hat(&g)?;
    Ok(diagnose(d, t, sigma2_hat, threshold))
}

fn diagnose(d: &DistanceMatrix, t: Transform, sigma2_hat: f64, threshold: f64) -> DegeneracyDiagnostic {
    let m = pairs(d.n());
    let mean = d.upper_triangle().map(|x| t.eval(x)).collect::<CompensatedSum>().value() / m;
    let ss: CompensatedSum = d
        .upper_triangle()
        .map(|x| {
            let e = t.eval(x) - mean;
            e * e
        })
        .collect();
    let kernel_variance = if m > 1.0 { ss.value() / (m - 1.0) } else { 0.0 };
    if kernel_variance > 0.0 {
        let ratio = sigma2_hat / kernel_variance;
        DegeneracyDiagnostic {
            ratio: Some(ratio),
            flagged: ratio < threshold,
            threshold,
            sigma2_hat,
            kernel_variance,
            note: None,
        }
    } else {
        DegeneracyDiagnostic {
            ratio: None,
            flagged: true,
            threshold,
            sigma2_hat,
            kernel_variance,
            note: Some("all kernel values are equal (zero kernel variance); the ratio is undefined".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityReport {
    pub n: usize,
    pub u_stat: f64,
    pub eccentricities: Vec<f64>,
    pub sigma2_hat: f64,
    pub std_error: f64,
    pub ci_level: f64,
    pub ci: (f64, f64),
    /// Set when `sigma2_hat` is zero or the degeneracy diagnostic fires.
    pub degeneracy_flag: bool,
    /// Degeneracy diagnostic; absent for `n < 4`.
    pub degeneracy: Option<DegeneracyDiagnostic>,
    pub transform_used: Transform,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl HeterogeneityReport {
    pub fn sigma_hat(&self) -> f64 {
        self.sigma2_hat.sqrt()
    }

    /// Wald test of `H0: D = d0` with two-sided normal p-value.
    pub fn one_sample_test(&self, d0: f64) -> Result<TestResult> {
        one_sample_test(self, d0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub level: f64,
    /// Overrides [`default_degeneracy_threshold`].
    pub degeneracy_threshold: Option<f64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            level: DEFAULT_LEVEL,
            degeneracy_threshold: None,
        }
    }
}

/// Full one-sample analysis of a distance matrix at the given level.
pub fn estimate(d: &DistanceMatrix, t: Transform, level: f64) -> Result<HeterogeneityReport> {
    estimate_with(
        d,
        t,
        &EstimateOptions {
            level,
            ..EstimateOptions::default()
        },
    )
}

pub fn estimate_with(d: &DistanceMatrix, t: Transform, opts: &EstimateOptions) -> Result<HeterogeneityReport> {
    require_n(d, 2)?;
    // fail on a bad level before doing any work
    normal::two_sided_critical(opts.level)?;
    let n = d.n();
    let u = u_statistic(d, t)?;
    let g = eccentricities_from(&row_sums(d, t), u);
    let sigma2_hat = variance_hat(&g)?;
    let std_error = (sigma2_hat / n as f64).sqrt();
    let ci = confidence_interval(u, std_error, opts.level)?;
    let degeneracy = if n >= 4 {
        let threshold = opts.degeneracy_threshold.unwrap_or_else(|| default_degeneracy_threshold(n));
        Some(diagnose(d, t, sigma2_hat, threshold))
    } else {
        None
    };
    let mut warnings = Vec::new();
    if sigma2_hat == 0.0 {
        warnings.push(
            "estimated projection variance is zero: the interval collapses to a point and tests are unavailable"
                .to_string(),
        );
    } else if degeneracy.as_ref().is_some_and(|x| x.flagged) {
        warnings.push(
            "degeneracy diagnostic fired: projection variance is small relative to kernel variance, \
             the normal approximation may be unreliable"
                .to_string(),
        );
    }
    Ok(HeterogeneityReport {
        n,
        u_stat: u,
        eccentricities: g,
        sigma2_hat,
        std_error,
        ci_level: opts.level,
        ci,
        degeneracy_flag: sigma2_hat == 0.0 || degeneracy.as_ref().is_some_and(|x| x.flagged),
        degeneracy,
        transform_used: t,
        labels: d.labels().map(|l| l.to_vec()),
        warnings,
    })
}

/// `z = sqrt(n) (U_n - d0) / sigma_hat` with `p = 2 (1 - Phi(|z|))`.
pub fn one_sample_test(r: &HeterogeneityReport, d0: f64) -> Result<TestResult> {
    if !d0.is_finite() {
        return Err(Error::arg("d0", "must be finite"));
    }
    if !(r.sigma2_hat > 0.0) {
        return Err(Error::DegenerateKernel {
            context: format!("n = {}, U_n = {}", r.n, r.u_stat),
        });
    }
    let z = (r.u_stat - d0) / r.std_error;
    Ok(TestResult {
        z,
        p_value: normal::two_sided_p(z),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDiagnostic {
    pub reference: usize,
    pub p: f64,
    /// Mean of `W2(mu_i, mu_ref)^p` over `i != ref`.
    pub m_p: f64,
    /// Mean of `W2(mu_i, mu_ref)^{2p}` over `i != ref`.
    pub m_2p: f64,
}

/// Sample moments of the distance to a designated member of the sample.
pub fn moment_diagnostic(
    c: &MeasureCollection,
    mu0_index: usize,
    p: f64,
    opts: &W2Options,
) -> Result<MomentDiagnostic> {
    check_moment_args(c.len(), mu0_index, p)?;
    let items = c.items();
    let reference = &items[mu0_index];
    let dist: Vec<f64> = (0..c.len())
        .filter(|&i| i != mu0_index)
        .map(|i| w2(&items[i], reference, opts))
        .collect::<Result<_>>()?;
    Ok(moments(mu0_index, p, &dist))
}

/// Same as [`moment_diagnostic`] read off a precomputed distance matrix.
pub fn moment_diagnostic_from_distances(d: &DistanceMatrix, mu0_index: usize, p: f64) -> Result<MomentDiagnostic> {
    check_moment_args(d.n(), mu0_index, p)?;
    let dist: Vec<f64> = (0..d.n()).filter(|&i| i != mu0_index).map(|i| d.get(i, mu0_index)).collect();
    Ok(moments(mu0_index, p, &dist))
}

fn check_moment_args(n: usize, idx: usize, p: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::TooFewMeasures { required: 2, found: n });
    }
    if idx >= n {
        return Err(Error::arg("mu0_index", format!("{idx} is out of range for n = {n}")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::arg("p", format!("must be >= 1, got {p}")));
    }
    Ok(())
}

fn moments(reference: usize, p: f64, dist: &[f64]) -> MomentDiagnostic {
    let k = dist.len() as f64;
    let m_p = dist.iter().map(|x| x.powf(p)).collect::<CompensatedSum>().value() / k;
    let m_2p = dist.iter().map(|x| x.powf(2.0 * p)).collect::<CompensatedSum>().value() / k;
    MomentDiagnostic { reference, p, m_p, m_2p }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> DistanceMatrix {
        let rows = points
            .iter()
            .map(|x| points.iter().map(|y| (x - y).abs()).collect())
            .collect();
        DistanceMatrix::from_rows(rows, None).unwrap().0
    }

    #[test]
    fn single_pair() {
        let d = line(&[0.0, 3.0]);
        assert_eq!(u_statistic(&d, Transform::power(2.0).unwrap()).unwrap(), 9.0);
        assert_eq!(eccentricities(&d, Transform::identity()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn three_points_on_a_line() {
        let d = line(&[0.0, 0.0, 10.0]);
        let t = Transform::identity();
        let u = u_statistic(&d, t).unwrap();
        assert!((u - 20.0 / 3.0).abs() < 1e-14);
        let g = eccentricities(&d, t).unwrap();
        let expect = [-5.0 / 3.0, -5.0 / 3.0, 10.0 / 3.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((variance_hat(&g).unwrap() - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn too_small() {
        let d = line(&[0.0]);
        assert!(u_statistic(&d, Transform::identity()).is_err());
        assert!(variance_hat(&[1.0]).is_err());
        assert!(degeneracy_diagnostic(&line(&[0.0, 1.0, 2.0]), Transform::identity(), None).is_err());
    }

    #[test]
    fn interval_and_test() {
        let (lo, hi) = confidence_interval(4.939, 0.125, 0.95).unwrap();
        assert!((lo - 4.694).abs() < 1e-3 && (hi - 5.184).abs() < 1e-3);
        assert!(confidence_interval(1.0, 1.0, 1.0).is_err());
        let d = line(&[0.0, 1.0, 3.0, 7.0, 8.0]);
        let r = estimate(&d, Transform::identity(), 0.95).unwrap();
        let t = r.one_sample_test(r.u_stat).unwrap();
        assert_eq!(t.z, 0.0);
        assert_eq!(t.p_value, 1.0);
        assert!(((r.ci.0 + r.ci.1) / 2.0 - r.u_stat).abs() < 1e-12);
    }

    #[test]
    fn equal_distances_collapse() {
        let n = 5;
        let rows = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 2.0 }).collect()).collect();
        let d = DistanceMatrix::from_rows(rows, None).unwrap().0;
        let r = estimate(&d, Transform::identity(), 0.95).unwrap();
        assert!(r.eccentricities.iter().all(|g| *g == 0.0));
        assert_eq!(r.ci, (2.0, 2.0));
        assert!(r.degeneracy_flag);
        let diag = r.degeneracy.as_ref().unwrap();
        assert!(diag.ratio.is_none() && diag.note.is_some());
        assert!(matches!(r.one_sample_test(1.0), Err(Error::DegenerateKernel { .. })));
    }

    #[test]
    fn moments_from_distances() {
        let d = line(&[0.0, 1.0, 2.0]);
        let m = moment_diagnostic_from_distances(&d, 0, 1.0).unwrap();
        assert_eq!((m.m_p, m.m_2p), (1.5, 2.5));
        assert!(moment_diagnostic_from_distances(&d, 3, 1.0).is_err());
    }
}
