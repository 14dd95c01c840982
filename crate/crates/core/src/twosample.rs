//! Comparison of heterogeneity between two independent samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heterogeneity::{estimate_with, EstimateOptions, HeterogeneityReport};
use crate::normal;
use crate::transforms::{Transform, TransformSpec};
use crate::wasserstein::DistanceMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleReport {
    pub n_a: usize,
    pub n_b: usize,
    pub u_a: f64,
    pub u_b: f64,
    pub sigma2_a: f64,
    pub sigma2_b: f64,
    /// `u_a - u_b`.
    pub delta_hat: f64,
    pub delta0: f64,
    /// `sqrt(sigma2_a / n_a + sigma2_b / n_b)`.
    pub se_pooled: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_level: f64,
    pub ci: (f64, f64),
    pub transform_used: Transform,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

/// Wald test of `H0: D_A - D_B = delta0` with a Wald interval for the
/// difference. `bounded:auto` is calibrated once on the pooled distances of
/// both groups so that the two U-statistics share the same transform.
pub fn compare(
    d_a: &DistanceMatrix,
    d_b: &DistanceMatrix,
    t: impl Into<TransformSpec>,
    delta0: f64,
    level: f64,
) -> Result<TwoSampleReport> {
    for d in [d_a, d_b] {
        if d.n() < 2 {
            return Err(Error::TooFewMeasures {
                required: 2,
                found: d.n(),
            });
        }
    }
    if !delta0.is_finite() {
        return Err(Error::arg("delta0", "must be finite"));
    }
    let t = t.into().resolve(&[d_a, d_b])?;
    let opts = EstimateOptions {
        level,
        ..EstimateOptions::default()
    };
    let (a, b) = rayon::join(|| estimate_with(d_a, t, &opts), || estimate_with(d_b, t, &opts));
    combine(&a?, &b?, delta0, level)
}

/// Combines two within-group reports that used the same transform.
pub fn combine(
    a: &HeterogeneityReport,
    b: &HeterogeneityReport,
    delta0: f64,
    level: f64,
) -> Result<TwoSampleReport> {
    if a.transform_used != b.transform_used {
        return Err(Error::arg(
            "transform",
            format!("groups used different transforms ({} vs {})", a.transform_used, b.transform_used),
        ));
    }
    let var = a.sigma2_hat / a.n as f64 + b.sigma2_hat / b.n as f64;
    if !(var > 0.0) {
        return Err(Error::DegenerateKernel {
            context: "both groups have zero estimated projection variance".into(),
        });
    }
    let mut warnings = Vec::new();
    for (name, r) in [("A", a), ("B", b)] {
        if r.sigma2_hat == 0.0 {
            warnings.push(format!(
                "group {name} has zero estimated projection variance; the normal approximation \
                 rests on the other group alone (see the degeneracy diagnostic)"
            ));
        }
    }
    let se_pooled = var.sqrt();
    let delta_hat = a.u_stat - b.u_stat;
    let z = (delta_hat - delta0) / se_pooled;
    let crit = normal::two_sided_critical(level)?;
    Ok(TwoSampleReport {
        n_a: a.n,
        n_b: b.n,
        u_a: a.u_stat,
        u_b: b.u_stat,
        sigma2_a: a.sigma2_hat,
        sigma2_b: b.sigma2_hat,
        delta_hat,
        delta0,
        se_pooled,
        z,
        p_value: normal::two_sided_p(z),
        ci_level: level,
        ci: (delta_hat - crit * se_pooled, delta_hat + crit * se_pooled),
        transform_used: a.transform_used,
        warnings,
    })
}
