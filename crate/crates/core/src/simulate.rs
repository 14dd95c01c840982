//! Monte Carlo harness for the large-sample behaviour of the estimator.
//!
//! Seed stream: replication `r` of grid cell `k` uses
//! `derive_seed(spec.seed, [k, r])`. Replications run in parallel and are
//! collected in index order, so results depend only on the spec.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heterogeneity::{estimate_with, EstimateOptions, DEFAULT_LEVEL};
use crate::measures::{Empirical1D, GaussianMeasure, Measure, MeasureCollection};
use crate::models::{ModelSpec, PopulationModel};
use crate::normal;
use crate::numeric::{mean_var, median, skew_kurtosis};
use crate::plugin::{plugin_check, PluginOptions};
use crate::rng::{derive_seed, rng_from_seed};
use crate::transforms::Transform;
use crate::wasserstein::{pairwise_distances, with_workers, W2Options};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Coverage,
    Normality,
    Consistency,
    Degeneracy,
    PluginTrace,
}

fn default_level() -> f64 {
    DEFAULT_LEVEL
}

fn default_m_grid() -> Vec<usize> {
    vec![10, 50, 250, 1250]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub study: Study,
    pub model: ModelSpec,
    pub transform: Transform,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    pub seed: u64,
    /// Inner sample sizes for `plugin_trace`.
    #[serde(default = "default_m_grid")]
    pub m_grid: Vec<usize>,
    /// Overrides the default degeneracy cut-off.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degeneracy_threshold: Option<f64>,
    /// Keep per-replication draws in the result.
    #[serde(default)]
    pub keep_draws: bool,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::arg("replications", "must be at least 1"));
        }
        if self.n_grid.is_empty() {
            return Err(Error::arg("n_grid", "must not be empty"));
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n < 2) {
            return Err(Error::arg("n_grid", format!("sample sizes must be >= 2, found {n}")));
        }
        if self.study == Study::Degeneracy {
            if let Some(n) = self.n_grid.iter().find(|&&n| n < 4) {
                return Err(Error::arg("n_grid", format!("the degeneracy study needs n >= 4, found {n}")));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::arg("level", format!("must lie in (0, 1), got {}", self.level)));
        }
        if self.study == Study::PluginTrace && (self.m_grid.is_empty() || self.m_grid.contains(&0)) {
            return Err(Error::arg("m_grid", "inner sample sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub u: f64,
    pub std_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flagged: Option<bool>,
}

/// Summary of one grid cell. Only the fields relevant to the study are set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_u: Option<f64>,
    /// Monte Carlo standard error of `mean_u`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_u_se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_p_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_z_se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skewness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excess_kurtosis: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_se: Option<f64>,
    /// Variance of `sqrt(n) (U_n - D)` across replications.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_sqrt_n: Option<f64>,
    /// Variance of `n (U_n - D)` across replications.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag_rate_se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_gap_se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_bound_se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violations: Option<usize>,
    /// Replications with zero estimated projection variance (no studentized value).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate_replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<Vec<Draw>>,
}

impl CellSummary {
    pub const CSV_COLUMNS: [&'static str; 28] = [
        "n",
        "m",
        "replications",
        "mean_u",
        "mean_u_se",
        "coverage",
        "coverage_se",
        "ks",
        "ks_p_value",
        "mean_z",
        "mean_z_se",
        "sd_z",
        "skewness",
        "excess_kurtosis",
        "bias",
        "rmse",
        "rmse_se",
        "var_sqrt_n",
        "var_n",
        "flag_rate",
        "flag_rate_se",
        "median_gap",
        "median_bound",
        "mean_gap",
        "mean_gap_se",
        "mean_bound",
        "mean_bound_se",
        "violations",
    ];

    /// Values in [`Self::CSV_COLUMNS`] order; absent fields are empty.
    pub fn csv_values(&self) -> Vec<String> {
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let u = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        vec![
            self.n.to_string(),
            u(self.m),
            self.replications.to_string(),
            f(self.mean_u),
            f(self.mean_u_se),
            f(self.coverage),
            f(self.coverage_se),
            f(self.ks),
            f(self.ks_p_value),
            f(self.mean_z),
            f(self.mean_z_se),
            f(self.sd_z),
            f(self.skewness),
            f(self.excess_kurtosis),
            f(self.bias),
            f(self.rmse),
            f(self.rmse_se),
            f(self.var_sqrt_n),
            f(self.var_n),
            f(self.flag_rate),
            f(self.flag_rate_se),
            f(self.median_gap),
            f(self.median_bound),
            f(self.mean_gap),
            f(self.mean_gap_se),
            f(self.mean_bound),
            f(self.mean_bound_se),
            u(self.violations),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub study: Study,
    pub model: ModelSpec,
    pub transform: Transform,
    pub level: f64,
    pub seed: u64,
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    pub cells: Vec<CellSummary>,
    /// Least-squares slope of `log rmse` on `log n` (consistency study).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_log_slope: Option<f64>,
}

/// Runs the study described by `spec` on `workers` threads (`None` for the
/// current pool).
pub fn run(spec: &SimulationSpec, workers: Option<usize>) -> Result<SimulationResult> {
    spec.validate()?;
    let model = PopulationModel::from_spec(&spec.model)?;
    with_workers(workers, || match spec.study {
        Study::Coverage => run_coverage(spec, &model),
        Study::Normality => run_normality(spec, &model),
        Study::Consistency => run_consistency(spec, &model),
        Study::Degeneracy => run_degeneracy(spec, &model),
        Study::PluginTrace => run_plugin_trace(spec, &model),
    })?
}

fn require_target(spec: &SimulationSpec, model: &PopulationModel) -> Result<f64> {
    model
        .analytic_target(spec.transform)
        .ok_or_else(|| Error::MissingTarget(spec.transform.to_string()))
}

/// One estimate per replication for cell `cell` of size `n`.
fn replicate(spec: &SimulationSpec, model: &PopulationModel, cell: usize, n: usize) -> Result<Vec<Draw>> {
    let w2 = W2Options::sequential();
    let opts = EstimateOptions {
        level: spec.level,
        degeneracy_threshold: spec.degeneracy_threshold,
    };
    (0..spec.replications)
        .into_par_iter()
        .map(|r| {
            let c = model.sample_population(n, derive_seed(spec.seed, &[cell as u64, r as u64]))?;
            let d = pairwise_distances(&c, &w2)?;
            let rep = estimate_with(&d, spec.transform, &opts)?;
            Ok(Draw {
                u: rep.u_stat,
                std_error: rep.std_error,
                flagged: rep.degeneracy.map(|x| x.flagged),
            })
        })
        .collect()
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let (m, v) = mean_var(xs);
    (m, (v / xs.len() as f64).sqrt())
}

fn rate_and_se(hits: usize, total: usize) -> (f64, f64) {
    let p = hits as f64 / total as f64;
    (p, (p * (1.0 - p) / total as f64).sqrt())
}

fn base_cell(spec: &SimulationSpec, n: usize, draws: &[Draw]) -> CellSummary {
    let us: Vec<f64> = draws.iter().map(|d| d.u).collect();
    let (mean_u, mean_u_se) = mean_and_se(&us);
    CellSummary {
        n,
        replications: draws.len(),
        mean_u: Some(mean_u),
        mean_u_se: Some(mean_u_se),
        draws: spec.keep_draws.then(|| draws.to_vec()),
        ..CellSummary::default()
    }
}

/// Studentized statistics `(U - target) / se` of the non-degenerate draws.
fn studentized(draws: &[Draw], target: f64) -> (Vec<f64>, usize) {
    let z: Vec<f64> = draws
        .iter()
        .filter(|d| d.std_error > 0.0)
        .map(|d| (d.u - target) / d.std_error)
        .collect();
    let skipped = draws.len() - z.len();
    (z, skipped)
}

fn fill_normality(cell: &mut CellSummary, z: &[f64]) {
    if z.len() < 2 {
        return;
    }
    let d = normal::ks_statistic(z, normal::cdf);
    let (mz, se) = mean_and_se(z);
    let (_, var) = mean_var(z);
    let (skew, kurt) = skew_kurtosis(z);
    cell.ks = Some(d);
    cell.ks_p_value = Some(normal::ks_p_value(d, z.len()));
    cell.mean_z = Some(mz);
    cell.mean_z_se = Some(se);
    cell.sd_z = Some(var.sqrt());
    cell.skewness = Some(skew);
    cell.excess_kurtosis = Some(kurt);
}

fn result(spec: &SimulationSpec, target: Option<f64>, cells: Vec<CellSummary>) -> SimulationResult {
    SimulationResult {
        study: spec.study,
        model: spec.model.clone(),
        transform: spec.transform,
        level: spec.level,
        seed: spec.seed,
        replications: spec.replications,
        target,
        cells,
        rmse_log_slope: None,
    }
}

/// Fraction of Wald intervals covering the analytic target.
pub fn run_coverage(spec: &SimulationSpec, model: &PopulationModel) -> Result<SimulationResult> {
    let target = require_target(spec, model)?;
    let z = normal::two_sided_critical(spec.level)?;
    let mut cells = Vec::new();
    for (k, &n) in spec.n_grid.iter().enumerate() {
        let draws = replicate(spec, model, k, n)?;
        let hits = draws
            .iter()
            .filter(|d| (d.u - z * d.std_error) <= target && target <= (d.u + z * d.std_error))
            .count();
        let (rate, se) = rate_and_se(hits, draws.len());
        let mut cell = base_cell(spec, n, &draws);
        cell.coverage = Some(rate);
        cell.coverage_se = Some(se);
        cell.degenerate_replications = Some(draws.iter().filter(|d| d.std_error == 0.0).count());
        cells.push(cell);
    }
    Ok(result(spec, Some(target), cells))
}

/// Distance of the studentized replicates to the standard normal.
pub fn run_normality(spec: &SimulationSpec, model: &PopulationModel) -> Result<SimulationResult> {
    if model.is_degenerate(spec.transform) {
        return Err(Error::UnsupportedModel(
            "the population projection variance is zero for this model, so the normal limit does \
             not apply; use the degeneracy study"
                .into(),
        ));
    }
    let target = require_target(spec, model)?;
    let mut cells = Vec::new();
    for (k, &n) in spec.n_grid.iter().enumerate() {
        let draws = replicate(spec, model, k, n)?;
        let (z, skipped) = studentized(&draws, target);
        let mut cell = base_cell(spec, n, &draws);
        fill_normality(&mut cell, &z);
        cell.degenerate_replications = Some(skipped);
        cells.push(cell);
    }
    Ok(result(spec, Some(target), cells))
}

/// Root mean squared error of `U_n` about the target along the grid.
pub fn run_consistency(spec: &SimulationSpec, model: &PopulationModel) -> Result<SimulationResult> {
    let target = require_target(spec, model)?;
    let mut cells = Vec::new();
    for (k, &n) in spec.n_grid.iter().enumerate() {
        let draws = replicate(spec, model, k, n)?;
        let sq: Vec<f64> = draws.iter().map(|d| (d.u - target).powi(2)).collect();
        let (mse, mse_se) = mean_and_se(&sq);
        let rmse = mse.sqrt();
        let mut cell = base_cell(spec, n, &draws);
        cell.bias = cell.mean_u.map(|m| m - target);
        cell.rmse = Some(rmse);
        cell.rmse_se = Some(if rmse > 0.0 { mse_se / (2.0 * rmse) } else { 0.0 });
        cells.push(cell);
    }
    let pts: Vec<(f64, f64)> = cells
        .iter()
        .filter_map(|c| c.rmse.filter(|r| *r > 0.0).map(|r| ((c.n as f64).ln(), r.ln())))
        .collect();
    let mut res = result(spec, Some(target), cells);
    if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            res.rmse_log_slope = Some(sxy / sxx);
        }
    }
    Ok(res)
}

/// Behaviour of `U_n` for two-point populations: spread on the `sqrt(n)`
/// and `n` scales and the rate at which the diagnostic fires.
pub fn run_degeneracy(spec: &SimulationSpec, model: &PopulationModel) -> Result<SimulationResult> {
    if !matches!(model, PopulationModel::TwoPoint(_)) {
        return Err(Error::UnsupportedModel(format!(
            "the degeneracy study needs a two_point model, got {}",
            model.kind()
        )));
    }
    let target = require_target(spec, model)?;
    let mut cells = Vec::new();
    for (k, &n) in spec.n_grid.iter().enumerate() {
        let draws = replicate(spec, model, k, n)?;
        let nf = n as f64;
        let root: Vec<f64> = draws.iter().map(|d| nf.sqrt() * (d.u - target)).collect();
        let full: Vec<f64> = draws.iter().map(|d| nf * (d.u - target)).collect();
        let flags = draws.iter().filter(|d| d.flagged == Some(true)).count();
        let (rate, se) = rate_and_se(flags, draws.len());
        let (z, skipped) = studentized(&draws, target);
        let mut cell = base_cell(spec, n, &draws);
        cell.var_sqrt_n = Some(mean_var(&root).1);
        cell.var_n = Some(mean_var(&full).1);
        cell.flag_rate = Some(rate);
        cell.flag_rate_se = Some(se);
        fill_normality(&mut cell, &z);
        cell.degenerate_replications = Some(skipped);
        cells.push(cell);
    }
    Ok(result(spec, Some(target), cells))
}

/// First-coordinate marginal of a Gaussian measure.
fn marginal(m: &Measure) -> Result<GaussianMeasure> {
    match m {
        Measure::Gaussian(g) => {
            let sd = g.covariance_matrix()[(0, 0)].max(0.0).sqrt();
            GaussianMeasure::diag(vec![g.mean()[0]], vec![sd])
        }
        other => Err(Error::UnsupportedModel(format!(
            "the plug-in trace needs Gaussian measures, got {}",
            other.family()
        ))),
    }
}

/// Gap and bound of the plug-in inequality against the inner sample size.
///
/// Each replication draws a fresh collection, reduces every measure to its
/// first-coordinate marginal and replaces it by the empirical measure of
/// `m` i.i.d. draws. Both sides of the inequality are then exact: on the
/// line W2 between a Gaussian and an empirical measure has a closed form.
pub fn run_plugin_trace(spec: &SimulationSpec, model: &PopulationModel) -> Result<SimulationResult> {
    if spec.transform.lipschitz().is_none() {
        return Err(Error::NotLipschitz(spec.transform.to_string()));
    }
    let opts = PluginOptions {
        w2: W2Options::sequential(),
        ..PluginOptions::default()
    };
    let mut cells = Vec::new();
    for (k, &n) in spec.n_grid.iter().enumerate() {
        // rows: replication, columns: m
        let runs: Vec<Vec<(f64, f64)>> = (0..spec.replications)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(spec.seed, &[k as u64, r as u64]);
                let c = model.sample_population(n, seed)?;
                let truth: Vec<GaussianMeasure> = c.items().iter().map(marginal).collect::<Result<_>>()?;
                let truth_c = MeasureCollection::new(truth.iter().cloned().map(Measure::from).collect(), None)?;
                spec.m_grid
                    .iter()
                    .map(|&m| {
                        let approx = truth
                            .iter()
                            .enumerate()
                            .map(|(i, g)| {
                                let mut rng = rng_from_seed(derive_seed(seed, &[m as u64, i as u64]));
                                let xs = g.sample(m, &mut rng).into_iter().map(|p| p[0]).collect();
                                Empirical1D::new(xs).map(Measure::from)
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let approx = MeasureCollection::new(approx, None)?;
                        let rep = plugin_check(&truth_c, &approx, spec.transform, &opts)?;
                        Ok((rep.observed_gap, rep.bound))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (j, &m) in spec.m_grid.iter().enumerate() {
            let gaps: Vec<f64> = runs.iter().map(|r| r[j].0).collect();
            let bounds: Vec<f64> = runs.iter().map(|r| r[j].1).collect();
            let (mean_gap, mean_gap_se) = mean_and_se(&gaps);
            let (mean_bound, mean_bound_se) = mean_and_se(&bounds);
            cells.push(CellSummary {
                n,
                m: Some(m),
                replications: spec.replications,
                median_gap: median(&gaps),
                median_bound: median(&bounds),
                mean_gap: Some(mean_gap),
                mean_gap_se: Some(mean_gap_se),
                mean_bound: Some(mean_bound),
                mean_bound_se: Some(mean_bound_se),
                violations: Some(gaps.iter().zip(&bounds).filter(|(g, b)| **g > **b + 1e-9).count()),
                ..CellSummary::default()
            });
        }
    }
    Ok(result(spec, None, cells))
}
