//! Reference populations with closed-form heterogeneity.
//!
//! A [`ModelSpec`] is the declarative (JSON) form; [`PopulationModel`] is
//! the validated model with derived quantities precomputed. Targets are
//! always recomputed from the model fields.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::{erf::erfc, gamma::ln_gamma};

use crate::error::{Error, Result};
use crate::measures::{GaussianMeasure, Measure, MeasureCollection, MeasureSpec};
use crate::rng::{derive_seed, rng_from_seed};
use crate::transforms::Transform;
use crate::wasserstein::{w2, W2Options};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `mu_i = template + Theta_i` with `Theta_i ~ N(shift_mean, shift_cov)`.
    Translation {
        template: MeasureSpec,
        shift_cov: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift_mean: Option<Vec<f64>>,
    },
    /// Conjugate normal model: `theta* ~ N(0, tau0sq)`, `m` observations
    /// `Y_j ~ N(theta*, 1)` drawn from `data_seed`; measures are `N(theta_i, 1)`
    /// with `theta_i` drawn from the posterior.
    PosteriorGaussian { tau0sq: f64, m: usize, data_seed: u64 },
    /// `mu1` with probability `prob`, otherwise `mu2`.
    TwoPoint { mu1: MeasureSpec, mu2: MeasureSpec, prob: f64 },
    /// Mixture of axis-aligned Gaussian components with fixed counts.
    SyntheticGroup(SyntheticGroupSpec),
}

/// One component of a synthetic group: `count` Gaussians with means
/// `N(center, mean_sd^2 I)` and per-coordinate standard deviations
/// `std_center + U(-std_halfwidth, std_halfwidth)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticComponent {
    pub count: usize,
    pub center: Vec<f64>,
    pub mean_sd: f64,
    pub std_center: f64,
    pub std_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticGroupSpec {
    pub name: String,
    pub components: Vec<SyntheticComponent>,
}

#[derive(Debug, Clone)]
pub struct Translation {
    template: Measure,
    shift: GaussianMeasure,
}

#[derive(Debug, Clone)]
pub struct PosteriorGaussian {
    tau0sq: f64,
    m: usize,
    data_seed: u64,
    theta_star: f64,
    y_bar: f64,
    theta_m: f64,
    tau_m_sq: f64,
}

#[derive(Debug, Clone)]
pub struct TwoPoint {
    mu1: Measure,
    mu2: Measure,
    prob: f64,
    w: f64,
}

#[derive(Debug, Clone)]
pub enum PopulationModel {
    Translation(Translation),
    PosteriorGaussian(PosteriorGaussian),
    TwoPoint(TwoPoint),
    SyntheticGroup(SyntheticGroupSpec),
}

impl Translation {
    pub fn template(&self) -> &Measure {
        &self.template
    }

    /// Law of the shifts.
    pub fn shift_law(&self) -> &GaussianMeasure {
        &self.shift
    }

    pub fn shift_trace(&self) -> f64 {
        self.shift.covariance_matrix().trace()
    }

    /// `sigma` when the shift covariance is exactly `sigma^2 I`.
    fn isotropic_sd(&self) -> Option<f64> {
        let c = self.shift.covariance_matrix();
        let v = c[(0, 0)];
        let d = c.nrows();
        let iso = (0..d).all(|i| (0..d).all(|j| c[(i, j)] == if i == j { v } else { 0.0 }));
        iso.then(|| v.max(0.0).sqrt())
    }
}

impl PosteriorGaussian {
    pub fn tau0sq(&self) -> f64 {
        self.tau0sq
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Parameter that generated the synthetic data.
    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }

    pub fn y_bar(&self) -> f64 {
        self.y_bar
    }

    /// Posterior mean `tau_m^2 m y_bar`.
    pub fn theta_m(&self) -> f64 {
        self.theta_m
    }

    /// Posterior variance `1 / (1 / tau0sq + m)`.
    pub fn tau_m_sq(&self) -> f64 {
        self.tau_m_sq
    }
}

impl TwoPoint {
    pub fn mu1(&self) -> &Measure {
        &self.mu1
    }

    pub fn mu2(&self) -> &Measure {
        &self.mu2
    }

    pub fn prob(&self) -> f64 {
        self.prob
    }

    /// `W2(mu1, mu2)`.
    pub fn separation(&self) -> f64 {
        self.w
    }

    fn target(&self, t: Transform) -> f64 {
        let (p, h0, hw) = (self.prob, t.eval(0.0), t.eval(self.w));
        2.0 * p * (1.0 - p) * (hw - h0) + h0
    }

    /// Population projections `g(mu1), g(mu2)`.
    pub fn projection(&self, t: Transform) -> [f64; 2] {
        let (h0, hw) = (t.eval(0.0), t.eval(self.w));
        let d = self.target(t);
        let q = [1.0 - self.prob, self.prob];
        q.map(|qk| (1.0 - qk) * h0 + qk * hw - d)
    }
}

impl SyntheticGroupSpec {
    pub fn size(&self) -> usize {
        self.components.iter().map(|c| c.count).sum()
    }

    pub fn dimension(&self) -> usize {
        self.components[0].center.len()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schema {
            path: format!("synthetic group `{}`", self.name),
            message: m,
        });
        let Some(first) = self.components.first() else {
            return bad("needs at least one component".into());
        };
        let d = first.center.len();
        if d == 0 {
            return bad("center must be nonempty".into());
        }
        for (k, c) in self.components.iter().enumerate() {
            if c.center.len() != d {
                return bad(format!("component {k} has dimension {}, expected {d}", c.center.len()));
            }
            if c.count == 0 {
                return bad(format!("component {k} has count 0"));
            }
            if !(c.mean_sd >= 0.0 && c.std_halfwidth >= 0.0) || !c.center.iter().all(|x| x.is_finite()) {
                return bad(format!("component {k} has invalid spreads or center"));
            }
            if !(c.std_center - c.std_halfwidth > 0.0) {
                return bad(format!(
                    "component {k}: std_center - std_halfwidth must be positive so every std stays > 0"
                ));
            }
        }
        Ok(())
    }

    /// Component sizes for a sample of `n`: the configured counts when `n`
    /// equals the configured size, otherwise a largest-remainder allocation
    /// in proportion to them.
    pub fn allocation(&self, n: usize) -> Vec<usize> {
        let total = self.size();
        if n == total {
            return self.components.iter().map(|c| c.count).collect();
        }
        let exact: Vec<f64> = self.components.iter().map(|c| c.count as f64 * n as f64 / total as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let short = n - counts.iter().sum::<usize>();
        for &k in order.iter().take(short) {
            counts[k] += 1;
        }
        counts
    }

    /// `E W2^2` between independent members of components `a` and `b`
    /// (for `a == b`, two distinct members).
    fn pair_moment(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (&self.components[a], &self.components[b]);
        let d = ca.center.len() as f64;
        let centers: f64 = ca.center.iter().zip(&cb.center).map(|(x, y)| (x - y) * (x - y)).sum();
        let means = centers + d * (ca.mean_sd * ca.mean_sd + cb.mean_sd * cb.mean_sd);
        let ds = ca.std_center - cb.std_center;
        let stds = d * (ds * ds + (ca.std_halfwidth * ca.std_halfwidth + cb.std_halfwidth * cb.std_halfwidth) / 3.0);
        means + stds
    }

    /// `E U_n` with `psi = t^2` for a sample of `n` allocated by [`Self::allocation`].
    pub fn expected_u_squared(&self, n: usize) -> f64 {
        let counts = self.allocation(n);
        let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
        let mut total = 0.0;
        for a in 0..counts.len() {
            let na = counts[a] as f64;
            total += na * (na - 1.0) / 2.0 * self.pair_moment(a, a);
            for b in (a + 1)..counts.len() {
                total += na * counts[b] as f64 * self.pair_moment(a, b);
            }
        }
        total / pairs
    }

    /// Draws the group; also returns the component of each member.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(MeasureCollection, Vec<usize>)> {
        let mut rng = rng_from_seed(seed);
        let mut items = Vec::with_capacity(n);
        let mut membership = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for (k, (c, count)) in self.components.iter().zip(self.allocation(n)).enumerate() {
            let jitter = Uniform::new_inclusive(-c.std_halfwidth, c.std_halfwidth)
                .map_err(|e| Error::arg("std_halfwidth", e.to_string()))?;
            for _ in 0..count {
                let mean: Vec<f64> = c
                    .center
                    .iter()
                    .map(|x| x + c.mean_sd * normal(&mut rng))
                    .collect();
                let std: Vec<f64> = (0..c.center.len()).map(|_| c.std_center + jitter.sample(&mut rng)).collect();
                items.push(GaussianMeasure::diag(mean, std)?.into());
                membership.push(k);
                labels.push(format!("{}{:03}", self.name, labels.len() + 1));
            }
        }
        Ok((MeasureCollection::new(items, Some(labels))?, membership))
    }
}

const SQUARED: Transform = Transform::Power { p: 2.0 };

fn normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn ln_gamma_ratio(a: f64, b: f64) -> f64 {
    ln_gamma(a) - ln_gamma(b)
}

/// `E ||X||^p` for `X ~ N(0, s^2 I_d)`.
fn chi_moment(s: f64, d: usize, p: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let d = d as f64;
    s.powf(p) * 2f64.powf(p / 2.0) * ln_gamma_ratio((d + p) / 2.0, d / 2.0).exp()
}

/// `exp(x^2) erfc(x)` for `x >= 0`.
fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        (x * x).exp() * erfc(x)
    } else {
        let x2 = x * x;
        (1.0 - 0.5 / x2 + 0.75 / (x2 * x2) - 1.875 / (x2 * x2 * x2)) / (x * PI.sqrt())
    }
}

/// `E[X^2 / (X^2 + c^2)]` for `X ~ N(0, s^2)`.
fn bounded_mean_1d(s: f64, c: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let r = c / s;
    1.0 - r * (PI / 2.0).sqrt() * erfcx(r / 2f64.sqrt())
}

/// Closed-form `E psi(|X|)` for `X ~ N(0, s^2 I_d)`, where available.
fn gaussian_difference_target(s: f64, d: usize, t: Transform) -> Option<f64> {
    match t {
        Transform::Power { p } => Some(chi_moment(s, d, p)),
        Transform::Identity => Some(chi_moment(s, d, 1.0)),
        Transform::BoundedRational { c0 } if d == 1 => Some(bounded_mean_1d(s, c0)),
        Transform::BoundedRational { .. } => (s == 0.0).then_some(0.0),
    }
}

impl PopulationModel {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        match spec {
            ModelSpec::Translation {
                template,
                shift_cov,
                shift_mean,
            } => {
                let template = Measure::try_from(template)?;
                let d = template.dim();
                let mean = shift_mean.clone().unwrap_or_else(|| vec![0.0; d]);
                if mean.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: mean.len(),
                    });
                }
                let shift = GaussianMeasure::new(mean, shift_cov.clone())
                    .map_err(|e| Error::arg("shift_cov", e.to_string()))?;
                Ok(PopulationModel::Translation(Translation { template, shift }))
            }
            &ModelSpec::PosteriorGaussian { tau0sq, m, data_seed } => {
                if !(tau0sq > 0.0 && tau0sq.is_finite()) {
                    return Err(Error::arg("tau0sq", format!("must be positive, got {tau0sq}")));
                }
                let mut rng = rng_from_seed(data_seed);
                let theta_star = tau0sq.sqrt() * normal(&mut rng);
                let y_sum: f64 = (0..m).map(|_| theta_star + normal(&mut rng)).sum();
                let y_bar = if m > 0 { y_sum / m as f64 } else { 0.0 };
                let tau_m_sq = 1.0 / (1.0 / tau0sq + m as f64);
                Ok(PopulationModel::PosteriorGaussian(PosteriorGaussian {
                    tau0sq,
                    m,
                    data_seed,
                    theta_star,
                    y_bar,
                    theta_m: tau_m_sq * m as f64 * y_bar,
                    tau_m_sq,
                }))
            }
            ModelSpec::TwoPoint { mu1, mu2, prob } => {
                if !(0.0..=1.0).contains(prob) {
                    return Err(Error::arg("prob", format!("must lie in [0, 1], got {prob}")));
                }
                let (mu1, mu2) = (Measure::try_from(mu1)?, Measure::try_from(mu2)?);
                if mu1.family() != mu2.family() {
                    return Err(Error::CrossFamily {
                        left: mu1.family().to_string(),
                        right: mu2.family().to_string(),
                    });
                }
                let w = w2(&mu1, &mu2, &W2Options::sequential())?;
                Ok(PopulationModel::TwoPoint(TwoPoint {
                    mu1,
                    mu2,
                    prob: *prob,
                    w,
                }))
            }
            ModelSpec::SyntheticGroup(g) => {
                g.validate()?;
                Ok(PopulationModel::SyntheticGroup(g.clone()))
            }
        }
    }

    pub fn to_spec(&self) -> ModelSpec {
        match self {
            PopulationModel::Translation(t) => {
                let c = t.shift.covariance_matrix();
                ModelSpec::Translation {
                    template: t.template.to_spec(),
                    shift_cov: (0..c.nrows()).map(|i| (0..c.ncols()).map(|j| c[(i, j)]).collect()).collect(),
                    shift_mean: Some(t.shift.mean().to_vec()),
                }
            }
            PopulationModel::PosteriorGaussian(p) => ModelSpec::PosteriorGaussian {
                tau0sq: p.tau0sq,
                m: p.m,
                data_seed: p.data_seed,
            },
            PopulationModel::TwoPoint(t) => ModelSpec::TwoPoint {
                mu1: t.mu1.to_spec(),
                mu2: t.mu2.to_spec(),
                prob: t.prob,
            },
            PopulationModel::SyntheticGroup(g) => ModelSpec::SyntheticGroup(g.clone()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PopulationModel::Translation(_) => "translation",
            PopulationModel::PosteriorGaussian(_) => "posterior_gaussian",
            PopulationModel::TwoPoint(_) => "two_point",
            PopulationModel::SyntheticGroup(_) => "synthetic_group",
        }
    }

    /// True when the population projection variance is zero for `t`:
    /// symmetric two-point laws, point-mass populations.
    pub fn is_degenerate(&self, t: Transform) -> bool {
        match self {
            PopulationModel::TwoPoint(tp) => {
                let g = tp.projection(t);
                tp.prob == 0.0 || tp.prob == 1.0 || (g[0] == 0.0 && g[1] == 0.0)
            }
            PopulationModel::Translation(tr) => tr.shift_trace() == 0.0,
            PopulationModel::PosteriorGaussian(_) => false,
            PopulationModel::SyntheticGroup(_) => false,
        }
    }

    /// `n` draws from the population, deterministic in `seed`.
    pub fn sample_population(&self, n: usize, seed: u64) -> Result<MeasureCollection> {
        if n == 0 {
            return Err(Error::arg("n", "must be at least 1"));
        }
        let mut rng = rng_from_seed(seed);
        let items: Vec<Measure> = match self {
            PopulationModel::Translation(t) => t
                .shift
                .sample(n, &mut rng)
                .iter()
                .map(|s| t.template.translated(s))
                .collect::<Result<_>>()?,
            PopulationModel::PosteriorGaussian(p) => {
                let tau = p.tau_m_sq.sqrt();
                (0..n)
                    .map(|_| {
                        let theta = p.theta_m + tau * normal(&mut rng);
                        GaussianMeasure::diag(vec![theta], vec![1.0]).map(Measure::from)
                    })
                    .collect::<Result<_>>()?
            }
            PopulationModel::TwoPoint(t) => (0..n)
                .map(|_| {
                    if rng.random::<f64>() < t.prob {
                        t.mu1.clone()
                    } else {
                        t.mu2.clone()
                    }
                })
                .collect(),
            PopulationModel::SyntheticGroup(g) => return Ok(g.sample(n, seed)?.0),
        };
        MeasureCollection::new(items, None)
    }

    /// Closed-form `D_psi`, or `None` when no closed form is implemented.
    ///
    /// For synthetic groups this is `E U_n` under the configured fixed
    /// component counts, available for `psi = t^2` only.
    pub fn analytic_target(&self, t: Transform) -> Option<f64> {
        match self {
            PopulationModel::Translation(tr) => {
                if t == SQUARED {
                    return Some(2.0 * tr.shift_trace());
                }
                // Theta - Theta' ~ N(0, 2 sigma^2 I) when the shifts are isotropic
                let sd = tr.isotropic_sd()?;
                gaussian_difference_target(2f64.sqrt() * sd, tr.template.dim(), t)
            }
            PopulationModel::PosteriorGaussian(p) => {
                if t == SQUARED {
                    return Some(2.0 * p.tau_m_sq);
                }
                gaussian_difference_target((2.0 * p.tau_m_sq).sqrt(), 1, t)
            }
            PopulationModel::TwoPoint(tp) => Some(tp.target(t)),
            PopulationModel::SyntheticGroup(g) => {
                (t == SQUARED).then(|| g.expected_u_squared(g.size()))
            }
        }
    }

    /// `g(mu1), g(mu2)` for a two-point model.
    pub fn two_point_projection(&self, t: Transform) -> Result<[f64; 2]> {
        match self {
            PopulationModel::TwoPoint(tp) => Ok(tp.projection(t)),
            other => Err(Error::UnsupportedModel(format!(
                "two_point_projection needs a two_point model, got {}",
                other.kind()
            ))),
        }
    }
}

/// Default synthetic design: a tight group, a diffuse group, and a tight
/// group with a separated minor component.
pub fn default_synthetic_groups() -> Vec<SyntheticGroupSpec> {
    let tight = |count, center: Vec<f64>| SyntheticComponent {
        count,
        center,
        mean_sd: 0.1,
        std_center: 1.0,
        std_halfwidth: 0.05,
    };
    vec![
        SyntheticGroupSpec {
            name: "A".into(),
            components: vec![tight(60, vec![0.0, 0.0])],
        },
        SyntheticGroupSpec {
            name: "B".into(),
            components: vec![SyntheticComponent {
                count: 60,
                center: vec![0.0, 0.0],
                mean_sd: 1.5,
                std_center: 1.0,
                std_halfwidth: 0.5,
            }],
        },
        SyntheticGroupSpec {
            name: "C".into(),
            components: vec![tight(50, vec![0.0, 0.0]), tight(10, vec![6.0, 6.0])],
        },
    ]
}

#[derive(Debug, Clone)]
pub struct SyntheticGroup {
    pub name: String,
    pub collection: MeasureCollection,
    /// Component index per member (0 is the main component).
    pub membership: Vec<usize>,
    /// `E U_n` for `psi = t^2` under the group design.
    pub target_squared: f64,
}

/// Draws every group of `specs`; group `k` uses the seed stream `[k]` under `seed`.
pub fn synthetic_groups(specs: &[SyntheticGroupSpec], seed: u64) -> Result<Vec<SyntheticGroup>> {
    specs
        .iter()
        .enumerate()
        .map(|(k, g)| {
            g.validate()?;
            let (collection, membership) = g.sample(g.size(), derive_seed(seed, &[k as u64]))?;
            Ok(SyntheticGroup {
                name: g.name.clone(),
                collection,
                membership,
                target_squared: g.expected_u_squared(g.size()),
            })
        })
        .collect()
}

/// Versioned generator settings for the synthetic groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub groups: Vec<SyntheticGroupSpec>,
}

pub const SYNTHETIC_CONFIG_VERSION: &str = "synthetic_v1";

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            version: SYNTHETIC_CONFIG_VERSION.into(),
            seed: Some(20240601),
            groups: default_synthetic_groups(),
        }
    }
}

/// The three default groups of 60.
pub fn synthetic_groups_default(seed: u64) -> Result<Vec<SyntheticGroup>> {
    synthetic_groups(&default_synthetic_groups(), seed)
}
