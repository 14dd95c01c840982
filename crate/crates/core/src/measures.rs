//! Probability-measure families on which W2 is computed exactly.
//!
//! All measure types are validated at construction and immutable afterwards.
//! Raw, unvalidated data lives in [`MeasureSpec`], which is also the
//! serialized item schema used by collection files.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Relative tolerance for covariance symmetry (against max |entry|).
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues in `[-EIGEN_FLOOR * lambda_max, 0)` are clamped to zero.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    GaussianDiag,
    Discrete,
    #[serde(rename = "empirical1d")]
    Empirical1D,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::GaussianDiag => "gaussian_diag",
            Family::Discrete => "discrete",
            Family::Empirical1D => "empirical1d",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianItem {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDiagItem {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteItem {
    pub support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Empirical1DItem {
    pub samples: Vec<f64>,
}

/// Unvalidated measure data, tagged by family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MeasureSpec {
    Gaussian(GaussianItem),
    GaussianDiag(GaussianDiagItem),
    Discrete(DiscreteItem),
    #[serde(rename = "empirical1d")]
    Empirical1D(Empirical1DItem),
}

impl MeasureSpec {
    pub fn family(&self) -> Family {
        match self {
            MeasureSpec::Gaussian(_) => Family::Gaussian,
            MeasureSpec::GaussianDiag(_) => Family::GaussianDiag,
            MeasureSpec::Discrete(_) => Family::Discrete,
            MeasureSpec::Empirical1D(_) => Family::Empirical1D,
        }
    }
}

/// Outcome of [`validate_measure`]: the first violated invariant, if any, and
/// non-fatal warnings such as eigenvalue clamping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationResult {
    pub violation: Option<String>,
    pub warnings: Vec<String>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Full(DMatrix<f64>),
    DiagStd(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: Vec<f64>,
    covariance: Covariance,
    // principal square root of a full covariance, cached for Bures evaluations
    cov_sqrt: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    // k x d, row-major
    support: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Empirical1D {
    samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Gaussian(GaussianMeasure),
    Discrete(DiscreteMeasure),
    Empirical1D(Empirical1D),
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

struct CheckedCovariance {
    matrix: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    clamped: usize,
}

fn check_covariance(rows: &[Vec<f64>], d: usize) -> std::result::Result<CheckedCovariance, String> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(format!("covariance must be {d}x{d}"));
    }
    if rows.iter().any(|r| !all_finite(r)) {
        return Err("covariance has non-finite entries".into());
    }
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for i in 0..d {
        for j in (i + 1)..d {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(format!(
                    "covariance is not symmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                ));
            }
        }
    }
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = -EIGEN_FLOOR * lambda_max.max(0.0);
    let mut clamped = 0;
    let mut values = eig.eigenvalues.clone();
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < floor {
                return Err(format!(
                    "covariance has eigenvalue {v:e}, below the PSD floor {floor:e}"
                ));
            }
            *v = 0.0;
            clamped += 1;
        }
    }
    let vecs = &eig.eigenvectors;
    let matrix = if clamped > 0 {
        let r = vecs * DMatrix::from_diagonal(&values) * vecs.transpose();
        (&r + r.transpose()) * 0.5
    } else {
        sym
    };
    let roots = values.map(|v| v.sqrt());
    let s = vecs * DMatrix::from_diagonal(&roots) * vecs.transpose();
    let sqrt = (&s + s.transpose()) * 0.5;
    Ok(CheckedCovariance {
        matrix,
        sqrt,
        clamped,
    })
}

/// Checks a raw measure against its family invariants.
pub fn validate_measure(spec: &MeasureSpec) -> ValidationResult {
    match build(spec) {
        Ok((_, warnings)) => ValidationResult {
            violation: None,
            warnings,
        },
        Err(e) => ValidationResult {
            violation: Some(e),
            warnings: Vec::new(),
        },
    }
}

fn build(spec: &MeasureSpec) -> std::result::Result<(Measure, Vec<String>), String> {
    let mut warnings = Vec::new();
    let measure = match spec {
        MeasureSpec::Gaussian(item) => {
            let d = item.mean.len();
            if d == 0 {
                return Err("mean must be nonempty".into());
            }
            if !all_finite(&item.mean) {
                return Err("mean has non-finite entries".into());
            }
            let checked = check_covariance(&item.covariance, d)?;
            if checked.clamped > 0 {
                warnings.push(format!(
                    "clamped {} slightly negative covariance eigenvalue(s) to zero",
                    checked.clamped
                ));
            }
            Measure::Gaussian(GaussianMeasure {
                mean: item.mean.clone(),
                covariance: Covariance::Full(checked.matrix),
                cov_sqrt: Some(checked.sqrt),
            })
        }
        MeasureSpec::GaussianDiag(item) => {
            let d = item.mean.len();
            if d == 0 {
                return Err("mean must be nonempty".into());
            }
            if item.std.len() != d {
                return Err(format!("std has length {}, expected {d}", item.std.len()));
            }
            if !all_finite(&item.mean) || !all_finite(&item.std) {
                return Err("non-finite entries".into());
            }
            if let Some(s) = item.std.iter().find(|s| **s <= 0.0) {
                return Err(format!("std entries must be > 0, found {s}"));
            }
            Measure::Gaussian(GaussianMeasure {
                mean: item.mean.clone(),
                covariance: Covariance::DiagStd(item.std.clone()),
                cov_sqrt: None,
            })
        }
        MeasureSpec::Discrete(item) => {
            let k = item.weights.len();
            if k == 0 || item.support.is_empty() {
                return Err("discrete measure needs at least one atom".into());
            }
            if item.support.len() != k {
                return Err(format!(
                    "support has {} atoms but weights has {k}",
                    item.support.len()
                ));
            }
            let d = item.support[0].len();
            if d == 0 || item.support.iter().any(|r| r.len() != d) {
                return Err("support rows must share a nonzero dimension".into());
            }
            if item.support.iter().any(|r| !all_finite(r)) || !all_finite(&item.weights) {
                return Err("non-finite entries".into());
            }
            if let Some(w) = item.weights.iter().find(|w| **w < 0.0) {
                return Err(format!("weights must be nonnegative, found {w}"));
            }
            let total: f64 = crate::numeric::compensated_sum(item.weights.iter().copied());
            if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(format!("weights sum ≠ 1 (sum = {total})"));
            }
            Measure::Discrete(DiscreteMeasure {
                dim: d,
                support: item.support.iter().flatten().copied().collect(),
                weights: item.weights.clone(),
            })
        }
        MeasureSpec::Empirical1D(item) => {
            if item.samples.is_empty() {
                return Err("empirical measure needs at least one sample".into());
            }
            if !all_finite(&item.samples) {
                return Err("samples have non-finite entries".into());
            }
            let mut samples = item.samples.clone();
            samples.sort_by(f64::total_cmp);
            Measure::Empirical1D(Empirical1D { samples })
        }
    };
    Ok((measure, warnings))
}

impl TryFrom<&MeasureSpec> for Measure {
    type Error = Error;

    fn try_from(spec: &MeasureSpec) -> Result<Self> {
        build(spec).map(|(m, _)| m).map_err(Error::InvalidMeasure)
    }
}

impl GaussianMeasure {
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        match Measure::try_from(&MeasureSpec::Gaussian(GaussianItem { mean, covariance }))? {
            Measure::Gaussian(g) => Ok(g),
            _ => unreachable!(),
        }
    }

    /// Axis-aligned Gaussian `N(mean, diag(std^2))`.
    pub fn diag(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        match Measure::try_from(&MeasureSpec::GaussianDiag(GaussianDiagItem { mean, std }))? {
            Measure::Gaussian(g) => Ok(g),
            _ => unreachable!(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn is_diag(&self) -> bool {
        matches!(self.covariance, Covariance::DiagStd(_))
    }

    /// Covariance as a dense matrix (diagonal forms are expanded).
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        match &self.covariance {
            Covariance::Full(m) => m.clone(),
            Covariance::DiagStd(s) => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(s.len(), s.iter().map(|x| x * x)))
            }
        }
    }

    pub fn covariance_sqrt(&self) -> DMatrix<f64> {
        match (&self.covariance, &self.cov_sqrt) {
            (_, Some(s)) => s.clone(),
            (Covariance::DiagStd(s), None) => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s))
            }
            (Covariance::Full(_), None) => unreachable!("full covariances cache their root"),
        }
    }

    pub fn to_spec(&self) -> MeasureSpec {
        match &self.covariance {
            Covariance::Full(m) => MeasureSpec::Gaussian(GaussianItem {
                mean: self.mean.clone(),
                covariance: (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                    .collect(),
            }),
            Covariance::DiagStd(s) => MeasureSpec::GaussianDiag(GaussianDiagItem {
                mean: self.mean.clone(),
                std: s.clone(),
            }),
        }
    }

    /// `k` i.i.d. draws `mean + S z` with `S` the covariance square root.
    pub fn sample<R: rand::Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let d = self.dim();
        let root = self.covariance_sqrt();
        (0..k)
            .map(|_| {
                let z: Vec<f64> = (0..d).map(|_| rand_distr::StandardNormal.sample(rng)).collect();
                (0..d)
                    .map(|i| self.mean[i] + (0..d).map(|j| root[(i, j)] * z[j]).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    fn translated(&self, v: &[f64]) -> Self {
        let mut out = self.clone();
        for (m, s) in out.mean.iter_mut().zip(v) {
            *m += s;
        }
        out
    }
}

impl DiscreteMeasure {
    pub fn new(support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        match Measure::try_from(&MeasureSpec::Discrete(DiscreteItem { support, weights }))? {
            Measure::Discrete(m) => Ok(m),
            _ => unreachable!(),
        }
    }

    /// Uniform weights over the given atoms.
    pub fn uniform(support: Vec<Vec<f64>>) -> Result<Self> {
        let k = support.len();
        if k == 0 {
            return Err(Error::InvalidMeasure("discrete measure needs at least one atom".into()));
        }
        Self::new(support, vec![1.0 / k as f64; k])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.support[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl Iterator<Item = &[f64]> {
        self.support.chunks(self.dim)
    }

    pub fn to_spec(&self) -> MeasureSpec {
        MeasureSpec::Discrete(DiscreteItem {
            support: self.atoms().map(|a| a.to_vec()).collect(),
            weights: self.weights.clone(),
        })
    }

    fn translated(&self, v: &[f64]) -> Self {
        let mut out = self.clone();
        for row in out.support.chunks_mut(self.dim) {
            for (x, s) in row.iter_mut().zip(v) {
                *x += s;
            }
        }
        out
    }
}

impl Empirical1D {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        match Measure::try_from(&MeasureSpec::Empirical1D(Empirical1DItem { samples }))? {
            Measure::Empirical1D(m) => Ok(m),
            _ => unreachable!(),
        }
    }

    /// Sorted samples.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_spec(&self) -> MeasureSpec {
        MeasureSpec::Empirical1D(Empirical1DItem {
            samples: self.samples.clone(),
        })
    }

    fn translated(&self, v: &[f64]) -> Self {
        Empirical1D {
            samples: self.samples.iter().map(|x| x + v[0]).collect(),
        }
    }
}

impl Measure {
    pub fn family(&self) -> Family {
        match self {
            Measure::Gaussian(g) if g.is_diag() => Family::GaussianDiag,
            Measure::Gaussian(_) => Family::Gaussian,
            Measure::Discrete(_) => Family::Discrete,
            Measure::Empirical1D(_) => Family::Empirical1D,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Gaussian(g) => g.dim(),
            Measure::Discrete(m) => m.dim(),
            Measure::Empirical1D(_) => 1,
        }
    }

    pub fn to_spec(&self) -> MeasureSpec {
        match self {
            Measure::Gaussian(g) => g.to_spec(),
            Measure::Discrete(m) => m.to_spec(),
            Measure::Empirical1D(m) => m.to_spec(),
        }
    }

    /// Push-forward under `x -> x + v`.
    pub fn translated(&self, v: &[f64]) -> Result<Measure> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(match self {
            Measure::Gaussian(g) => Measure::Gaussian(g.translated(v)),
            Measure::Discrete(m) => Measure::Discrete(m.translated(v)),
            Measure::Empirical1D(m) => Measure::Empirical1D(m.translated(v)),
        })
    }
}

impl From<GaussianMeasure> for Measure {
    fn from(g: GaussianMeasure) -> Self {
        Measure::Gaussian(g)
    }
}

impl From<DiscreteMeasure> for Measure {
    fn from(m: DiscreteMeasure) -> Self {
        Measure::Discrete(m)
    }
}

impl From<Empirical1D> for Measure {
    fn from(m: Empirical1D) -> Self {
        Measure::Empirical1D(m)
    }
}

/// `size` i.i.d. draws from `m`, returned as a uniform-weight discrete measure.
pub fn subsample_discrete(m: &DiscreteMeasure, size: usize, seed: u64) -> Result<DiscreteMeasure> {
    if size == 0 {
        return Err(Error::arg("size", "must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let dist = WeightedIndex::new(m.weights()).map_err(|e| Error::InvalidMeasure(e.to_string()))?;
    let support: Vec<Vec<f64>> = (0..size).map(|_| m.atom(dist.sample(&mut rng)).to_vec()).collect();
    DiscreteMeasure::uniform(support)
}

/// `size` draws with replacement from the samples of `m`.
pub fn subsample_empirical(m: &Empirical1D, size: usize, seed: u64) -> Result<Empirical1D> {
    if size == 0 {
        return Err(Error::arg("size", "must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let k = m.len();
    let samples = (0..size)
        .map(|_| m.samples[rand::Rng::random_range(&mut rng, 0..k)])
        .collect();
    Empirical1D::new(samples)
}

/// Ordered, homogeneous list of measures with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureCollection {
    family: Family,
    dimension: usize,
    items: Vec<Measure>,
    labels: Option<Vec<String>>,
}

impl MeasureCollection {
    pub fn new(items: Vec<Measure>, labels: Option<Vec<String>>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidCollection("collection is empty".into()))?;
        let family = first.family();
        let dimension = first.dim();
        for (i, m) in items.iter().enumerate() {
            if m.family() != family {
                return Err(Error::InvalidCollection(format!(
                    "item {i} is {}, collection is {family}",
                    m.family()
                )));
            }
            if m.dim() != dimension {
                return Err(Error::InvalidCollection(format!(
                    "item {i} has dimension {}, collection has {dimension}",
                    m.dim()
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != items.len() {
                return Err(Error::InvalidCollection(format!(
                    "{} labels for {} items",
                    l.len(),
                    items.len()
                )));
            }
        }
        Ok(Self {
            family,
            dimension,
            items,
            labels,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn items(&self) -> &[Measure] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.items.len() {
            return Err(Error::InvalidCollection(format!(
                "{} labels for {} items",
                labels.len(),
                self.items.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> MeasureSpec {
        MeasureSpec::Gaussian(GaussianItem {
            mean,
            covariance: cov,
        })
    }

    #[test]
    fn identity_covariance_is_valid() {
        let r = validate_measure(&gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]));
        assert!(r.is_ok());
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn bad_weight_sum_is_reported() {
        let r = validate_measure(&MeasureSpec::Discrete(DiscreteItem {
            support: vec![vec![0.0], vec![1.0]],
            weights: vec![0.5, 0.6],
        }));
        assert!(r.violation.unwrap().contains("weights sum ≠ 1"));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped_with_warning() {
        let r = validate_measure(&gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, -1e-12]]));
        assert!(r.is_ok());
        assert_eq!(r.warnings.len(), 1);
        let g = GaussianMeasure::new(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, -1e-12]]).unwrap();
        assert_eq!(g.covariance_matrix()[(1, 1)], 0.0);
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let r = validate_measure(&gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, -1e-3]]));
        assert!(r.violation.unwrap().contains("PSD floor"));
    }

    #[test]
    fn asymmetric_covariance_is_rejected() {
        let r = validate_measure(&gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.5], vec![0.4, 1.0]]));
        assert!(r.violation.unwrap().contains("not symmetric"));
    }

    #[test]
    fn diag_std_must_be_positive() {
        assert!(GaussianMeasure::diag(vec![0.0], vec![0.0]).is_err());
        assert!(GaussianMeasure::diag(vec![0.0], vec![1.0]).is_ok());
    }

    #[test]
    fn empirical_sorts_and_rejects_nan() {
        let e = Empirical1D::new(vec![3.0, -1.0, 2.0]).unwrap();
        assert_eq!(e.samples(), &[-1.0, 2.0, 3.0]);
        assert!(Empirical1D::new(vec![1.0, f64::NAN]).is_err());
        assert!(Empirical1D::new(vec![]).is_err());
    }

    #[test]
    fn subsample_point_mass() {
        let m = DiscreteMeasure::new(vec![vec![3.0]], vec![1.0]).unwrap();
        let s = subsample_discrete(&m, 5, 1).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.atoms().all(|a| a == [3.0]));
        assert!(s.weights().iter().all(|w| *w == 0.2));
    }

    #[test]
    fn subsample_is_deterministic_and_valid() {
        let m = DiscreteMeasure::new(vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]], vec![0.2, 0.3, 0.5]).unwrap();
        let a = subsample_discrete(&m, 17, 9).unwrap();
        let b = subsample_discrete(&m, 17, 9).unwrap();
        assert_eq!(a, b);
        assert!(validate_measure(&a.to_spec()).is_ok());
        assert!(subsample_discrete(&m, 0, 9).is_err());
    }

    #[test]
    fn subsample_binomial_frequency() {
        // weight on 1 ~ Binomial(1e4, .5)/1e4: sd = .005, so .5 +- .02 is a 4 sd band
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let s = subsample_discrete(&m, 10_000, 2024).unwrap();
        let on_one: f64 = s.atoms().zip(s.weights()).filter(|(a, _)| a[0] == 1.0).map(|(_, w)| w).sum();
        assert!((on_one - 0.5).abs() < 0.02, "{on_one}");
    }

    #[test]
    fn collection_must_be_homogeneous() {
        let a: Measure = GaussianMeasure::diag(vec![0.0], vec![1.0]).unwrap().into();
        let b: Measure = Empirical1D::new(vec![0.0]).unwrap().into();
        assert!(MeasureCollection::new(vec![a.clone(), b], None).is_err());
        let c: Measure = GaussianMeasure::diag(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap().into();
        assert!(MeasureCollection::new(vec![a.clone(), c], None).is_err());
        assert!(MeasureCollection::new(vec![], None).is_err());
        assert!(MeasureCollection::new(vec![a.clone(), a], None).is_ok());
    }
}
