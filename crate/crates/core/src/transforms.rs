//! Transforms applied to pairwise distances before averaging.
//!
//! Each transform carries a growth witness `|psi(t)| <= a + b t^p` and, when
//! it is globally Lipschitz, its Lipschitz constant. The set of transforms is
//! closed so that both witnesses can be checked mechanically.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::median;
use crate::wasserstein::DistanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Transform {
    /// `t^p`, `p >= 1`.
    Power { p: f64 },
    /// `t^2 / (t^2 + c0^2)`, `c0 > 0`.
    BoundedRational { c0: f64 },
    Identity,
}

/// Witness of `|psi(t)| <= a + b t^p` for all `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

impl Growth {
    pub fn bound(&self, t: f64) -> f64 {
        self.a + self.b * t.powf(self.p)
    }

    /// `C = a + b 2^(p-1)` from the moment-domination argument:
    /// `|h(mu, nu)| <= C (1 + W2(mu, mu0)^p + W2(nu, mu0)^p)`.
    pub fn domination_constant(&self) -> f64 {
        self.a + self.b * 2f64.powf(self.p - 1.0)
    }
}

impl Transform {
    pub fn power(p: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::arg("psi", format!("power exponent must be >= 1, got {p}")));
        }
        Ok(Transform::Power { p })
    }

    pub fn bounded(c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::arg("psi", format!("c0 must be a positive finite number, got {c0}")));
        }
        Ok(Transform::BoundedRational { c0 })
    }

    pub fn identity() -> Self {
        Transform::Identity
    }

    pub fn growth(&self) -> Growth {
        match *self {
            Transform::Power { p } => Growth { a: 0.0, b: 1.0, p },
            Transform::BoundedRational { .. } => Growth { a: 1.0, b: 0.0, p: 1.0 },
            Transform::Identity => Growth { a: 0.0, b: 1.0, p: 1.0 },
        }
    }

    /// Global Lipschitz constant, when one exists.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            Transform::Power { p } if p == 1.0 => Some(1.0),
            Transform::Power { .. } => None,
            // sup of 2 t c0^2 / (t^2 + c0^2)^2, attained at t = c0 / sqrt(3)
            Transform::BoundedRational { c0 } => Some(3.0 * 3f64.sqrt() / (8.0 * c0)),
            Transform::Identity => Some(1.0),
        }
    }

    /// `psi(x)` for a nonnegative finite distance.
    pub fn apply(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::arg("x", format!("distance must be finite and >= 0, got {x}")));
        }
        Ok(self.eval(x))
    }

    #[inline]
    pub(crate) fn eval(&self, x: f64) -> f64 {
        match *self {
            Transform::Power { p } if p == 2.0 => x * x,
            Transform::Power { p } if p == 1.0 => x,
            Transform::Power { p } => x.powf(p),
            Transform::BoundedRational { c0 } => {
                let x2 = x * x;
                x2 / (x2 + c0 * c0)
            }
            Transform::Identity => x,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Power { p } => write!(f, "power:{p}"),
            Transform::BoundedRational { c0 } => write!(f, "bounded:{c0}"),
            Transform::Identity => f.write_str("identity"),
        }
    }
}

impl From<Transform> for String {
    fn from(t: Transform) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for Transform {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        match s.parse::<TransformSpec>()? {
            TransformSpec::Fixed(t) => Ok(t),
            TransformSpec::BoundedAuto => Err(Error::Parse(
                "bounded:auto must be resolved against distances first".into(),
            )),
        }
    }
}

/// A transform as written in configs and on the command line:
/// `power:<p>`, `bounded:<c0>`, `bounded:auto` or `identity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TransformSpec {
    Fixed(Transform),
    /// Bounded transform with `c0` set to the median pairwise distance.
    BoundedAuto,
}

impl FromStr for TransformSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let s = s.strip_prefix("psi=").unwrap_or(s);
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let number = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::Parse(format!("`{s}` needs a numeric argument")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
        };
        match kind {
            "identity" if arg.is_none() => Ok(TransformSpec::Fixed(Transform::Identity)),
            "power" => Ok(TransformSpec::Fixed(Transform::power(number(arg)?)?)),
            "bounded" if arg == Some("auto") => Ok(TransformSpec::BoundedAuto),
            "bounded" => Ok(TransformSpec::Fixed(Transform::bounded(number(arg)?)?)),
            _ => Err(Error::Parse(format!(
                "unknown transform `{s}` (expected power:<p>, bounded:<c0>, bounded:auto or identity)"
            ))),
        }
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformSpec::Fixed(t) => t.fmt(f),
            TransformSpec::BoundedAuto => f.write_str("bounded:auto"),
        }
    }
}

impl From<TransformSpec> for String {
    fn from(t: TransformSpec) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for TransformSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Transform> for TransformSpec {
    fn from(t: Transform) -> Self {
        TransformSpec::Fixed(t)
    }
}

impl TransformSpec {
    /// Fixes `bounded:auto` by calibrating on the pooled distances of `groups`.
    pub fn resolve(&self, groups: &[&DistanceMatrix]) -> Result<Transform> {
        match self {
            TransformSpec::Fixed(t) => Ok(*t),
            TransformSpec::BoundedAuto => Transform::bounded(calibrate_c0_pooled(groups)?),
        }
    }
}

/// Median of the strict upper-triangle distances.
pub fn calibrate_c0(d: &DistanceMatrix) -> Result<f64> {
    calibrate_c0_pooled(&[d])
}

/// Median over the strict upper triangles of several matrices pooled together.
pub fn calibrate_c0_pooled(groups: &[&DistanceMatrix]) -> Result<f64> {
    if let Some(g) = groups.iter().find(|g| g.n() < 2) {
        return Err(Error::TooFewMeasures {
            required: 2,
            found: g.n(),
        });
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.upper_triangle()).collect();
    let c0 = median(&pooled).ok_or(Error::TooFewMeasures { required: 2, found: 0 })?;
    if c0 <= 0.0 {
        return Err(Error::arg(
            "psi",
            "median pairwise distance is zero, so bounded:auto would be ill-defined; pass bounded:<c0>",
        ));
    }
    Ok(c0)
}
