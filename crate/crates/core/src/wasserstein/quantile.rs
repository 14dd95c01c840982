//! W2 on the real line through the quantile coupling.
//!
//! For measures on R the monotone rearrangement is optimal, so
//! `W2^2 = int_0^1 (F_a^{-1}(u) - F_b^{-1}(u))^2 du`. Both quantile functions
//! are step functions here and the integral is evaluated exactly over the
//! merged grid of jump points.

use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::measures::Empirical1D;
use crate::normal;
use crate::numeric::CompensatedSum;

/// W2 between two empirical measures on the line.
pub fn w2_empirical_1d(a: &Empirical1D, b: &Empirical1D) -> Result<f64> {
    let (xa, xb) = (a.samples(), b.samples());
    if xa.is_empty() || xb.is_empty() {
        return Err(Error::arg("samples", "empirical measures must be nonempty"));
    }
    Ok(uniform_sorted_sq(xa, xb).sqrt())
}

/// Squared W2 between uniform measures on two sorted sample vectors.
pub(crate) fn uniform_sorted_sq(xa: &[f64], xb: &[f64]) -> f64 {
    let (ma, mb) = (xa.len(), xb.len());
    let mut acc = CompensatedSum::new();
    if ma == mb {
        for (x, y) in xa.iter().zip(xb) {
            acc.add((x - y) * (x - y));
        }
        return acc.value() / ma as f64;
    }
    // Jump points of F_a^{-1} sit at k/ma and of F_b^{-1} at l/mb. On the
    // common grid of step 1/(ma*mb) they are k*mb and l*ma, which keeps the
    // segment lengths exact integers.
    let (ma64, mb64) = (ma as u128, mb as u128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos: u128 = 0;
    while i < ma && j < mb {
        let next_a = (i as u128 + 1) * mb64;
        let next_b = (j as u128 + 1) * ma64;
        let next = next_a.min(next_b);
        let diff = xa[i] - xb[j];
        acc.add((next - pos) as f64 * diff * diff);
        pos = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    acc.value() / (ma64 * mb64) as f64
}

/// W2 between two weighted point sets on the line. Atoms need not be sorted;
/// weights are assumed to share the same total mass.
pub fn w2_weighted_1d(xa: &[f64], wa: &[f64], xb: &[f64], wb: &[f64]) -> Result<f64> {
    if xa.is_empty() || xb.is_empty() || xa.len() != wa.len() || xb.len() != wb.len() {
        return Err(Error::arg("atoms", "need nonempty atoms with one weight each"));
    }
    let sorted = |x: &[f64], w: &[f64]| {
        let mut v: Vec<(f64, f64)> = x.iter().copied().zip(w.iter().copied()).collect();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        v
    };
    let a = sorted(xa, wa);
    let b = sorted(xb, wb);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut acc = CompensatedSum::new();
    while i < a.len() && j < b.len() {
        let step = ra.min(rb);
        let diff = a[i].0 - b[j].0;
        acc.add(step * diff * diff);
        ra -= step;
        rb -= step;
        if ra <= 0.0 {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= 0.0 {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    Ok(acc.value().max(0.0).sqrt())
}

fn phi(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// Exact W2 between `N(mean, std^2)` on the line and an empirical measure.
///
/// On the quantile slab `(k/m, (k+1)/m)` with `z_k = Phi^{-1}(k/m)`:
/// `int Phi^{-1} = phi(z_k) - phi(z_{k+1})` and
/// `int (Phi^{-1})^2 = [Phi(z) - z phi(z)]_{z_k}^{z_{k+1}}`.
pub fn w2_gaussian_empirical_1d(mean: f64, std: f64, e: &Empirical1D) -> Result<f64> {
    if !(std >= 0.0 && std.is_finite() && mean.is_finite()) {
        return Err(Error::arg("std", "need a finite mean and a finite std >= 0"));
    }
    let xs = e.samples();
    let m = xs.len();
    let z_at = |k: usize| -> Result<f64> {
        Ok(match k {
            0 => f64::NEG_INFINITY,
            k if k == m => f64::INFINITY,
            k => normal::quantile(k as f64 / m as f64)?,
        })
    };
    // z phi(z) -> 0 at both ends
    let zphi = |z: f64| if z.is_finite() { z * phi(z) } else { 0.0 };
    let mut acc = CompensatedSum::new();
    let mut z_lo = z_at(0)?;
    for (k, &x) in xs.iter().enumerate() {
        let z_hi = z_at(k + 1)?;
        let c = x - mean;
        let len = 1.0 / m as f64;
        let first = phi(z_lo) - phi(z_hi);
        // Phi(z_hi) - Phi(z_lo) written with upper tails for accuracy in the right tail
        let mass = upper_tail(z_lo) - upper_tail(z_hi);
        let second = mass - (zphi(z_hi) - zphi(z_lo));
        acc.add(c * c * len - 2.0 * c * std * first + std * std * second);
        z_lo = z_hi;
    }
    Ok(acc.value().max(0.0).sqrt())
}
