//! Brute-force reference for small discrete transport problems.
//!
//! Independent of the network simplex: tiny instances enumerate every basic
//! feasible solution of the transport polytope (each one is supported on a
//! spanning tree of the bipartite graph), larger ones up to 6x6 run a dense
//! two-phase tableau simplex with Bland's rule. Meant for tests and audits.

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

use super::squared_cost_matrix;

pub const ORACLE_MAX_SUPPORT: usize = 6;
const ENUMERATION_LIMIT: u128 = 200_000;

/// Exact W2 between two small discrete measures by brute force.
pub fn w2_discrete_oracle(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let (k1, k2) = (a.len(), b.len());
    if k1 > ORACLE_MAX_SUPPORT || k2 > ORACLE_MAX_SUPPORT {
        return Err(Error::OracleTooLarge { rows: k1, cols: k2 });
    }
    let cost = squared_cost_matrix(a, b);
    let objective = transport_oracle(a.weights(), b.weights(), &cost)?;
    Ok(objective.max(0.0).sqrt())
}

/// Minimum transport cost by enumeration or dense simplex.
pub fn transport_oracle(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<f64> {
    let (k1, k2) = (supply.len(), demand.len());
    if k1 == 1 {
        return Ok(demand.iter().zip(cost).map(|(w, c)| w * c).sum());
    }
    if k2 == 1 {
        return Ok(supply.iter().zip(cost).map(|(w, c)| w * c).sum());
    }
    if binomial((k1 * k2) as u128, (k1 + k2 - 1) as u128) <= ENUMERATION_LIMIT {
        enumerate_vertices(supply, demand, cost)
    } else {
        dense_simplex(supply, demand, cost)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Flow on a spanning-tree support, by peeling leaves. None if infeasible.
fn tree_flow(cells: &[usize], k1: usize, k2: usize, supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
    let nodes = k1 + k2;
    let mut residual: Vec<f64> = supply.iter().chain(demand).copied().collect();
    let mut degree = vec![0usize; nodes];
    let ends: Vec<(usize, usize)> = cells.iter().map(|&c| (c / k2, k1 + c % k2)).collect();
    for &(r, c) in &ends {
        degree[r] += 1;
        degree[c] += 1;
    }
    let mut flow = vec![0.0; cells.len()];
    let mut done = vec![false; cells.len()];
    for _ in 0..cells.len() {
        let (e, leaf) = ends.iter().enumerate().find_map(|(e, &(r, c))| {
            if done[e] {
                None
            } else if degree[r] == 1 {
                Some((e, r))
            } else if degree[c] == 1 {
                Some((e, c))
            } else {
                None
            }
        })?;
        let (r, c) = ends[e];
        let other = if leaf == r { c } else { r };
        let f = residual[leaf];
        if f < -1e-12 {
            return None;
        }
        flow[e] = f;
        residual[leaf] = 0.0;
        residual[other] -= f;
        degree[r] -= 1;
        degree[c] -= 1;
        done[e] = true;
    }
    Some(flow)
}

fn enumerate_vertices(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<f64> {
    let (k1, k2) = (supply.len(), demand.len());
    let cells = k1 * k2;
    let size = k1 + k2 - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(size);

    fn recurse(
        start: usize,
        cells: usize,
        size: usize,
        chosen: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if chosen.len() == size {
            visit(chosen);
            return;
        }
        for c in start..cells {
            if cells - c < size - chosen.len() {
                break;
            }
            chosen.push(c);
            recurse(c + 1, cells, size, chosen, visit);
            chosen.pop();
        }
    }

    let mut visit = |support: &[usize]| {
        let mut parent: Vec<usize> = (0..k1 + k2).collect();
        for &c in support {
            let (r, col) = (find(&mut parent, c / k2), find(&mut parent, k1 + c % k2));
            if r == col {
                return;
            }
            parent[r] = col;
        }
        if let Some(flow) = tree_flow(support, k1, k2, supply, demand) {
            let value: f64 = support.iter().zip(&flow).map(|(&c, f)| f * cost[c]).sum();
            best = best.min(value);
        }
    };
    recurse(0, cells, size, &mut chosen, &mut visit);
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Solver("oracle found no feasible vertex".into()))
    }
}

const TABLEAU_EPS: f64 = 1e-12;

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, k: usize) {
        let p = self.rows[r][k];
        for x in self.rows[r].iter_mut() {
            *x /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r && row[k] != 0.0 {
                let f = row[k];
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
            }
        }
        self.basis[r] = k;
    }

    /// Bland's-rule simplex minimizing `objective` over the allowed columns.
    fn run(&mut self, objective: &[f64], allowed: &[bool]) -> Result<()> {
        let rhs = self.width;
        for _ in 0..100_000 {
            let entering = (0..rhs).find(|&k| {
                allowed[k] && !self.basis.contains(&k) && {
                    let z: f64 = self.basis.iter().zip(&self.rows).map(|(&b, row)| objective[b] * row[k]).sum();
                    objective[k] - z < -TABLEAU_EPS
                }
            });
            let Some(k) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[k] > TABLEAU_EPS {
                    let ratio = row[rhs] / row[k];
                    let better = match leave {
                        None => true,
                        Some((lr, lv)) => {
                            ratio < lv - TABLEAU_EPS
                                || (ratio <= lv + TABLEAU_EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Solver("oracle LP is unbounded".into()));
            };
            self.pivot(r, k);
        }
        Err(Error::Solver("oracle LP did not terminate".into()))
    }
}

fn dense_simplex(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<f64> {
    let (k1, k2) = (supply.len(), demand.len());
    let nx = k1 * k2;
    // row constraints for every i, column constraints for all but the last j
    let m = k1 + k2 - 1;
    let width = nx + m;
    let mut rows = vec![vec![0.0; width + 1]; m];
    for i in 0..k1 {
        for j in 0..k2 {
            rows[i][i * k2 + j] = 1.0;
        }
        rows[i][width] = supply[i];
    }
    for j in 0..k2 - 1 {
        for i in 0..k1 {
            rows[k1 + j][i * k2 + j] = 1.0;
        }
        rows[k1 + j][width] = demand[j];
    }
    for (r, row) in rows.iter_mut().enumerate() {
        row[nx + r] = 1.0;
    }
    let mut t = Tableau {
        rows,
        basis: (nx..width).collect(),
        width,
    };
    let phase1: Vec<f64> = (0..width).map(|k| if k >= nx { 1.0 } else { 0.0 }).collect();
    t.run(&phase1, &vec![true; width])?;
    let infeasibility: f64 = t.basis.iter().zip(&t.rows).filter(|(&b, _)| b >= nx).map(|(_, r)| r[width]).sum();
    if infeasibility > 1e-9 {
        return Err(Error::Solver("oracle LP is infeasible".into()));
    }
    // drive zero-level artificials out of the basis where possible
    for r in 0..m {
        if t.basis[r] >= nx {
            if let Some(k) = (0..nx).find(|&k| t.rows[r][k].abs() > TABLEAU_EPS) {
                t.pivot(r, k);
            }
        }
    }
    let mut phase2 = vec![0.0; width];
    phase2[..nx].copy_from_slice(cost);
    let allowed: Vec<bool> = (0..width).map(|k| k < nx).collect();
    t.run(&phase2, &allowed)?;
    Ok(t.basis
        .iter()
        .zip(&t.rows)
        .filter(|(&b, _)| b < nx)
        .map(|(&b, row)| cost[b] * row[width])
        .sum())
}
