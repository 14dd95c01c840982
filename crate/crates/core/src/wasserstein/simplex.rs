//! Network simplex for the bipartite transportation problem.
//!
//! The basis is a spanning tree over the `k1 + k2` row and column nodes with
//! `k1 + k2 - 1` basic cells (degenerate zero-flow cells included). It starts
//! from the north-west corner rule. Node potentials are recomputed from the
//! tree after every pivot, so the final potentials form a dual certificate:
//! reduced costs are zero on basic cells and nonnegative (up to the pricing
//! tolerance) everywhere else.
//!
//! Pricing uses block search. After a run of degenerate pivots the solver
//! switches to Bland's rule (smallest improving cell, smallest tied leaving
//! cell), which cannot cycle, and switches back after the next
//! non-degenerate pivot.

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Optimal flow together with its dual potentials.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub rows: usize,
    pub cols: usize,
    /// `rows x cols`, row-major.
    pub plan: Vec<f64>,
    pub objective: f64,
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    row: usize,
    col: usize,
    flow: f64,
}

struct Tree {
    parent: Vec<usize>,
    parent_edge: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
    queue: Vec<usize>,
    seen: Vec<bool>,
}

const NONE: usize = usize::MAX;

impl Tree {
    fn new(nodes: usize) -> Self {
        Self {
            parent: vec![NONE; nodes],
            parent_edge: vec![NONE; nodes],
            depth: vec![0; nodes],
            potential: vec![0.0; nodes],
            queue: Vec::with_capacity(nodes),
            seen: vec![false; nodes],
        }
    }
}

struct Solver<'a> {
    rows: usize,
    cols: usize,
    cost: &'a [f64],
    basis: Vec<Cell>,
    // per node, indices into `basis`
    adjacency: Vec<Vec<usize>>,
    tree: Tree,
    tolerance: f64,
    block: usize,
    next_cell: usize,
}

impl<'a> Solver<'a> {
    fn node_of_col(&self, col: usize) -> usize {
        self.rows + col
    }

    fn cost_at(&self, row: usize, col: usize) -> f64 {
        self.cost[row * self.cols + col]
    }

    fn north_west(&mut self, supply: &[f64], demand: &[f64]) {
        let (mut s, mut d) = (supply.to_vec(), demand.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let q = s[i].min(d[j]).max(0.0);
            self.push_basic(Cell { row: i, col: j, flow: q });
            s[i] -= q;
            d[j] -= q;
            if i == self.rows - 1 && j == self.cols - 1 {
                break;
            }
            if j == self.cols - 1 || (i < self.rows - 1 && s[i] <= d[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    fn push_basic(&mut self, cell: Cell) {
        let idx = self.basis.len();
        self.basis.push(cell);
        self.adjacency[cell.row].push(idx);
        let c = self.node_of_col(cell.col);
        self.adjacency[c].push(idx);
    }

    fn rebuild_tree(&mut self) -> Result<()> {
        let nodes = self.rows + self.cols;
        let t = &mut self.tree;
        t.seen.iter_mut().for_each(|s| *s = false);
        t.queue.clear();
        t.queue.push(0);
        t.seen[0] = true;
        t.parent[0] = NONE;
        t.parent_edge[0] = NONE;
        t.depth[0] = 0;
        t.potential[0] = 0.0;
        let mut head = 0;
        while head < t.queue.len() {
            let v = t.queue[head];
            head += 1;
            for &e in &self.adjacency[v] {
                let cell = self.basis[e];
                let (r, c) = (cell.row, self.rows + cell.col);
                let w = if v == r { c } else { r };
                if t.seen[w] {
                    continue;
                }
                t.seen[w] = true;
                t.parent[w] = v;
                t.parent_edge[w] = e;
                t.depth[w] = t.depth[v] + 1;
                t.potential[w] = self.cost[cell.row * self.cols + cell.col] - t.potential[v];
                t.queue.push(w);
            }
        }
        if t.queue.len() != nodes {
            return Err(Error::Solver("basis is not a spanning tree".into()));
        }
        Ok(())
    }

    fn reduced_cost(&self, row: usize, col: usize) -> f64 {
        self.cost_at(row, col) - self.tree.potential[row] - self.tree.potential[self.rows + col]
    }

    /// Block search: scan blocks of cells starting where the last search
    /// stopped and return the most negative reduced cost in the first block
    /// that has one.
    fn price_block(&mut self) -> Option<(usize, usize)> {
        let total = self.rows * self.cols;
        let mut best: Option<(usize, f64)> = None;
        let mut scanned = 0;
        let mut in_block = 0;
        let mut k = self.next_cell;
        while scanned < total {
            let (r, c) = (k / self.cols, k % self.cols);
            let rc = self.reduced_cost(r, c);
            if rc < -self.tolerance && best.is_none_or(|(_, b)| rc < b) {
                best = Some((k, rc));
            }
            scanned += 1;
            in_block += 1;
            k += 1;
            if k == total {
                k = 0;
            }
            if in_block == self.block {
                if best.is_some() {
                    break;
                }
                in_block = 0;
            }
        }
        self.next_cell = k;
        best.map(|(k, _)| (k / self.cols, k % self.cols))
    }

    fn price_bland(&self) -> Option<(usize, usize)> {
        (0..self.rows * self.cols)
            .map(|k| (k / self.cols, k % self.cols))
            .find(|&(r, c)| self.reduced_cost(r, c) < -self.tolerance)
    }

    /// Tree path from the column node of the entering cell back to its row
    /// node, as basis indices. Signs along this path alternate starting with
    /// minus.
    fn cycle(&self, row: usize, col: usize) -> Vec<usize> {
        let t = &self.tree;
        let (mut u, mut w) = (row, self.rows + col);
        let mut from_w = Vec::new();
        let mut from_u = Vec::new();
        while t.depth[w] > t.depth[u] {
            from_w.push(t.parent_edge[w]);
            w = t.parent[w];
        }
        while t.depth[u] > t.depth[w] {
            from_u.push(t.parent_edge[u]);
            u = t.parent[u];
        }
        while u != w {
            from_w.push(t.parent_edge[w]);
            w = t.parent[w];
            from_u.push(t.parent_edge[u]);
            u = t.parent[u];
        }
        from_w.extend(from_u.into_iter().rev());
        from_w
    }

    fn cell_index(&self, e: usize) -> usize {
        self.basis[e].row * self.cols + self.basis[e].col
    }

    /// Returns true when the pivot moved a positive amount of flow.
    fn pivot(&mut self, row: usize, col: usize, bland: bool) -> bool {
        let path = self.cycle(row, col);
        let mut theta = f64::INFINITY;
        let mut leaving = NONE;
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 1 {
                continue;
            }
            let f = self.basis[e].flow;
            let better = f < theta
                || (f == theta && bland && self.cell_index(e) < self.cell_index(leaving));
            if better {
                theta = f;
                leaving = e;
            }
        }
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 {
                self.basis[e].flow -= theta;
            } else {
                self.basis[e].flow += theta;
            }
        }
        let old = self.basis[leaving];
        let (old_r, old_c) = (old.row, self.rows + old.col);
        self.adjacency[old_r].retain(|&x| x != leaving);
        self.adjacency[old_c].retain(|&x| x != leaving);
        self.basis[leaving] = Cell { row, col, flow: theta };
        self.adjacency[row].push(leaving);
        let c = self.rows + col;
        self.adjacency[c].push(leaving);
        theta > 0.0
    }
}

/// Solves `min <plan, cost>` over plans with row sums `supply` and column
/// sums `demand`. `cost` is `supply.len() x demand.len()`, row-major.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    let (rows, cols) = (supply.len(), demand.len());
    if rows == 0 || cols == 0 || cost.len() != rows * cols {
        return Err(Error::arg("cost", "shape does not match the marginals"));
    }
    let scale = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let mut solver = Solver {
        rows,
        cols,
        cost,
        basis: Vec::with_capacity(rows + cols - 1),
        adjacency: vec![Vec::new(); rows + cols],
        tree: Tree::new(rows + cols),
        tolerance: 1e-12 * scale.max(f64::MIN_POSITIVE),
        block: ((rows * cols) as f64).sqrt().ceil().max(10.0) as usize,
        next_cell: 0,
    };
    solver.north_west(supply, demand);
    solver.rebuild_tree()?;

    let max_pivots = 50 * rows * cols + 10_000;
    let stall_limit = 2 * (rows + cols);
    let mut degenerate_run = 0;
    let mut pivots = 0;
    loop {
        let bland = degenerate_run >= stall_limit;
        let entering = if bland {
            solver.price_bland()
        } else {
            solver.price_block()
        };
        let Some((r, c)) = entering else { break };
        if solver.pivot(r, c, bland) {
            degenerate_run = 0;
        } else {
            degenerate_run += 1;
        }
        solver.rebuild_tree()?;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Solver(format!("no convergence after {pivots} pivots")));
        }
    }

    let mut plan = vec![0.0; rows * cols];
    for cell in &solver.basis {
        plan[cell.row * cols + cell.col] = cell.flow;
    }
    let objective = plan
        .iter()
        .zip(cost)
        .map(|(p, c)| p * c)
        .collect::<CompensatedSum>()
        .value();
    Ok(TransportSolution {
        rows,
        cols,
        plan,
        objective,
        row_potentials: solver.tree.potential[..rows].to_vec(),
        col_potentials: solver.tree.potential[rows..].to_vec(),
        pivots,
    })
}
