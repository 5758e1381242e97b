//! Dense two-phase tableau simplex with Bland's rule, sized for the small
//! programs that arise over transport plans (tens of variables).

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

/// `A_eq x = b_eq`, `A_ge x >= b_ge`, `x >= 0`.
#[derive(Debug, Clone, Default)]
pub(crate) struct LinearProgram {
    pub n: usize,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub ge: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        LinearProgram {
            n,
            eq: Vec::new(),
            ge: Vec::new(),
        }
    }

    pub fn with_ge(&self, row: Vec<f64>, rhs: f64) -> Self {
        let mut lp = self.clone();
        lp.ge.push((row, rhs));
        lp
    }

    pub fn maximize(&self, c: &[f64]) -> Result<LpSolution> {
        Tableau::new(self).solve(c)
    }

    /// Among the maximizers of `c . x`, the lexicographically smallest.
    pub fn maximize_lex_min(&self, c: &[f64]) -> Result<LpSolution> {
        let first = self.maximize(c)?;
        let slack = 1e-12 * first.objective.abs().max(1.0);
        let mut lp = self.with_ge(c.to_vec(), first.objective - slack);
        let mut pivots = first.pivots;
        let mut x = first.x;
        for v in 0..self.n {
            let mut unit = vec![0.0; self.n];
            unit[v] = -1.0;
            let sol = lp.maximize(&unit)?;
            pivots += sol.pivots;
            let low = -sol.objective;
            let mut cap = vec![0.0; self.n];
            cap[v] = -1.0;
            lp = lp.with_ge(cap, -(low + 1e-13));
            x = sol.x;
        }
        let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            x,
            objective,
            pivots,
        })
    }
}

struct Tableau {
    n: usize,
    /// Structural plus slack columns; artificials follow.
    real: usize,
    /// Row length including the right-hand side; fixed even if rows are dropped.
    width: usize,
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let m = lp.eq.len() + lp.ge.len();
        let real = lp.n + lp.ge.len();
        let width = real + m + 1;
        let mut rows = Vec::with_capacity(m);
        for (r, (a, b)) in lp.eq.iter().chain(&lp.ge).enumerate() {
            let mut row = vec![0.0; width];
            row[..lp.n].copy_from_slice(a);
            if r >= lp.eq.len() {
                row[lp.n + r - lp.eq.len()] = -1.0;
            }
            row[width - 1] = *b;
            if *b < 0.0 {
                row.iter_mut().for_each(|x| *x = -*x);
            }
            row[real + r] = 1.0;
            rows.push(row);
        }
        Tableau {
            n: lp.n,
            real,
            width,
            rows,
            basis: (real..real + m).collect(),
            pivots: 0,
        }
    }

    fn width(&self) -> usize {
        self.width
    }

    fn pivot(&mut self, r: usize, c: usize, z: &mut [f64]) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|x| *x /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(x, y)| *x -= f * y);
            }
        }
        let f = z[c];
        if f != 0.0 {
            z.iter_mut().zip(&pivot_row).for_each(|(x, y)| *x -= f * y);
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Pivots until the reduced-cost row `z` is nonnegative over the allowed
    /// columns. `z` holds `z_c - c_c`; its last entry is the objective value.
    fn run(&mut self, z: &mut [f64], allowed: usize) -> Result<()> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::SolverStall {
                    iterations: self.pivots,
                    residual: f64::NAN,
                });
            }
            let Some(c) = (0..allowed).find(|&c| z[c] < -PIVOT_EPS) else {
                return Ok(());
            };
            let last = self.width() - 1;
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[c] > PIVOT_EPS {
                    let ratio = row[last] / row[c];
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - 1e-14
                                || (ratio <= bratio + 1e-14 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::LpUnbounded);
            };
            self.pivot(r, c, z);
        }
    }

    fn solve(mut self, c: &[f64]) -> Result<LpSolution> {
        let width = self.width();
        let last = width - 1;

        // phase one: maximize minus the sum of artificials
        let mut z = vec![0.0; width];
        z[self.real..last].iter_mut().for_each(|x| *x = 1.0);
        for row in &self.rows {
            z.iter_mut().zip(row).for_each(|(x, y)| *x -= y);
        }
        self.run(&mut z, last)?;
        let scale = self.rows.iter().fold(1.0_f64, |m, r| m.max(r[last].abs()));
        if -z[last] > FEAS_EPS * scale {
            return Err(Error::LpInfeasible);
        }

        // drive artificials out of the basis; rows that cannot pivot are redundant
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= self.real {
                if let Some(col) = (0..self.real).find(|&col| self.rows[r][col].abs() > 1e-9) {
                    self.pivot(r, col, &mut z);
                } else {
                    self.rows.remove(r);
                    self.basis.remove(r);
                    continue;
                }
            }
            r += 1;
        }

        // phase two over structural and slack columns only
        let mut z = vec![0.0; width];
        for (col, cost) in c.iter().enumerate() {
            z[col] = -cost;
        }
        for (r, &b) in self.basis.iter().enumerate() {
            let f = z[b];
            if f != 0.0 {
                z.iter_mut().zip(&self.rows[r]).for_each(|(x, y)| *x -= f * y);
            }
        }
        self.run(&mut z, self.real)?;

        let mut x = vec![0.0; self.n];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                x[b] = self.rows[r][last].max(0.0);
            }
        }
        let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            x,
            objective,
            pivots: self.pivots,
        })
    }
}
