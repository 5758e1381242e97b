//! Log-barrier maximization of total expenditure when some consumer has a
//! strictly quasiconcave (Cobb-Douglas or CES) utility.
//!
//! The search runs in coordinates `z` of the affine hull of the equality
//! constraints, `q = q_bar + B z` with orthonormal `B`. Before the barrier can
//! start it needs a point strictly inside every remaining inequality:
//!
//! 1. Linear inequalities (coordinate signs, linear floors) that are tight on
//!    the whole polytope are found by linear programming and promoted to
//!    equalities. Averaging the LP maximizers gives a relative-interior point.
//! 2. Nonlinear floors are relaxed by a common margin `s` and `s` is maximized.
//!    If the optimum is `s = 0`, the barrier multipliers certify a set of floors
//!    that are tight on the whole feasible set. A tight strictly quasiconcave
//!    floor fixes its bundle up to scaling, and compatibility fixes the bundle
//!    total, so those columns are pinned to `q_bar` and the procedure repeats.

use crate::economy::{Economy, UtilityFn};
use crate::error::{Error, Result};
use crate::linalg::{self, AffineHull};
use crate::plan_polytope::ConstraintSystem;
use crate::tolerance::Tolerances;

use super::simplex::LinearProgram;

/// Smallest margin `s` accepted as a strictly feasible start.
const MARGIN_FLOOR: f64 = 1e-8;
/// Multiplier above which a floor is treated as tight on the feasible set.
const TIGHT_MULTIPLIER: f64 = 1e-4;

#[derive(Debug, Clone)]
pub(crate) struct BarrierOutcome {
    pub q: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub pinned: Vec<usize>,
}

struct Linear {
    /// `c0 + a . z > 0`.
    a: Vec<f64>,
    c0: f64,
}

struct Model<'a> {
    k: usize,
    l: usize,
    hull: AffineHull,
    linear: Vec<Linear>,
    /// Consumers with a nonlinear floor, and the floor on the aggregate.
    floors: Vec<(usize, f64)>,
    kappa: &'a [f64],
    utilities: Vec<&'a UtilityFn>,
}

impl Model<'_> {
    fn d(&self) -> usize {
        self.hull.dim()
    }

    fn column(&self, q: &[f64], j: usize) -> Vec<f64> {
        (0..self.k).map(|i| q[i * self.l + j]).collect()
    }

    /// Gradient and Hessian in `z` of `scale * phi_j`.
    fn aggregate_in_z(&self, q: &[f64], j: usize, scale: f64, grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let col = self.column(q, j);
        let u = self.utilities[j];
        let value = u.aggregate(&col);
        let (g, h) = u.aggregate_derivatives(&col);
        let d = self.d();
        let rows: Vec<Vec<f64>> = (0..self.k)
            .map(|i| self.hull.coordinate_row(i * self.l + j))
            .collect();
        for i in 0..self.k {
            if g[i] == 0.0 {
                continue;
            }
            for t in 0..d {
                grad[t] += scale * g[i] * rows[i][t];
            }
        }
        for i in 0..self.k {
            for m in 0..self.k {
                let hv = h[i * self.k + m];
                if hv == 0.0 {
                    continue;
                }
                for a in 0..d {
                    if rows[i][a] == 0.0 {
                        continue;
                    }
                    for b in 0..d {
                        hess[a * d + b] += scale * hv * rows[i][a] * rows[m][b];
                    }
                }
            }
        }
        scale * value
    }

    fn linear_values(&self, z: &[f64]) -> Vec<f64> {
        self.linear
            .iter()
            .map(|c| c.c0 + c.a.iter().zip(z).map(|(x, y)| x * y).sum::<f64>())
            .collect()
    }

    fn margins(&self, q: &[f64]) -> Vec<f64> {
        self.floors
            .iter()
            .map(|&(j, floor)| self.utilities[j].aggregate(&self.column(q, j)) / floor - 1.0)
            .collect()
    }

    /// Adds `mu * sum log(linear)` to value, gradient and Hessian (`n` is the
    /// full variable count; linear terms only touch the first `d`).
    fn add_linear_barrier(&self, z: &[f64], mu: f64, n: usize, grad: &mut [f64], hess: &mut [f64]) -> Option<f64> {
        let mut value = 0.0;
        for (c, v) in self.linear.iter().zip(self.linear_values(z)) {
            if !(v > 0.0) {
                return None;
            }
            value += mu * v.ln();
            for a in 0..c.a.len() {
                grad[a] += mu * c.a[a] / v;
                for b in 0..c.a.len() {
                    hess[a * n + b] -= mu * c.a[a] * c.a[b] / (v * v);
                }
            }
        }
        Some(value)
    }

    /// Margin maximization: variables `(z, s)`, objective
    /// `s + mu (sum log linear + sum log(h_j - s))`.
    fn phase_one(&self, y: &[f64], mu: f64) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let d = self.d();
        let n = d + 1;
        let (z, s) = (&y[..d], y[d]);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        let mut value = s + self.add_linear_barrier(z, mu, n, &mut grad, &mut hess)?;
        grad[d] += 1.0;
        let q = self.hull.at(z);
        for &(j, floor) in &self.floors {
            let mut g = vec![0.0; d];
            let mut h = vec![0.0; d * d];
            let hj = self.aggregate_in_z(&q, j, 1.0 / floor, &mut g, &mut h) - 1.0;
            let gap = hj - s;
            if !(gap > 0.0) || !gap.is_finite() {
                return None;
            }
            value += mu * gap.ln();
            // gradient of the gap in (z, s) is (g, -1)
            let mut gg = g.clone();
            gg.push(-1.0);
            for a in 0..n {
                grad[a] += mu * gg[a] / gap;
                for b in 0..n {
                    hess[a * n + b] -= mu * gg[a] * gg[b] / (gap * gap);
                }
            }
            for a in 0..d {
                for b in 0..d {
                    hess[a * n + b] += mu * h[a * d + b] / gap;
                }
            }
        }
        Some((value, grad, hess))
    }

    /// Expenditure maximization: `S(z) / scale + mu (sum log linear + sum log h_j)`.
    fn phase_two(&self, z: &[f64], mu: f64, scale: f64) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let d = self.d();
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut value = self.add_linear_barrier(z, mu, d, &mut grad, &mut hess)?;
        let q = self.hull.at(z);
        for j in 0..self.l {
            if self.kappa[j] == 0.0 {
                continue;
            }
            value += self.aggregate_in_z(&q, j, self.kappa[j] / scale, &mut grad, &mut hess);
        }
        for &(j, floor) in &self.floors {
            let mut g = vec![0.0; d];
            let mut h = vec![0.0; d * d];
            let hj = self.aggregate_in_z(&q, j, 1.0 / floor, &mut g, &mut h) - 1.0;
            if !(hj > 0.0) || !hj.is_finite() {
                return None;
            }
            value += mu * hj.ln();
            for a in 0..d {
                grad[a] += mu * g[a] / hj;
                for b in 0..d {
                    hess[a * d + b] += mu * (h[a * d + b] / hj - g[a] * g[b] / (hj * hj));
                }
            }
        }
        if !value.is_finite() {
            return None;
        }
        Some((value, grad, hess))
    }
}

struct StageResult {
    x: Vec<f64>,
    iterations: usize,
    decrement: f64,
}

/// Damped Newton ascent on a concave function with backtracking. The oracle
/// returns `None` outside the domain.
fn newton<F>(f: F, x0: Vec<f64>, max_iter: usize) -> Result<StageResult>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)>,
{
    let mut x = x0;
    let (mut value, mut grad, mut hess) = f(&x).ok_or(Error::SolverStall {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    let n = x.len();
    for it in 0..max_iter {
        let neg: Vec<f64> = hess.iter().map(|h| -h).collect();
        let Some(step) = linalg::solve_spd(&neg, &grad) else {
            return Err(Error::SolverStall {
                iterations: it,
                residual: f64::INFINITY,
            });
        };
        let decrement = grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>().max(0.0);
        if decrement <= 1e-18 * (1.0 + value.abs()) {
            return Ok(StageResult { x, iterations: it, decrement });
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if let Some((v, g, h)) = f(&trial) {
                if v >= value + 0.25 * t * decrement {
                    x = trial;
                    value = v;
                    grad = g;
                    hess = h;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-14 {
                // no ascent possible at working precision
                return Ok(StageResult { x, iterations: it + 1, decrement });
            }
        }
        if decrement <= 1e-18 * n as f64 {
            return Ok(StageResult { x, iterations: it + 1, decrement });
        }
    }
    let neg: Vec<f64> = hess.iter().map(|h| -h).collect();
    let residual = linalg::solve_spd(&neg, &grad)
        .map(|s| grad.iter().zip(&s).map(|(g, s)| g * s).sum::<f64>())
        .unwrap_or(f64::INFINITY);
    if residual <= 1e-12 {
        return Ok(StageResult { x, iterations: max_iter, decrement: residual });
    }
    Err(Error::SolverStall { iterations: max_iter, residual })
}

fn schedule() -> impl Iterator<Item = f64> {
    (1..=9).map(|e| 10f64.powi(-e))
}

/// Maximizes total expenditure over the feasible plans of `cs`.
pub(crate) fn maximize(economy: &Economy, cs: &ConstraintSystem, kappa: &[f64], tol: &Tolerances) -> Result<BarrierOutcome> {
    let q_bar = cs
        .reference()
        .ok_or_else(|| Error::IncompatiblePair("valuation needs a reference plan".into()))?
        .as_slice()
        .to_vec();
    let (k, l) = cs.shape();
    let n = k * l;
    let utilities: Vec<&UtilityFn> = economy.consumers().iter().map(|c| &c.utility).collect();
    let floor_of = |j: usize| {
        let col: Vec<f64> = (0..k).map(|i| q_bar[i * l + j]).collect();
        utilities[j].aggregate(&col)
    };
    let (base_rows, base_rhs) = cs.equality_rows();
    let mut pinned: Vec<usize> = Vec::new();
    let mut iterations = 0;

    loop {
        let mut rows = base_rows.clone();
        let mut rhs = base_rhs.clone();
        for &j in &pinned {
            for i in 0..k {
                let mut row = vec![0.0; n];
                row[i * l + j] = 1.0;
                rows.push(row);
                rhs.push(q_bar[i * l + j]);
            }
        }
        // linear floors of linear utilities, as (row, rhs)
        let linear_floors: Vec<(Vec<f64>, f64)> = (0..l)
            .filter_map(|j| match utilities[j] {
                UtilityFn::Linear { coefficients } => {
                    let floor = floor_of(j);
                    (floor > 0.0).then(|| {
                        let mut row = vec![0.0; n];
                        for i in 0..k {
                            row[i * l + j] = coefficients[i];
                        }
                        (row, floor)
                    })
                }
                _ => None,
            })
            .collect();

        let hull = AffineHull::from_equations(&rows, &rhs, n, Some(&q_bar), tol.rank)
            .ok_or(Error::LpInfeasible)?;
        if hull.dim() == 0 {
            return Ok(BarrierOutcome { q: q_bar, iterations, residual: 0.0, pinned });
        }

        // promote linear inequalities that are tight on the whole polytope
        let mut lp = LinearProgram::new(n);
        lp.eq = rows.iter().cloned().zip(rhs.iter().copied()).collect();
        lp.ge = linear_floors.clone();
        let mut candidates: Vec<(Vec<f64>, f64)> = hull
            .varying_coordinates(tol.rank)
            .into_iter()
            .map(|c| {
                let mut row = vec![0.0; n];
                row[c] = 1.0;
                (row, 0.0)
            })
            .collect();
        candidates.extend(linear_floors.iter().cloned());
        let mut interior = q_bar.clone();
        let mut samples = 1.0;
        let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
        let scale = q_bar.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        for (row, b) in candidates {
            let sol = lp.maximize(&row)?;
            if sol.objective - b <= 1e-9 * scale {
                rows.push(row);
                rhs.push(b);
            } else {
                interior.iter_mut().zip(&sol.x).for_each(|(a, x)| *a += x);
                samples += 1.0;
                kept.push((row, b));
            }
        }
        interior.iter_mut().for_each(|x| *x /= samples);

        let hull = AffineHull::from_equations(&rows, &rhs, n, Some(&q_bar), tol.rank)
            .ok_or(Error::LpInfeasible)?;
        let d = hull.dim();
        if d == 0 {
            return Ok(BarrierOutcome { q: q_bar, iterations, residual: 0.0, pinned });
        }
        let linear: Vec<Linear> = kept
            .iter()
            .filter(|(row, _)| {
                // rows that no longer move on the reduced hull are constant and positive
                hull.basis.iter().any(|v| v.iter().zip(row).map(|(a, b)| a * b).sum::<f64>().abs() > tol.rank)
            })
            .map(|(row, b)| Linear {
                a: hull.basis.iter().map(|v| v.iter().zip(row).map(|(x, y)| x * y).sum()).collect(),
                c0: row.iter().zip(&hull.point).map(|(x, y)| x * y).sum::<f64>() - b,
            })
            .collect();
        let floors: Vec<(usize, f64)> = (0..l)
            .filter(|j| utilities[*j].is_strictly_quasiconcave() && !pinned.contains(j))
            .map(|j| (j, floor_of(j)))
            .filter(|&(_, f)| f > 0.0)
            .collect();
        let model = Model {
            k,
            l,
            hull,
            linear,
            floors,
            kappa,
            utilities: utilities.clone(),
        };
        let mut z = model.hull.coordinates_of(&interior);

        if !model.floors.is_empty() {
            let start_margin = model
                .margins(&model.hull.at(&z))
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            if !(start_margin > MARGIN_FLOOR) {
                let mut y = z.clone();
                y.push(start_margin - 1.0);
                let mut tight = Vec::new();
                let mut last_mu = 1.0;
                for mu in schedule() {
                    let stage = newton(|y| model.phase_one(y, mu), y, tol.max_iter)?;
                    iterations += stage.iterations;
                    y = stage.x;
                    last_mu = mu;
                    if y[d] > 1e-3 {
                        break;
                    }
                }
                if y[d] > MARGIN_FLOOR {
                    z = y[..d].to_vec();
                } else {
                    let s = y[d];
                    let margins = model.margins(&model.hull.at(&y[..d]));
                    let weights: Vec<f64> = margins.iter().map(|h| last_mu / (h - s)).collect();
                    let top = weights.iter().fold(0.0_f64, |m, w| m.max(*w));
                    for (w, &(j, _)) in weights.iter().zip(&model.floors) {
                        if *w > TIGHT_MULTIPLIER || *w == top {
                            tight.push(j);
                        }
                    }
                    pinned.extend(tight);
                    pinned.sort_unstable();
                    pinned.dedup();
                    continue;
                }
            }
        }

        let s_ref = kappa
            .iter()
            .enumerate()
            .map(|(j, kj)| kj * floor_of(j))
            .sum::<f64>()
            .abs()
            .max(1e-12);
        let mut residual = 0.0;
        for mu in schedule() {
            let stage = newton(|z| model.phase_two(z, mu, s_ref), z, tol.max_iter)?;
            iterations += stage.iterations;
            residual = stage.decrement;
            z = stage.x;
        }
        return Ok(BarrierOutcome {
            q: model.hull.at(&z),
            iterations,
            residual,
            pinned,
        });
    }
}
