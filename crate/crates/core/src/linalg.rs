//! Small dense routines: reduced row echelon form, rank, affine hulls.

use nalgebra::{DMatrix, DVector};

/// Reduced row echelon form of `[A | b]`.
pub(crate) struct Rref {
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub pivots: Vec<usize>,
    /// False when a zero row has nonzero right-hand side.
    pub consistent: bool,
}

/// Gauss-Jordan elimination with partial pivoting. Entries below
/// `tol * max(1, max |a_ij|)` are treated as zero.
pub(crate) fn rref(a: &[Vec<f64>], b: &[f64], ncols: usize, tol: f64) -> Rref {
    let mut rows: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(1.0_f64, |m, x| m.max(x.abs()));
    let eps = tol * scale;
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == rows.len() {
            break;
        }
        let (best, val) = (r..rows.len())
            .map(|i| (i, rows[i][c].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= eps {
            continue;
        }
        rows.swap(r, best);
        rhs.swap(r, best);
        let p = rows[r][c];
        for x in rows[r].iter_mut() {
            *x /= p;
        }
        rhs[r] /= p;
        let pivot_row = rows[r].clone();
        let pivot_rhs = rhs[r];
        for (i, (row, b)) in rows.iter_mut().zip(rhs.iter_mut()).enumerate() {
            let f = row[c];
            if i == r || f == 0.0 {
                continue;
            }
            row.iter_mut().zip(&pivot_row).for_each(|(x, y)| *x -= f * y);
            *b -= f * pivot_rhs;
        }
        pivots.push(c);
        r += 1;
    }
    let rhs_scale = rhs.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let consistent = rhs[r..].iter().all(|x| x.abs() <= tol * rhs_scale.max(scale) * 10.0);
    rows.truncate(r);
    rhs.truncate(r);
    Rref {
        rows,
        rhs,
        pivots,
        consistent,
    }
}

pub(crate) fn rank(a: &[Vec<f64>], ncols: usize, tol: f64) -> usize {
    rref(a, &vec![0.0; a.len()], ncols, tol).pivots.len()
}

/// `{ point + basis^T z }`, with an orthonormal basis.
#[derive(Debug, Clone)]
pub(crate) struct AffineHull {
    pub point: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

impl AffineHull {
    /// Solution set of `A x = b` in `R^n`. When `anchor` is given it is used as
    /// the base point; otherwise a particular solution is computed. Returns
    /// `None` for an inconsistent system.
    pub fn from_equations(
        a: &[Vec<f64>],
        b: &[f64],
        n: usize,
        anchor: Option<&[f64]>,
        tol: f64,
    ) -> Option<Self> {
        let red = rref(a, b, n, tol);
        if !red.consistent {
            return None;
        }
        let mut is_pivot = vec![false; n];
        for &p in &red.pivots {
            is_pivot[p] = true;
        }
        let point = match anchor {
            Some(x) => x.to_vec(),
            None => {
                let mut x = vec![0.0; n];
                for (row, &p) in red.pivots.iter().enumerate() {
                    x[p] = red.rhs[row];
                }
                x
            }
        };
        let mut basis = Vec::new();
        for f in (0..n).filter(|&c| !is_pivot[c]) {
            let mut v = vec![0.0; n];
            v[f] = 1.0;
            for (row, &p) in red.pivots.iter().enumerate() {
                v[p] = -red.rows[row][f];
            }
            basis.push(v);
        }
        orthonormalize(&mut basis, tol);
        Some(AffineHull { point, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn ambient(&self) -> usize {
        self.point.len()
    }

    pub fn at(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.point.clone();
        for (zi, v) in z.iter().zip(&self.basis) {
            for (xc, vc) in x.iter_mut().zip(v) {
                *xc += zi * vc;
            }
        }
        x
    }

    /// Row `c` of the basis matrix: how coordinate `c` moves with `z`.
    pub fn coordinate_row(&self, c: usize) -> Vec<f64> {
        self.basis.iter().map(|v| v[c]).collect()
    }

    /// Coordinates that are not constant on the hull.
    pub fn varying_coordinates(&self, tol: f64) -> Vec<usize> {
        (0..self.ambient())
            .filter(|&c| self.basis.iter().any(|v| v[c].abs() > tol))
            .collect()
    }

    /// Projects `x - point` onto the basis.
    pub fn coordinates_of(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|v| v.iter().zip(x).zip(&self.point).map(|((a, b), c)| a * (b - c)).sum())
            .collect()
    }
}

/// Modified Gram-Schmidt; drops vectors that become numerically dependent.
pub(crate) fn orthonormalize(vs: &mut Vec<Vec<f64>>, tol: f64) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for v in vs.drain(..) {
        let mut w = v;
        for _ in 0..2 {
            for u in &out {
                let d: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
                for (wc, uc) in w.iter_mut().zip(u) {
                    *wc -= d * uc;
                }
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > tol.max(1e-12) {
            w.iter_mut().for_each(|x| *x /= norm);
            out.push(w);
        }
    }
    *vs = out;
}

/// Solves a square system by LU; `None` when singular.
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let lu = m.lu();
    let x = lu.solve(&DVector::from_column_slice(b))?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}

/// Solves a symmetric positive definite system by Cholesky, falling back to LU.
pub(crate) fn solve_spd(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let m = DMatrix::from_row_slice(n, n, a);
    let rhs = DVector::from_column_slice(b);
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(&rhs).iter().copied().collect());
    }
    m.lu().solve(&rhs).map(|x| x.iter().copied().collect())
}
