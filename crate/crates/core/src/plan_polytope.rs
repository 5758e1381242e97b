//! Transport plans compatible with a path, and the polytope they form.
//!
//! A plan `q` is compatible with a path when it vanishes on pairs without a
//! route and, for every edge, the plan mass routed through the edge equals its
//! weight. These are linear equalities in the `k*l` entries of `q`; together
//! with `q >= 0` they cut out a polytope whose affine dimension is
//! `N + chi - (k + l)` for route-unique paths (`N` routes, Euler
//! characteristic `chi`).

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, AffineHull};
use crate::tolerance::Tolerances;
use crate::transport_graph::{RouteMatrix, TransportPath};

/// Dense `k x l` matrix of quantities; entry `(i, j)` is the amount of good
/// `i` delivered to consumer `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    k: usize,
    l: usize,
    data: Vec<f64>,
}

impl TransportPlan {
    pub fn zeros(k: usize, l: usize) -> Self {
        TransportPlan {
            k,
            l,
            data: vec![0.0; k * l],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        let l = rows.first().map_or(0, Vec::len);
        if k == 0 || l == 0 || rows.iter().any(|r| r.len() != l) {
            return Err(Error::DimensionMismatch {
                expected: "non-empty rectangular matrix".into(),
                found: format!("{k} ragged rows"),
            });
        }
        if rows.iter().flatten().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidGraph("plan entries must be finite and nonnegative".into()));
        }
        Ok(TransportPlan {
            k,
            l,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Row-major entries; negative values are clamped to zero.
    pub(crate) fn from_flat(k: usize, l: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), k * l);
        TransportPlan {
            k,
            l,
            data: data.into_iter().map(|x| x.max(0.0)).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.k, self.l)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.l + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.l + j] = value;
    }

    /// Row-major view of the entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        TransportPlan {
            k: self.k,
            l: self.l,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// Consumer `j`'s bundle.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.k).map(|i| self.get(i, j)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.k)
            .map(|i| (0..self.l).map(|j| self.get(i, j)).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.l)
            .map(|j| (0..self.k).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.l).map(<[f64]>::to_vec).collect()
    }

    pub fn max_abs_diff(&self, other: &TransportPlan) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    fn check_shape(&self, k: usize, l: usize) -> Result<()> {
        if self.shape() != (k, l) {
            return Err(Error::DimensionMismatch {
                expected: format!("{k}x{l} plan"),
                found: format!("{}x{}", self.k, self.l),
            });
        }
        Ok(())
    }
}

impl Serialize for TransportPlan {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransportPlan {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        TransportPlan::from_rows(rows).map_err(D::Error::custom)
    }
}

/// One edge equation: the plan mass over `pairs` must equal `rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeEquation {
    pub edge: usize,
    pub pairs: Vec<(usize, usize)>,
    pub rhs: f64,
}

/// Linear description of the compatible plans, plus optional utility floors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSystem {
    k: usize,
    l: usize,
    zero_routes: Vec<(usize, usize)>,
    equations: Vec<EdgeEquation>,
    floors: Option<Vec<f64>>,
    reference: Option<TransportPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub compatible: bool,
    /// Pairs without a route but with positive mass in the plan.
    pub unrouted_mass: Vec<(usize, usize, f64)>,
    /// `sum over routes through e of q_ij - w(e)`, per edge.
    pub edge_residuals: Vec<f64>,
    pub max_residual: f64,
}

fn equations_for(g: &TransportPath, routes: &RouteMatrix) -> Vec<EdgeEquation> {
    (0..g.edges().len())
        .map(|e| EdgeEquation {
            edge: e,
            pairs: routes.pairs_through_edge(e),
            rhs: g.edges()[e].weight,
        })
        .collect()
}

fn absent_pairs(routes: &RouteMatrix) -> Vec<(usize, usize)> {
    let (k, l) = routes.shape();
    let mut out = Vec::new();
    for i in 0..k {
        for j in 0..l {
            if !routes.is_present(i, j) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Checks `q_ij = 0` off the routes and every edge equation at `q`.
pub fn compatibility_check(g: &TransportPath, q: &TransportPlan, tol: f64) -> Result<CompatibilityReport> {
    let routes = g.route_matrix()?;
    let (k, l) = routes.shape();
    q.check_shape(k, l)?;
    let unrouted_mass: Vec<(usize, usize, f64)> = absent_pairs(&routes)
        .into_iter()
        .map(|(i, j)| (i, j, q.get(i, j)))
        .filter(|(_, _, m)| m.abs() > tol)
        .collect();
    let edge_residuals: Vec<f64> = equations_for(g, &routes)
        .iter()
        .map(|eq| eq.pairs.iter().map(|&(i, j)| q.get(i, j)).sum::<f64>() - eq.rhs)
        .collect();
    let max_residual = edge_residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    Ok(CompatibilityReport {
        compatible: unrouted_mass.is_empty() && max_residual <= tol,
        unrouted_mass,
        edge_residuals,
        max_residual,
    })
}

/// Constraint system of the plans compatible with `g` that agree with the
/// reference plan `q_bar` on every edge. Edge right-hand sides are recomputed
/// from `q_bar`.
pub fn build_constraints(
    g: &TransportPath,
    q_bar: &TransportPlan,
    floors: Option<Vec<f64>>,
    tol: &Tolerances,
) -> Result<ConstraintSystem> {
    let routes = g.route_matrix()?;
    let (k, l) = routes.shape();
    q_bar.check_shape(k, l)?;
    if let Some(f) = &floors {
        if f.len() != l {
            return Err(Error::DimensionMismatch {
                expected: format!("{l} utility floors"),
                found: format!("{}", f.len()),
            });
        }
    }
    let zero_routes = absent_pairs(&routes);
    if let Some(&(i, j)) = zero_routes.iter().find(|&&(i, j)| q_bar.get(i, j) > tol.balance) {
        return Err(Error::IncompatiblePair(format!(
            "plan ships {} from source {i} to sink {j} but the path has no such route",
            q_bar.get(i, j)
        )));
    }
    let mut equations = equations_for(g, &routes);
    for eq in &mut equations {
        let routed: f64 = eq.pairs.iter().map(|&(i, j)| q_bar.get(i, j)).sum();
        if (routed - eq.rhs).abs() > tol.balance {
            return Err(Error::IncompatiblePair(format!(
                "edge {} carries {} but the plan routes {routed} through it",
                eq.edge, eq.rhs
            )));
        }
        eq.rhs = routed;
    }
    Ok(ConstraintSystem {
        k,
        l,
        zero_routes,
        equations,
        floors,
        reference: Some(q_bar.clone()),
    })
}

impl ConstraintSystem {
    /// Edge equations with the path's own weights and no reference plan.
    pub fn structural(g: &TransportPath) -> Result<Self> {
        let routes = g.route_matrix()?;
        let (k, l) = routes.shape();
        Ok(ConstraintSystem {
            k,
            l,
            zero_routes: absent_pairs(&routes),
            equations: equations_for(g, &routes),
            floors: None,
            reference: None,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.k, self.l)
    }

    pub fn zero_routes(&self) -> &[(usize, usize)] {
        &self.zero_routes
    }

    pub fn equations(&self) -> &[EdgeEquation] {
        &self.equations
    }

    pub fn floors(&self) -> Option<&[f64]> {
        self.floors.as_deref()
    }

    pub fn reference(&self) -> Option<&TransportPlan> {
        self.reference.as_ref()
    }

    /// Dense rows over the `k*l` row-major variables: edge equations followed
    /// by one unit row per absent route.
    pub(crate) fn equality_rows(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.k * self.l;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for eq in &self.equations {
            let mut row = vec![0.0; n];
            for &(i, j) in &eq.pairs {
                row[i * self.l + j] = 1.0;
            }
            rows.push(row);
            rhs.push(eq.rhs);
        }
        for &(i, j) in &self.zero_routes {
            let mut row = vec![0.0; n];
            row[i * self.l + j] = 1.0;
            rows.push(row);
            rhs.push(0.0);
        }
        (rows, rhs)
    }

    /// Affine hull of the equalities, anchored at the reference plan if any.
    pub(crate) fn affine_hull(&self, tol: &Tolerances) -> Result<AffineHull> {
        let (rows, rhs) = self.equality_rows();
        let anchor = self.reference.as_ref().map(TransportPlan::as_slice);
        AffineHull::from_equations(&rows, &rhs, self.k * self.l, anchor, tol.rank)
            .ok_or(Error::LpInfeasible)
    }

    /// True when `q` satisfies every equality within `tol`.
    pub fn satisfies_equalities(&self, q: &TransportPlan, tol: f64) -> bool {
        self.zero_routes.iter().all(|&(i, j)| q.get(i, j).abs() <= tol)
            && self.equations.iter().all(|eq| {
                (eq.pairs.iter().map(|&(i, j)| q.get(i, j)).sum::<f64>() - eq.rhs).abs() <= tol
            })
    }
}

/// `k*l - #zero routes - rank(edge equations)`, the affine dimension of the
/// compatible plans.
pub fn polytope_dimension_rank(cs: &ConstraintSystem, tol: &Tolerances) -> usize {
    let n = cs.k * cs.l;
    let rows: Vec<Vec<f64>> = cs
        .equations
        .iter()
        .map(|eq| {
            let mut row = vec![0.0; n];
            for &(i, j) in &eq.pairs {
                row[i * cs.l + j] = 1.0;
            }
            row
        })
        .collect();
    n - cs.zero_routes.len() - linalg::rank(&rows, n, tol.rank)
}

/// `N(G) + chi(G) - (k + l)`.
pub fn polytope_dimension_formula(g: &TransportPath) -> Result<i64> {
    let routes = g.route_matrix()?;
    let (k, l) = routes.shape();
    Ok(routes.present_count() as i64 + g.euler_characteristic() - (k + l) as i64)
}

/// True when the reference plan lies in the relative interior of the
/// compatible plans: every coordinate that can move inside the affine hull is
/// strictly positive. A zero-dimensional hull is vacuously interior.
pub fn interior_point_test(cs: &ConstraintSystem, tol: &Tolerances) -> Result<bool> {
    let q_bar = cs.reference.as_ref().ok_or_else(|| {
        Error::IncompatiblePair("interior test needs a reference plan".into())
    })?;
    let hull = cs.affine_hull(tol)?;
    Ok(hull
        .varying_coordinates(tol.rank)
        .into_iter()
        .all(|c| q_bar.as_slice()[c] > tol.interior))
}

/// Vertices of `{compatible plans} ∩ {q >= 0}` by basis enumeration in the
/// coordinates of the affine hull.
pub fn vertices(cs: &ConstraintSystem, tol: &Tolerances) -> Result<Vec<TransportPlan>> {
    let hull = cs.affine_hull(tol)?;
    let d = hull.dim();
    if d > tol.max_vertex_dim {
        return Err(Error::DimensionTooLarge {
            dim: d,
            cap: tol.max_vertex_dim,
        });
    }
    let n = hull.ambient();
    let feasible = |x: &[f64]| x.iter().all(|&v| v >= -tol.balance);
    if d == 0 {
        return Ok(if feasible(&hull.point) {
            vec![TransportPlan::from_flat(cs.k, cs.l, hull.point.clone())]
        } else {
            Vec::new()
        });
    }
    // each facet candidate is a coordinate that moves on the hull
    let facets = hull.varying_coordinates(tol.rank);
    let rows: Vec<Vec<f64>> = facets.iter().map(|&c| hull.coordinate_row(c)).collect();
    let mut found: Vec<Vec<f64>> = Vec::new();
    for subset in combinations(facets.len(), d) {
        let a: Vec<Vec<f64>> = subset.iter().map(|&s| rows[s].clone()).collect();
        if linalg::rank(&a, d, tol.rank) < d {
            continue;
        }
        let b: Vec<f64> = subset.iter().map(|&s| -hull.point[facets[s]]).collect();
        let Some(z) = linalg::solve(&a, &b) else {
            continue;
        };
        let mut x = hull.at(&z);
        if !feasible(&x) {
            continue;
        }
        for v in x.iter_mut() {
            if v.abs() <= tol.balance {
                *v = 0.0;
            }
        }
        if !found
            .iter()
            .any(|y| y.iter().zip(&x).all(|(p, q)| (p - q).abs() <= tol.balance.max(1e-9)))
        {
            found.push(x);
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    debug_assert!(found.iter().all(|x| x.len() == n));
    Ok(found
        .into_iter()
        .map(|x| TransportPlan::from_flat(cs.k, cs.l, x))
        .collect())
}

/// All `r`-subsets of `0..n` in lexicographic order.
pub(crate) fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if r > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..r).rev().find(|&i| idx[i] < n - r + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport_graph::fixtures::*;
    use crate::transport_graph::{hub_path, AtomicMeasure};

    fn q_bar() -> TransportPlan {
        TransportPlan::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap()
    }

    fn swapped() -> TransportPlan {
        TransportPlan::from_rows(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap()
    }

    fn quarter() -> TransportPlan {
        TransportPlan::from_rows(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn plan_accessors() {
        let q = TransportPlan::from_rows(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(q.row_sums(), vec![6.0, 15.0]);
        assert_eq!(q.col_sums(), vec![5.0, 7.0, 9.0]);
        assert_eq!(q.column(1), vec![2.0, 5.0]);
        assert_eq!(q.total(), 21.0);
        assert_eq!(serde_json::to_string(&q).unwrap(), "[[1.0,2.0,3.0],[4.0,5.0,6.0]]");
        assert!(TransportPlan::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(TransportPlan::from_rows(vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn trunk_equations() {
        let cs = build_constraints(&g2(), &q_bar(), None, &tol()).unwrap();
        assert!(cs.zero_routes().is_empty());
        let mut eqs: Vec<(Vec<(usize, usize)>, f64)> =
            cs.equations().iter().map(|e| (e.pairs.clone(), e.rhs)).collect();
        eqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = vec![
            (vec![(0, 0), (0, 1)], 0.5),
            (vec![(0, 0), (0, 1), (1, 0), (1, 1)], 1.0),
            (vec![(0, 0), (1, 0)], 0.5),
            (vec![(0, 1), (1, 1)], 0.5),
            (vec![(1, 0), (1, 1)], 0.5),
        ];
        assert_eq!(eqs, expected);
    }

    #[test]
    fn direct_pairing_equations() {
        let cs = build_constraints(&g1(), &q_bar(), None, &tol()).unwrap();
        assert_eq!(cs.zero_routes(), &[(0, 1), (1, 0)]);
        let eqs: Vec<(Vec<(usize, usize)>, f64)> =
            cs.equations().iter().map(|e| (e.pairs.clone(), e.rhs)).collect();
        assert_eq!(eqs, vec![(vec![(0, 0)], 0.5), (vec![(1, 1)], 0.5)]);
    }

    #[test]
    fn hub_equations_are_marginals() {
        let (a, b) = measures();
        let hub = hub_path(&a, &b, &[0.5, 1.5]).unwrap();
        let cs = build_constraints(&hub, &q_bar(), None, &tol()).unwrap();
        assert!(cs.zero_routes().is_empty());
        assert_eq!(cs.equations().len(), 4);
        for eq in cs.equations() {
            assert_eq!(eq.pairs.len(), 2);
            assert_eq!(eq.rhs, 0.5);
        }
    }

    #[test]
    fn compatibility() {
        assert!(compatibility_check(&g2(), &q_bar(), 1e-9).unwrap().compatible);
        assert!(compatibility_check(&g2(), &swapped(), 1e-9).unwrap().compatible);
        let report = compatibility_check(&g1(), &swapped(), 1e-9).unwrap();
        assert!(!report.compatible);
        assert_eq!(report.unrouted_mass.len(), 2);
        assert!(matches!(
            build_constraints(&g1(), &swapped(), None, &tol()),
            Err(Error::IncompatiblePair(_))
        ));
        let wrong = TransportPlan::zeros(3, 2);
        assert!(matches!(
            compatibility_check(&g2(), &wrong, 1e-9),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dimensions() {
        let t = tol();
        let cs1 = build_constraints(&g1(), &q_bar(), None, &t).unwrap();
        let cs2 = build_constraints(&g2(), &q_bar(), None, &t).unwrap();
        assert_eq!(polytope_dimension_rank(&cs1, &t), 0);
        assert_eq!(polytope_dimension_rank(&cs2, &t), 1);
        assert_eq!(polytope_dimension_formula(&g1()).unwrap(), 0);
        assert_eq!(polytope_dimension_formula(&g2()).unwrap(), 1);
        let (a, b) = measures();
        let hub = hub_path(&a, &b, &[0.5, 1.5]).unwrap();
        let cs = build_constraints(&hub, &q_bar(), None, &t).unwrap();
        assert_eq!(polytope_dimension_rank(&cs, &t), 1);
        assert_eq!(polytope_dimension_formula(&hub).unwrap(), 1);
    }

    #[test]
    fn hub_dimension_is_product() {
        let t = tol();
        for (k, l) in [(2, 3), (3, 3), (3, 2), (1, 3)] {
            let a = AtomicMeasure::new((0..k).map(|i| (vec![0.0, i as f64], 1.0 / k as f64)).collect())
                .unwrap();
            let b = AtomicMeasure::new((0..l).map(|j| (vec![2.0, j as f64], 1.0 / l as f64)).collect())
                .unwrap();
            let hub = hub_path(&a, &b, &[1.0, 0.5]).unwrap();
            let cs = ConstraintSystem::structural(&hub).unwrap();
            assert_eq!(polytope_dimension_rank(&cs, &t), (k - 1) * (l - 1));
            assert_eq!(polytope_dimension_formula(&hub).unwrap(), ((k - 1) * (l - 1)) as i64);
        }
    }

    #[test]
    fn interior_points() {
        let t = tol();
        let cs = build_constraints(&g2(), &q_bar(), None, &t).unwrap();
        assert!(!interior_point_test(&cs, &t).unwrap());
        let cs = build_constraints(&g2(), &quarter(), None, &t).unwrap();
        assert!(interior_point_test(&cs, &t).unwrap());
        let cs = build_constraints(&g1(), &q_bar(), None, &t).unwrap();
        assert!(interior_point_test(&cs, &t).unwrap());
    }

    #[test]
    fn vertex_enumeration() {
        let t = tol();
        let cs = build_constraints(&g2(), &q_bar(), None, &t).unwrap();
        let vs = vertices(&cs, &t).unwrap();
        assert_eq!(vs.len(), 2);
        assert!(vs.iter().any(|v| v.max_abs_diff(&q_bar()) < 1e-12));
        assert!(vs.iter().any(|v| v.max_abs_diff(&swapped()) < 1e-12));

        let cs = build_constraints(&g1(), &q_bar(), None, &t).unwrap();
        assert_eq!(vertices(&cs, &t).unwrap(), vec![q_bar()]);

        let (a, b) = measures();
        let hub = hub_path(&a, &b, &[0.5, 1.5]).unwrap();
        let cs = build_constraints(&hub, &quarter(), None, &t).unwrap();
        let vs = vertices(&cs, &t).unwrap();
        assert_eq!(vs.len(), 2);
        for v in &vs {
            assert!(compatibility_check(&hub, v, 1e-9).unwrap().compatible);
        }
    }

    #[test]
    fn vertex_cap() {
        let mut t = tol();
        t.max_vertex_dim = 0;
        let cs = build_constraints(&g2(), &q_bar(), None, &t).unwrap();
        assert_eq!(
            vertices(&cs, &t),
            Err(Error::DimensionTooLarge { dim: 1, cap: 0 })
        );
    }

    #[test]
    fn subsets() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert!(combinations(2, 3).is_empty());
    }
}
