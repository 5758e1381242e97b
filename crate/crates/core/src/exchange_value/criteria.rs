//! Sufficient conditions for a zero or a positive exchange value.

use serde::Serialize;
use serde_json::{json, Value};

use crate::economy::{Economy, UtilityFn};
use crate::error::Result;
use crate::plan_polytope::{
    build_constraints, interior_point_test, polytope_dimension_formula, ConstraintSystem, TransportPlan,
};
use crate::tolerance::Tolerances;
use crate::transport_graph::TransportPath;

use super::simplex::LinearProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    /// `V(G) = 0` for the path (or for every compatible path).
    ZeroForced,
    PositiveGuaranteed,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub criterion: &'static str,
    /// True when the hypotheses hold and the conclusion is not inconclusive.
    pub applies: bool,
    pub conclusion: Conclusion,
    pub witness: Value,
    pub detail: String,
}

impl CriterionReport {
    fn new(criterion: &'static str, conclusion: Conclusion, witness: Value, detail: impl Into<String>) -> Self {
        CriterionReport {
            criterion,
            applies: conclusion != Conclusion::Inconclusive,
            conclusion,
            witness,
            detail: detail.into(),
        }
    }
}

/// Utilities that depend only on the total quantity leave no room for
/// exchange: compatibility fixes every bundle total.
pub fn criterion_quantity_only(economy: &Economy) -> CriterionReport {
    let other: Vec<&str> = economy
        .consumers()
        .iter()
        .filter(|c| !matches!(c.utility, UtilityFn::QuantityOnly { .. }))
        .map(|c| c.id.as_str())
        .collect();
    if other.is_empty() {
        CriterionReport::new(
            "quantity_only",
            Conclusion::ZeroForced,
            Value::Null,
            "every utility depends on total quantity only",
        )
    } else {
        CriterionReport::new(
            "quantity_only",
            Conclusion::Inconclusive,
            json!({ "other_consumers": other }),
            "some utility distinguishes goods",
        )
    }
}

/// Collinear price vectors `p_j = lambda_j p_1` force a zero value for every
/// compatible path. One good or one consumer is always collinear.
pub fn criterion_collinear_prices(economy: &Economy, tol: &Tolerances) -> CriterionReport {
    let p1 = &economy.consumers()[0].prices;
    let norm2: f64 = p1.iter().map(|x| x * x).sum();
    let mut lambdas = Vec::new();
    for c in economy.consumers() {
        let lambda = c.prices.iter().zip(p1).map(|(a, b)| a * b).sum::<f64>() / norm2;
        let off = c
            .prices
            .iter()
            .zip(p1)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let size = c.prices.iter().map(|x| x * x).sum::<f64>().sqrt();
        if off > tol.collinear * size {
            return CriterionReport::new(
                "collinear_prices",
                Conclusion::Inconclusive,
                json!({ "consumer": c.id, "relative_deviation": off / size }),
                "price vectors are not collinear",
            );
        }
        lambdas.push(lambda);
    }
    CriterionReport::new(
        "collinear_prices",
        Conclusion::ZeroForced,
        json!({ "lambda": lambdas }),
        "price vectors are positive multiples of the first consumer's",
    )
}

/// Routes `g_{i1 j2}` and `g_{i2 j1}` sharing no vertex, for every pair of
/// distinct sources and distinct sinks, make the reference plan the only
/// compatible plan. Absent routes have no vertices.
pub fn criterion_disjoint_routes(g: &TransportPath) -> Result<CriterionReport> {
    let routes = g.route_matrix()?;
    let (k, l) = routes.shape();
    for i1 in 0..k {
        for i2 in 0..k {
            if i1 == i2 {
                continue;
            }
            for j1 in 0..l {
                for j2 in 0..l {
                    if j1 == j2 {
                        continue;
                    }
                    if let Some(v) = routes.shared_vertex((i1, j2), (i2, j1)) {
                        return Ok(CriterionReport::new(
                            "disjoint_routes",
                            Conclusion::Inconclusive,
                            json!({
                                "sources": [i1, i2],
                                "sinks": [j1, j2],
                                "shared_vertex": g.vertices()[v].id,
                            }),
                            "two crossing routes share a vertex",
                        ));
                    }
                }
            }
        }
    }
    Ok(CriterionReport::new(
        "disjoint_routes",
        Conclusion::ZeroForced,
        Value::Null,
        "crossing routes are pairwise vertex-disjoint, so the reference plan is the only feasible plan",
    ))
}

/// Positivity via either of two sufficient conditions.
///
/// (a) Every utility is Cobb-Douglas or CES, the compatible plans form a
/// polytope of positive dimension with the reference plan in its relative
/// interior, and some direction in that polytope raises, to first order, the
/// aggregate of every consumer whose bundle it moves. The last requirement is
/// checked by linear programming over the gradients at the reference plan.
///
/// (b) Two sources and two sinks whose crossing routes meet, with prices
/// favouring the swap for both consumers, positive reference entries, positive
/// marginal utilities satisfying the first-order conditions at the reference
/// bundles, and a swap direction that preserves every edge equation.
pub fn criterion_positive(
    economy: &Economy,
    g: &TransportPath,
    q_bar: &TransportPlan,
    tol: &Tolerances,
) -> Result<CriterionReport> {
    let cs = build_constraints(g, q_bar, Some(economy.utility_levels(q_bar)), tol)?;
    if let Some(report) = positive_by_direction(economy, g, &cs, q_bar, tol)? {
        return Ok(report);
    }
    if let Some(report) = positive_by_swap(economy, g, &cs, q_bar, tol)? {
        return Ok(report);
    }
    Ok(CriterionReport::new(
        "positive",
        Conclusion::Inconclusive,
        Value::Null,
        "neither positivity condition holds",
    ))
}

fn positive_by_direction(
    economy: &Economy,
    g: &TransportPath,
    cs: &ConstraintSystem,
    q_bar: &TransportPlan,
    tol: &Tolerances,
) -> Result<Option<CriterionReport>> {
    if !economy.consumers().iter().all(|c| c.utility.is_strictly_quasiconcave()) {
        return Ok(None);
    }
    if polytope_dimension_formula(g)? <= 0 || !interior_point_test(cs, tol)? {
        return Ok(None);
    }
    let (k, l) = q_bar.shape();
    if l > 12 {
        return Ok(None);
    }
    let hull = cs.affine_hull(tol)?;
    let d = hull.dim();
    let grads: Vec<Vec<f64>> = (0..l)
        .map(|j| {
            let (grad, _) = economy.consumers()[j].utility.aggregate_derivatives(&q_bar.column(j));
            grad
        })
        .collect();
    // rate of change of phi_j along z, and coordinates of column j, as rows in z
    let column_rows = |j: usize| -> Vec<Vec<f64>> {
        (0..k).map(|i| hull.coordinate_row(i * l + j)).collect()
    };
    let rate = |j: usize| -> Vec<f64> {
        let rows = column_rows(j);
        (0..d)
            .map(|t| (0..k).map(|i| grads[j][i] * rows[i][t]).sum())
            .collect()
    };
    // z = z_plus - z_minus with both nonnegative
    let split = |row: &[f64]| -> Vec<f64> { row.iter().copied().chain(row.iter().map(|x| -x)).collect() };
    for mask in 1u32..(1 << l) {
        let mut lp = LinearProgram::new(2 * d);
        for j in 0..l {
            if mask & (1 << j) != 0 {
                lp.ge.push((split(&rate(j)), 1.0));
            } else {
                for row in column_rows(j) {
                    if row.iter().any(|x| x.abs() > tol.rank) {
                        lp.eq.push((split(&row), 0.0));
                    }
                }
            }
        }
        // bounded box keeps the feasibility problem well posed
        for t in 0..2 * d {
            let mut row = vec![0.0; 2 * d];
            row[t] = -1.0;
            lp.ge.push((row, -1e6));
        }
        if let Ok(sol) = lp.maximize(&vec![0.0; 2 * d]) {
            let z: Vec<f64> = (0..d).map(|t| sol.x[t] - sol.x[t + d]).collect();
            let q = hull.at(&z);
            let direction: Vec<Vec<f64>> = (0..k)
                .map(|i| (0..l).map(|j| q[i * l + j] - q_bar.get(i, j)).collect())
                .collect();
            let moved: Vec<usize> = (0..l).filter(|j| mask & (1 << j) != 0).collect();
            return Ok(Some(CriterionReport::new(
                "positive",
                Conclusion::PositiveGuaranteed,
                json!({
                    "condition": "interior",
                    "dimension": hull.dim(),
                    "improving_direction": direction,
                    "moved_consumers": moved,
                }),
                "reference plan is interior to a positive-dimensional polytope containing a jointly improving direction",
            )));
        }
    }
    Ok(None)
}

fn has_positive_partials(u: &UtilityFn, column: &[f64], goods: [usize; 2]) -> bool {
    match u {
        UtilityFn::Linear { coefficients } => goods.iter().all(|&i| coefficients[i] > 0.0),
        UtilityFn::CobbDouglas { .. } | UtilityFn::Ces { .. } => column.iter().all(|&x| x > 0.0),
        UtilityFn::QuantityOnly { .. } => column.iter().sum::<f64>() > 0.0,
    }
}

fn positive_by_swap(
    economy: &Economy,
    g: &TransportPath,
    cs: &ConstraintSystem,
    q_bar: &TransportPlan,
    tol: &Tolerances,
) -> Result<Option<CriterionReport>> {
    let routes = g.route_matrix()?;
    let (k, l) = q_bar.shape();
    let consumers = economy.consumers();
    let foc_holds = |j: usize, i1: usize, i2: usize| {
        let c = &consumers[j];
        let col = q_bar.column(j);
        if !has_positive_partials(&c.utility, &col, [i1, i2]) {
            return false;
        }
        let grad = c.utility.gradient(&col);
        let (r1, r2) = (grad[i1] / c.prices[i1], grad[i2] / c.prices[i2]);
        r1 > 0.0 && r2 > 0.0 && (r1 - r2).abs() <= tol.numeric * r1.max(r2)
    };
    for i1 in 0..k {
        for i2 in 0..k {
            if i1 == i2 {
                continue;
            }
            for j1 in 0..l {
                for j2 in 0..l {
                    if j1 == j2 {
                        continue;
                    }
                    let p = |i: usize, j: usize| consumers[j].prices[i];
                    if !(p(i2, j1) > p(i1, j1) && p(i1, j2) > p(i2, j2)) {
                        continue;
                    }
                    let Some(shared) = routes.shared_vertex((i1, j2), (i2, j1)) else {
                        continue;
                    };
                    let cells = [(i1, j1), (i1, j2), (i2, j1), (i2, j2)];
                    if cells.iter().any(|&(i, j)| q_bar.get(i, j) <= tol.interior) {
                        continue;
                    }
                    if !foc_holds(j1, i1, i2) || !foc_holds(j2, i1, i2) {
                        continue;
                    }
                    // the swap -e at (i1,j1),(i2,j2) and +e at (i1,j2),(i2,j1) must keep every edge equation
                    let sign = |i: usize, j: usize| -> f64 {
                        if (i, j) == (i1, j1) || (i, j) == (i2, j2) {
                            -1.0
                        } else if (i, j) == (i1, j2) || (i, j) == (i2, j1) {
                            1.0
                        } else {
                            0.0
                        }
                    };
                    let preserves = cs
                        .equations()
                        .iter()
                        .all(|eq| eq.pairs.iter().map(|&(i, j)| sign(i, j)).sum::<f64>() == 0.0)
                        && cells.iter().all(|&(i, j)| routes.is_present(i, j));
                    if !preserves {
                        continue;
                    }
                    return Ok(Some(CriterionReport::new(
                        "positive",
                        Conclusion::PositiveGuaranteed,
                        json!({
                            "condition": "crossing_prices",
                            "sources": [i1, i2],
                            "sinks": [j1, j2],
                            "shared_vertex": g.vertices()[shared].id,
                            "prices": {
                                "p_i2_j1": p(i2, j1), "p_i1_j1": p(i1, j1),
                                "p_i1_j2": p(i1, j2), "p_i2_j2": p(i2, j2),
                            },
                        }),
                        "crossing routes meet and prices favour swapping goods between the two consumers",
                    )));
                }
            }
        }
    }
    Ok(None)
}

/// Every criterion for the economy, path and reference plan.
pub fn all_criteria(
    economy: &Economy,
    g: &TransportPath,
    q_bar: &TransportPlan,
    tol: &Tolerances,
) -> Result<Vec<CriterionReport>> {
    Ok(vec![
        criterion_quantity_only(economy),
        criterion_collinear_prices(economy, tol),
        criterion_disjoint_routes(g)?,
        criterion_positive(economy, g, q_bar, tol)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::super::tests::intro_economy;
    use super::*;
    use crate::economy::{Consumer, Good, QuantityTransform};
    use crate::transport_graph::fixtures::{g1, g2, measures};
    use crate::transport_graph::hub_path;

    fn economy_with(prices: [[f64; 2]; 2], utilities: [UtilityFn; 2]) -> Economy {
        let [u1, u2] = utilities;
        Economy::new(
            2,
            vec![
                Good { id: "x1".into(), location: vec![0.0, 0.0] },
                Good { id: "x2".into(), location: vec![0.0, 3.0] },
            ],
            vec![
                Consumer { id: "y1".into(), location: vec![1.0, 0.0], wealth: 1.0, prices: prices[0].to_vec(), utility: u1 },
                Consumer { id: "y2".into(), location: vec![1.0, 3.0], wealth: 1.0, prices: prices[1].to_vec(), utility: u2 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn quantity_only_verdicts() {
        let q = UtilityFn::quantity_only(QuantityTransform::Identity);
        let e = economy_with([[1.0, 2.0], [3.0, 1.0]], [q.clone(), q]);
        assert_eq!(criterion_quantity_only(&e).conclusion, Conclusion::ZeroForced);
        assert_eq!(criterion_quantity_only(&intro_economy()).conclusion, Conclusion::Inconclusive);
    }

    #[test]
    fn collinear_verdicts() {
        let u = UtilityFn::linear(vec![1.0, 1.0]);
        let e = economy_with([[1.0, 2.0], [2.0, 4.0]], [u.clone(), u]);
        let r = criterion_collinear_prices(&e, &Tolerances::default());
        assert_eq!(r.conclusion, Conclusion::ZeroForced);
        assert_eq!(r.witness["lambda"][1], 2.0);
        let r = criterion_collinear_prices(&intro_economy(), &Tolerances::default());
        assert_eq!(r.conclusion, Conclusion::Inconclusive);
    }

    #[test]
    fn disjoint_verdicts() {
        assert_eq!(criterion_disjoint_routes(&g1()).unwrap().conclusion, Conclusion::ZeroForced);
        assert_eq!(criterion_disjoint_routes(&g2()).unwrap().conclusion, Conclusion::Inconclusive);
        let (a, b) = measures();
        let hub = hub_path(&a, &b, &[0.5, 1.5]).unwrap();
        let r = criterion_disjoint_routes(&hub).unwrap();
        assert_eq!(r.conclusion, Conclusion::Inconclusive);
        assert_eq!(r.witness["shared_vertex"], "hub");
    }

    #[test]
    fn positive_verdicts() {
        let t = Tolerances::default();
        let e = intro_economy();
        let q_bar = e.demand_profile().unwrap().plan;
        assert_eq!(criterion_positive(&e, &g2(), &q_bar, &t).unwrap().conclusion, Conclusion::Inconclusive);
        assert_eq!(criterion_positive(&e, &g1(), &q_bar, &t).unwrap().conclusion, Conclusion::Inconclusive);

        let e = economy_with(
            [[1.0, 3.0], [3.0, 1.0]],
            [UtilityFn::cobb_douglas(vec![1.0, 2.0]), UtilityFn::cobb_douglas(vec![2.0, 1.0])],
        );
        let q_bar = e.demand_profile().unwrap().plan;
        let (a, b) = (e.demand_profile().unwrap().sources, e.demand_profile().unwrap().sinks);
        let hub = hub_path(&a, &b, &[0.5, 1.5]).unwrap();
        let r = criterion_positive(&e, &hub, &q_bar, &t).unwrap();
        assert_eq!(r.conclusion, Conclusion::PositiveGuaranteed);
    }

    #[test]
    fn interior_but_collinear_is_not_positive() {
        // the interior condition alone does not imply a positive value
        let t = Tolerances::default();
        let e = economy_with(
            [[1.0, 2.0], [2.0, 4.0]],
            [UtilityFn::cobb_douglas(vec![1.0, 2.0]), UtilityFn::cobb_douglas(vec![2.0, 1.0])],
        );
        let profile = e.demand_profile().unwrap();
        let hub = hub_path(&profile.sources, &profile.sinks, &[0.5, 1.5]).unwrap();
        let r = criterion_positive(&e, &hub, &profile.plan, &t).unwrap();
        assert_eq!(r.conclusion, Conclusion::Inconclusive);
    }
}
