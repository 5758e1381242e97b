//! Total expenditure over a plan, the exchange value of a transport path, and
//! the criteria that decide its sign without solving.
//!
//! The exchange value is `max S(q) - S(q_bar)` over the feasible plans: plans
//! compatible with the path that leave every consumer at least as well off as
//! under `q_bar`. `S(q) = sum_j e_j(p_j, 1) * phi_j(q_j)` with `phi_j` the
//! degree-one aggregate of consumer `j`'s utility, so `S` is concave and a
//! positive combination of aggregates.

mod barrier;
mod criteria;
pub(crate) mod simplex;

use serde::Serialize;

use crate::economy::{expenditure, Economy, UtilityFn};
use crate::error::{Error, Result};
use crate::plan_polytope::{build_constraints, ConstraintSystem, TransportPlan};
use crate::tolerance::Tolerances;
use crate::transport_graph::TransportPath;

pub use criteria::{
    all_criteria, criterion_collinear_prices, criterion_disjoint_routes, criterion_positive,
    criterion_quantity_only, Conclusion, CriterionReport,
};

use simplex::LinearProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Uniqueness {
    Unique,
    NonUnique,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Every utility is linear or depends on total quantity only.
    LinearProgram,
    LogBarrier,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub backend: Backend,
    pub iterations: usize,
    /// Newton decrement of the last barrier stage; zero for linear programs.
    pub residual: f64,
    /// Affine dimension of the compatible plans.
    pub dimension: usize,
    /// Consumers whose bundle is forced to equal the reference bundle.
    pub pinned_consumers: Vec<usize>,
    /// True when a value within the optimality tolerance was reported as zero.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValuationResult {
    #[serde(rename = "V")]
    pub value: f64,
    #[serde(rename = "q_star")]
    pub maximizer: TransportPlan,
    /// `S(q_bar)`.
    pub reference_expenditure: f64,
    /// `S(q_star)`.
    pub optimal_expenditure: f64,
    pub uniqueness: Uniqueness,
    pub diagnostics: Diagnostics,
}

fn check_plan_shape(economy: &Economy, q: &TransportPlan) -> Result<()> {
    let expected = (economy.num_goods(), economy.num_consumers());
    if q.shape() != expected {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} plan", expected.0, expected.1),
            found: format!("{}x{}", q.shape().0, q.shape().1),
        });
    }
    Ok(())
}

/// `S(q) = sum_j e_j(p_j, u_j(q_j))`.
pub fn total_expenditure(economy: &Economy, q: &TransportPlan) -> Result<f64> {
    check_plan_shape(economy, q)?;
    economy
        .consumers()
        .iter()
        .enumerate()
        .map(|(j, c)| expenditure(&c.utility, &c.prices, c.utility.eval(&q.column(j))))
        .sum()
}

/// `e_j(p_j, 1)` for every consumer.
pub(crate) fn unit_costs(economy: &Economy) -> Vec<f64> {
    economy
        .consumers()
        .iter()
        .map(|c| c.utility.unit_expenditure(&c.prices))
        .collect()
}

fn piecewise_linear(economy: &Economy) -> bool {
    economy.consumers().iter().all(|c| c.utility.is_piecewise_linear())
}

/// Linear program over plans: equalities of `cs`, `q >= 0` and the floors of
/// linear utilities. Floors of quantity-only utilities are implied by
/// compatibility, which fixes every bundle total.
fn linear_program(economy: &Economy, cs: &ConstraintSystem, q_bar: &TransportPlan) -> (LinearProgram, Vec<f64>) {
    let (k, l) = cs.shape();
    let n = k * l;
    let mut lp = LinearProgram::new(n);
    let (rows, rhs) = cs.equality_rows();
    lp.eq = rows.into_iter().zip(rhs).collect();
    let kappa = unit_costs(economy);
    let mut objective = vec![0.0; n];
    for (j, c) in economy.consumers().iter().enumerate() {
        match &c.utility {
            UtilityFn::Linear { coefficients } => {
                let mut row = vec![0.0; n];
                for i in 0..k {
                    row[i * l + j] = coefficients[i];
                    objective[i * l + j] = kappa[j] * coefficients[i];
                }
                let floor = c.utility.eval(&q_bar.column(j));
                lp.ge.push((row, floor));
            }
            _ => {
                for i in 0..k {
                    objective[i * l + j] = kappa[j];
                }
            }
        }
    }
    (lp, objective)
}

/// Exchange value of `g` for the economy with reference plan `q_bar`.
pub fn exchange_value(
    economy: &Economy,
    g: &TransportPath,
    q_bar: &TransportPlan,
    tol: &Tolerances,
) -> Result<ValuationResult> {
    check_plan_shape(economy, q_bar)?;
    if (g.num_sources(), g.num_sinks()) != q_bar.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("path with {} sources and {} sinks", q_bar.shape().0, q_bar.shape().1),
            found: format!("{} sources and {} sinks", g.num_sources(), g.num_sinks()),
        });
    }
    let floors = economy.utility_levels(q_bar);
    let cs = build_constraints(g, q_bar, Some(floors), tol)?;
    valuate(economy, &cs, tol)
}

/// Exchange value over a prepared constraint system with a reference plan.
pub fn valuate(economy: &Economy, cs: &ConstraintSystem, tol: &Tolerances) -> Result<ValuationResult> {
    let q_bar = cs
        .reference()
        .ok_or_else(|| Error::IncompatiblePair("valuation needs a reference plan".into()))?
        .clone();
    check_plan_shape(economy, &q_bar)?;
    let (k, l) = q_bar.shape();
    let dimension = crate::plan_polytope::polytope_dimension_rank(cs, tol);

    let (backend, candidate, iterations, residual, pinned) = if piecewise_linear(economy) {
        let (lp, c) = linear_program(economy, cs, &q_bar);
        let sol = lp.maximize_lex_min(&c)?;
        (Backend::LinearProgram, sol.x, sol.pivots, 0.0, Vec::new())
    } else {
        let out = barrier::maximize(economy, cs, &unit_costs(economy), tol)?;
        (Backend::LogBarrier, out.q, out.iterations, out.residual, out.pinned)
    };

    let reference_expenditure = total_expenditure(economy, &q_bar)?;
    let mut maximizer = TransportPlan::from_flat(k, l, candidate);
    let mut optimal_expenditure = total_expenditure(economy, &maximizer)?;
    // the reference plan is always feasible; never report a worse point
    if optimal_expenditure < reference_expenditure {
        maximizer = q_bar.clone();
        optimal_expenditure = reference_expenditure;
    }
    let mut value = optimal_expenditure - reference_expenditure;
    let clamped = value != 0.0 && value.abs() < tol.opt;
    if clamped {
        value = 0.0;
    }
    let mut result = ValuationResult {
        value,
        maximizer,
        reference_expenditure,
        optimal_expenditure,
        uniqueness: Uniqueness::Unknown,
        diagnostics: Diagnostics {
            backend,
            iterations,
            residual,
            dimension,
            pinned_consumers: pinned,
            clamped,
        },
    };
    result.uniqueness = probe(economy, cs, &result, tol);
    Ok(result)
}

/// Whether the maximizer set is a single plan.
pub fn uniqueness_probe(
    economy: &Economy,
    g: &TransportPath,
    q_bar: &TransportPlan,
    result: &ValuationResult,
    tol: &Tolerances,
) -> Result<Uniqueness> {
    let floors = economy.utility_levels(q_bar);
    let cs = build_constraints(g, q_bar, Some(floors), tol)?;
    Ok(probe(economy, &cs, result, tol))
}

/// Maximizers share every strictly quasiconcave column: on a segment of
/// maximizers each concave term of `S` is affine, which for these aggregates
/// forces collinear bundles, and equal bundle totals then force equality. So
/// the maximizer set is the optimal face of a linear program in which those
/// columns are pinned, and it is a singleton iff every coordinate has zero
/// range over that face.
fn probe(economy: &Economy, cs: &ConstraintSystem, result: &ValuationResult, tol: &Tolerances) -> Uniqueness {
    let consumers = economy.consumers();
    if consumers.iter().all(|c| c.utility.is_strictly_quasiconcave()) {
        return Uniqueness::Unique;
    }
    let Some(q_bar) = cs.reference() else {
        return Uniqueness::Unknown;
    };
    let (k, l) = cs.shape();
    let q_star = &result.maximizer;
    let (mut lp, mut c) = linear_program(economy, cs, q_bar);
    for (j, consumer) in consumers.iter().enumerate() {
        if !consumer.utility.is_strictly_quasiconcave() {
            continue;
        }
        if consumer.utility.aggregate(&q_star.column(j)) <= 0.0 {
            // the aggregate is flat on this column, so it may move
            return Uniqueness::Unknown;
        }
        for i in 0..k {
            let mut row = vec![0.0; k * l];
            row[i * l + j] = 1.0;
            lp.eq.push((row, q_star.get(i, j)));
            c[i * l + j] = 0.0;
        }
    }
    let opt: f64 = c.iter().zip(q_star.as_slice()).map(|(a, b)| a * b).sum();
    let slack = 1e-12 * opt.abs().max(1.0);
    let face = lp.with_ge(c, opt - slack);
    let spread = tol.opt.max(1e-9);
    for v in 0..k * l {
        let mut unit = vec![0.0; k * l];
        unit[v] = 1.0;
        let Ok(hi) = face.maximize(&unit) else {
            return Uniqueness::Unknown;
        };
        unit[v] = -1.0;
        let Ok(lo) = face.maximize(&unit) else {
            return Uniqueness::Unknown;
        };
        if hi.objective + lo.objective > spread {
            return Uniqueness::NonUnique;
        }
    }
    Uniqueness::Unique
}
