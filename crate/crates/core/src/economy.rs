//! Consumers, goods and the two dual consumer problems.
//!
//! Every supported utility family is homogeneous, so each one exposes a
//! degree-one *aggregate* `u^(1/degree)`. The expenditure function factors as
//! `e(p, level) = e(p, 1) * level^(1/degree)` and total expenditure over a plan
//! is a positive combination of aggregates, which is what the valuation
//! solvers work with.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan_polytope::TransportPlan;
use crate::transport_graph::AtomicMeasure;

/// Strictly increasing scalar map applied to the total quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum QuantityTransform {
    Identity,
    Power { exponent: f64 },
}

impl QuantityTransform {
    fn apply(&self, total: f64) -> f64 {
        match *self {
            QuantityTransform::Identity => total,
            QuantityTransform::Power { exponent } => total.powf(exponent),
        }
    }

    fn degree(&self) -> f64 {
        match *self {
            QuantityTransform::Identity => 1.0,
            QuantityTransform::Power { exponent } => exponent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum UtilityFn {
    /// `sum_i c_i q_i`
    Linear { coefficients: Vec<f64> },
    /// `prod_i q_i^tau_i`
    CobbDouglas { exponents: Vec<f64> },
    /// `(sum_i gamma_i q_i^tau)^(beta / tau)` with `tau` in (0, 1).
    Ces {
        weights: Vec<f64>,
        exponent: f64,
        degree: f64,
    },
    /// `f(sum_i q_i)`
    QuantityOnly { transform: QuantityTransform },
}

impl UtilityFn {
    pub fn linear(coefficients: impl Into<Vec<f64>>) -> Self {
        UtilityFn::Linear {
            coefficients: coefficients.into(),
        }
    }

    pub fn cobb_douglas(exponents: impl Into<Vec<f64>>) -> Self {
        UtilityFn::CobbDouglas {
            exponents: exponents.into(),
        }
    }

    pub fn ces(weights: impl Into<Vec<f64>>, exponent: f64, degree: f64) -> Self {
        UtilityFn::Ces {
            weights: weights.into(),
            exponent,
            degree,
        }
    }

    pub fn quantity_only(transform: QuantityTransform) -> Self {
        UtilityFn::QuantityOnly { transform }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            UtilityFn::Linear { .. } => "linear",
            UtilityFn::CobbDouglas { .. } => "cobb_douglas",
            UtilityFn::Ces { .. } => "ces",
            UtilityFn::QuantityOnly { .. } => "quantity_only",
        }
    }

    /// Number of goods the parameters are declared for; `None` for families
    /// that accept any number of goods.
    pub fn arity(&self) -> Option<usize> {
        match self {
            UtilityFn::Linear { coefficients } => Some(coefficients.len()),
            UtilityFn::CobbDouglas { exponents } => Some(exponents.len()),
            UtilityFn::Ces { weights, .. } => Some(weights.len()),
            UtilityFn::QuantityOnly { .. } => None,
        }
    }

    /// Checks parameter ranges for a `goods`-dimensional bundle space.
    pub fn validate(&self, goods: usize) -> std::result::Result<(), String> {
        if let Some(n) = self.arity() {
            if n != goods {
                return Err(format!("expects {n} goods, economy has {goods}"));
            }
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            UtilityFn::Linear { coefficients } => {
                if !finite(coefficients) || coefficients.iter().any(|&c| c < 0.0) {
                    return Err("linear coefficients must be finite and nonnegative".into());
                }
                if coefficients.iter().all(|&c| c == 0.0) {
                    return Err("linear coefficients must not all be zero".into());
                }
            }
            UtilityFn::CobbDouglas { exponents } => {
                if !finite(exponents) || exponents.iter().any(|&t| t <= 0.0) {
                    return Err("Cobb-Douglas exponents must be positive".into());
                }
            }
            UtilityFn::Ces {
                weights,
                exponent,
                degree,
            } => {
                if !finite(weights) || weights.iter().any(|&g| g <= 0.0) {
                    return Err("CES weights must be positive".into());
                }
                if !(*exponent > 0.0 && *exponent < 1.0) {
                    return Err("CES exponent must lie in the open interval (0, 1)".into());
                }
                if !(degree.is_finite() && *degree > 0.0) {
                    return Err("CES degree must be positive".into());
                }
            }
            UtilityFn::QuantityOnly { transform } => {
                if let QuantityTransform::Power { exponent } = transform {
                    if !(*exponent > 0.0 && *exponent <= 1.0) {
                        return Err("power transform exponent must lie in (0, 1]".into());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        match self {
            UtilityFn::Linear { coefficients } => {
                coefficients.iter().zip(q).map(|(c, x)| c * x).sum()
            }
            UtilityFn::CobbDouglas { exponents } => exponents
                .iter()
                .zip(q)
                .map(|(t, x)| x.max(0.0).powf(*t))
                .product(),
            UtilityFn::Ces {
                weights,
                exponent,
                degree,
            } => {
                let inner: f64 = weights
                    .iter()
                    .zip(q)
                    .map(|(g, x)| g * x.max(0.0).powf(*exponent))
                    .sum();
                inner.powf(degree / exponent)
            }
            UtilityFn::QuantityOnly { transform } => transform.apply(q.iter().sum::<f64>().max(0.0)),
        }
    }

    /// Degree of homogeneity.
    pub fn degree(&self) -> f64 {
        match self {
            UtilityFn::Linear { .. } => 1.0,
            UtilityFn::CobbDouglas { exponents } => exponents.iter().sum(),
            UtilityFn::Ces { degree, .. } => *degree,
            UtilityFn::QuantityOnly { transform } => transform.degree(),
        }
    }

    /// True for the families whose aggregate is strictly concave off rays
    /// through the origin (Cobb-Douglas and CES).
    pub fn is_strictly_quasiconcave(&self) -> bool {
        matches!(self, UtilityFn::CobbDouglas { .. } | UtilityFn::Ces { .. })
    }

    /// True when the objective contribution and floor are linear in the bundle.
    pub fn is_piecewise_linear(&self) -> bool {
        matches!(self, UtilityFn::Linear { .. } | UtilityFn::QuantityOnly { .. })
    }

    /// Degree-one aggregate `u(q)^(1/degree)`.
    pub fn aggregate(&self, q: &[f64]) -> f64 {
        match self {
            UtilityFn::Linear { .. } => self.eval(q),
            UtilityFn::QuantityOnly { .. } => q.iter().sum::<f64>().max(0.0),
            UtilityFn::CobbDouglas { exponents } => {
                let total: f64 = exponents.iter().sum();
                exponents
                    .iter()
                    .zip(q)
                    .map(|(t, x)| x.max(0.0).powf(t / total))
                    .product()
            }
            UtilityFn::Ces {
                weights, exponent, ..
            } => {
                let inner: f64 = weights
                    .iter()
                    .zip(q)
                    .map(|(g, x)| g * x.max(0.0).powf(*exponent))
                    .sum();
                inner.powf(1.0 / exponent)
            }
        }
    }

    /// Gradient and Hessian (row-major `k*k`) of the aggregate.
    ///
    /// Coordinates equal to zero get zero derivatives. Callers only evaluate at
    /// points where every moving coordinate is strictly positive, so a zero can
    /// only sit on a coordinate that is held fixed.
    pub fn aggregate_derivatives(&self, q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = q.len();
        let mut grad = vec![0.0; k];
        let mut hess = vec![0.0; k * k];
        match self {
            UtilityFn::Linear { coefficients } => grad.copy_from_slice(coefficients),
            UtilityFn::QuantityOnly { .. } => grad.iter_mut().for_each(|g| *g = 1.0),
            UtilityFn::CobbDouglas { exponents } => {
                let total: f64 = exponents.iter().sum();
                let phi = self.aggregate(q);
                if phi <= 0.0 {
                    return (grad, hess);
                }
                let share: Vec<f64> = exponents.iter().map(|t| t / total).collect();
                for i in 0..k {
                    if q[i] <= 0.0 {
                        continue;
                    }
                    grad[i] = share[i] * phi / q[i];
                    for l in 0..k {
                        if q[l] <= 0.0 {
                            continue;
                        }
                        let mut h = phi * share[i] * share[l] / (q[i] * q[l]);
                        if i == l {
                            h -= share[i] * phi / (q[i] * q[i]);
                        }
                        hess[i * k + l] = h;
                    }
                }
            }
            UtilityFn::Ces {
                weights, exponent, ..
            } => {
                let rho = *exponent;
                let inner: f64 = weights
                    .iter()
                    .zip(q)
                    .map(|(g, x)| g * x.max(0.0).powf(rho))
                    .sum();
                if inner <= 0.0 {
                    return (grad, hess);
                }
                let outer1 = inner.powf(1.0 / rho - 1.0);
                let outer2 = (1.0 - rho) * inner.powf(1.0 / rho - 2.0);
                let marg: Vec<f64> = (0..k)
                    .map(|i| {
                        if q[i] > 0.0 {
                            weights[i] * q[i].powf(rho - 1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                for i in 0..k {
                    if q[i] <= 0.0 {
                        continue;
                    }
                    grad[i] = outer1 * marg[i];
                    for l in 0..k {
                        let mut h = outer2 * marg[i] * marg[l];
                        if i == l {
                            h -= (1.0 - rho) * outer1 * weights[i] * q[i].powf(rho - 2.0);
                        }
                        hess[i * k + l] = h;
                    }
                }
            }
        }
        (grad, hess)
    }

    /// Gradient of the utility itself.
    pub fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let beta = self.degree();
        let phi = self.aggregate(q);
        let (g, _) = self.aggregate_derivatives(q);
        // u = phi^beta, so du = beta * phi^(beta - 1) * dphi
        let factor = if phi > 0.0 {
            beta * phi.powf(beta - 1.0)
        } else if (beta - 1.0).abs() < f64::EPSILON {
            1.0
        } else {
            0.0
        };
        g.into_iter().map(|x| x * factor).collect()
    }

    /// Minimal cost of reaching utility one, `e(p, 1)`.
    pub fn unit_expenditure(&self, prices: &[f64]) -> f64 {
        match self {
            UtilityFn::Linear { coefficients } => coefficients
                .iter()
                .zip(prices)
                .filter(|(c, _)| **c > 0.0)
                .map(|(c, p)| p / c)
                .fold(f64::INFINITY, f64::min),
            UtilityFn::QuantityOnly { .. } => prices.iter().copied().fold(f64::INFINITY, f64::min),
            UtilityFn::CobbDouglas { exponents } => {
                let total: f64 = exponents.iter().sum();
                exponents
                    .iter()
                    .zip(prices)
                    .map(|(t, p)| (total * p / t).powf(t / total))
                    .product()
            }
            UtilityFn::Ces {
                weights, exponent, ..
            } => {
                let sigma = 1.0 / (1.0 - exponent);
                let sum: f64 = weights
                    .iter()
                    .zip(prices)
                    .map(|(g, p)| g.powf(sigma) * p.powf(1.0 - sigma))
                    .sum();
                sum.powf(1.0 / (1.0 - sigma))
            }
        }
    }

    /// Utility-maximizing bundle under `prices . q <= wealth`.
    ///
    /// Linear and quantity-only preferences spend everything on the
    /// lowest-index good with the best utility per unit of money.
    pub fn demand(&self, prices: &[f64], wealth: f64) -> Vec<f64> {
        let k = prices.len();
        let corner = |ratio: &dyn Fn(usize) -> f64| {
            let mut best = 0;
            for i in 1..k {
                if ratio(i) > ratio(best) * (1.0 + 1e-12) {
                    best = i;
                }
            }
            let mut q = vec![0.0; k];
            q[best] = wealth / prices[best];
            q
        };
        match self {
            UtilityFn::Linear { coefficients } => corner(&|i| coefficients[i] / prices[i]),
            UtilityFn::QuantityOnly { .. } => corner(&|i| 1.0 / prices[i]),
            UtilityFn::CobbDouglas { exponents } => {
                let total: f64 = exponents.iter().sum();
                exponents
                    .iter()
                    .zip(prices)
                    .map(|(t, p)| t / total * wealth / p)
                    .collect()
            }
            UtilityFn::Ces {
                weights, exponent, ..
            } => {
                let sigma = 1.0 / (1.0 - exponent);
                let raw: Vec<f64> = weights
                    .iter()
                    .zip(prices)
                    .map(|(g, p)| (g / p).powf(sigma))
                    .collect();
                let cost: f64 = raw.iter().zip(prices).map(|(r, p)| r * p).sum();
                raw.into_iter().map(|r| wealth * r / cost).collect()
            }
        }
    }
}

/// Least money needed at `prices` to reach `level`.
pub fn expenditure(utility: &UtilityFn, prices: &[f64], level: f64) -> Result<f64> {
    let floor = utility.eval(&vec![0.0; prices.len()]);
    // u(0) = 0 for every supported family; tiny negative levels are rounding.
    if level < floor - 1e-12 {
        return Err(Error::UnreachableUtility { level, floor });
    }
    let level = level.max(floor);
    if level == floor {
        return Ok(0.0);
    }
    let unit = utility.unit_expenditure(prices);
    Ok(match utility {
        UtilityFn::Linear { .. } => level * unit,
        UtilityFn::QuantityOnly { transform } => unit * level.powf(1.0 / transform.degree()),
        UtilityFn::CobbDouglas { .. } | UtilityFn::Ces { .. } => {
            unit * level.powf(1.0 / utility.degree())
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Good {
    pub id: String,
    pub location: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consumer {
    pub id: String,
    pub location: Vec<f64>,
    pub wealth: f64,
    pub prices: Vec<f64>,
    pub utility: UtilityFn,
}

/// Spatial economy: goods supplied at fixed sources and consumers with
/// their own prices, wealth and preferences.
#[derive(Debug, Clone, PartialEq)]
pub struct Economy {
    dimension: usize,
    goods: Vec<Good>,
    consumers: Vec<Consumer>,
}

impl Economy {
    pub fn new(dimension: usize, goods: Vec<Good>, consumers: Vec<Consumer>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidEconomy(msg));
        if goods.is_empty() {
            return bad("at least one good is required".into());
        }
        if consumers.is_empty() {
            return bad("at least one consumer is required".into());
        }
        let k = goods.len();
        let mut points: Vec<(&str, &[f64])> = Vec::new();
        for g in &goods {
            if g.location.len() != dimension || g.location.iter().any(|x| !x.is_finite()) {
                return bad(format!("good `{}` location must have {dimension} finite coordinates", g.id));
            }
            points.push((&g.id, &g.location));
        }
        for c in &consumers {
            if c.location.len() != dimension || c.location.iter().any(|x| !x.is_finite()) {
                return bad(format!("consumer `{}` location must have {dimension} finite coordinates", c.id));
            }
            if !(c.wealth.is_finite() && c.wealth > 0.0) {
                return bad(format!("consumer `{}` wealth must be positive", c.id));
            }
            if c.prices.len() != k {
                return bad(format!("consumer `{}` must quote {k} prices", c.id));
            }
            if c.prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                return bad(format!("consumer `{}` prices must be positive", c.id));
            }
            if let Err(msg) = c.utility.validate(k) {
                return bad(format!("consumer `{}` utility: {msg}", c.id));
            }
            points.push((&c.id, &c.location));
        }
        for (a, (id_a, pa)) in points.iter().enumerate() {
            for (id_b, pb) in &points[a + 1..] {
                if pa == pb {
                    return bad(format!("`{id_a}` and `{id_b}` share a location"));
                }
                if id_a == id_b {
                    return bad(format!("duplicate id `{id_a}`"));
                }
            }
        }
        Ok(Economy {
            dimension,
            goods,
            consumers,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn goods(&self) -> &[Good] {
        &self.goods
    }

    pub fn consumers(&self) -> &[Consumer] {
        &self.consumers
    }

    pub fn num_goods(&self) -> usize {
        self.goods.len()
    }

    pub fn num_consumers(&self) -> usize {
        self.consumers.len()
    }

    pub fn consumer(&self, j: usize) -> Result<&Consumer> {
        self.consumers.get(j).ok_or(Error::UnknownConsumer(j))
    }

    /// Consumer `j`'s utility-maximizing bundle.
    pub fn demand(&self, j: usize) -> Result<Vec<f64>> {
        let c = self.consumer(j)?;
        Ok(c.utility.demand(&c.prices, c.wealth))
    }

    /// Demand for every consumer, rescaled so the plan has unit total mass.
    pub fn demand_profile(&self) -> Result<DemandProfile> {
        let k = self.num_goods();
        let l = self.num_consumers();
        let mut plan = TransportPlan::zeros(k, l);
        for j in 0..l {
            for (i, q) in self.demand(j)?.into_iter().enumerate() {
                plan.set(i, j, q);
            }
        }
        let total = plan.total();
        if !(total > 0.0) {
            return Err(Error::ZeroTotalMass);
        }
        let plan = plan.scaled(1.0 / total);
        let floors = self
            .consumers
            .iter()
            .enumerate()
            .map(|(j, c)| c.utility.eval(&plan.column(j)))
            .collect();
        let sources = AtomicMeasure::new(
            self.goods
                .iter()
                .zip(plan.row_sums())
                .map(|(g, m)| (g.location.clone(), m))
                .collect(),
        )?;
        let sinks = AtomicMeasure::new(
            self.consumers
                .iter()
                .zip(plan.col_sums())
                .map(|(c, n)| (c.location.clone(), n))
                .collect(),
        )?;
        Ok(DemandProfile {
            plan,
            floors,
            scale: 1.0 / total,
            sources,
            sinks,
        })
    }

    /// Utility levels `u_j(q_j)` for every column of `plan`.
    pub fn utility_levels(&self, plan: &TransportPlan) -> Vec<f64> {
        self.consumers
            .iter()
            .enumerate()
            .map(|(j, c)| c.utility.eval(&plan.column(j)))
            .collect()
    }
}

/// Normalized initial plan with the derived source and consumer measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandProfile {
    pub plan: TransportPlan,
    /// Utility of each consumer at the normalized plan.
    pub floors: Vec<f64>,
    /// Factor applied to the raw demands.
    pub scale: f64,
    pub sources: AtomicMeasure,
    pub sinks: AtomicMeasure,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn intro_economy() -> Economy {
        Economy::new(
            2,
            vec![
                Good { id: "x1".into(), location: vec![0.0, 0.0] },
                Good { id: "x2".into(), location: vec![0.0, 3.0] },
            ],
            vec![
                Consumer {
                    id: "y1".into(),
                    location: vec![1.0, 0.0],
                    wealth: 0.5,
                    prices: vec![1.0, 6.0],
                    utility: UtilityFn::linear([1.0, 3.0]),
                },
                Consumer {
                    id: "y2".into(),
                    location: vec![1.0, 3.0],
                    wealth: 0.5,
                    prices: vec![6.0, 1.0],
                    utility: UtilityFn::linear([3.0, 1.0]),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn linear_demand_picks_best_ratio() {
        let u = UtilityFn::linear([1.0, 3.0]);
        assert_eq!(u.demand(&[1.0, 6.0], 0.5), vec![0.5, 0.0]);
    }

    #[test]
    fn linear_tie_goes_to_lowest_index() {
        let u = UtilityFn::linear([1.0, 2.0, 2.0]);
        assert_eq!(u.demand(&[1.0, 2.0, 2.0], 1.0), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn single_good_budget_binds() {
        for u in [
            UtilityFn::linear([2.0]),
            UtilityFn::cobb_douglas([0.7]),
            UtilityFn::ces([1.5], 0.5, 2.0),
            UtilityFn::quantity_only(QuantityTransform::Identity),
        ] {
            let q = u.demand(&[2.0], 1.0);
            assert!((q[0] - 0.5).abs() < 1e-15, "{u:?}");
        }
    }

    #[test]
    fn linear_expenditure_example() {
        let u = UtilityFn::linear([1.0, 3.0]);
        assert!((expenditure(&u, &[1.0, 6.0], 0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cobb_douglas_expenditure_example() {
        let u = UtilityFn::cobb_douglas([1.0, 1.0]);
        assert!((expenditure(&u, &[1.0, 4.0], 1.0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn expenditure_at_floor_is_zero() {
        for u in [
            UtilityFn::linear([1.0, 0.0]),
            UtilityFn::cobb_douglas([1.0, 2.0]),
            UtilityFn::ces([1.0, 2.0], 0.3, 0.5),
            UtilityFn::quantity_only(QuantityTransform::Power { exponent: 0.5 }),
        ] {
            assert_eq!(expenditure(&u, &[1.0, 2.0], 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn unreachable_level_is_an_error() {
        let u = UtilityFn::cobb_douglas([1.0, 1.0]);
        assert!(matches!(
            expenditure(&u, &[1.0, 1.0], -0.5),
            Err(Error::UnreachableUtility { .. })
        ));
    }

    #[test]
    fn intro_profile() {
        let profile = intro_economy().demand_profile().unwrap();
        assert_eq!(profile.plan.to_rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_eq!(profile.sources.masses(), vec![0.5, 0.5]);
        assert_eq!(profile.sinks.masses(), vec![0.5, 0.5]);
        assert_eq!(profile.floors, vec![0.5, 0.5]);
    }

    #[test]
    fn profile_rescales_to_unit_mass() {
        let economy = Economy::new(
            1,
            vec![Good { id: "x".into(), location: vec![0.0] }],
            vec![Consumer {
                id: "y".into(),
                location: vec![1.0],
                wealth: 3.0,
                prices: vec![1.0],
                utility: UtilityFn::linear([1.0]),
            }],
        )
        .unwrap();
        let profile = economy.demand_profile().unwrap();
        assert_eq!(profile.plan.to_rows(), vec![vec![1.0]]);
        assert!((profile.scale - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_cobb_douglas_profile_is_symmetric() {
        let economy = Economy::new(
            2,
            vec![
                Good { id: "x1".into(), location: vec![0.0, 0.0] },
                Good { id: "x2".into(), location: vec![0.0, 1.0] },
            ],
            vec![
                Consumer {
                    id: "y1".into(),
                    location: vec![1.0, 0.0],
                    wealth: 1.0,
                    prices: vec![1.0, 2.0],
                    utility: UtilityFn::cobb_douglas([1.0, 2.0]),
                },
                Consumer {
                    id: "y2".into(),
                    location: vec![1.0, 1.0],
                    wealth: 1.0,
                    prices: vec![2.0, 1.0],
                    utility: UtilityFn::cobb_douglas([2.0, 1.0]),
                },
            ],
        )
        .unwrap();
        let q = economy.demand_profile().unwrap().plan;
        assert!((q.get(0, 0) - q.get(1, 1)).abs() < 1e-15);
        assert!((q.get(0, 1) - q.get(1, 0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_prices_and_shared_locations() {
        let good = Good { id: "x".into(), location: vec![0.0] };
        let consumer = |loc: f64, price: f64| Consumer {
            id: "y".into(),
            location: vec![loc],
            wealth: 1.0,
            prices: vec![price],
            utility: UtilityFn::linear([1.0]),
        };
        assert!(Economy::new(1, vec![good.clone()], vec![consumer(1.0, 0.0)]).is_err());
        assert!(Economy::new(1, vec![good], vec![consumer(0.0, 1.0)]).is_err());
    }

    #[test]
    fn ces_rejects_exponent_one() {
        assert!(UtilityFn::ces([1.0, 1.0], 1.0, 1.0).validate(2).is_err());
    }

    #[test]
    fn aggregate_derivatives_match_finite_differences() {
        let q = [0.3, 0.2, 0.4];
        for u in [
            UtilityFn::cobb_douglas([1.0, 2.0, 0.5]),
            UtilityFn::ces([1.0, 0.5, 2.0], 0.4, 1.7),
        ] {
            let (g, h) = u.aggregate_derivatives(&q);
            let step = 1e-6;
            for i in 0..3 {
                let mut up = q;
                let mut dn = q;
                up[i] += step;
                dn[i] -= step;
                let fd = (u.aggregate(&up) - u.aggregate(&dn)) / (2.0 * step);
                assert!((fd - g[i]).abs() < 1e-7, "grad {i} {fd} {}", g[i]);
                let (gu, _) = u.aggregate_derivatives(&up);
                let (gd, _) = u.aggregate_derivatives(&dn);
                for l in 0..3 {
                    let fd = (gu[l] - gd[l]) / (2.0 * step);
                    assert!((fd - h[l * 3 + i]).abs() < 1e-5, "hess {i}{l}");
                }
            }
        }
    }
}
