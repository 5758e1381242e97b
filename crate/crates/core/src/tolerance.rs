use serde::{Deserialize, Serialize};

/// Numerical thresholds shared by every solver in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute residual allowed in balance and edge equations.
    pub balance: f64,
    /// Pivot threshold for Gaussian elimination, relative to the largest entry.
    pub rank: f64,
    /// Minimum entry for a plan to count as strictly interior.
    pub interior: f64,
    /// Optimality tolerance; values of magnitude below it are reported as zero.
    pub opt: f64,
    /// Relative tolerance for numeric (non closed-form) routines.
    pub numeric: f64,
    /// Threshold above which an exchange value counts as positive.
    pub positive: f64,
    /// Relative tolerance for detecting collinear price vectors.
    pub collinear: f64,
    /// Gradient norm at which geometry descent stops.
    pub geometry: f64,
    /// Distance below which two vertices are merged during descent.
    pub merge: f64,
    /// Newton iteration cap per barrier stage.
    pub max_iter: usize,
    /// Iteration cap for geometry descent.
    pub max_iter_geometry: usize,
    /// Largest polytope dimension for which vertices are enumerated.
    pub max_vertex_dim: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            balance: 1e-9,
            rank: 1e-9,
            interior: 1e-9,
            opt: 1e-9,
            numeric: 1e-6,
            positive: 1e-7,
            collinear: 1e-9,
            geometry: 1e-8,
            merge: 1e-7,
            max_iter: 200,
            max_iter_geometry: 5000,
            max_vertex_dim: 6,
        }
    }
}

impl Tolerances {
    /// Override a single threshold by name, as accepted by `--tol key=value`.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), String> {
        let slot = match key {
            "balance" => &mut self.balance,
            "rank" => &mut self.rank,
            "interior" => &mut self.interior,
            "opt" => &mut self.opt,
            "numeric" => &mut self.numeric,
            "positive" => &mut self.positive,
            "collinear" => &mut self.collinear,
            "geometry" => &mut self.geometry,
            "merge" => &mut self.merge,
            "max_iter" => {
                self.max_iter = value as usize;
                return Ok(());
            }
            "max_iter_geometry" => {
                self.max_iter_geometry = value as usize;
                return Ok(());
            }
            "max_vertex_dim" => {
                self.max_vertex_dim = value as usize;
                return Ok(());
            }
            other => return Err(format!("unknown tolerance `{other}`")),
        };
        if !(value.is_finite() && value > 0.0) {
            return Err(format!("tolerance `{key}` must be positive, got {value}"));
        }
        *slot = value;
        Ok(())
    }
}
