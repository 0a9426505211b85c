use serde::{Deserialize, Serialize};

use super::quadrature::{adaptive_simpson, composite_mean, POINTS_PER_PANEL};
use super::{CoefficientRecipe, Grid, RecipeKind};
use crate::error::{Error, Result};

const MIN_POINTS_PER_PERIOD: f64 = 16.0;
const AUTO_PANELS_PER_PERIOD: f64 = 16.0;
const MIN_PANELS_PER_CELL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Enough panels to put 64 Gauss points in every oscillation period.
    Auto,
    PointsPerCell(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    pub quadrature: Quadrature,
    pub allow_under_resolved: bool,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self { quadrature: Quadrature::Auto, allow_under_resolved: false }
    }
}

/// Sampled `(a, b, p)`: `a` at the cell interfaces, `b` and `p` at interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub n_cells: usize,
    /// `a_interface[i]` belongs to the interface between nodes `i` and `i+1`.
    pub a_interface: Vec<f64>,
    pub b_node: Vec<f64>,
    pub p_node: Vec<f64>,
    /// Smallest sampled value of `a`.
    pub a0: f64,
    pub epsilon: Option<f64>,
}

impl CoefficientField {
    /// Pure diffusion with `b = p = 0`.
    pub fn diffusion(a: &CoefficientRecipe, grid: &Grid, epsilon: Option<f64>) -> Result<Self> {
        let zero = CoefficientRecipe::constant(0.0);
        sample_coefficients(a, &zero, &zero, grid, epsilon, &SamplingOptions::default())
    }
}

/// Samples a coefficient triple on `grid`. `epsilon`, when given, overrides the
/// period of every periodic recipe.
pub fn sample_coefficients(
    a: &CoefficientRecipe,
    b: &CoefficientRecipe,
    p: &CoefficientRecipe,
    grid: &Grid,
    epsilon: Option<f64>,
    opts: &SamplingOptions,
) -> Result<CoefficientField> {
    let a = a.clone().with_epsilon(epsilon);
    let b = b.clone().with_epsilon(epsilon);
    let p = p.clone().with_epsilon(epsilon);
    for r in [&a, &b, &p] {
        r.validate()?;
    }

    let n = grid.n_cells();
    let dx = grid.dx();
    let period = a.oscillation_period();
    let panels = match opts.quadrature {
        Quadrature::Auto => match period {
            Some(eps) => MIN_PANELS_PER_CELL.max((AUTO_PANELS_PER_PERIOD * dx / eps).ceil() as usize),
            None => MIN_PANELS_PER_CELL,
        },
        Quadrature::PointsPerCell(q) => q.div_ceil(POINTS_PER_PANEL).max(1),
    };
    if let Some(eps) = period {
        let points_per_period = (panels * POINTS_PER_PANEL) as f64 * eps / dx;
        if points_per_period < MIN_POINTS_PER_PERIOD && !opts.allow_under_resolved {
            return Err(Error::UnderResolved { points_per_period });
        }
    }

    let (a0, x_min) = ellipticity_floor(&a, period.unwrap_or(1.0));
    if !(a0 > 0.0) {
        return Err(Error::Ellipticity { min: a0, x: x_min });
    }

    let a_interface = (0..n)
        .map(|i| {
            let lo = grid.nodes()[i];
            let hi = grid.nodes()[i + 1];
            1.0 / composite_mean(|x| 1.0 / a.eval(x), lo, hi, panels)
        })
        .collect();
    let b_node = grid.interior_nodes().iter().map(|&x| b.eval(x)).collect();
    let p_node = grid.interior_nodes().iter().map(|&x| p.eval(x)).collect();

    Ok(CoefficientField { n_cells: n, a_interface, b_node, p_node, a0, epsilon: a.epsilon })
}

/// Minimum of `a` over `10⁴·max(1, 1/ε)` equispaced points of [0, 1].
fn ellipticity_floor(a: &CoefficientRecipe, period: f64) -> (f64, f64) {
    let count = (1e4 * (1.0 / period).max(1.0)).ceil() as usize;
    let mut min = f64::INFINITY;
    let mut at = 0.0;
    for j in 0..=count {
        let x = j as f64 / count as f64;
        let v = a.eval(x);
        if !(v >= min) {
            min = v;
            at = x;
        }
    }
    (min, at)
}

/// Effective diffusivity `(∫₀¹ ds / a(s))⁻¹` of a periodic recipe.
pub fn homogenized_constant(recipe: &CoefficientRecipe) -> Result<f64> {
    recipe.validate()?;
    if !recipe.is_periodic() {
        return Err(Error::NotPeriodic);
    }
    let (floor, s) = ellipticity_floor(&CoefficientRecipe { epsilon: None, ..recipe.clone() }, 1.0);
    if !(floor > 0.0) {
        return Err(Error::Ellipticity { min: floor, x: s });
    }
    let inverse_mean = match &recipe.kind {
        RecipeKind::Constant { value } => 1.0 / value,
        RecipeKind::PiecewisePeriodic { values, .. } => recipe
            .smooth_pieces()
            .iter()
            .zip(values)
            .map(|((lo, hi), v)| (hi - lo) / v)
            .sum(),
        _ => recipe
            .smooth_pieces()
            .iter()
            .map(|&(lo, hi)| adaptive_simpson(&|s| 1.0 / recipe.base(s), lo, hi, 1e-13))
            .sum(),
    };
    Ok(1.0 / inverse_mean)
}
