use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Shape of a coefficient. Periodic kinds describe one period on `s ∈ [0, 1)`
/// and are evaluated as `base(x / epsilon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum RecipeKind {
    Constant {
        value: f64,
    },
    /// `amplitude * sin²(π s) + offset`
    PeriodicSin2 {
        offset: f64,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    /// `values[j]` on `[breakpoints[j-1], breakpoints[j])` within one period,
    /// with implicit breakpoints 0 and 1 at the ends.
    PiecewisePeriodic {
        values: Vec<f64>,
        breakpoints: Vec<f64>,
    },
    /// Piecewise-linear interpolation of `(xs, values)`, held constant outside.
    Tabulated {
        xs: Vec<f64>,
        values: Vec<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecipe {
    #[serde(flatten)]
    pub kind: RecipeKind,
    /// Oscillation period for periodic kinds; `None` means period 1.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl CoefficientRecipe {
    pub fn constant(value: f64) -> Self {
        Self { kind: RecipeKind::Constant { value }, epsilon: None }
    }

    pub fn sin2(offset: f64, amplitude: f64, epsilon: f64) -> Self {
        Self { kind: RecipeKind::PeriodicSin2 { offset, amplitude }, epsilon: Some(epsilon) }
    }

    pub fn piecewise(values: Vec<f64>, breakpoints: Vec<f64>, epsilon: f64) -> Self {
        Self { kind: RecipeKind::PiecewisePeriodic { values, breakpoints }, epsilon: Some(epsilon) }
    }

    pub fn tabulated(xs: Vec<f64>, values: Vec<f64>) -> Self {
        Self { kind: RecipeKind::Tabulated { xs, values }, epsilon: None }
    }

    pub fn with_epsilon(mut self, epsilon: Option<f64>) -> Self {
        if self.is_periodic() && epsilon.is_some() {
            self.epsilon = epsilon;
        }
        self
    }

    pub fn is_periodic(&self) -> bool {
        !matches!(self.kind, RecipeKind::Tabulated { .. })
    }

    /// Period length; only periodic, non-constant kinds oscillate.
    pub fn oscillation_period(&self) -> Option<f64> {
        match self.kind {
            RecipeKind::PeriodicSin2 { .. } | RecipeKind::PiecewisePeriodic { .. } => {
                Some(self.epsilon.unwrap_or(1.0))
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidRecipe(m.into()));
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return bad("epsilon must be positive");
            }
        }
        match &self.kind {
            RecipeKind::Constant { value } if !value.is_finite() => bad("non-finite constant"),
            RecipeKind::PeriodicSin2 { offset, amplitude }
                if !offset.is_finite() || !amplitude.is_finite() =>
            {
                bad("non-finite sin² parameters")
            }
            RecipeKind::PiecewisePeriodic { values, breakpoints } => {
                if values.is_empty() || breakpoints.len() + 1 != values.len() {
                    return bad("piecewise recipe needs values.len() == breakpoints.len() + 1");
                }
                let inside = breakpoints.iter().all(|&b| b > 0.0 && b < 1.0);
                let sorted = breakpoints.windows(2).all(|w| w[0] < w[1]);
                if !inside || !sorted {
                    return bad("breakpoints must increase strictly inside (0, 1)");
                }
                Ok(())
            }
            RecipeKind::Tabulated { xs, values } => {
                if xs.len() < 2 || xs.len() != values.len() {
                    return bad("tabulated recipe needs at least two (x, value) pairs");
                }
                if !xs.windows(2).all(|w| w[0] < w[1]) {
                    return bad("tabulated abscissae must increase strictly");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// One-period profile at `s` (reduced modulo 1). Not defined for tabulated recipes.
    pub fn base(&self, s: f64) -> f64 {
        let s = s - s.floor();
        match &self.kind {
            RecipeKind::Constant { value } => *value,
            RecipeKind::PeriodicSin2 { offset, amplitude } => {
                amplitude * (PI * s).sin().powi(2) + offset
            }
            RecipeKind::PiecewisePeriodic { values, breakpoints } => {
                let j = breakpoints.partition_point(|&b| b <= s);
                values[j]
            }
            RecipeKind::Tabulated { .. } => self.eval(s),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            RecipeKind::Tabulated { xs, values } => {
                if x <= xs[0] {
                    return values[0];
                }
                let last = xs.len() - 1;
                if x >= xs[last] {
                    return values[last];
                }
                let j = xs.partition_point(|&t| t <= x);
                let (x0, x1) = (xs[j - 1], xs[j]);
                let w = (x - x0) / (x1 - x0);
                values[j - 1] * (1.0 - w) + values[j] * w
            }
            RecipeKind::Constant { value } => *value,
            _ => self.base(x / self.epsilon.unwrap_or(1.0)),
        }
    }

    /// Pieces of the unit period on which `base` is smooth.
    pub(crate) fn smooth_pieces(&self) -> Vec<(f64, f64)> {
        let mut cuts = vec![0.0];
        if let RecipeKind::PiecewisePeriodic { breakpoints, .. } = &self.kind {
            cuts.extend(breakpoints.iter().copied());
        }
        cuts.push(1.0);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Mean of `base` over one period.
    pub fn arithmetic_mean(&self) -> Result<f64> {
        match &self.kind {
            RecipeKind::Constant { value } => Ok(*value),
            RecipeKind::PeriodicSin2 { offset, amplitude } => Ok(offset + 0.5 * amplitude),
            RecipeKind::PiecewisePeriodic { values, .. } => Ok(self
                .smooth_pieces()
                .iter()
                .zip(values)
                .map(|((a, b), v)| (b - a) * v)
                .sum()),
            RecipeKind::Tabulated { .. } => Err(Error::NotPeriodic),
        }
    }
}
