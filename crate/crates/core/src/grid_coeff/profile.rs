use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::Grid;
use crate::operators::GridFunction;

/// Closed-form initial data and targets, sampled at the interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `sum_k coeffs[k] x^k`; `[0, -1, 1]` is `x(x - 1)`.
    Polynomial { coeffs: Vec<f64> },
    /// `amplitude * sin(mode * pi * x)`
    Sine { mode: u32, amplitude: f64 },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => *value,
            Profile::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Profile::Sine { mode, amplitude } => amplitude * (*mode as f64 * PI * x).sin(),
        }
    }

    pub fn sample(&self, grid: &Grid) -> GridFunction {
        GridFunction::from_fn(grid, |x| self.eval(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_horner() {
        let p = Profile::Polynomial { coeffs: vec![0.0, -1.0, 1.0] };
        assert_eq!(p.eval(0.25), 0.25 * (0.25 - 1.0));
    }

    #[test]
    fn json_shape() {
        let p: Profile = serde_json::from_str(r#"{"kind":"sine","mode":1,"amplitude":2.0}"#).unwrap();
        assert_eq!(p, Profile::Sine { mode: 1, amplitude: 2.0 });
    }
}
