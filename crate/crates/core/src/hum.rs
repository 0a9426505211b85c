//! Penalized HUM approximate null controls.
//!
//! Minimizes `½ Σ_{k<M} dt ‖f_k‖² + (1/2δ) ‖y_M‖²` by conjugate gradients.
//! The gradient is `f_k + χ ψ_k` with `ψ` the backward solution from
//! `ψ_M = y_M / δ` without source.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_coeff::{sample_coefficients, CoefficientRecipe, ControlWindow, Grid, Profile, SamplingOptions};
use crate::ocp::{conjugate_gradient, control_norm};
use crate::operators::{assemble, weighted_norm, DiscreteOperator, GridFunction};
use crate::pde::{ImplicitEuler, TimeGrid, Trajectory};

pub const DEFAULT_HUM_TOL: f64 = 1e-10;
pub const DEFAULT_HUM_MAX_ITER: usize = 2000;

#[derive(Debug, Clone)]
pub struct HumResult {
    pub control: Trajectory,
    pub terminal_norm: f64,
    pub control_norm: f64,
    pub delta: f64,
    /// `control_norm / ‖y0‖`
    pub cost_estimate: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumSummary {
    pub delta: f64,
    pub terminal_norm: f64,
    pub control_norm: f64,
    pub cost_estimate: f64,
    pub iterations: usize,
}

impl HumResult {
    pub fn summary(&self) -> HumSummary {
        HumSummary {
            delta: self.delta,
            terminal_norm: self.terminal_norm,
            control_norm: self.control_norm,
            cost_estimate: self.cost_estimate,
            iterations: self.iterations,
        }
    }
}

struct Hum<'a> {
    stepper: ImplicitEuler,
    window: &'a ControlWindow,
    tg: TimeGrid,
    n_cells: usize,
    delta: f64,
}

impl Hum<'_> {
    fn terminal(&self, y0: &[f64], f: &Trajectory) -> Vec<f64> {
        let mut src = f.clone();
        for k in 0..src.len() {
            self.window.apply_in_place(src.snapshot_mut(k));
        }
        let mut y = Trajectory::zeros(self.tg, self.n_cells);
        self.stepper.forward(y0, Some(&src), &mut y);
        y.snapshot(self.tg.n_steps()).to_vec()
    }

    /// `χ ψ` for `k < M`, from `ψ_M = y_M / δ`.
    fn adjoint_control(&self, y_m: &[f64]) -> Trajectory {
        let terminal: Vec<f64> = y_m.iter().map(|v| v / self.delta).collect();
        let mut psi = Trajectory::zeros(self.tg, self.n_cells);
        self.stepper.backward(&terminal, None, &mut psi);
        for k in 0..psi.len() {
            self.window.apply_in_place(psi.snapshot_mut(k));
        }
        psi.snapshot_mut(self.tg.n_steps()).fill(0.0);
        psi
    }

    fn hessian(&self, f: &Trajectory) -> Trajectory {
        let zero = vec![0.0; self.n_cells - 1];
        let mut out = self.adjoint_control(&self.terminal(&zero, f));
        let m = self.tg.n_steps();
        for k in 0..m {
            for (o, v) in out.snapshot_mut(k).iter_mut().zip(f.snapshot(k)) {
                *o += v;
            }
        }
        out
    }
}

pub fn penalized_null_control(
    op: &DiscreteOperator,
    window: &ControlWindow,
    y0: &GridFunction,
    tg: &TimeGrid,
    delta: f64,
) -> Result<HumResult> {
    penalized_null_control_with(op, window, y0, tg, delta, DEFAULT_HUM_TOL, DEFAULT_HUM_MAX_ITER)
}

pub fn penalized_null_control_with(
    op: &DiscreteOperator,
    window: &ControlWindow,
    y0: &GridFunction,
    tg: &TimeGrid,
    delta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<HumResult> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("penalty delta must be positive, got {delta}")));
    }
    if op.is_adjoint {
        return Err(Error::InvalidArgument("null control needs the primal operator".into()));
    }
    for got in [y0.n_cells(), window.len() + 1] {
        if got != op.n_cells() {
            return Err(Error::DimensionMismatch { expected: op.n_cells(), got });
        }
    }
    let hum = Hum { stepper: ImplicitEuler::new(op, tg.dt())?, window, tg: *tg, n_cells: op.n_cells(), delta };
    let zero_f = Trajectory::zeros(*tg, op.n_cells());
    let mut rhs = hum.adjoint_control(&hum.terminal(y0.values(), &zero_f));
    for k in 0..rhs.len() {
        rhs.snapshot_mut(k).iter_mut().for_each(|v| *v = -*v);
    }
    let (control, iterations) = conjugate_gradient(|f| hum.hessian(f), &rhs, tol, max_iter)?;
    let terminal_norm = weighted_norm(&hum.terminal(y0.values(), &control), op.dx());
    let cn = control_norm(&control);
    let y0n = weighted_norm(y0.values(), op.dx());
    Ok(HumResult {
        control,
        terminal_norm,
        control_norm: cn,
        delta,
        cost_estimate: if y0n > 0.0 { cn / y0n } else { 0.0 },
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumSetup {
    pub n_cells: usize,
    pub horizon: f64,
    pub n_steps: usize,
    pub a: CoefficientRecipe,
    pub b: CoefficientRecipe,
    pub p: CoefficientRecipe,
    pub window: (f64, f64),
    pub y0: Profile,
    pub delta: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub sampling: SamplingOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSweep {
    pub epsilons: Vec<f64>,
    pub results: Vec<HumSummary>,
    pub homogenized: HumSummary,
    /// `max / min` of the cost estimates over ε.
    pub ratio: f64,
    pub ratio_limit: f64,
    pub ratio_ok: bool,
    /// Every cost at most twice the homogenized one.
    pub within_twice_homogenized: bool,
}

pub const COST_RATIO_LIMIT: f64 = 2.0;

impl HumSetup {
    fn run(&self, a: &CoefficientRecipe, b: &CoefficientRecipe, p: &CoefficientRecipe, eps: Option<f64>) -> Result<HumResult> {
        let grid = Grid::new(self.n_cells)?;
        let tg = TimeGrid::new(self.horizon, self.n_steps)?;
        let coeffs = sample_coefficients(a, b, p, &grid, eps, &self.sampling)?;
        let op = assemble(&coeffs, &grid, false)?;
        let window = ControlWindow::new(&grid, self.window.0, self.window.1)?;
        let y0 = self.y0.sample(&grid);
        penalized_null_control_with(&op, &window, &y0, &tg, self.delta, self.cg_tol, self.cg_max_iter)
    }

    pub fn run_epsilon(&self, epsilon: Option<f64>) -> Result<HumResult> {
        self.run(&self.a, &self.b, &self.p, epsilon)
    }

    pub fn run_homogenized(&self) -> Result<HumResult> {
        let a_h = crate::grid_coeff::homogenized_constant(&self.a)?;
        let mean = |r: &CoefficientRecipe| -> Result<CoefficientRecipe> {
            Ok(if r.is_periodic() { CoefficientRecipe::constant(r.arithmetic_mean()?) } else { r.clone() })
        };
        self.run(&CoefficientRecipe::constant(a_h), &mean(&self.b)?, &mean(&self.p)?, None)
    }
}

/// Penalized null control for each ε with the same data and penalty.
pub fn controllability_cost_sweep(setup: &HumSetup, epsilons: &[f64]) -> Result<CostSweep> {
    if epsilons.is_empty() {
        return Err(Error::InvalidArgument("empty epsilon list".into()));
    }
    let mut results: Vec<HumSummary> = epsilons
        .par_iter()
        .map(|&e| setup.run_epsilon(Some(e)).map(|r| r.summary()))
        .chain(rayon::iter::once(setup.run_homogenized().map(|r| r.summary())))
        .collect::<Result<_>>()?;
    let homogenized = results.pop().expect("homogenized run is last");
    let costs: Vec<f64> = results.iter().map(|r| r.cost_estimate).collect();
    let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if min > 0.0 { max / min } else if max == 0.0 { 1.0 } else { f64::INFINITY };
    Ok(CostSweep {
        epsilons: epsilons.to_vec(),
        within_twice_homogenized: costs.iter().all(|&c| c <= 2.0 * homogenized.cost_estimate),
        results,
        homogenized,
        ratio,
        ratio_limit: COST_RATIO_LIMIT,
        ratio_ok: ratio <= COST_RATIO_LIMIT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_coeff::CoefficientField;
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::PI;

    fn heat(n_cells: usize) -> (Grid, DiscreteOperator) {
        let g = Grid::new(n_cells).unwrap();
        let c = CoefficientField::diffusion(&CoefficientRecipe::constant(1.0), &g, None).unwrap();
        let op = assemble(&c, &g, false).unwrap();
        (g, op)
    }

    fn sin2(n_cells: usize, eps: f64) -> (Grid, DiscreteOperator) {
        let g = Grid::new(n_cells).unwrap();
        let c = CoefficientField::diffusion(&CoefficientRecipe::sin2(0.5, 1.0, eps), &g, None).unwrap();
        let op = assemble(&c, &g, false).unwrap();
        (g, op)
    }

    #[test]
    fn zero_initial_state() {
        let (g, op) = heat(20);
        let tg = TimeGrid::new(1.0, 20).unwrap();
        let r = penalized_null_control(&op, &ControlWindow::full(&g), &GridFunction::zeros(&g), &tg, 1e-4).unwrap();
        assert_eq!(r.terminal_norm, 0.0);
        assert_eq!(r.control_norm, 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn drives_single_mode_close_to_zero() {
        let (g, op) = heat(50);
        let tg = TimeGrid::new(1.0, 100).unwrap();
        let y0 = GridFunction::from_fn(&g, |x| (PI * x).sin());
        let r = penalized_null_control(&op, &ControlWindow::full(&g), &y0, &tg, 1e-6).unwrap();
        assert!(r.terminal_norm <= 1e-3 * weighted_norm(y0.values(), g.dx()));
        assert!(penalized_null_control(&op, &ControlWindow::full(&g), &y0, &tg, 0.0).is_err());
    }

    #[test]
    fn matches_dense_least_squares() {
        let (g, op) = sin2(9, 0.3);
        let w = ControlWindow::new(&g, 0.3, 0.7).unwrap();
        let tg = TimeGrid::new(0.5, 8).unwrap();
        let y0 = GridFunction::from_fn(&g, |x| x * (1.0 - x) + 0.2 * (5.0 * x).sin());
        let delta = 1e-3;
        let r = penalized_null_control_with(&op, &w, &y0, &tg, delta, 1e-14, 500).unwrap();

        let (n, m) = (8, 8);
        let hum = Hum { stepper: ImplicitEuler::new(&op, tg.dt()).unwrap(), window: &w, tg, n_cells: 9, delta };
        let zero = vec![0.0; n];
        let mut phi = DMatrix::zeros(n, n * m);
        for col in 0..n * m {
            let mut f = Trajectory::zeros(tg, 9);
            f.snapshot_mut(col / n)[col % n] = 1.0;
            phi.set_column(col, &DVector::from_column_slice(&hum.terminal(&zero, &f)));
        }
        let free = DVector::from_column_slice(&hum.terminal(y0.values(), &Trajectory::zeros(tg, 9)));
        let (dt, dx) = (tg.dt(), g.dx());
        let normal = DMatrix::identity(n * m, n * m) * (dt * dx) + phi.transpose() * &phi * (dx / delta);
        let rhs = -(phi.transpose() * free) * (dx / delta);
        let f = normal.cholesky().unwrap().solve(&rhs);
        for k in 0..m {
            for i in 0..n {
                assert!((r.control.snapshot(k)[i] - f[k * n + i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn delta_ladder_is_monotone() {
        let (g, op) = sin2(40, 0.2);
        let w = ControlWindow::new(&g, 0.3, 0.7).unwrap();
        let tg = TimeGrid::new(1.0, 50).unwrap();
        let y0 = GridFunction::from_fn(&g, |x| (PI * x).sin());
        let mut last: Option<HumResult> = None;
        for e in 2..=8 {
            let r = penalized_null_control(&op, &w, &y0, &tg, 10f64.powi(-e)).unwrap();
            if let Some(prev) = &last {
                assert!(r.terminal_norm < prev.terminal_norm);
                assert!(r.control_norm > prev.control_norm);
            }
            last = Some(r);
        }
    }

    #[test]
    fn longer_horizons_are_cheaper() {
        let (g, op) = sin2(40, 0.2);
        let w = ControlWindow::new(&g, 0.3, 0.7).unwrap();
        let y0 = GridFunction::from_fn(&g, |x| (PI * x).sin());
        let costs: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&t| {
                let tg = TimeGrid::new(t, (t * 50.0) as usize).unwrap();
                penalized_null_control(&op, &w, &y0, &tg, 1e-6).unwrap().cost_estimate
            })
            .collect();
        assert!(costs.windows(2).all(|c| c[1] <= c[0]), "{costs:?}");
    }

    #[test]
    fn constant_coefficients_give_identical_costs() {
        let setup = HumSetup {
            n_cells: 30,
            horizon: 1.0,
            n_steps: 20,
            a: CoefficientRecipe::constant(0.7),
            b: CoefficientRecipe::constant(0.0),
            p: CoefficientRecipe::constant(0.0),
            window: (0.3, 0.7),
            y0: Profile::Sine { mode: 1, amplitude: 1.0 },
            delta: 1e-4,
            cg_tol: 1e-10,
            cg_max_iter: 1000,
            sampling: SamplingOptions::default(),
        };
        let s = controllability_cost_sweep(&setup, &[1.0, 0.1]).unwrap();
        assert_eq!(s.results[0], s.results[1]);
        assert_eq!(s.ratio, 1.0);
        assert!(s.ratio_ok && s.within_twice_homogenized);
    }
}
