//! Implicit Euler time stepping for the state and adjoint equations.
//!
//! Index conventions on `t_k = k dt`, `k = 0..=M`:
//!
//! * forward:  `(I + dt A) y_{k+1} = y_k + dt s_k`, so `s_k` drives the step
//!   leaving `t_k` and `s_M` is unused;
//! * backward: `(I + dt Aᵀ) ψ_k = ψ_{k+1} + dt s_{k+1}` from `ψ_M`, so `s_0`
//!   is unused.
//!
//! With these choices the pair is exactly transposed:
//! `Σ_{k=1}^M dt⟨y_k, s_k⟩ + ⟨y_M, ψ_M⟩ = ⟨y_0, ψ_0⟩ + Σ_{k=0}^{M-1} dt⟨g_k, ψ_k⟩`
//! where `g` is the forward source and `s` the backward one.

use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::grid_coeff::Grid;
use crate::linalg::{dot, TridiagonalLu};
use crate::operators::{weighted_norm, DiscreteOperator, GridFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || n_steps < 2 {
            return Err(Error::InvalidTimeGrid { horizon, steps: n_steps });
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// One grid function per time level `t_0..=t_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    time: TimeGrid,
    n_cells: usize,
    snapshots: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn zeros(time: TimeGrid, n_cells: usize) -> Self {
        Self { time, n_cells, snapshots: vec![vec![0.0; n_cells - 1]; time.n_steps() + 1] }
    }

    pub fn from_snapshots(time: TimeGrid, n_cells: usize, snapshots: Vec<Vec<f64>>) -> Result<Self> {
        if snapshots.len() != time.n_steps() + 1 {
            return Err(Error::DimensionMismatch { expected: time.n_steps() + 1, got: snapshots.len() });
        }
        if let Some(bad) = snapshots.iter().find(|s| s.len() + 1 != n_cells) {
            return Err(Error::DimensionMismatch { expected: n_cells - 1, got: bad.len() });
        }
        Ok(Self { time, n_cells, snapshots })
    }

    /// The same function at every time level.
    pub fn constant(time: TimeGrid, g: &GridFunction) -> Self {
        Self { time, n_cells: g.n_cells(), snapshots: vec![g.values().to_vec(); time.n_steps() + 1] }
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshot(&self, k: usize) -> &[f64] {
        &self.snapshots[k]
    }

    pub fn snapshot_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.snapshots[k]
    }

    pub fn snapshots(&self) -> &[Vec<f64>] {
        &self.snapshots
    }

    pub fn grid_function(&self, k: usize) -> GridFunction {
        GridFunction::from_values(self.n_cells, self.snapshots[k].clone()).expect("consistent sizes")
    }

    /// Discrete L² norm of each snapshot.
    pub fn norms(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| weighted_norm(s, self.dx())).collect()
    }

    pub fn same_shape(&self, other: &Trajectory) -> bool {
        self.n_cells == other.n_cells && self.time == other.time
    }

    pub(crate) fn check_shape(&self, time: &TimeGrid, n_cells: usize) -> Result<()> {
        if self.n_cells != n_cells {
            return Err(Error::DimensionMismatch { expected: n_cells, got: self.n_cells });
        }
        if self.time != *time {
            return Err(Error::DimensionMismatch { expected: time.n_steps(), got: self.time.n_steps() });
        }
        Ok(())
    }

    /// `self - other` snapshot by snapshot.
    pub fn sub(&self, other: &Trajectory) -> Result<Trajectory> {
        other.check_shape(&self.time, self.n_cells)?;
        let snapshots = self
            .snapshots
            .iter()
            .zip(&other.snapshots)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(Self { time: self.time, n_cells: self.n_cells, snapshots })
    }

    /// Long-format CSV `t,x,value` over the interior nodes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let grid = Grid::new(self.n_cells).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        writeln!(w, "t,x,value")?;
        for (k, snap) in self.snapshots.iter().enumerate() {
            let t = self.time.time(k);
            for (x, v) in grid.interior_nodes().iter().zip(snap) {
                writeln!(w, "{t},{x},{v}")?;
            }
        }
        Ok(())
    }
}

/// Pre-factored `I + dt A` and `I + dt Aᵀ`.
#[derive(Debug, Clone)]
pub(crate) struct ImplicitEuler {
    forward: TridiagonalLu,
    backward: TridiagonalLu,
    dt: f64,
}

impl ImplicitEuler {
    /// `primal` is the operator `A` (not its adjoint).
    pub(crate) fn new(primal: &DiscreteOperator, dt: f64) -> Result<Self> {
        let step = primal.matrix.shifted_identity(dt);
        Ok(Self { forward: step.factor()?, backward: step.transpose().factor()?, dt })
    }

    pub(crate) fn forward(&self, y0: &[f64], source: Option<&Trajectory>, out: &mut Trajectory) {
        out.snapshots[0].copy_from_slice(y0);
        for k in 0..out.time.n_steps() {
            let (done, rest) = out.snapshots.split_at_mut(k + 1);
            let next = &mut rest[0];
            next.copy_from_slice(&done[k]);
            if let Some(s) = source {
                for (v, g) in next.iter_mut().zip(&s.snapshots[k]) {
                    *v += self.dt * g;
                }
            }
            self.forward.solve_in_place(next);
        }
    }

    pub(crate) fn backward(&self, terminal: &[f64], source: Option<&Trajectory>, out: &mut Trajectory) {
        let m = out.time.n_steps();
        out.snapshots[m].copy_from_slice(terminal);
        for k in (0..m).rev() {
            let (head, tail) = out.snapshots.split_at_mut(k + 1);
            let cur = &mut head[k];
            cur.copy_from_slice(&tail[0]);
            if let Some(s) = source {
                for (v, g) in cur.iter_mut().zip(&s.snapshots[k + 1]) {
                    *v += self.dt * g;
                }
            }
            self.backward.solve_in_place(cur);
        }
    }
}

fn check_inputs(op: &DiscreteOperator, g: &GridFunction, source: Option<&Trajectory>, tg: &TimeGrid) -> Result<()> {
    if g.n_cells() != op.n_cells() {
        return Err(Error::DimensionMismatch { expected: op.n_cells(), got: g.n_cells() });
    }
    if let Some(s) = source {
        s.check_shape(tg, op.n_cells())?;
    }
    Ok(())
}

/// State equation `y' + A y = s`, `y(0) = y0`.
pub fn solve_forward(
    op: &DiscreteOperator,
    y0: &GridFunction,
    source: Option<&Trajectory>,
    tg: &TimeGrid,
) -> Result<Trajectory> {
    if op.is_adjoint {
        return Err(Error::InvalidArgument("forward solve needs the primal operator".into()));
    }
    check_inputs(op, y0, source, tg)?;
    let stepper = ImplicitEuler::new(op, tg.dt())?;
    let mut out = Trajectory::zeros(*tg, op.n_cells());
    stepper.forward(y0.values(), source, &mut out);
    Ok(out)
}

/// Adjoint equation `-ψ' + Aᵀ ψ = s`, `ψ(T) = terminal`.
pub fn solve_backward(
    op_adj: &DiscreteOperator,
    terminal: &GridFunction,
    source: Option<&Trajectory>,
    tg: &TimeGrid,
) -> Result<Trajectory> {
    if !op_adj.is_adjoint {
        return Err(Error::InvalidArgument("backward solve needs the adjoint operator".into()));
    }
    check_inputs(op_adj, terminal, source, tg)?;
    let stepper = ImplicitEuler::new(&op_adj.transpose(), tg.dt())?;
    let mut out = Trajectory::zeros(*tg, op_adj.n_cells());
    stepper.backward(terminal.values(), source, &mut out);
    Ok(out)
}

/// `Σ_{k in range} dt dx ⟨u_k, v_k⟩`
pub(crate) fn time_inner(u: &Trajectory, v: &Trajectory, range: std::ops::Range<usize>) -> f64 {
    let w = u.time.dt() * u.dx();
    range.map(|k| dot(&u.snapshots[k], &v.snapshots[k])).sum::<f64>() * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_coeff::{sample_coefficients, CoefficientField, CoefficientRecipe, SamplingOptions};
    use crate::operators::{assemble, elliptic_solve, l2_inner, l2_norm};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn heat(n_cells: usize) -> (Grid, DiscreteOperator) {
        let g = Grid::new(n_cells).unwrap();
        let f = CoefficientField::diffusion(&CoefficientRecipe::constant(1.0), &g, None).unwrap();
        (g.clone(), assemble(&f, &g, false).unwrap())
    }

    fn random_traj(tg: TimeGrid, n_cells: usize, rng: &mut ChaCha8Rng) -> Trajectory {
        let snaps = (0..=tg.n_steps()).map(|_| (1..n_cells).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        Trajectory::from_snapshots(tg, n_cells, snaps).unwrap()
    }

    #[test]
    fn time_grid_basics() {
        let tg = TimeGrid::new(50.0, 168).unwrap();
        assert!((tg.dt() * 168.0 - 50.0).abs() <= 4.0 * f64::EPSILON * 50.0);
        assert_eq!(tg.time(168), 50.0);
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
    }

    #[test]
    fn zero_data_stays_zero() {
        let (g, op) = heat(20);
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let y = solve_forward(&op, &GridFunction::zeros(&g), None, &tg).unwrap();
        assert!(y.snapshots().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        let p = solve_backward(&op.transpose(), &GridFunction::zeros(&g), None, &tg).unwrap();
        assert!(p.snapshots().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn modal_decay_forward_and_backward() {
        let (g, op) = heat(100);
        let tg = TimeGrid::new(0.1, 400).unwrap();
        let s = GridFunction::from_fn(&g, |x| (PI * x).sin());
        let y = solve_forward(&op, &s, None, &tg).unwrap();
        let ratio = y.norms()[400] / l2_norm(&s);
        let exact = (-PI * PI * 0.1f64).exp();
        assert!((ratio - exact).abs() < 0.02 * exact, "{ratio} vs {exact}");
        let p = solve_backward(&op.transpose(), &s, None, &tg).unwrap();
        assert!((p.norms()[0] / l2_norm(&s) - ratio).abs() < 1e-14);
    }

    #[test]
    fn stationary_source_is_a_fixed_point() {
        let (g, op) = heat(40);
        let src = GridFunction::from_fn(&g, |x| 1.0 + x);
        let ybar = elliptic_solve(&op, &src).unwrap();
        let tg = TimeGrid::new(2.0, 20).unwrap();
        let y = solve_forward(&op, &ybar, Some(&Trajectory::constant(tg, &src)), &tg).unwrap();
        for s in y.snapshots() {
            for (a, b) in s.iter().zip(ybar.values()) {
                assert!((a - b).abs() < 1e-12 * ybar.values()[20].abs());
            }
        }
    }

    #[test]
    fn operator_roles_are_checked() {
        let (g, op) = heat(10);
        let tg = TimeGrid::new(1.0, 4).unwrap();
        assert!(solve_forward(&op.transpose(), &GridFunction::zeros(&g), None, &tg).is_err());
        assert!(solve_backward(&op, &GridFunction::zeros(&g), None, &tg).is_err());
    }

    #[test]
    fn first_order_in_time() {
        let (g, op) = heat(200);
        let s = GridFunction::from_fn(&g, |x| (PI * x).sin());
        let lambda = 2.0 / (g.dx() * g.dx()) * (1.0 - (PI * g.dx()).cos());
        let mut errs = Vec::new();
        for m in [20, 40, 80] {
            let tg = TimeGrid::new(0.2, m).unwrap();
            let y = solve_forward(&op, &s, None, &tg).unwrap();
            errs.push((y.norms()[m] / l2_norm(&s) - (-lambda * 0.2f64).exp()).abs());
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1] - 2.0).abs() < 0.15, "{:?}", errs);
        }
    }

    #[test]
    fn discrete_duality_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Grid::new(30).unwrap();
        let b = CoefficientRecipe::tabulated(vec![0.0, 1.0], vec![3.0, -1.0]);
        let f = sample_coefficients(
            &CoefficientRecipe::sin2(0.5, 1.0, 0.1),
            &b,
            &CoefficientRecipe::constant(0.2),
            &g,
            None,
            &SamplingOptions::default(),
        )
        .unwrap();
        let a = assemble(&f, &g, false).unwrap();
        let at = assemble(&f, &g, true).unwrap();
        let tg = TimeGrid::new(1.5, 17).unwrap();
        for _ in 0..5 {
            let gsrc = random_traj(tg, 30, &mut rng);
            let ssrc = random_traj(tg, 30, &mut rng);
            let y0 = random_traj(tg, 30, &mut rng).grid_function(0);
            let term = random_traj(tg, 30, &mut rng).grid_function(3);
            let y = solve_forward(&a, &y0, Some(&gsrc), &tg).unwrap();
            let p = solve_backward(&at, &term, Some(&ssrc), &tg).unwrap();
            let m = tg.n_steps();
            let lhs = time_inner(&y, &ssrc, 1..m + 1) + l2_inner(&y.grid_function(m), &term).unwrap();
            let rhs = l2_inner(&y0, &p.grid_function(0)).unwrap() + time_inner(&gsrc, &p, 0..m);
            assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn csv_has_long_format() {
        let (g, _) = heat(4);
        let tg = TimeGrid::new(1.0, 2).unwrap();
        let t = Trajectory::constant(tg, &GridFunction::from_fn(&g, |x| x));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x,value");
        assert_eq!(lines.len(), 1 + 3 * 3);
        assert_eq!(lines[1], "0,0.25,0.25");
    }

    proptest! {
        #[test]
        fn unconditionally_stable(dt_exp in -4.0f64..1.0, p in 0.0f64..5.0, seed in 0u64..100) {
            let g = Grid::new(24).unwrap();
            let f = sample_coefficients(
                &CoefficientRecipe::sin2(0.5, 1.0, 0.3),
                &CoefficientRecipe::constant(0.0),
                &CoefficientRecipe::constant(p),
                &g, None, &SamplingOptions::default()).unwrap();
            let op = assemble(&f, &g, false).unwrap();
            let m = 6;
            let tg = TimeGrid::new(10f64.powf(dt_exp) * m as f64, m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let src = random_traj(tg, 24, &mut rng);
            let y0 = random_traj(tg, 24, &mut rng).grid_function(0);
            let y = solve_forward(&op, &y0, Some(&src), &tg).unwrap();
            let ny = y.norms();
            let ns = src.norms();
            for k in 0..m {
                prop_assert!(ny[k + 1] <= ny[k] + tg.dt() * ns[k] + 1e-12);
            }
        }
    }
}
