//! Evolutive and stationary linear-quadratic control of the parabolic equation.
//!
//! The discrete cost is
//! `J(f) = ½ Σ_{k<M} dt ‖f_k‖² + ½ Σ_{k=1}^{M} dt ‖y_k − y_d‖²`
//! and the control at level `M` carries no weight (it is reported as zero).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_coeff::{CoefficientField, ControlWindow, Grid};
use crate::linalg::{dot, BandMatrix};
use crate::operators::{assemble, weighted_norm, DiscreteOperator, GridFunction};
use crate::pde::{time_inner, ImplicitEuler, TimeGrid, Trajectory};

pub const DEFAULT_CG_TOL: f64 = 1e-8;
pub const DEFAULT_CG_MAX_ITER: usize = 500;

#[derive(Debug, Clone)]
pub struct OcpConfig {
    pub grid: Grid,
    pub time: TimeGrid,
    pub coefficients: CoefficientField,
    pub window: ControlWindow,
    pub y0: GridFunction,
    pub y_d: GridFunction,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl OcpConfig {
    pub fn new(
        grid: Grid,
        time: TimeGrid,
        coefficients: CoefficientField,
        window: ControlWindow,
        y0: GridFunction,
        y_d: GridFunction,
    ) -> Result<Self> {
        let n = grid.n_cells();
        for got in [coefficients.n_cells, y0.n_cells(), y_d.n_cells(), window.len() + 1] {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        Ok(Self {
            grid,
            time,
            coefficients,
            window,
            y0,
            y_d,
            cg_tol: DEFAULT_CG_TOL,
            cg_max_iter: DEFAULT_CG_MAX_ITER,
        })
    }

    pub fn with_cg(mut self, tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol > 0.0) || max_iter == 0 {
            return Err(Error::InvalidArgument(format!("cg_tol {tol} and cg_max_iter {max_iter} must be positive")));
        }
        self.cg_tol = tol;
        self.cg_max_iter = max_iter;
        Ok(self)
    }

    pub fn with_time(mut self, time: TimeGrid) -> Self {
        self.time = time;
        self
    }

    pub fn with_y0(mut self, y0: GridFunction) -> Self {
        self.y0 = y0;
        self
    }

    pub fn with_target(mut self, y_d: GridFunction) -> Self {
        self.y_d = y_d;
        self
    }

    pub fn operator(&self) -> Result<DiscreteOperator> {
        assemble(&self.coefficients, &self.grid, false)
    }
}

#[derive(Debug, Clone)]
pub struct OptimalSolution {
    pub y: Trajectory,
    pub f: Trajectory,
    pub psi: Trajectory,
    pub cost: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    pub cost: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl OptimalSolution {
    pub fn summary(&self) -> SolutionSummary {
        SolutionSummary { cost: self.cost, iterations: self.iterations, grad_norm: self.grad_norm }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadySolution {
    pub y_bar: GridFunction,
    pub f_bar: GridFunction,
    pub psi_bar: GridFunction,
    pub cost: f64,
    /// Max-norm residuals of the state and adjoint equations.
    pub residuals: [f64; 2],
}

/// `Σ_{k<M} dt dx ⟨u_k, v_k⟩`, the inner product of the control space.
pub fn control_inner(u: &Trajectory, v: &Trajectory) -> f64 {
    time_inner(u, v, 0..u.time().n_steps())
}

pub fn control_norm(u: &Trajectory) -> f64 {
    control_inner(u, u).max(0.0).sqrt()
}

/// Operator, stepper and data shared by every evaluation on one config.
pub(crate) struct Problem<'a> {
    cfg: &'a OcpConfig,
    stepper: ImplicitEuler,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(cfg: &'a OcpConfig) -> Result<Self> {
        let op = cfg.operator()?;
        Ok(Self { cfg, stepper: ImplicitEuler::new(&op, cfg.time.dt())? })
    }

    fn masked(&self, f: &Trajectory) -> Trajectory {
        let mut out = f.clone();
        for k in 0..out.len() {
            self.cfg.window.apply_in_place(out.snapshot_mut(k));
        }
        out
    }

    pub(crate) fn state(&self, y0: &[f64], f: &Trajectory) -> Trajectory {
        let mut y = Trajectory::zeros(self.cfg.time, self.cfg.grid.n_cells());
        self.stepper.forward(y0, Some(&self.masked(f)), &mut y);
        y
    }

    /// Adjoint with source `y − target` and zero terminal data.
    pub(crate) fn adjoint(&self, y: &Trajectory, target: Option<&[f64]>) -> Trajectory {
        let mut s = y.clone();
        if let Some(t) = target {
            for k in 0..s.len() {
                for (v, d) in s.snapshot_mut(k).iter_mut().zip(t) {
                    *v -= d;
                }
            }
        }
        let mut psi = Trajectory::zeros(self.cfg.time, self.cfg.grid.n_cells());
        let zero = vec![0.0; self.cfg.grid.n_interior()];
        self.stepper.backward(&zero, Some(&s), &mut psi);
        psi
    }

    /// `f_k + χ ψ_k` for `k < M`, zero at `k = M`.
    pub(crate) fn gradient_from(&self, f: &Trajectory, psi: &Trajectory) -> Trajectory {
        let m = self.cfg.time.n_steps();
        let mask = self.cfg.window.mask();
        let mut g = f.clone();
        for k in 0..m {
            for ((gv, p), c) in g.snapshot_mut(k).iter_mut().zip(psi.snapshot(k)).zip(mask) {
                *gv += c * p;
            }
        }
        g.snapshot_mut(m).fill(0.0);
        g
    }

    fn cost_from(&self, f: &Trajectory, y: &Trajectory) -> f64 {
        let m = self.cfg.time.n_steps();
        let dt = self.cfg.time.dt();
        let dx = self.cfg.grid.dx();
        let control: f64 = (0..m).map(|k| dot(f.snapshot(k), f.snapshot(k))).sum();
        let misfit: f64 = (1..=m)
            .map(|k| y.snapshot(k).iter().zip(self.cfg.y_d.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        0.5 * dt * dx * (control + misfit)
    }

    /// Reduced Hessian `H f = f + χ ψ(y(f; 0); 0)`.
    fn hessian(&self, f: &Trajectory) -> Trajectory {
        let zero = vec![0.0; self.cfg.grid.n_interior()];
        let y = self.state(&zero, f);
        let psi = self.adjoint(&y, None);
        self.gradient_from(f, &psi)
    }
}

fn check_control(f: &Trajectory, cfg: &OcpConfig) -> Result<()> {
    if f.n_cells() != cfg.grid.n_cells() {
        return Err(Error::DimensionMismatch { expected: cfg.grid.n_cells(), got: f.n_cells() });
    }
    if f.time() != &cfg.time {
        return Err(Error::DimensionMismatch { expected: cfg.time.n_steps(), got: f.time().n_steps() });
    }
    Ok(())
}

pub fn evaluate_cost(f: &Trajectory, cfg: &OcpConfig) -> Result<f64> {
    check_control(f, cfg)?;
    let pb = Problem::new(cfg)?;
    let y = pb.state(cfg.y0.values(), f);
    Ok(pb.cost_from(f, &y))
}

pub fn reduced_gradient(f: &Trajectory, cfg: &OcpConfig) -> Result<Trajectory> {
    check_control(f, cfg)?;
    let pb = Problem::new(cfg)?;
    let y = pb.state(cfg.y0.values(), f);
    let psi = pb.adjoint(&y, Some(cfg.y_d.values()));
    Ok(pb.gradient_from(f, &psi))
}

/// Applies the reduced Hessian, which does not depend on `y0` or `y_d`.
pub fn apply_hessian(f: &Trajectory, cfg: &OcpConfig) -> Result<Trajectory> {
    check_control(f, cfg)?;
    Ok(Problem::new(cfg)?.hessian(f))
}

fn axpy(alpha: f64, x: &Trajectory, y: &mut Trajectory) {
    for k in 0..y.len() {
        for (a, b) in y.snapshot_mut(k).iter_mut().zip(x.snapshot(k)) {
            *a += alpha * b;
        }
    }
}

/// Conjugate gradients for `H x = b` in the control inner product.
/// Returns the solution and the iteration count.
pub(crate) fn conjugate_gradient(
    apply: impl Fn(&Trajectory) -> Trajectory,
    b: &Trajectory,
    tol: f64,
    max_iter: usize,
) -> Result<(Trajectory, usize)> {
    let mut x = Trajectory::zeros(*b.time(), b.n_cells());
    let b_norm = control_norm(b);
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = control_inner(&r, &r);
    for it in 1..=max_iter {
        let hp = apply(&p);
        let php = control_inner(&p, &hp);
        if !(php > 0.0) {
            return Err(Error::CgNotConverged { iterations: it, residual: rr.sqrt() / b_norm });
        }
        let alpha = rr / php;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &hp, &mut r);
        let rr_new = control_inner(&r, &r);
        if rr_new.sqrt() <= tol * b_norm {
            return Ok((x, it));
        }
        let beta = rr_new / rr;
        for k in 0..p.len() {
            for (pv, rv) in p.snapshot_mut(k).iter_mut().zip(r.snapshot(k)) {
                *pv = rv + beta * *pv;
            }
        }
        rr = rr_new;
    }
    Err(Error::CgNotConverged { iterations: max_iter, residual: rr.sqrt() / b_norm })
}

pub fn solve_evolutive_ocp(cfg: &OcpConfig) -> Result<OptimalSolution> {
    let pb = Problem::new(cfg)?;
    let zero_f = Trajectory::zeros(cfg.time, cfg.grid.n_cells());
    // Right-hand side: minus the gradient at f = 0.
    let y_free = pb.state(cfg.y0.values(), &zero_f);
    let psi_free = pb.adjoint(&y_free, Some(cfg.y_d.values()));
    let mut rhs = pb.gradient_from(&zero_f, &psi_free);
    for k in 0..rhs.len() {
        rhs.snapshot_mut(k).iter_mut().for_each(|v| *v = -*v);
    }
    let (f, iterations) = conjugate_gradient(|p| pb.hessian(p), &rhs, cfg.cg_tol, cfg.cg_max_iter)?;
    let y = pb.state(cfg.y0.values(), &f);
    let psi = pb.adjoint(&y, Some(cfg.y_d.values()));
    let grad = pb.gradient_from(&f, &psi);
    let cost = pb.cost_from(&f, &y);
    Ok(OptimalSolution { y, f, psi, cost, iterations, grad_norm: control_norm(&grad) })
}

/// Coupled system `A ȳ + χ ψ̄ = 0`, `Aᵀ ψ̄ − ȳ = −y_d`, interleaved as
/// `(ȳ_1, ψ̄_1, ȳ_2, ψ̄_2, …)` so that it has bandwidth two.
pub fn solve_steady_ocp(cfg: &OcpConfig) -> Result<SteadySolution> {
    let op = cfg.operator()?;
    let a = &op.matrix;
    let n = op.dim();
    let mask = cfg.window.mask();
    let mut band = BandMatrix::zeros(2 * n, 2, 2);
    let mut rhs = vec![0.0; 2 * n];
    for i in 0..n {
        let (ry, rp) = (2 * i, 2 * i + 1);
        band.set(ry, 2 * i, a.diag[i]);
        band.set(ry, 2 * i + 1, mask[i]);
        band.set(rp, 2 * i, -1.0);
        band.set(rp, 2 * i + 1, a.diag[i]);
        if i > 0 {
            band.set(ry, 2 * (i - 1), a.sub[i]);
            // (Aᵀ)_{i,i-1} = A_{i-1,i}
            band.set(rp, 2 * (i - 1) + 1, a.sup[i - 1]);
        }
        if i + 1 < n {
            band.set(ry, 2 * (i + 1), a.sup[i]);
            band.set(rp, 2 * (i + 1) + 1, a.sub[i + 1]);
        }
        rhs[rp] = -cfg.y_d.values()[i];
    }
    let z = band.factor()?.solve(&rhs);
    let y: Vec<f64> = (0..n).map(|i| z[2 * i]).collect();
    let psi: Vec<f64> = (0..n).map(|i| z[2 * i + 1]).collect();
    let f: Vec<f64> = psi.iter().zip(mask).map(|(p, c)| -c * p).collect();

    let ay = a.matvec(&y);
    let atp = a.transpose().matvec(&psi);
    let r_state = (0..n).map(|i| (ay[i] - f[i]).abs()).fold(0.0, f64::max);
    let r_adj = (0..n).map(|i| (atp[i] - y[i] + cfg.y_d.values()[i]).abs()).fold(0.0, f64::max);

    let dx = cfg.grid.dx();
    let misfit: Vec<f64> = y.iter().zip(cfg.y_d.values()).map(|(a, b)| a - b).collect();
    let cost = 0.5 * (weighted_norm(&f, dx).powi(2) + weighted_norm(&misfit, dx).powi(2));
    let nc = cfg.grid.n_cells();
    Ok(SteadySolution {
        y_bar: GridFunction::from_values(nc, y)?,
        f_bar: GridFunction::from_values(nc, f)?,
        psi_bar: GridFunction::from_values(nc, psi)?,
        cost,
        residuals: [r_state, r_adj],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_coeff::{sample_coefficients, CoefficientRecipe, SamplingOptions};
    use crate::operators::{l2_inner, l2_norm};
    use nalgebra::{DMatrix, DVector, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn heat_cfg(n_cells: usize, horizon: f64, steps: usize) -> OcpConfig {
        let g = Grid::new(n_cells).unwrap();
        let c = CoefficientField::diffusion(&CoefficientRecipe::constant(1.0), &g, None).unwrap();
        let w = ControlWindow::full(&g);
        let z = GridFunction::zeros(&g);
        OcpConfig::new(g, TimeGrid::new(horizon, steps).unwrap(), c, w, z.clone(), z).unwrap()
    }

    fn rough_cfg(n_cells: usize, horizon: f64, steps: usize, seed: u64) -> OcpConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::new(n_cells).unwrap();
        let c = sample_coefficients(
            &CoefficientRecipe::sin2(0.5, 1.0, 0.25),
            &CoefficientRecipe::tabulated(vec![0.0, 1.0], vec![1.0, -2.0]),
            &CoefficientRecipe::constant(0.3),
            &g,
            None,
            &SamplingOptions::default(),
        )
        .unwrap();
        let w = ControlWindow::new(&g, 0.2, 0.7).unwrap();
        let noise: Vec<f64> = (0..g.n_interior()).map(|_| 0.1 * rng.gen_range(-1.0..1.0)).collect();
        let y0 = GridFunction::from_values(
            n_cells,
            g.interior_nodes().iter().zip(&noise).map(|(x, e)| x * (x - 1.0) + e).collect(),
        )
        .unwrap();
        let yd = GridFunction::from_fn(&g, |x| 1.0 + 0.5 * x);
        OcpConfig::new(g, TimeGrid::new(horizon, steps).unwrap(), c, w, y0, yd).unwrap()
    }

    fn random_control(cfg: &OcpConfig, rng: &mut ChaCha8Rng) -> Trajectory {
        let n = cfg.grid.n_interior();
        let snaps = (0..=cfg.time.n_steps()).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        Trajectory::from_snapshots(cfg.time, cfg.grid.n_cells(), snaps).unwrap()
    }

    fn discrete_lambda1(n_cells: usize) -> f64 {
        let dx = 1.0 / n_cells as f64;
        2.0 / (dx * dx) * (1.0 - (PI * dx).cos())
    }

    #[test]
    fn cost_examples() {
        let cfg = heat_cfg(50, 1.0, 10);
        let f = Trajectory::zeros(cfg.time, 50);
        assert_eq!(evaluate_cost(&f, &cfg).unwrap(), 0.0);

        let g = cfg.grid.clone();
        let cfg = cfg.with_target(GridFunction::from_fn(&g, |_| 1.0));
        let j = evaluate_cost(&f, &cfg).unwrap();
        assert!((j - 0.5 * 49.0 / 50.0).abs() < 1e-13);

        let cfg = heat_cfg(200, 2.0, 400);
        let g = cfg.grid.clone();
        let cfg = cfg.with_y0(GridFunction::from_fn(&g, |x| (PI * x).sin()));
        let f = Trajectory::zeros(cfg.time, 200);
        let j = evaluate_cost(&f, &cfg).unwrap();
        let exact = 1.0 / (8.0 * PI * PI);
        assert!((j - exact).abs() < 0.03 * exact, "{j} vs {exact}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let cfg = rough_cfg(30, 1.0, 12, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-4;
        for _ in 0..5 {
            let f = random_control(&cfg, &mut rng);
            let d = random_control(&cfg, &mut rng);
            let g = reduced_gradient(&f, &cfg).unwrap();
            let mut fp = f.clone();
            let mut fm = f.clone();
            axpy(h, &d, &mut fp);
            axpy(-h, &d, &mut fm);
            let fd = (evaluate_cost(&fp, &cfg).unwrap() - evaluate_cost(&fm, &cfg).unwrap()) / (2.0 * h);
            let an = control_inner(&g, &d);
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "{fd} vs {an}");
        }
    }

    #[test]
    fn hessian_is_symmetric() {
        let cfg = rough_cfg(30, 1.0, 12, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let f = random_control(&cfg, &mut rng);
            let g = random_control(&cfg, &mut rng);
            let a = control_inner(&apply_hessian(&f, &cfg).unwrap(), &g);
            let b = control_inner(&f, &apply_hessian(&g, &cfg).unwrap());
            assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
        }
    }

    #[test]
    fn zero_data_gives_zero_control() {
        let cfg = heat_cfg(20, 1.0, 10);
        let sol = solve_evolutive_ocp(&cfg).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.cost, 0.0);
        assert!(sol.f.snapshots().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn optimum_closes_the_optimality_system() {
        let cfg = rough_cfg(40, 3.0, 30, 5);
        let sol = solve_evolutive_ocp(&cfg).unwrap();
        let scale = l2_norm(&cfg.y_d);
        let mask = cfg.window.mask();
        for k in 0..cfg.time.n_steps() {
            let r: Vec<f64> =
                sol.f.snapshot(k).iter().zip(sol.psi.snapshot(k)).zip(mask).map(|((f, p), c)| f + c * p).collect();
            assert!(weighted_norm(&r, cfg.grid.dx()) <= 10.0 * cfg.cg_tol * scale);
        }
        let again = evaluate_cost(&sol.f, &cfg).unwrap();
        assert!((again - sol.cost).abs() <= 1e-10 * sol.cost);
        // Control vanishes outside the window.
        for k in 0..=cfg.time.n_steps() {
            for (v, c) in sol.f.snapshot(k).iter().zip(mask) {
                if *c == 0.0 {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn cg_reports_iteration_cap() {
        let cfg = rough_cfg(30, 2.0, 20, 6).with_cg(1e-14, 2).unwrap();
        assert!(matches!(solve_evolutive_ocp(&cfg), Err(Error::CgNotConverged { iterations: 2, .. })));
    }

    /// Dense saddle-point system in `(y_1..y_M, ψ_0..ψ_{M-1})` with `f = −χψ` eliminated.
    fn dense_kkt(cfg: &OcpConfig) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let op = cfg.operator().unwrap();
        let a = op.matrix.to_dense();
        let n = op.dim();
        let m = cfg.time.n_steps();
        let dt = cfg.time.dt();
        let l = DMatrix::identity(n, n) + &a * dt;
        let chi = DMatrix::from_diagonal(&DVector::from_column_slice(cfg.window.mask()));
        let size = 2 * m * n;
        let yi = |k: usize| (k - 1) * n;
        let pi = |k: usize| m * n + k * n;
        let mut kkt = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        for k in 0..m {
            // L y_{k+1} − y_k + dt χ ψ_k = 0
            let row = k * n;
            kkt.view_mut((row, yi(k + 1)), (n, n)).copy_from(&l);
            if k > 0 {
                kkt.view_mut((row, yi(k)), (n, n)).copy_from(&(-DMatrix::identity(n, n)));
            } else {
                rhs.rows_mut(row, n).copy_from(&DVector::from_column_slice(cfg.y0.values()));
            }
            kkt.view_mut((row, pi(k)), (n, n)).copy_from(&(&chi * dt));
            // Lᵀ ψ_k − ψ_{k+1} − dt y_{k+1} = −dt y_d
            let row = m * n + k * n;
            kkt.view_mut((row, pi(k)), (n, n)).copy_from(&l.transpose());
            if k + 1 < m {
                kkt.view_mut((row, pi(k + 1)), (n, n)).copy_from(&(-DMatrix::identity(n, n)));
            }
            kkt.view_mut((row, yi(k + 1)), (n, n)).copy_from(&(-DMatrix::identity(n, n) * dt));
            rhs.rows_mut(row, n).copy_from(&(-DVector::from_column_slice(cfg.y_d.values()) * dt));
        }
        let z = kkt.lu().solve(&rhs).unwrap();
        let ys = (1..=m).map(|k| z.rows(yi(k), n).iter().copied().collect()).collect();
        let ps = (0..m).map(|k| z.rows(pi(k), n).iter().copied().collect()).collect();
        (ys, ps)
    }

    #[test]
    fn matches_dense_kkt_solve() {
        let cfg = rough_cfg(9, 1.0, 8, 7).with_cg(1e-13, 200).unwrap();
        let sol = solve_evolutive_ocp(&cfg).unwrap();
        let (ys, ps) = dense_kkt(&cfg);
        let mask = cfg.window.mask();
        for k in 0..8 {
            for i in 0..8 {
                assert!((sol.y.snapshot(k + 1)[i] - ys[k][i]).abs() < 1e-9);
                assert!((sol.psi.snapshot(k)[i] - ps[k][i]).abs() < 1e-9);
                assert!((sol.f.snapshot(k)[i] + mask[i] * ps[k][i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn modal_cost_matches_scalar_riccati() {
        let n_cells = 50;
        let cfg = heat_cfg(n_cells, 5.0, 2000);
        let g = cfg.grid.clone();
        let y0 = GridFunction::from_fn(&g, |x| (PI * x).sin());
        let cfg = cfg.with_y0(y0.clone());
        let sol = solve_evolutive_ocp(&cfg).unwrap();
        let l1 = discrete_lambda1(n_cells);
        let p1 = -l1 + (l1 * l1 + 1.0).sqrt();
        let expected = 0.5 * p1 * l2_norm(&y0).powi(2);
        // dt = 2.5e-3: first-order time error of about 1.2%.
        assert!((sol.cost - expected).abs() < 0.02 * expected, "{} vs {expected}", sol.cost);
    }

    #[test]
    fn cost_is_nondecreasing_in_horizon() {
        let mut last = 0.0;
        for steps in [10, 20, 40, 80] {
            let cfg = rough_cfg(30, 0.1 * steps as f64, steps, 8);
            let cfg = cfg.clone().with_target(GridFunction::zeros(&cfg.grid));
            let j = solve_evolutive_ocp(&cfg.with_cg(1e-12, 500).unwrap()).unwrap().cost;
            assert!(j >= last - 1e-14, "{j} < {last}");
            last = j;
        }
    }

    #[test]
    fn steady_zero_target() {
        let cfg = rough_cfg(30, 1.0, 4, 9);
        let cfg = cfg.clone().with_target(GridFunction::zeros(&cfg.grid));
        let s = solve_steady_ocp(&cfg).unwrap();
        assert!(s.y_bar.is_zero() && s.f_bar.is_zero() && s.psi_bar.is_zero());
    }

    #[test]
    fn steady_matches_spectral_formula() {
        let cfg = heat_cfg(100, 1.0, 4);
        let g = cfg.grid.clone();
        let cfg = cfg.with_target(GridFunction::from_fn(&g, |_| 1.0));
        let s = solve_steady_ocp(&cfg).unwrap();
        let a = cfg.operator().unwrap().matrix.to_dense();
        let eig = SymmetricEigen::new(a);
        let yd = DVector::from_column_slice(cfg.y_d.values());
        let coeffs = eig.eigenvectors.transpose() * &yd;
        let scaled = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c / (l * l + 1.0)),
        );
        let oracle = &eig.eigenvectors * scaled;
        let err = (DVector::from_column_slice(s.y_bar.values()) - &oracle).amax();
        assert!(err <= 1e-6 * oracle.amax(), "{err}");
        let mode = GridFunction::from_fn(&g, |x| 2f64.sqrt() * (PI * x).sin());
        let c1 = l2_inner(&s.y_bar, &mode).unwrap();
        let l1 = discrete_lambda1(100);
        let yd1 = l2_inner(&cfg.y_d, &mode).unwrap();
        assert!((c1 - yd1 / (l1 * l1 + 1.0)).abs() < 1e-10);
        // Coefficient of sin(πx) in the sine series: 2⟨ȳ, sin(πx)⟩ = √2 c1.
        let series = 2f64.sqrt() * c1;
        assert!((series - 0.012937).abs() < 1e-5, "{series}");
        assert!(s.residuals.iter().all(|&r| r <= 1e-10));
    }

    #[test]
    fn steady_energy_bound() {
        for seed in 0..6 {
            let cfg = rough_cfg(60, 1.0, 4, 20 + seed);
            let s = solve_steady_ocp(&cfg).unwrap();
            let lhs = l2_norm(&s.y_bar).powi(2) + l2_norm(&s.f_bar).powi(2);
            assert!(lhs <= l2_norm(&cfg.y_d).powi(2));
            assert!(s.residuals.iter().all(|&r| r <= 1e-10), "{:?}", s.residuals);
        }
    }
}
