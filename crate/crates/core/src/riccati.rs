//! Riccati operators of the null-target problem and the affine feedback law.
//!
//! `P` maps the state to the adjoint state, `ψ = P y`, so the optimal cost of
//! the null-target problem is `½ (P y0, y0)`. The continuous stationary
//! matrix solves `AᵀP + PA + PχP = I`.
//!
//! The time-dependent family is the exact Riccati recursion of the discrete
//! optimality system, so `ψ_k = P_k y_k` holds to rounding error for the
//! optimum computed by the direct solver:
//! `W = L⁻ᵀ (P_{k+1} + dt I) L⁻¹`, `P_k = (I + dt W χ)⁻¹ W`, `L = I + dt A`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid_coeff::ControlWindow;
use crate::linalg::{Tridiagonal, TridiagonalLu};
use crate::ocp::{OptimalSolution, SteadySolution};
use crate::operators::{weighted_norm, DiscreteOperator, GridFunction};
use crate::pde::{TimeGrid, Trajectory};

pub const DEFAULT_MAX_UNKNOWNS: usize = 401;
const SYMMETRY_WARN: f64 = 1e-8;
const SYMMETRY_ABORT: f64 = 1e-4;
const STATIONARY_TOL: f64 = 1e-11;
const STATIONARY_MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiOptions {
    /// Largest number of interior unknowns accepted for dense matrices.
    pub max_unknowns: usize,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self { max_unknowns: DEFAULT_MAX_UNKNOWNS }
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiFamily {
    pub time: TimeGrid,
    pub n_cells: usize,
    /// `P_k` for `k = 0..=M`; `P_M = 0`.
    pub p: Vec<DMatrix<f64>>,
    /// Largest relative asymmetry seen before re-symmetrizing.
    pub max_asymmetry: f64,
    pub warnings: Vec<String>,
    operator: Tridiagonal,
    mask: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StationaryRiccati {
    pub n_cells: usize,
    pub p_hat: DMatrix<f64>,
    /// `A + χ P̂`
    pub closed_loop: DMatrix<f64>,
    /// Frobenius residual of the equation `P̂` was computed from.
    pub residual: f64,
}

/// Closed-loop trajectory together with its deviation from the steady pair.
#[derive(Debug, Clone)]
pub struct FeedbackSolution {
    pub solution: OptimalSolution,
    /// `y − ȳ`, integrated directly.
    pub state_dev: Trajectory,
    /// `f − f̄`
    pub control_dev: Trajectory,
    /// `ψ − ψ̄ = P y_dev + h`
    pub adjoint_dev: Trajectory,
}

fn check_size(op: &DiscreteOperator, window: &ControlWindow, opts: &RiccatiOptions) -> Result<()> {
    if window.len() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: window.len() });
    }
    if op.dim() > opts.max_unknowns {
        return Err(Error::RiccatiTooLarge { n: op.dim(), limit: opts.max_unknowns });
    }
    Ok(())
}

fn primal(op: &DiscreteOperator) -> Tridiagonal {
    if op.is_adjoint {
        op.matrix.transpose()
    } else {
        op.matrix.clone()
    }
}

fn solve_columns(lu: &TridiagonalLu, m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for col in m.as_mut_slice().chunks_exact_mut(n) {
        lu.solve_in_place(col);
    }
}

fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// One backward step of the discrete Riccati recursion.
struct RiccatiStepper {
    backward: TridiagonalLu,
    window: Vec<usize>,
    dt: f64,
}

impl RiccatiStepper {
    fn new(a: &Tridiagonal, mask: &[f64], dt: f64) -> Result<Self> {
        let l = a.shifted_identity(dt);
        let window = mask.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(i, _)| i).collect();
        Ok(Self { backward: l.transpose().factor()?, window, dt })
    }

    /// Returns `P_k` from `P_{k+1}` and the asymmetry removed.
    fn step(&self, next: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
        let n = next.nrows();
        let mut x = next + DMatrix::identity(n, n) * self.dt;
        solve_columns(&self.backward, &mut x);
        let mut w = x.transpose();
        solve_columns(&self.backward, &mut w);
        symmetrize(&mut w);
        let mut p = if self.window.is_empty() {
            w
        } else {
            // Woodbury on the window rows: P = W − dt W_c (I + dt W_ωω)⁻¹ W_cᵀ.
            let wc = w.select_columns(&self.window);
            let k = DMatrix::identity(self.window.len(), self.window.len()) + wc.select_rows(&self.window) * self.dt;
            let chol = k.cholesky().ok_or(Error::Singular { row: 0, pivot: f64::NAN })?;
            let x = chol.solve(&wc.transpose());
            let mut p = w;
            p.gemm(-self.dt, &wc, &x, 1.0);
            p
        };
        let asym = relative_asymmetry(&p);
        symmetrize(&mut p);
        Ok((p, asym))
    }

    fn step_checked(&self, next: &DMatrix<f64>, k: usize, warnings: &mut Vec<String>) -> Result<(DMatrix<f64>, f64)> {
        let (p, asym) = self.step(next)?;
        if asym > SYMMETRY_ABORT {
            return Err(Error::SymmetryLoss { step: k, asymmetry: asym });
        }
        if asym > SYMMETRY_WARN {
            warnings.push(format!("step {k}: re-symmetrized, relative asymmetry {asym:.3e}"));
        }
        Ok((p, asym))
    }
}

pub fn solve_dre(op: &DiscreteOperator, window: &ControlWindow, tg: &TimeGrid) -> Result<RiccatiFamily> {
    solve_dre_with(op, window, tg, &RiccatiOptions::default())
}

pub fn solve_dre_with(
    op: &DiscreteOperator,
    window: &ControlWindow,
    tg: &TimeGrid,
    opts: &RiccatiOptions,
) -> Result<RiccatiFamily> {
    check_size(op, window, opts)?;
    let a = primal(op);
    let stepper = RiccatiStepper::new(&a, window.mask(), tg.dt())?;
    let n = op.dim();
    let m = tg.n_steps();
    let mut p = vec![DMatrix::zeros(n, n); m + 1];
    let mut warnings = Vec::new();
    let mut max_asymmetry: f64 = 0.0;
    for k in (0..m).rev() {
        let (pk, asym) = stepper.step_checked(&p[k + 1], k, &mut warnings)?;
        max_asymmetry = max_asymmetry.max(asym);
        p[k] = pk;
    }
    Ok(RiccatiFamily {
        time: *tg,
        n_cells: op.n_cells(),
        p,
        max_asymmetry,
        warnings,
        operator: a,
        mask: window.mask().to_vec(),
    })
}

impl RiccatiFamily {
    pub fn dim(&self) -> usize {
        self.operator.len()
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn apply(&self, k: usize, y: &[f64]) -> Vec<f64> {
        (&self.p[k] * DVector::from_column_slice(y)).as_slice().to_vec()
    }

    /// `(P_k y, y)` in the grid inner product.
    pub fn quadratic_form(&self, k: usize, y: &GridFunction) -> f64 {
        let v = DVector::from_column_slice(y.values());
        self.dx() * v.dot(&(&self.p[k] * &v))
    }

    pub fn operator_norm(&self, k: usize) -> f64 {
        spectral_norm_sym(&self.p[k])
    }

    pub fn window_mask(&self) -> &[f64] {
        &self.mask
    }

    pub fn operator(&self) -> &Tridiagonal {
        &self.operator
    }
}

/// Spectral norm of a symmetric matrix. The grid inner product is a multiple
/// of the Euclidean one, so this is also the operator norm on grid functions.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().symmetric_eigenvalues().amax()
}

pub fn min_eigenvalue_sym(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

fn masked_diag(mask: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(mask))
}

/// `‖AᵀP + PA + PχP − I‖_F`
pub fn are_residual(a: &DMatrix<f64>, mask: &[f64], p: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let b = masked_diag(mask);
    (a.transpose() * p + p * a + p * &b * p - DMatrix::identity(n, n)).norm()
}

fn inverse_with_log_det(z: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let lu = z.clone().lu();
    let log_det: f64 = lu.u().diagonal().iter().map(|v| v.abs().ln()).sum();
    let inv = lu.try_inverse().ok_or(Error::Singular { row: 0, pivot: 0.0 })?;
    Ok((inv, log_det))
}

/// Newton iteration for the matrix sign function with determinant scaling.
fn matrix_sign(mut z: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = z.nrows() as f64;
    let mut scaled = true;
    let mut last = f64::INFINITY;
    for _ in 0..100 {
        let (inv, log_det) = inverse_with_log_det(&z)?;
        let c = if scaled { (-log_det / n).exp() } else { 1.0 };
        let next = (&z * c + inv / c) * 0.5;
        let diff = (&next - &z).norm() / next.norm();
        z = next;
        if diff < 1e-2 {
            scaled = false;
        }
        if diff < 1e-13 || (diff < 1e-9 && diff >= last) {
            return Ok(z);
        }
        last = diff;
    }
    Err(Error::AreNotConverged("matrix sign iteration did not settle".into()))
}

/// Solves `MᵀX + XM = Q` for `M` with spectrum in the right half plane.
fn lyapunov(m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows() as f64;
    let mut e = m.clone();
    let mut q = q.clone();
    let mut scaled = true;
    let mut last = f64::INFINITY;
    for _ in 0..100 {
        let (inv, log_det) = inverse_with_log_det(&e)?;
        let c = if scaled { (-log_det / n).exp() } else { 1.0 };
        let next = (&e * c + &inv / c) * 0.5;
        q = (&q * c + inv.transpose() * &q * &inv / c) * 0.5;
        let diff = (&next - &e).norm() / next.norm();
        e = next;
        if diff < 1e-2 {
            scaled = false;
        }
        if diff < 1e-13 || (diff < 1e-9 && diff >= last) {
            let mut x = q * 0.5;
            symmetrize(&mut x);
            return Ok(x);
        }
        last = diff;
    }
    Err(Error::AreNotConverged("Lyapunov sign iteration did not settle".into()))
}

pub fn solve_are(op: &DiscreteOperator, window: &ControlWindow) -> Result<StationaryRiccati> {
    solve_are_with(op, window, &RiccatiOptions::default())
}

/// Continuous algebraic Riccati equation through the sign function of the
/// Hamiltonian matrix, polished by Newton steps on the residual.
pub fn solve_are_with(op: &DiscreteOperator, window: &ControlWindow, opts: &RiccatiOptions) -> Result<StationaryRiccati> {
    check_size(op, window, opts)?;
    let a = primal(op).to_dense();
    let n = a.nrows();
    let mask = window.mask();
    let b = masked_diag(mask);
    let id = DMatrix::<f64>::identity(n, n);

    // Trajectories of y' = −Ay − χψ, ψ' = Aᵀψ − y; the stable subspace is [I; P].
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&(-&a));
    h.view_mut((0, n), (n, n)).copy_from(&(-&b));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&id));
    h.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let s = matrix_sign(h)?;

    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&s.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(s.view((n, n), (n, n)) + &id));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(s.view((0, 0), (n, n)) + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-s.view((n, 0), (n, n))));
    let qr = lhs.qr();
    let mut p = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * rhs))
        .ok_or_else(|| Error::AreNotConverged("rank-deficient stable subspace".into()))?;
    symmetrize(&mut p);

    let mut residual = are_residual(&a, mask, &p);
    for _ in 0..4 {
        let m = &a + &b * &p;
        let r = a.transpose() * &p + &p * &a + &p * &b * &p - &id;
        let delta = lyapunov(&m, &(-r))?;
        let candidate = &p + delta;
        let res = are_residual(&a, mask, &candidate);
        if !(res < residual) {
            break;
        }
        p = candidate;
        residual = res;
    }
    let closed_loop = &a + &b * &p;
    Ok(StationaryRiccati { n_cells: op.n_cells(), p_hat: p, closed_loop, residual })
}

/// Fixed point of the discrete recursion for step `dt`, reached by iterating
/// until `‖P_k − P_{k+1}‖_F / dt ≤ 1e-11`.
pub fn solve_are_discrete(op: &DiscreteOperator, window: &ControlWindow, dt: f64) -> Result<StationaryRiccati> {
    solve_are_discrete_with(op, window, dt, &RiccatiOptions::default())
}

pub fn solve_are_discrete_with(
    op: &DiscreteOperator,
    window: &ControlWindow,
    dt: f64,
    opts: &RiccatiOptions,
) -> Result<StationaryRiccati> {
    check_size(op, window, opts)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let a = primal(op);
    let stepper = RiccatiStepper::new(&a, window.mask(), dt)?;
    let n = op.dim();
    let mut p = DMatrix::zeros(n, n);
    let mut warnings = Vec::new();
    for k in 0..STATIONARY_MAX_STEPS {
        let (next, _) = stepper.step_checked(&p, k, &mut warnings)?;
        let change = (&next - &p).norm() / dt;
        p = next;
        if change <= STATIONARY_TOL {
            let dense = a.to_dense();
            let closed_loop = &dense + masked_diag(window.mask()) * &p;
            return Ok(StationaryRiccati { n_cells: op.n_cells(), p_hat: p, closed_loop, residual: change * dt });
        }
    }
    Err(Error::AreNotConverged(format!("no stationary state after {STATIONARY_MAX_STEPS} steps")))
}

impl StationaryRiccati {
    pub fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    /// Ratio `‖ŷ(t)‖ / ‖ŷ(0)‖` along the closed loop `ŷ' + (A + χP̂) ŷ = 0`,
    /// integrated by implicit Euler with `steps` steps.
    pub fn closed_loop_decay(&self, y0: &[f64], horizon: f64, steps: usize) -> Result<f64> {
        let n = self.closed_loop.nrows();
        let dt = horizon / steps as f64;
        let lu = (DMatrix::identity(n, n) + &self.closed_loop * dt).lu();
        let mut y = DVector::from_column_slice(y0);
        let start = y.norm();
        for _ in 0..steps {
            y = lu.solve(&y).ok_or(Error::Singular { row: 0, pivot: 0.0 })?;
        }
        Ok(y.norm() / start)
    }
}

/// Backward equation `−h' + (Aᵀ + P χ) h = 0`, `h(T) = −ψ̄`, discretized to
/// match the Riccati recursion: `z = L⁻ᵀ h_{k+1}`, `h_k = z − dt P_k χ z`.
pub fn solve_h_equation(fam: &RiccatiFamily, psi_bar: &GridFunction) -> Result<Trajectory> {
    if psi_bar.n_cells() != fam.n_cells {
        return Err(Error::DimensionMismatch { expected: fam.n_cells, got: psi_bar.n_cells() });
    }
    let tg = fam.time;
    let dt = tg.dt();
    let m = tg.n_steps();
    let lt = fam.operator.shifted_identity(dt).transpose().factor()?;
    let mut h = Trajectory::zeros(tg, fam.n_cells);
    for (v, p) in h.snapshot_mut(m).iter_mut().zip(psi_bar.values()) {
        *v = -p;
    }
    for k in (0..m).rev() {
        let mut z = h.snapshot(k + 1).to_vec();
        lt.solve_in_place(&mut z);
        let cz: Vec<f64> = z.iter().zip(&fam.mask).map(|(a, c)| a * c).collect();
        let pcz = fam.apply(k, &cz);
        for ((out, a), b) in h.snapshot_mut(k).iter_mut().zip(&z).zip(&pcz) {
            *out = a - dt * b;
        }
    }
    Ok(h)
}

/// Closed-loop integration of `f = f̄ − χ (P (y − ȳ) + h)`, carried out on the
/// deviation `y − ȳ` so that small deviations keep their relative accuracy.
pub fn synthesize_feedback(
    fam: &RiccatiFamily,
    steady: &SteadySolution,
    h: &Trajectory,
    y0: &GridFunction,
) -> Result<FeedbackSolution> {
    let nc = fam.n_cells;
    for got in [steady.y_bar.n_cells(), y0.n_cells(), h.n_cells()] {
        if got != nc {
            return Err(Error::DimensionMismatch { expected: nc, got });
        }
    }
    let tg = fam.time;
    h.check_shape(&tg, nc)?;
    let dt = tg.dt();
    let m = tg.n_steps();
    let lu = fam.operator.shifted_identity(dt).factor()?;
    let mask = &fam.mask;

    let mut dy = Trajectory::zeros(tg, nc);
    let mut df = Trajectory::zeros(tg, nc);
    let mut dpsi = Trajectory::zeros(tg, nc);
    dy.snapshot_mut(0).copy_from_slice(y0.sub(&steady.y_bar)?.values());
    for k in 0..=m {
        let mk = dy.snapshot(k).to_vec();
        let phi: Vec<f64> = fam.apply(k, &mk).iter().zip(h.snapshot(k)).map(|(a, b)| a + b).collect();
        let g: Vec<f64> = phi.iter().zip(mask).map(|(p, c)| -c * p).collect();
        dpsi.snapshot_mut(k).copy_from_slice(&phi);
        df.snapshot_mut(k).copy_from_slice(&g);
        if k < m {
            let next = dy.snapshot_mut(k + 1);
            for ((v, a), b) in next.iter_mut().zip(&mk).zip(&g) {
                *v = a + dt * b;
            }
            lu.solve_in_place(next);
        }
    }

    let shift = |dev: &Trajectory, base: &GridFunction| {
        let snaps = dev.snapshots().iter().map(|s| s.iter().zip(base.values()).map(|(a, b)| a + b).collect()).collect();
        Trajectory::from_snapshots(tg, nc, snaps)
    };
    let y = shift(&dy, &steady.y_bar)?;
    let mut f = shift(&df, &steady.f_bar)?;
    // No control acts after the final time.
    f.snapshot_mut(m).fill(0.0);
    let psi = shift(&dpsi, &steady.psi_bar)?;

    // Target recovered from the steady adjoint equation Aᵀψ̄ = ȳ − y_d.
    let atp = fam.operator.transpose().matvec(steady.psi_bar.values());
    let y_d: Vec<f64> = steady.y_bar.values().iter().zip(&atp).map(|(a, b)| a - b).collect();
    let dx = 1.0 / nc as f64;
    let control: f64 = (0..m).map(|k| weighted_norm(f.snapshot(k), dx).powi(2)).sum();
    let misfit: f64 = (1..=m)
        .map(|k| {
            let r: Vec<f64> = y.snapshot(k).iter().zip(&y_d).map(|(a, b)| a - b).collect();
            weighted_norm(&r, dx).powi(2)
        })
        .sum();
    let cost = 0.5 * dt * (control + misfit);

    Ok(FeedbackSolution {
        solution: OptimalSolution { y, f, psi, cost, iterations: 0, grad_norm: 0.0 },
        state_dev: dy,
        control_dev: df,
        adjoint_dev: dpsi,
    })
}

/// `g_k = ‖E(t_k) − Ê‖` with `E(t_k) = P_{M−k}`, for `k = 0..=M`.
pub fn riccati_gap(fam: &RiccatiFamily, stat: &StationaryRiccati) -> Vec<f64> {
    let m = fam.time.n_steps();
    (0..=m).map(|k| spectral_norm_sym(&(&fam.p[m - k] - &stat.p_hat))).collect()
}
