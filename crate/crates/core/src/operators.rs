//! Discrete elliptic operators on the interior nodes.
//!
//! The primal operator uses the conservative three-point diffusion stencil
//! with interface values of `a` and centered advection. The adjoint is the
//! exact matrix transpose, which under the lumped (uniform `dx`) inner
//! product is the discrete counterpart of `-div(a∇·) - div(b·) + p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_coeff::{CoefficientField, Grid};
use crate::linalg::{dot, Tridiagonal, PIVOT_RTOL};

/// Values at the interior nodes; the Dirichlet boundary values are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    n_cells: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Grid) -> Self {
        Self { n_cells: grid.n_cells(), values: vec![0.0; grid.n_interior()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self { n_cells: grid.n_cells(), values: grid.interior_nodes().iter().map(|&x| f(x)).collect() }
    }

    pub fn from_values(n_cells: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() + 1 != n_cells {
            return Err(Error::DimensionMismatch { expected: n_cells - 1, got: values.len() });
        }
        Ok(Self { n_cells, values })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.n_cells != other.n_cells {
            return Err(Error::DimensionMismatch { expected: self.n_cells, got: other.n_cells });
        }
        Ok(())
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { n_cells: self.n_cells, values })
    }

    pub fn norm(&self) -> f64 {
        l2_norm(self)
    }
}

/// Lumped L² inner product `Σ u_i v_i dx`.
pub fn l2_inner(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(dot(&u.values, &v.values) * u.dx())
}

pub fn l2_norm(u: &GridFunction) -> f64 {
    (dot(&u.values, &u.values) * u.dx()).sqrt()
}

/// Discrete L² norm of raw interior values.
pub fn weighted_norm(values: &[f64], dx: f64) -> f64 {
    (dot(values, values) * dx).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    pub matrix: Tridiagonal,
    pub is_adjoint: bool,
    n_cells: usize,
}

impl DiscreteOperator {
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dim(&self) -> usize {
        self.n_cells - 1
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        self.check(u)?;
        Ok(GridFunction { n_cells: self.n_cells, values: self.matrix.matvec(&u.values) })
    }

    pub fn transpose(&self) -> Self {
        Self { matrix: self.matrix.transpose(), is_adjoint: !self.is_adjoint, n_cells: self.n_cells }
    }

    fn check(&self, u: &GridFunction) -> Result<()> {
        if u.n_cells != self.n_cells {
            return Err(Error::DimensionMismatch { expected: self.n_cells, got: u.n_cells });
        }
        Ok(())
    }
}

/// Assembles `A = -(a u')' + b u' + p u` (or its transpose when `adjoint`).
pub fn assemble(coeffs: &CoefficientField, grid: &Grid, adjoint: bool) -> Result<DiscreteOperator> {
    let n_cells = grid.n_cells();
    let n = grid.n_interior();
    if coeffs.n_cells != n_cells || coeffs.a_interface.len() != n_cells {
        return Err(Error::DimensionMismatch { expected: n_cells, got: coeffs.a_interface.len() });
    }
    if coeffs.b_node.len() != n || coeffs.p_node.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: coeffs.b_node.len().min(coeffs.p_node.len()) });
    }
    let dx = grid.dx();
    let inv_dx2 = 1.0 / (dx * dx);
    let inv_2dx = 0.5 / dx;
    let mut m = Tridiagonal::zeros(n);
    for i in 0..n {
        let (al, ar) = (coeffs.a_interface[i], coeffs.a_interface[i + 1]);
        let b = coeffs.b_node[i];
        m.diag[i] = (al + ar) * inv_dx2 + coeffs.p_node[i];
        if i > 0 {
            m.sub[i] = -al * inv_dx2 - b * inv_2dx;
        }
        if i + 1 < n {
            m.sup[i] = -ar * inv_dx2 + b * inv_2dx;
        }
    }
    let primal = DiscreteOperator { matrix: m, is_adjoint: false, n_cells };
    Ok(if adjoint { primal.transpose() } else { primal })
}

/// Solves `op u = rhs`. Besides vanishing pivots, a solution whose size
/// implies a condition number above `1/PIVOT_RTOL` is rejected as singular.
pub fn elliptic_solve(op: &DiscreteOperator, rhs: &GridFunction) -> Result<GridFunction> {
    op.check(rhs)?;
    let lu = op.matrix.factor()?;
    let values = lu.solve(&rhs.values);
    let amax = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let (bmax, xmax) = (amax(&rhs.values), amax(&values));
    if bmax > 0.0 && op.matrix.max_abs() * xmax * PIVOT_RTOL > bmax {
        return Err(Error::Singular { row: op.dim() - 1, pivot: bmax / xmax });
    }
    Ok(GridFunction { n_cells: op.n_cells, values })
}

/// Smallest singular value of the operator by inverse power iteration on
/// `AᵀA`. Returns 0 when a factorization hits a vanishing pivot.
pub fn check_wellposedness(op_adjoint: &DiscreteOperator) -> f64 {
    let Ok(lu) = op_adjoint.matrix.factor() else { return 0.0 };
    let Ok(lu_t) = op_adjoint.matrix.transpose().factor() else { return 0.0 };
    let n = op_adjoint.dim();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut sigma = f64::INFINITY;
    for _ in 0..2000 {
        let w = lu_t.solve(&v);
        let z = lu.solve(&w);
        let rho = dot(&z, &z).sqrt();
        if !(rho.is_finite() && rho > 0.0) {
            return 0.0;
        }
        v = z.into_iter().map(|x| x / rho).collect();
        let next = 1.0 / rho.sqrt();
        let done = (next - sigma).abs() <= 1e-14 * next;
        sigma = next;
        if done {
            break;
        }
    }
    let av = op_adjoint.matrix.matvec(&v);
    dot(&av, &av).sqrt().min(sigma)
}
