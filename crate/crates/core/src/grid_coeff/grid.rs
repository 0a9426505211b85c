use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform mesh of (0, 1) with homogeneous Dirichlet endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_cells: usize,
    dx: f64,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 4 {
            return Err(Error::TooFewCells(n_cells));
        }
        let dx = 1.0 / n_cells as f64;
        let nodes = (0..=n_cells).map(|i| i as f64 / n_cells as f64).collect();
        Ok(Self { n_cells, dx, nodes })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of unknowns (interior nodes).
    pub fn n_interior(&self) -> usize {
        self.n_cells - 1
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// All nodes including both endpoints.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn interior_nodes(&self) -> &[f64] {
        &self.nodes[1..self.n_cells]
    }
}

/// Indicator of the control region ω = [x_lo, x_hi] on the interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlWindow {
    pub x_lo: f64,
    pub x_hi: f64,
    mask: Vec<f64>,
}

impl ControlWindow {
    pub fn new(grid: &Grid, x_lo: f64, x_hi: f64) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidWindow { lo: x_lo, hi: x_hi, reason: reason.into() };
        if !(0.0..=1.0).contains(&x_lo) || !(0.0..=1.0).contains(&x_hi) || x_lo >= x_hi {
            return Err(bad("need 0 <= x_lo < x_hi <= 1"));
        }
        let mask: Vec<f64> = grid
            .interior_nodes()
            .iter()
            .map(|&x| if x >= x_lo && x <= x_hi { 1.0 } else { 0.0 })
            .collect();
        if mask.iter().all(|&m| m == 0.0) {
            return Err(bad("window contains no interior node"));
        }
        Ok(Self { x_lo, x_hi, mask })
    }

    pub fn full(grid: &Grid) -> Self {
        Self::new(grid, 0.0, 1.0).expect("full window is valid")
    }

    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&m| m == 1.0)
    }

    /// Interior indices inside the window.
    pub fn indices(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m == 1.0).map(|(i, _)| i).collect()
    }

    /// χ_ω v
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mask).map(|(a, m)| a * m).collect()
    }

    pub fn apply_in_place(&self, v: &mut [f64]) {
        for (a, m) in v.iter_mut().zip(&self.mask) {
            *a *= m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_cells() {
        let g = Grid::new(4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.interior_nodes(), &[0.25, 0.5, 0.75]);
    }

    #[test]
    fn reference_resolution() {
        let g = Grid::new(421).unwrap();
        assert_eq!(g.dx(), 1.0 / 421.0);
        assert!((g.dx() * 421.0 - 1.0).abs() <= f64::EPSILON);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn too_coarse() {
        assert!(matches!(Grid::new(3), Err(Error::TooFewCells(3))));
    }

    #[test]
    fn window_mask_is_closed_interval() {
        let g = Grid::new(10).unwrap();
        let w = ControlWindow::new(&g, 0.3, 0.7).unwrap();
        // interior nodes 0.1..0.9; 0.3 and 0.7 included
        assert_eq!(w.indices(), vec![2, 3, 4, 5, 6]);
        assert!(ControlWindow::new(&g, 0.31, 0.39).is_err());
        assert!(ControlWindow::new(&g, 0.5, 0.5).is_err());
        assert!(ControlWindow::full(&g).is_full());
    }
}
