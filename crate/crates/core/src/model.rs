//! A discretized problem: grid, medium and coupling with cached lattice multipliers.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::medium::Medium;
use crate::spectral::Grid;

/// Grid, medium and coupling `α`, with `k²/2m`, `ε`, `v`, `v/ε` and `W = v²/ε`
/// sampled on the frequency lattice.
#[derive(Clone, Debug)]
pub struct Model {
    grid: Grid,
    medium: Arc<Medium>,
    alpha: f64,
    tables: Arc<Tables>,
}

#[derive(Debug)]
struct Tables {
    kinetic: Vec<f64>,
    eps: Vec<f64>,
    coupling: Vec<f64>,
    v_over_eps: Vec<f64>,
    kernel: Vec<f64>,
}

impl Model {
    pub fn new(grid: Grid, medium: Medium, alpha: f64) -> Result<Self> {
        Self::with_shared_medium(grid, Arc::new(medium), alpha)
    }

    pub fn with_shared_medium(grid: Grid, medium: Arc<Medium>, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("coupling alpha = {alpha} must be >= 0")));
        }
        let m = medium.m_e();
        let kinetic: Vec<f64> = grid.k2().iter().map(|k2| k2 / (2.0 * m)).collect();
        let eps = grid.sample_radial(|k| medium.eps(k));
        let coupling = grid.sample_radial(|k| medium.v(k));
        let v_over_eps: Vec<f64> = coupling.iter().zip(&eps).map(|(v, e)| v / e).collect();
        let kernel: Vec<f64> = coupling.iter().zip(&eps).map(|(v, e)| v * v / e).collect();
        for (name, table) in [("eps", &eps), ("v", &coupling), ("W", &kernel)] {
            if !table.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidMedium(format!("{name} is not finite on the lattice")));
            }
        }
        if !eps.iter().all(|&e| e > 0.0) {
            return Err(Error::InvalidMedium("eps must be positive on the lattice".into()));
        }
        Ok(Self {
            grid,
            medium,
            alpha,
            tables: Arc::new(Tables { kinetic, eps, coupling, v_over_eps, kernel }),
        })
    }

    /// Same grid and medium at another coupling.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("coupling alpha = {alpha} must be >= 0")));
        }
        Ok(Self { alpha, ..self.clone() })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn shared_medium(&self) -> Arc<Medium> {
        Arc::clone(&self.medium)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m_e(&self) -> f64 {
        self.medium.m_e()
    }

    /// `|k|²/(2m)`.
    pub fn kinetic(&self) -> &[f64] {
        &self.tables.kinetic
    }

    pub fn eps(&self) -> &[f64] {
        &self.tables.eps
    }

    /// The coupling `v(k)`.
    pub fn coupling(&self) -> &[f64] {
        &self.tables.coupling
    }

    pub fn v_over_eps(&self) -> &[f64] {
        &self.tables.v_over_eps
    }

    /// `W = v²/ε`.
    pub fn kernel(&self) -> &[f64] {
        &self.tables.kernel
    }
}
