//! Preconditioned descent on a reduced functional
//! `ℰ(ψ) = Σ K|ψ̂|² dk³ − α(2π)³ Σ Q|ϱ̂|² dk³` over the unit sphere.
//!
//! `K` is a real kinetic symbol and `Q` a real even interaction kernel. The
//! ground state uses `K = k²/2m`, `Q = W`; traveling waves shift `K` by `−v·k`
//! and replace `Q` by the field-eliminated kernel.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::spectral::{forward_transform, inverse_transform, Grid, ScalarFieldK, ScalarFieldX, TWO_PI_3};
use crate::state::translate_k;

pub(crate) struct Problem<'a> {
    pub grid: &'a Grid,
    pub alpha: f64,
    pub kinetic: &'a [f64],
    pub kernel: &'a [f64],
}

/// Iterate bundled with its transforms.
#[derive(Clone)]
pub(crate) struct Iterate {
    pub psi: ScalarFieldX,
    pub psi_hat: ScalarFieldK,
    pub rho_hat: ScalarFieldK,
    pub energy: f64,
}

pub(crate) struct Outcome {
    pub iterate: Iterate,
    pub mu: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

pub(crate) struct Settings {
    pub tol_rel: f64,
    pub max_iters: usize,
    pub recenter: bool,
    pub keep_history: bool,
}

impl Problem<'_> {
    fn kinetic_part(&self, psi_hat: &ScalarFieldK) -> f64 {
        psi_hat.weighted_norm_sq(self.kinetic)
    }

    fn interaction(&self, rho_hat: &ScalarFieldK) -> f64 {
        TWO_PI_3 * rho_hat.weighted_norm_sq(self.kernel)
    }

    /// Builds the iterate from a frequency representation, normalizing it.
    pub fn iterate_from_hat(&self, mut psi_hat: ScalarFieldK) -> Iterate {
        let nrm = psi_hat.norm();
        psi_hat.scale(Complex64::new(1.0 / nrm, 0.0));
        let psi = inverse_transform(&psi_hat);
        let rho = ScalarFieldX::from_real(self.grid, &psi.density());
        let rho_hat = forward_transform(&rho);
        let energy = self.kinetic_part(&psi_hat) - self.alpha * self.interaction(&rho_hat);
        Iterate { psi, psi_hat, rho_hat, energy }
    }

    pub fn iterate(&self, psi: &ScalarFieldX) -> Iterate {
        self.iterate_from_hat(forward_transform(psi))
    }

    /// `(h ψ)^` with the self-consistent potential `−2α(2π)³ F⁻¹(Q ϱ̂)`, and `μ = ⟨ψ, hψ⟩`.
    pub fn apply(&self, it: &Iterate) -> (ScalarFieldK, f64) {
        let mut v = inverse_transform(&it.rho_hat.mul_real(self.kernel));
        let c = -2.0 * self.alpha * TWO_PI_3;
        v.values_mut()
            .par_iter_mut()
            .zip(it.psi.values().par_iter())
            .for_each(|(p, z)| *p = z * (c * p.re));
        let mut h = forward_transform(&v);
        h.values_mut()
            .par_iter_mut()
            .zip(it.psi_hat.values().par_iter())
            .zip(self.kinetic.par_iter())
            .for_each(|((hv, z), k)| *hv += z * k);
        let mu = it.psi_hat.inner_unchecked(&h).re;
        (h, mu)
    }

    /// Residual `(h − μ)ψ` in frequency space.
    pub fn residual(&self, it: &Iterate) -> (ScalarFieldK, f64) {
        let (mut h, mu) = self.apply(it);
        h.axpy(Complex64::new(-mu, 0.0), &it.psi_hat);
        (h, mu)
    }

    fn recentered(&self, it: Iterate) -> Iterate {
        let c = crate::state::center_of_mass(&it.psi);
        if c.iter().all(|x| x.abs() <= 1e-12 * self.grid.length()) {
            return it;
        }
        self.iterate_from_hat(translate_k(&it.psi_hat, c.map(|x| -x)))
    }
}

/// Runs `ψ ← normalize(ψ − τ (K − K_min + s)⁻¹ (h − μ)ψ)` with `τ` halved on
/// energy increase, until `‖(h − μ)ψ‖ ≤ tol_rel·|μ|`.
pub(crate) fn descend(problem: &Problem<'_>, start: Iterate, settings: &Settings) -> Outcome {
    let k_min = problem.kinetic.iter().copied().fold(f64::INFINITY, f64::min);
    let mut it = if settings.recenter { problem.recentered(start) } else { start };
    let mut history = Vec::new();
    if settings.keep_history {
        history.push(it.energy);
    }
    let mut iterations = 0;
    let mut tau = 1.0f64;
    loop {
        let (r, mu) = problem.residual(&it);
        let res = r.norm();
        let target = settings.tol_rel * mu.abs().max(f64::MIN_POSITIVE);
        if res <= target || iterations >= settings.max_iters {
            let converged = res <= target;
            return Outcome { iterate: it, mu, residual: res, iterations, converged, history };
        }
        iterations += 1;
        let shift = (1.0 - mu + k_min).max(1.0);
        let dir: Vec<Complex64> = r
            .values()
            .par_iter()
            .zip(problem.kinetic.par_iter())
            .map(|(z, k)| z / (k - k_min + shift))
            .collect();
        let dir = ScalarFieldK::from_raw(problem.grid, dir);
        // Try the last accepted step length doubled, halving on any increase.
        tau = (2.0 * tau).min(1.0);
        let slack = 1e-12 * it.energy.abs().max(1e-300);
        let next = loop {
            let mut trial = it.psi_hat.clone();
            trial.axpy(Complex64::new(-tau, 0.0), &dir);
            let cand = problem.iterate_from_hat(trial);
            if cand.energy <= it.energy + slack {
                break Some(cand);
            }
            tau *= 0.5;
            if tau < 1e-10 {
                break None;
            }
        };
        let Some(next) = next else {
            // No descent along the preconditioned residual: stagnation.
            return Outcome { iterate: it, mu, residual: res, iterations, converged: false, history };
        };
        it = if settings.recenter { problem.recentered(next) } else { next };
        if settings.keep_history {
            history.push(it.energy);
        }
    }
}
