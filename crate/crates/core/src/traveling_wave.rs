//! Subsonic traveling waves: exact elimination of the field, the reduced
//! moving-frame problem for `ψ_v`, the action functional and velocity sweeps.
//!
//! With the transform convention of [`crate::spectral`] the stationary system reads
//! `(−Δ/2m + i v·∇ + √α V_{φ_v} + e_v) ψ_v = 0` and `(1 − v·k/ε) φ_v = −√α σ_{ψ_v}`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::descent::{self, Problem, Settings};
use crate::error::{Error, Result};
use crate::ground_state::GroundState;
use crate::medium::v_crit;
use crate::model::Model;
use crate::spectral::{forward_transform, inverse_transform, ScalarFieldK, ScalarFieldX};
use crate::state::{
    dist_mod_symmetry, drift_symbol, energy_g, potential, sigma, total_momentum, translate_k, PolaronState,
};

fn speed(v: [f64; 3]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn check_subsonic(model: &Model, v: [f64; 3]) -> Result<f64> {
    let vc = v_crit(model.medium());
    let s = speed(v);
    if !(s < vc) {
        return Err(Error::Supersonic { speed: s, v_crit: vc });
    }
    Ok(vc)
}

/// `1 − v·k/ε(k)` on the lattice; asserts the subsonic bound `≥ 1 − |v|/v_crit`.
fn denominators(model: &Model, v: [f64; 3]) -> Result<Vec<f64>> {
    let vc = check_subsonic(model, v)?;
    let drift = drift_symbol(model.grid(), v);
    let den: Vec<f64> = drift.iter().zip(model.eps()).map(|(d, e)| 1.0 - d / e).collect();
    let floor = 1.0 - speed(v) / vc;
    let lowest = den.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(lowest >= floor - 1e-12, "subsonic bound violated: {lowest} < {floor}");
    Ok(den)
}

/// `φ_v = −√α σ_ψ / (1 − v·k/ε)`.
pub fn eliminate_field(model: &Model, psi: &ScalarFieldX, v: [f64; 3]) -> Result<ScalarFieldK> {
    let den = denominators(model, v)?;
    let s = sigma(model, psi);
    let c = -model.alpha().sqrt();
    let vals = s.values().par_iter().zip(den.par_iter()).map(|(z, d)| z * (c / d)).collect();
    Ok(ScalarFieldK::from_values(model.grid(), vals)?)
}

/// Minimum of `1 − v·k/ε` over the lattice.
pub fn denominator_floor(model: &Model, v: [f64; 3]) -> Result<f64> {
    Ok(denominators(model, v)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Kernel left after eliminating the field: `v(k)² ε / (ε² − (v·k)²)`.
fn moving_kernel(model: &Model, v: [f64; 3]) -> Vec<f64> {
    let drift = drift_symbol(model.grid(), v);
    model
        .coupling()
        .par_iter()
        .zip(model.eps().par_iter())
        .zip(drift.par_iter())
        .map(|((c, e), d)| c * c * e / (e * e - d * d))
        .collect()
}

/// A converged solution of the stationary moving-frame system.
#[derive(Clone, Debug)]
pub struct TravelingWave {
    pub state: PolaronState,
    pub v: [f64; 3],
    /// Phase with `(h + i v·∇ + e_v) ψ_v = 0`; equals `−μ` at `v = 0`.
    pub e_v: f64,
    pub residual_psi: f64,
    /// `‖(1 − v·k/ε) φ_v + √α σ_{ψ_v}‖_{√ε}`.
    pub residual_phi: f64,
    pub iterations: usize,
    /// `𝒢(ψ_v, φ_v)`.
    pub e_tw: f64,
    pub momentum: [f64; 3],
    /// Whether `e_v ≥ −e_α + |v|²/4` holds; reported, never enforced.
    pub phase_condition: bool,
    pub model: Model,
}

impl TravelingWave {
    /// The eigenvalue of the moving-frame operator, `−e_v`.
    pub fn eigenvalue(&self) -> f64 {
        -self.e_v
    }

    pub fn speed(&self) -> f64 {
        speed(self.v)
    }

    /// Momentum component along `v̂` (along the third axis when `v = 0`).
    pub fn momentum_along_v(&self) -> f64 {
        let s = self.speed();
        if s == 0.0 {
            return self.momentum[2];
        }
        (0..3).map(|a| self.momentum[a] * self.v[a] / s).sum()
    }
}

#[derive(Clone, Debug)]
pub struct TwOptions {
    /// Target for `residual_psi`.
    pub tol: f64,
    pub max_iters: usize,
    /// Largest continuation step as a fraction of `v_crit`.
    pub max_step: f64,
}

impl Default for TwOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iters: 20_000, max_step: 0.02 }
    }
}

/// `(T − v·k + √αV_{φ} + e_v) ψ` in frequency space.
fn electron_residual(model: &Model, psi: &ScalarFieldX, phi: &ScalarFieldK, v: [f64; 3], e_v: f64) -> f64 {
    let drift = drift_symbol(model.grid(), v);
    let sa = model.alpha().sqrt();
    let pot = potential(model, phi);
    let vpsi: Vec<Complex64> = psi.values().par_iter().zip(pot.par_iter()).map(|(z, p)| z * (sa * p)).collect();
    let mut out = forward_transform(&ScalarFieldX::from_values(model.grid(), vpsi).expect("finite"));
    let psi_hat = forward_transform(psi);
    out.values_mut()
        .par_iter_mut()
        .zip(psi_hat.values().par_iter())
        .zip(model.kinetic().par_iter().zip(drift.par_iter()))
        .for_each(|((o, z), (t, d))| *o += z * (t - d + e_v));
    out.norm()
}

fn field_residual(model: &Model, psi: &ScalarFieldX, phi: &ScalarFieldK, v: [f64; 3]) -> f64 {
    let drift = drift_symbol(model.grid(), v);
    let s = sigma(model, psi);
    let sa = model.alpha().sqrt();
    let vals: Vec<Complex64> = phi
        .values()
        .par_iter()
        .zip(s.values().par_iter())
        .zip(drift.par_iter().zip(model.eps().par_iter()))
        .map(|((p, sg), (d, e))| p * (1.0 - d / e) + sg * sa)
        .collect();
    ScalarFieldK::from_values(model.grid(), vals).expect("finite").weighted_norm_sq(model.eps()).sqrt()
}

/// Assembles the wave from a converged `ψ`, aligned to `reference` by a shift
/// and a global phase.
fn finish(
    model: &Model,
    psi: ScalarFieldX,
    v: [f64; 3],
    mu_v: f64,
    iterations: usize,
    reference: &ScalarFieldX,
    e_alpha: f64,
) -> Result<TravelingWave> {
    let align = dist_mod_symmetry(&psi, reference)?;
    let mut psi_hat = translate_k(&forward_transform(&psi), align.shift);
    psi_hat.scale(Complex64::from_polar(1.0, align.theta));
    let psi = inverse_transform(&psi_hat);
    let phi = eliminate_field(model, &psi, v)?;
    let e_v = -mu_v;
    let state = PolaronState::new(psi, phi)?;
    let residual_psi = electron_residual(model, &state.psi, &state.phi, v, e_v);
    let residual_phi = field_residual(model, &state.psi, &state.phi, v);
    let s2 = v.iter().map(|c| c * c).sum::<f64>();
    Ok(TravelingWave {
        e_tw: energy_g(model, &state),
        momentum: total_momentum(&state),
        phase_condition: e_v >= -e_alpha + s2 / 4.0,
        residual_psi,
        residual_phi,
        iterations,
        e_v,
        v,
        state,
        model: model.clone(),
    })
}

/// Solves the moving-frame system at velocity `v` starting from `start`.
pub fn solve_traveling_wave(gs: &GroundState, v: [f64; 3], start: &ScalarFieldX, opts: &TwOptions) -> Result<TravelingWave> {
    let model = &gs.model;
    check_subsonic(model, v)?;
    let drift = drift_symbol(model.grid(), v);
    let kinetic: Vec<f64> = model.kinetic().iter().zip(&drift).map(|(t, d)| t - d).collect();
    let kernel = moving_kernel(model, v);
    let problem = Problem { grid: model.grid(), alpha: model.alpha(), kinetic: &kinetic, kernel: &kernel };
    let settings = Settings {
        tol_rel: opts.tol / gs.mu.abs().max(1.0),
        max_iters: opts.max_iters,
        recenter: true,
        keep_history: false,
    };
    let out = descent::descend(&problem, problem.iterate(start), &settings);
    if !out.converged {
        return Err(Error::NoConvergence {
            solver: "traveling wave",
            iterations: out.iterations,
            residual: out.residual,
            target: settings.tol_rel * out.mu.abs(),
        });
    }
    finish(model, out.iterate.psi, v, out.mu, out.iterations, gs.psi(), gs.e_alpha)
}

/// `e^{i m v·x} ψ`, the Galilean boost of a localized state.
pub fn boosted(psi: &ScalarFieldX, m_e: f64, v: [f64; 3]) -> ScalarFieldX {
    let grid = psi.grid();
    let vals = psi
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let x = grid.x_at(i);
            z * Complex64::from_polar(1.0, m_e * (v[0] * x[0] + v[1] * x[1] + v[2] * x[2]))
        })
        .collect();
    ScalarFieldX::from_values(grid, vals).expect("finite")
}

/// Traveling wave at `v`, continued from the ground state in steps of at most
/// `opts.max_step · v_crit` along the segment from 0 to `v`.
pub fn scf_traveling_wave(gs: &GroundState, v: [f64; 3], opts: &TwOptions) -> Result<TravelingWave> {
    let sweep = tw_sweep_along(gs, v, &[1.0], opts)?;
    Ok(sweep.into_iter().next().expect("one row"))
}

/// Waves at `fractions · v`, in increasing order, by continuation.
fn tw_sweep_along(gs: &GroundState, v: [f64; 3], fractions: &[f64], opts: &TwOptions) -> Result<Vec<TravelingWave>> {
    let vc = check_subsonic(&gs.model, v)?;
    let s = speed(v);
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| fractions[a].partial_cmp(&fractions[b]).expect("finite fractions"));
    let m = gs.model.m_e();
    let mut current = gs.psi().clone();
    let mut at = 0.0;
    let mut out: Vec<Option<TravelingWave>> = vec![None; fractions.len()];
    for &i in &order {
        let target = fractions[i];
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::InvalidArgument(format!("sweep fraction {target} outside [0, 1]")));
        }
        let gap = (target - at) * s;
        let steps = ((gap / (opts.max_step * vc)).ceil() as usize).max(1);
        let mut wave = None;
        for j in 1..=steps {
            let f = at + (target - at) * j as f64 / steps as f64;
            let dv = v.map(|c| c * (f - at - (target - at) * (j - 1) as f64 / steps as f64));
            let start = boosted(&current, m, dv);
            let w = solve_traveling_wave(gs, v.map(|c| c * f), &start, opts)?;
            current = w.state.psi.clone();
            wave = Some(w);
        }
        at = target;
        out[i] = wave;
    }
    Ok(out.into_iter().map(|w| w.expect("every fraction solved")).collect())
}

/// One row of a velocity sweep along the third axis.
#[derive(Clone, Debug, PartialEq)]
pub struct TwRow {
    pub v: f64,
    pub e_tw: f64,
    pub e_v: f64,
    pub p_axis: f64,
    pub res_psi: f64,
    pub res_phi: f64,
    pub iters: usize,
}

impl From<&TravelingWave> for TwRow {
    fn from(w: &TravelingWave) -> Self {
        Self {
            v: w.speed(),
            e_tw: w.e_tw,
            e_v: w.e_v,
            p_axis: w.momentum[2],
            res_psi: w.residual_psi,
            res_phi: w.residual_phi,
            iters: w.iterations,
        }
    }
}

/// Traveling waves at speeds `speeds` along `+z`, by continuation from `v = 0`.
pub fn tw_energy_sweep(gs: &GroundState, speeds: &[f64], opts: &TwOptions) -> Result<Vec<TravelingWave>> {
    let top = speeds.iter().copied().fold(0.0, f64::max);
    if speeds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidArgument("sweep speeds must be finite and non-negative".into()));
    }
    if top == 0.0 {
        let w = solve_traveling_wave(gs, [0.0; 3], gs.psi(), opts)?;
        return Ok(vec![w; speeds.len()]);
    }
    let fractions: Vec<f64> = speeds.iter().map(|s| s / top).collect();
    tw_sweep_along(gs, [0.0, 0.0, top], &fractions, opts)
}

/// `𝒥_v(ψ, φ) = 𝒢(ψ, φ) + e_v ‖ψ‖² − v·P(ψ, φ)`.
pub fn action(model: &Model, psi: &ScalarFieldX, phi: &ScalarFieldK, v: [f64; 3], e_v: f64) -> f64 {
    let state = PolaronState { psi: psi.clone(), phi: phi.clone() };
    let p = total_momentum(&state);
    energy_g(model, &state) + e_v * psi.norm_sq() - (0..3).map(|a| v[a] * p[a]).sum::<f64>()
}
