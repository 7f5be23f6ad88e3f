//! Real-time Landau–Pekar dynamics
//! `i∂_tψ = (−Δ/2m + √α V_φ)ψ`, `i ε⁻¹ ∂_tφ = φ + √α σ_ψ`,
//! by Strang splitting into two exactly solvable flows.
//!
//! The kinetic flow is a phase on `ψ̂`. In the coupling flow `|ψ|²`, hence `σ`,
//! is constant, so `φ(t) = e^{−iεt}(φ₀ + √ασ) − √ασ` and `ψ` picks up the phase
//! `−√α ∫₀ᵗ V_{φ(s)} ds`, which is linear in `∫φ`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::spectral::{forward_transform, inverse_transform, ScalarFieldK, ScalarFieldX};
use crate::state::{dist_mod_symmetry, energy_g, potential, sigma, total_momentum, translate_k, PolaronState};
use crate::traveling_wave::TravelingWave;

/// `(1 − e^{−iεt})/(iε)`, the integral of `e^{−iεs}` over `[0, t]`.
fn phase_integral(eps: f64, t: f64) -> Complex64 {
    let x = eps * t;
    if x.abs() < 1e-4 {
        // Series keeps the small-ε limit `t` accurate.
        Complex64::new(t, 0.0) * Complex64::new(1.0 - x * x / 6.0, -x / 2.0 + x * x * x / 24.0)
    } else {
        (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -x)) / Complex64::new(0.0, eps)
    }
}

/// Field after time `t` with the source `σ` frozen.
pub fn field_flow(model: &Model, phi: &ScalarFieldK, sigma: &ScalarFieldK, t: f64) -> ScalarFieldK {
    let sa = model.alpha().sqrt();
    let vals = phi
        .values()
        .par_iter()
        .zip(sigma.values().par_iter())
        .zip(model.eps().par_iter())
        .map(|((f, s), e)| {
            let src = s * sa;
            (f + src) * Complex64::from_polar(1.0, -e * t) - src
        })
        .collect();
    ScalarFieldK::from_raw(model.grid(), vals)
}

/// Exact coupling flow for time `t`, in place.
fn coupling_flow(model: &Model, psi: &mut ScalarFieldX, phi: &mut ScalarFieldK, t: f64) {
    let s = sigma(model, psi);
    let sa = model.alpha().sqrt();
    let integral: Vec<Complex64> = phi
        .values()
        .par_iter()
        .zip(s.values().par_iter())
        .zip(model.eps().par_iter())
        .map(|((f, sg), e)| {
            let src = sg * sa;
            (f + src) * phase_integral(*e, t) - src * t
        })
        .collect();
    let v_int = potential(model, &ScalarFieldK::from_raw(model.grid(), integral));
    psi.values_mut()
        .par_iter_mut()
        .zip(v_int.par_iter())
        .for_each(|(z, v)| *z *= Complex64::from_polar(1.0, -sa * v));
    *phi = field_flow(model, phi, &s, t);
}

fn kinetic_flow(model: &Model, psi_hat: &mut ScalarFieldK, t: f64) {
    psi_hat
        .values_mut()
        .par_iter_mut()
        .zip(model.kinetic().par_iter())
        .for_each(|(z, k)| *z *= Complex64::from_polar(1.0, -k * t));
}

/// One Strang step `A(dt/2) B(dt) A(dt/2)`.
pub fn step(model: &Model, state: &PolaronState, dt: f64) -> PolaronState {
    let mut psi_hat = forward_transform(&state.psi);
    kinetic_flow(model, &mut psi_hat, 0.5 * dt);
    let mut psi = inverse_transform(&psi_hat);
    let mut phi = state.phi.clone();
    coupling_flow(model, &mut psi, &mut phi, dt);
    let mut psi_hat = forward_transform(&psi);
    kinetic_flow(model, &mut psi_hat, 0.5 * dt);
    PolaronState { psi: inverse_transform(&psi_hat), phi }
}

/// Conservation audit of a trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    pub times: Vec<f64>,
    /// `|𝒢(t) − 𝒢(0)| / |𝒢(0)|`.
    pub energy_drift: Vec<f64>,
    /// `|‖ψ_t‖ − ‖ψ_0‖|`.
    pub norm_drift: Vec<f64>,
    /// `‖P(t) − P(0)‖`.
    pub momentum_drift: Vec<f64>,
}

impl TrajectoryLog {
    fn max(v: &[f64]) -> f64 {
        v.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        Self::max(&self.energy_drift)
    }

    pub fn max_norm_drift(&self) -> f64 {
        Self::max(&self.norm_drift)
    }

    pub fn max_momentum_drift(&self) -> f64 {
        Self::max(&self.momentum_drift)
    }
}

struct Reference {
    g: f64,
    norm: f64,
    p: [f64; 3],
}

impl Reference {
    fn of(model: &Model, s: &PolaronState) -> Self {
        Self { g: energy_g(model, s), norm: s.psi.norm(), p: total_momentum(s) }
    }

    fn record(&self, model: &Model, s: &PolaronState, t: f64, log: &mut TrajectoryLog) {
        let now = Self::of(model, s);
        log.times.push(t);
        log.energy_drift.push((now.g - self.g).abs() / self.g.abs().max(f64::MIN_POSITIVE));
        log.norm_drift.push((now.norm - self.norm).abs());
        log.momentum_drift.push((0..3).map(|a| (now.p[a] - self.p[a]).powi(2)).sum::<f64>().sqrt());
    }
}

/// Number of steps and the exact step length covering `[0, t_final]`.
fn schedule(t_final: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!("final time {t_final} must be non-negative")));
    }
    let steps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
    Ok((steps, if steps > 0 { t_final / steps as f64 } else { dt }))
}

/// Integrates to `t_final`, auditing every `audit_every` steps and at the end.
///
/// Adjacent half kinetic flows are merged, so a step costs four transforms.
/// `on_audit` sees the synchronized state at every audit.
pub fn evolve_with<F>(
    model: &Model,
    state: &PolaronState,
    t_final: f64,
    dt: f64,
    audit_every: usize,
    mut on_audit: F,
) -> Result<(PolaronState, TrajectoryLog)>
where
    F: FnMut(f64, &PolaronState),
{
    let (steps, h) = schedule(t_final, dt)?;
    let audit_every = audit_every.max(1);
    let reference = Reference::of(model, state);
    let mut log = TrajectoryLog::default();
    reference.record(model, state, 0.0, &mut log);
    on_audit(0.0, state);
    let mut psi_hat = forward_transform(&state.psi);
    let mut phi = state.phi.clone();
    // Whether a trailing half kinetic flow is still owed.
    let mut pending = false;
    let mut current = state.clone();
    for j in 1..=steps {
        kinetic_flow(model, &mut psi_hat, if pending { h } else { 0.5 * h });
        let mut psi = inverse_transform(&psi_hat);
        coupling_flow(model, &mut psi, &mut phi, h);
        psi_hat = forward_transform(&psi);
        pending = true;
        if !psi_hat.values()[0].is_finite() || !phi.values()[0].is_finite() || !psi_hat.norm_sq().is_finite() {
            return Err(Error::NanDetected { step: j });
        }
        if j % audit_every == 0 || j == steps {
            let mut synced = psi_hat.clone();
            kinetic_flow(model, &mut synced, 0.5 * h);
            current = PolaronState { psi: inverse_transform(&synced), phi: phi.clone() };
            if !current.psi.is_finite() || !current.phi.is_finite() {
                return Err(Error::NanDetected { step: j });
            }
            psi_hat = synced;
            pending = false;
            let t = j as f64 * h;
            reference.record(model, &current, t, &mut log);
            on_audit(t, &current);
        }
    }
    Ok((current, log))
}

pub fn evolve(
    model: &Model,
    state: &PolaronState,
    t_final: f64,
    dt: f64,
    audit_every: usize,
) -> Result<(PolaronState, TrajectoryLog)> {
    evolve_with(model, state, t_final, dt, audit_every, |_, _| {})
}

/// Time reversal `(ψ, φ(k)) ↦ (ψ̄, conj φ(−k))`.
pub fn time_reversed(state: &PolaronState) -> PolaronState {
    let grid = state.grid();
    let psi = state.psi.conj();
    let vals = (0..grid.size())
        .into_par_iter()
        .map(|i| state.phi.values()[grid.negated_index(i)].conj())
        .collect();
    PolaronState { psi, phi: ScalarFieldK::from_raw(grid, vals) }
}

/// Outcome of evolving a traveling wave and comparing with its exact motion.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationReport {
    pub t_final: f64,
    pub speed: f64,
    /// Recovered shift of the profile, unwrapped across audits.
    pub shift: [f64; 3],
    pub drift_speed: f64,
    /// `min` over the symmetry orbit of `‖ψ_T − ψ_v‖`.
    pub profile_error: f64,
    /// `‖φ_T − φ_v(· − vT)‖_{√ε}`.
    pub field_error: f64,
    /// Unwrapped phase at `T` and its least-squares slope in time.
    pub phase: f64,
    pub phase_slope: f64,
    pub e_v: f64,
    pub log: TrajectoryLog,
}

/// Evolves `tw` for `t_final` and recovers drift, profile and phase.
pub fn tw_propagation_test(tw: &TravelingWave, t_final: f64, dt: f64, audits: usize) -> Result<PropagationReport> {
    let model = &tw.model;
    let (steps, _) = schedule(t_final, dt)?;
    let every = (steps / audits.max(1)).max(1);
    let length = model.grid().length();
    let mut track: Vec<(f64, [f64; 3], f64, f64)> = Vec::new();
    let mut failure = None;
    let (last, log) = evolve_with(model, &tw.state, t_final, dt, every, |t, s| {
        match dist_mod_symmetry(&tw.state.psi, &s.psi) {
            Ok(d) => track.push((t, d.shift, d.theta, d.distance)),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    // Unwrap the periodic shift and the phase between audits.
    let mut shift = [0.0; 3];
    let mut phase = 0.0;
    let mut series = vec![(0.0, 0.0)];
    for w in track.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        for a in 0..3 {
            let mut d = next.1[a] - prev.1[a];
            d -= length * (d / length).round();
            shift[a] += d;
        }
        let mut dth = next.2 - prev.2;
        dth -= std::f64::consts::TAU * (dth / std::f64::consts::TAU).round();
        phase += dth;
        series.push((next.0, phase));
    }
    let k = series.len() as f64;
    let mt = series.iter().map(|s| s.0).sum::<f64>() / k;
    let mp = series.iter().map(|s| s.1).sum::<f64>() / k;
    let sxy: f64 = series.iter().map(|s| (s.0 - mt) * (s.1 - mp)).sum();
    let sxx: f64 = series.iter().map(|s| (s.0 - mt).powi(2)).sum();
    let phase_slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let expected = translate_k(&tw.state.phi, tw.v.map(|c| c * t_final));
    let field_error = last.phi.sub(&expected).weighted_norm_sq(model.eps()).sqrt();
    let profile_error = track.last().map_or(0.0, |t| t.3);
    let drift = shift.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(PropagationReport {
        t_final,
        speed: tw.speed(),
        shift,
        drift_speed: if t_final > 0.0 { drift / t_final } else { 0.0 },
        profile_error,
        field_error,
        phase,
        phase_slope,
        e_v: tw.e_v,
        log,
    })
}
