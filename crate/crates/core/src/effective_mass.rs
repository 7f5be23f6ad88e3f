//! Four estimates of the effective mass and their agreement: the closed
//! formula, linear response, the energy–velocity fit and the energy–momentum fit.
//!
//! Minimizers at fixed momentum are found through the velocity: a secant search
//! on `λ ↦ P(ψ_λ, φ_λ) − p` over traveling waves. An augmented-Lagrangian descent
//! on the pair `(ψ, φ)` is kept as an independent cross-check.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ground_state::{solve_with_policy, GroundState, GroundStateOptions};
use crate::linear_response::{closed_form_mass, first_order_corrections, response_mass};
use crate::medium::{v_crit, Medium};
use crate::model::Model;
use crate::spectral::{forward_transform, inverse_transform, ScalarFieldK, ScalarFieldX};
use crate::state::{drift_symbol, energy_g, potential, sigma, total_momentum, PolaronState};
use crate::traveling_wave::{boosted, scf_traveling_wave, solve_traveling_wave, tw_energy_sweep, TravelingWave, TwOptions};

/// Least-squares coefficient of `x²/2` in `E − e0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticFit {
    pub coef: f64,
    /// Coefficient of the `x³` nuisance term when fitted.
    pub cubic: Option<f64>,
    /// `‖fit − (E − e0)‖ / ‖E − e0‖`.
    pub residual: f64,
}

/// Fits `E − e0 ≈ c x²/2 (+ b x³)` by least squares.
pub fn fit_quadratic(xs: &[f64], es: &[f64], e0: f64, with_cubic: bool) -> Result<QuadraticFit> {
    if xs.len() != es.len() {
        return Err(Error::InvalidArgument(format!("{} abscissae but {} energies", xs.len(), es.len())));
    }
    if xs.len() < 3 {
        return Err(Error::RankDeficient(format!("need at least 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(es).any(|v| !v.is_finite()) || !e0.is_finite() {
        return Err(Error::NonFinite("fit data"));
    }
    if xs.iter().any(|&x| x == 0.0) {
        return Err(Error::RankDeficient("abscissae must be nonzero".into()));
    }
    for (i, a) in xs.iter().enumerate() {
        if xs[..i].contains(a) {
            return Err(Error::RankDeficient(format!("repeated abscissa {a}")));
        }
    }
    let cols = if with_cubic { 2 } else { 1 };
    let a = DMatrix::from_fn(xs.len(), cols, |i, j| if j == 0 { 0.5 * xs[i] * xs[i] } else { xs[i].powi(3) });
    let y = DVector::from_iterator(es.len(), es.iter().map(|e| e - e0));
    let svd = a.clone().svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 1e-12 * smax) {
        return Err(Error::RankDeficient(format!("singular values {smax:e}, {smin:e}")));
    }
    let sol = svd.solve(&y, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let misfit = (&a * &sol - &y).norm();
    let scale = y.norm();
    Ok(QuadraticFit {
        coef: sol[0],
        cubic: with_cubic.then(|| sol[1]),
        residual: if scale > 0.0 { misfit / scale } else { misfit },
    })
}

/// A mass from a fit, with the points it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct MassFit {
    pub mass: f64,
    pub residual: f64,
    /// `(|v| or p, energy)` pairs.
    pub points: Vec<(f64, f64)>,
}

fn reference_energy(gs: &GroundState) -> f64 {
    energy_g(&gs.model, &gs.state)
}

/// Coefficient of `v²/2` in `E_v^TW − 𝒢(ψ_α, φ_α)` over waves at `speeds` along `+z`.
pub fn mass_tw(gs: &GroundState, speeds: &[f64], opts: &TwOptions) -> Result<MassFit> {
    let top = speeds.iter().fold(0.0f64, |a, s| a.max(s.abs()));
    if gs.alpha * top > 1.0 {
        return Err(Error::InvalidArgument(format!("alpha·|v| = {} exceeds 1", gs.alpha * top)));
    }
    // Reject degenerate inputs before paying for any solve.
    fit_quadratic(speeds, &vec![1.0; speeds.len()], 0.0, false)?;
    let waves = tw_energy_sweep(gs, speeds, opts)?;
    let es: Vec<f64> = waves.iter().map(|w| w.e_tw).collect();
    let fit = fit_quadratic(speeds, &es, reference_energy(gs), false)?;
    Ok(MassFit { mass: fit.coef, residual: fit.residual, points: speeds.iter().copied().zip(es).collect() })
}

#[derive(Clone, Debug)]
pub struct MomentumOptions {
    pub tw: TwOptions,
    /// Target `|P − p| ≤ tol·max(1, |p|)`.
    pub tol: f64,
    pub max_iters: usize,
    /// Mass used for the first velocity guess `p/m`; the response mass when absent.
    pub mass_guess: Option<f64>,
}

impl Default for MomentumOptions {
    fn default() -> Self {
        Self { tw: TwOptions::default(), tol: 1e-6, max_iters: 30, mass_guess: None }
    }
}

/// A traveling wave with prescribed momentum along `+z`.
#[derive(Clone, Debug)]
pub struct MomentumMinimizer {
    pub wave: TravelingWave,
    /// `𝒢` at the wave.
    pub e_p: f64,
    /// Velocity found by the secant search.
    pub lambda: f64,
    pub secant_iterations: usize,
}

/// Minimizer of `𝒢` at momentum `p ẑ`, as the traveling wave whose momentum is `p`.
pub fn minimize_at_momentum(gs: &GroundState, p: f64, opts: &MomentumOptions) -> Result<MomentumMinimizer> {
    if !p.is_finite() {
        return Err(Error::NonFinite("momentum"));
    }
    if p == 0.0 {
        let wave = scf_traveling_wave(gs, [0.0; 3], &opts.tw)?;
        return Ok(MomentumMinimizer { e_p: wave.e_tw, wave, lambda: 0.0, secant_iterations: 0 });
    }
    let mass = match opts.mass_guess {
        Some(m) => m,
        None => response_mass(gs)?.total,
    };
    let tol = opts.tol * p.abs().max(1.0);
    let cap = 0.95 * v_crit(gs.model.medium());
    let check = |lambda: f64| {
        if lambda.abs() >= cap || !lambda.is_finite() {
            Err(Error::RootNotBracketed(format!("velocity {lambda} for p = {p} leaves the subsonic range (cap {cap})")))
        } else {
            Ok(())
        }
    };
    let m_e = gs.model.m_e();
    let solve_from = |prev: &TravelingWave, lambda: f64| {
        let start = boosted(&prev.state.psi, m_e, [0.0, 0.0, lambda - prev.v[2]]);
        solve_traveling_wave(gs, [0.0, 0.0, lambda], &start, &opts.tw)
    };
    let mut l0 = p / mass;
    check(l0)?;
    let mut w0 = scf_traveling_wave(gs, [0.0, 0.0, l0], &opts.tw)?;
    let mut f0 = w0.momentum[2] - p;
    if f0.abs() <= tol {
        return Ok(MomentumMinimizer { e_p: w0.e_tw, wave: w0, lambda: l0, secant_iterations: 0 });
    }
    // Second point from the local ratio P/λ, then secant steps.
    let mut l1 = l0 * p / w0.momentum[2];
    for it in 1..=opts.max_iters {
        check(l1)?;
        let w1 = solve_from(&w0, l1)?;
        let f1 = w1.momentum[2] - p;
        if f1.abs() <= tol {
            return Ok(MomentumMinimizer { e_p: w1.e_tw, wave: w1, lambda: l1, secant_iterations: it });
        }
        if f1 == f0 {
            return Err(Error::RootNotBracketed(format!("flat momentum curve near velocity {l1}")));
        }
        let l2 = l1 - f1 * (l1 - l0) / (f1 - f0);
        (l0, f0, w0) = (l1, f1, w1);
        l1 = l2;
    }
    Err(Error::NoConvergence { solver: "momentum secant", iterations: opts.max_iters, residual: f0.abs(), target: tol })
}

/// `1/c` where `c` is the coefficient of `p²/2` in `E_p − 𝒢(ψ_α, φ_α)`.
pub fn mass_p(gs: &GroundState, momenta: &[f64], opts: &MomentumOptions) -> Result<MassFit> {
    fit_quadratic(momenta, &vec![1.0; momenta.len()], 0.0, false)?;
    let mut opts = opts.clone();
    if opts.mass_guess.is_none() {
        opts.mass_guess = Some(response_mass(gs)?.total);
    }
    let es = momenta
        .iter()
        .map(|&p| minimize_at_momentum(gs, p, &opts).map(|r| r.e_p))
        .collect::<Result<Vec<f64>>>()?;
    let fit = fit_quadratic(momenta, &es, reference_energy(gs), false)?;
    if !(fit.coef > 0.0) {
        return Err(Error::InvalidArgument(format!("energy–momentum curvature {} is not positive", fit.coef)));
    }
    Ok(MassFit { mass: 1.0 / fit.coef, residual: fit.residual, points: momenta.iter().copied().zip(es).collect() })
}

/// `𝒢` of the first-order trial pair `(ψ_α + ξ_λ, φ_α + η_λ)`, with `λ` tuned so
/// the normalized pair carries momentum exactly `p ẑ`. An upper bound for `E_p`.
pub fn trial_state_energy(gs: &GroundState, p: f64) -> Result<f64> {
    let model = &gs.model;
    let (xi, eta) = first_order_corrections(gs, [0.0, 0.0, 1.0])?;
    let pair = |lambda: f64| -> Result<PolaronState> {
        let mut psi = gs.psi().clone();
        psi.axpy(Complex64::new(lambda, 0.0), &xi);
        let mut phi = gs.phi().clone();
        phi.axpy(Complex64::new(lambda, 0.0), &eta);
        PolaronState::new(psi.normalized(), phi)
    };
    let momentum = |lambda: f64| -> Result<f64> { Ok(total_momentum(&pair(lambda)?)[2] - p) };
    let mut l0 = p / closed_form_mass(gs);
    let mut f0 = momentum(l0)?;
    let mut l1 = 1.01 * l0;
    for _ in 0..50 {
        let f1 = momentum(l1)?;
        if f1.abs() <= 1e-12 * p.abs().max(1.0) || f1 == f0 {
            break;
        }
        let l2 = l1 - f1 * (l1 - l0) / (f1 - f0);
        (l0, f0, l1) = (l1, f1, l2);
    }
    Ok(energy_g(model, &pair(l1)?))
}

#[derive(Clone, Debug)]
pub struct PrimalOptions {
    /// Penalty weight of the augmented Lagrangian.
    pub kappa: f64,
    /// Inner stopping threshold on both gradients.
    pub tol: f64,
    /// Target `|P − p| ≤ momentum_tol·max(1, |p|)`.
    pub momentum_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
}

impl Default for PrimalOptions {
    fn default() -> Self {
        Self { kappa: 10.0, tol: 1e-8, momentum_tol: 1e-7, max_inner: 20_000, max_outer: 40 }
    }
}

#[derive(Clone, Debug)]
pub struct PrimalMinimizer {
    pub state: PolaronState,
    pub e_p: f64,
    pub momentum: f64,
    /// Lagrange multiplier of the momentum constraint, the velocity.
    pub multiplier: f64,
    pub inner_iterations: usize,
}

struct PrimalPoint {
    psi_hat: ScalarFieldK,
    psi: ScalarFieldX,
    phi: ScalarFieldK,
    g: f64,
    p: f64,
}

/// Preconditioned tangent gradient of the inner Lagrangian.
struct PrimalGradient {
    dpsi: ScalarFieldK,
    dphi: ScalarFieldK,
    size: f64,
    /// `⟨g, P g⟩`, which decreases along short preconditioned steps.
    slope: f64,
}

/// Minimizes `𝒢` over pairs with `‖ψ‖ = 1` and momentum `p ẑ` by an augmented
/// Lagrangian with preconditioned descent on `(ψ, φ)` jointly, starting from
/// the boosted ground state.
pub fn minimize_at_momentum_primal(gs: &GroundState, p: f64, opts: &PrimalOptions) -> Result<PrimalMinimizer> {
    let model = &gs.model;
    let grid = model.grid();
    let kz = drift_symbol(grid, [0.0, 0.0, 1.0]);
    let kin = model.kinetic();
    let eps = model.eps();
    let inv_eps: Vec<f64> = eps.iter().map(|e| 1.0 / e).collect();
    let sa = model.alpha().sqrt();
    let k_min = kin.iter().copied().fold(f64::INFINITY, f64::min);
    let point = |psi_hat: ScalarFieldK, phi: ScalarFieldK| -> PrimalPoint {
        let mut psi_hat = psi_hat;
        psi_hat.scale(Complex64::new(1.0 / psi_hat.norm(), 0.0));
        let psi = inverse_transform(&psi_hat);
        let state = PolaronState { psi: psi.clone(), phi: phi.clone() };
        let g = energy_g(model, &state);
        let p = psi_hat.weighted_norm_sq(&kz) + phi.weighted_norm_sq(&kz);
        PrimalPoint { psi_hat, psi, phi, g, p }
    };
    let lagrangian = |pt: &PrimalPoint, lambda: f64| {
        let c = pt.p - p;
        pt.g - lambda * c + 0.5 * opts.kappa * c * c
    };
    // `u` is the effective velocity `λ − κ(P − p)` at the point.
    let gradient = |pt: &PrimalPoint, u: f64| -> Result<PrimalGradient> {
        let pot = potential(model, &pt.phi);
        let vpsi: Vec<Complex64> = pt.psi.values().par_iter().zip(pot.par_iter()).map(|(z, v)| z * (sa * v)).collect();
        let mut gpsi = forward_transform(&ScalarFieldX::from_values(grid, vpsi)?);
        gpsi.values_mut()
            .par_iter_mut()
            .zip(pt.psi_hat.values().par_iter())
            .zip(kin.par_iter().zip(kz.par_iter()))
            .for_each(|((g, z), (t, k))| *g += z * (t - u * k));
        let mu = pt.psi_hat.inner_unchecked(&gpsi).re;
        gpsi.axpy(Complex64::new(-mu, 0.0), &pt.psi_hat);
        let s = sigma(model, &pt.psi);
        let gphi: Vec<Complex64> = pt
            .phi
            .values()
            .par_iter()
            .zip(s.values().par_iter())
            .zip(eps.par_iter().zip(kz.par_iter()))
            .map(|((f, sg), (e, k))| (f + sg * sa) * e - f * (u * k))
            .collect();
        let gphi = ScalarFieldK::from_values(grid, gphi)?;
        let size = gpsi.norm().max(gphi.weighted_norm_sq(&inv_eps).sqrt());
        let shift = (1.0 - mu + k_min).max(1.0) + u.abs() * grid.k_max();
        let dpsi: Vec<Complex64> = gpsi
            .values()
            .par_iter()
            .zip(kin.par_iter().zip(kz.par_iter()))
            .map(|(g, (t, k))| g / (t - u * k - k_min + shift))
            .collect();
        let dpsi = ScalarFieldK::from_values(grid, dpsi)?;
        let dphi = gphi.mul_real(&inv_eps);
        let slope = gpsi.inner_unchecked(&dpsi).re + gphi.inner_unchecked(&dphi).re;
        Ok(PrimalGradient { dpsi, dphi, size, slope })
    };
    let mut lambda = p / closed_form_mass(gs);
    let start = boosted(gs.psi(), model.m_e(), [0.0, 0.0, lambda]);
    let mut pt = point(forward_transform(&start), gs.phi().clone());
    let mut inner_total = 0;
    let stall = |size: f64| Error::NoConvergence {
        solver: "primal momentum descent",
        iterations: 0,
        residual: size,
        target: opts.tol,
    };
    for _ in 0..opts.max_outer {
        let u_of = |pt: &PrimalPoint| lambda - opts.kappa * (pt.p - p);
        let mut grad = gradient(&pt, u_of(&pt))?;
        let mut tau = 1.0f64;
        let mut inner = 0;
        while grad.size > opts.tol {
            if inner == opts.max_inner {
                return Err(stall(grad.size));
            }
            inner += 1;
            let (dpsi, dphi, slope) = (&grad.dpsi, &grad.dphi, grad.slope);
            let l0 = lagrangian(&pt, lambda);
            // Below this, energy differences are rounding and steps are judged by the gradient.
            let noise = 1e-13 * l0.abs().max(1.0);
            tau = (2.0 * tau).min(1.0);
            loop {
                let mut a = pt.psi_hat.clone();
                a.axpy(Complex64::new(-tau, 0.0), dpsi);
                let mut b = pt.phi.clone();
                b.axpy(Complex64::new(-tau, 0.0), dphi);
                let cand = point(a, b);
                let l1 = lagrangian(&cand, lambda);
                let accepted = if tau * slope > noise {
                    (l1 <= l0 - 1e-4 * tau * slope).then(|| gradient(&cand, u_of(&cand))).transpose()?
                } else if l1 <= l0 + noise {
                    let g1 = gradient(&cand, u_of(&cand))?;
                    (g1.slope < grad.slope).then_some(g1)
                } else {
                    None
                };
                if let Some(g1) = accepted {
                    pt = cand;
                    grad = g1;
                    break;
                }
                tau *= 0.5;
                if tau < 1e-12 {
                    return Err(stall(grad.size));
                }
            }
        }
        inner_total += inner;
        let c = pt.p - p;
        if c.abs() <= opts.momentum_tol * p.abs().max(1.0) {
            let state = PolaronState::new(pt.psi, pt.phi)?;
            return Ok(PrimalMinimizer { e_p: pt.g, momentum: pt.p, multiplier: lambda, state, inner_iterations: inner_total });
        }
        lambda -= opts.kappa * c;
    }
    Err(Error::NoConvergence {
        solver: "augmented Lagrangian",
        iterations: opts.max_outer,
        residual: (pt.p - p).abs(),
        target: opts.momentum_tol * p.abs().max(1.0),
    })
}

#[derive(Clone, Debug)]
pub struct MassOptions {
    /// Sample speeds as fractions of `v_max`.
    pub fractions: Vec<f64>,
    /// Largest speed; `min(0.08 v_crit, 1/α)` when absent.
    pub v_max: Option<f64>,
    /// Explicit momenta for the energy–momentum fit; `m_formula · v` at the
    /// sample speeds when absent.
    pub momenta: Option<Vec<f64>>,
    /// Largest allowed pairwise relative deviation.
    pub tol: f64,
    pub tw: TwOptions,
}

impl Default for MassOptions {
    fn default() -> Self {
        Self { fractions: vec![0.25, 0.5, 0.75, 1.0], v_max: None, momenta: None, tol: 0.05, tw: TwOptions::default() }
    }
}

/// Default largest sample speed.
pub fn default_v_max(med: &Medium, alpha: f64) -> f64 {
    (0.08 * v_crit(med)).min(1.0 / alpha)
}

/// The four estimates side by side.
#[derive(Clone, Debug)]
pub struct MassReport {
    pub alpha: f64,
    pub medium: String,
    pub n: usize,
    pub length: f64,
    pub m_e: f64,
    pub m_formula: f64,
    pub m_response: Option<f64>,
    pub m_tw_fit: Option<f64>,
    pub tw_fit_residual: Option<f64>,
    pub m_p_fit: Option<f64>,
    pub p_fit_residual: Option<f64>,
    pub speeds: Vec<f64>,
    pub momenta: Vec<f64>,
    /// `|a − b| / min(a, b)` in the order formula, response, tw, p; `NaN` when missing.
    pub deviations: [[f64; 4]; 4],
    pub tol: f64,
    pub pass: bool,
    /// Messages from estimators that failed.
    pub failures: Vec<String>,
}

impl MassReport {
    pub fn estimates(&self) -> [Option<f64>; 4] {
        [Some(self.m_formula), self.m_response, self.m_tw_fit, self.m_p_fit]
    }

    /// Largest pairwise deviation; infinite when an estimate is missing.
    pub fn max_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.deviations {
            for &d in row {
                worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
            }
        }
        worst
    }
}

fn relative_deviation(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() / a.min(b),
        _ => f64::NAN,
    }
}

/// Runs the four estimators on a converged ground state.
pub fn mass_report_for(gs: &GroundState, opts: &MassOptions) -> MassReport {
    let model: &Model = &gs.model;
    let med = model.medium();
    let v_max = opts.v_max.unwrap_or_else(|| default_v_max(med, gs.alpha));
    let speeds: Vec<f64> = opts.fractions.iter().map(|f| f * v_max).collect();
    let m_formula = closed_form_mass(gs);
    let momenta = opts.momenta.clone().unwrap_or_else(|| speeds.iter().map(|v| m_formula * v).collect());
    let mut failures = Vec::new();
    let m_response = match response_mass(gs) {
        Ok(r) => Some(r.total),
        Err(e) => {
            failures.push(format!("response: {e}"));
            None
        }
    };
    let mut keep = |label: &str, r: Result<MassFit>| match r {
        Ok(f) => (Some(f.mass), Some(f.residual)),
        Err(e) => {
            failures.push(format!("{label}: {e}"));
            (None, None)
        }
    };
    let (m_tw_fit, tw_fit_residual) = keep("tw fit", mass_tw(gs, &speeds, &opts.tw));
    let mopts = MomentumOptions { tw: opts.tw.clone(), mass_guess: m_response, ..Default::default() };
    let (m_p_fit, p_fit_residual) = keep("momentum fit", mass_p(gs, &momenta, &mopts));
    let est = [Some(m_formula), m_response, m_tw_fit, m_p_fit];
    let mut deviations = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            deviations[i][j] = if i == j && est[i].is_some() { 0.0 } else { relative_deviation(est[i], est[j]) };
        }
    }
    let above_bare = est.iter().all(|m| m.is_some_and(|m| m > model.m_e()));
    let mut report = MassReport {
        alpha: gs.alpha,
        medium: med.name().to_string(),
        n: model.grid().n(),
        length: model.grid().length(),
        m_e: model.m_e(),
        m_formula,
        m_response,
        m_tw_fit,
        tw_fit_residual,
        m_p_fit,
        p_fit_residual,
        speeds,
        momenta,
        deviations,
        tol: opts.tol,
        pass: false,
        failures,
    };
    report.pass = above_bare && report.failures.is_empty() && report.max_deviation() <= opts.tol;
    report
}

/// Solves the ground state on the policy grid and runs [`mass_report_for`].
pub fn mass_report(med: &Medium, alpha: f64, gs_opts: &GroundStateOptions, opts: &MassOptions) -> Result<MassReport> {
    let gs = solve_with_policy(med, alpha, gs_opts)?;
    Ok(mass_report_for(&gs, opts))
}
