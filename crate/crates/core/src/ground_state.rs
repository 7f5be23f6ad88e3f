//! Minimizers of the reduced functional, the oscillator reference and the
//! strong-coupling diagnostics built from them.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::descent::{self, Problem, Settings};
use crate::error::{Error, Result};
use crate::medium::{image_error, kernel_cutoff, moments, oscillator_params, Medium};
use crate::model::Model;
use crate::spectral::{forward_transform, smooth_even_at_least, Grid, ScalarFieldX};
use crate::state::{center_of_mass, dist_mod_symmetry, minimizing_field, PolaronState};

/// Sizing rules for the periodic box at a given coupling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxPolicy {
    /// Minimum box length in units of the oscillator length `ℓ`.
    pub c_box: f64,
    /// Largest accepted periodization error of the kernel, see [`image_error`].
    pub image_tol: f64,
    /// Minimum number of lattice points per `ℓ`.
    pub resolution: f64,
    /// The lattice must reach `k_W` where `W(k_W) = coverage · W(0)`.
    pub coverage: f64,
}

impl Default for BoxPolicy {
    fn default() -> Self {
        Self { c_box: 10.0, image_tol: 1e-3, resolution: 4.0, coverage: 1e-8 }
    }
}

/// Smallest box length whose kernel image error is at most `tol`, to 0.5%.
pub fn image_length(med: &Medium, tol: f64) -> Result<f64> {
    let m0 = moments(med)?.m0;
    if m0 == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 4.0;
    while image_error(med, m0, hi) > tol {
        hi *= 1.5;
        if hi > 500.0 {
            return Err(Error::BoxPolicy(format!("kernel images exceed {tol} for every box up to L = 500")));
        }
    }
    let mut lo = hi / 1.5;
    if lo < 4.0 || image_error(med, m0, lo) <= tol {
        return Ok(lo.max(4.0).min(hi));
    }
    while hi - lo > 5e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if image_error(med, m0, mid) > tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Grid satisfying `policy` at coupling `alpha`; `n` may be forced, in which
/// case it is checked rather than chosen.
pub fn grid_for(med: &Medium, alpha: f64, policy: &BoxPolicy, n: Option<usize>) -> Result<Grid> {
    let osc = oscillator_params(med, alpha)?;
    if osc.degenerate {
        return Err(Error::BoxPolicy("no oscillator length at alpha = 0; give the grid explicitly".into()));
    }
    let length = (policy.c_box * osc.ell).max(image_length(med, policy.image_tol)?);
    let k_w = kernel_cutoff(med, policy.coverage);
    let need_res = (policy.resolution * length / osc.ell).ceil() as usize;
    let need_cov = (k_w * length / std::f64::consts::PI).ceil() as usize;
    let needed = smooth_even_at_least(need_res.max(need_cov));
    let n = match n {
        Some(n) if n < needed => {
            return Err(Error::BoxPolicy(format!(
                "n = {n} is too coarse at alpha = {alpha}: L = {length:.4} needs n >= {needed} \
                 (dx <= ell/{} and pi n/L >= {k_w:.4})",
                policy.resolution
            )))
        }
        Some(n) => n,
        None => needed,
    };
    Grid::new(n, length)
}

/// Rejects a model whose grid violates `policy`.
pub fn check_box(model: &Model, policy: &BoxPolicy) -> Result<()> {
    let osc = oscillator_params(model.medium(), model.alpha())?;
    if osc.degenerate {
        return Ok(());
    }
    let g = model.grid();
    if g.length() < policy.c_box * osc.ell * (1.0 - 1e-12) {
        return Err(Error::BoxPolicy(format!(
            "L = {} is below {} ell = {}",
            g.length(),
            policy.c_box,
            policy.c_box * osc.ell
        )));
    }
    let m0 = moments(model.medium())?.m0;
    if m0 > 0.0 {
        let err = image_error(model.medium(), m0, g.length());
        if err > policy.image_tol {
            return Err(Error::BoxPolicy(format!("kernel image error {err:.3e} exceeds {}", policy.image_tol)));
        }
    }
    if g.dx() > osc.ell / policy.resolution * (1.0 + 1e-12) {
        return Err(Error::BoxPolicy(format!("dx = {} exceeds ell/{}", g.dx(), policy.resolution)));
    }
    let k_w = kernel_cutoff(model.medium(), policy.coverage);
    if g.k_max() < k_w {
        return Err(Error::BoxPolicy(format!("k_max = {} does not reach k_W = {k_w}", g.k_max())));
    }
    Ok(())
}

/// `(mω/π)^{3/4} e^{−mω|x−c|²/2}`, renormalized on the lattice.
fn gaussian(grid: &Grid, m_omega: f64, center: [f64; 3]) -> ScalarFieldX {
    ScalarFieldX::from_fn(grid, |x| {
        let r2: f64 = (0..3).map(|a| (x[a] - center[a]).powi(2)).sum();
        Complex64::new((-0.5 * m_omega * r2).exp(), 0.0)
    })
    .normalized()
}

/// The oscillator minimizer `ψ_osc` sampled on `grid`.
pub fn oscillator_reference(med: &Medium, alpha: f64, grid: &Grid) -> Result<ScalarFieldX> {
    let osc = oscillator_params(med, alpha)?;
    if osc.degenerate {
        return Err(Error::InvalidArgument("no oscillator reference at alpha = 0".into()));
    }
    if grid.dx() > osc.ell / 4.0 {
        return Err(Error::BoxPolicy(format!("dx = {} under-resolves ell = {}", grid.dx(), osc.ell)));
    }
    if grid.length() < 8.0 * osc.ell {
        return Err(Error::BoxPolicy(format!("L = {} is below 8 ell = {}", grid.length(), 8.0 * osc.ell)));
    }
    Ok(gaussian(grid, med.m_e() * osc.omega, [0.0; 3]))
}

/// `ω_h = √(2 α M2 / (3m))`, the frequency obtained from the quadratic term of
/// `h(z) = M0 − M2|z|²/6 + O(|z|⁴)`. It exceeds the reference `ω` by `√2`.
pub fn harmonic_frequency(med: &Medium, alpha: f64) -> Result<f64> {
    Ok(2f64.sqrt() * oscillator_params(med, alpha)?.omega)
}

/// Ground state of the quadratic expansion, a Gaussian at [`harmonic_frequency`].
pub fn harmonic_reference(med: &Medium, alpha: f64, grid: &Grid) -> Result<ScalarFieldX> {
    let omega = harmonic_frequency(med, alpha)?;
    if omega == 0.0 {
        return Err(Error::InvalidArgument("no oscillator reference at alpha = 0".into()));
    }
    Ok(gaussian(grid, med.m_e() * omega, [0.0; 3]))
}

/// Starting point of the descent.
#[derive(Clone, Debug)]
pub enum Init {
    Oscillator,
    /// Positive bump of random width and offset with 10% multiplicative noise.
    Random(u64),
    Given(ScalarFieldX),
}

#[derive(Clone, Debug)]
pub struct GroundStateOptions {
    /// Stop when `‖(h − μ)ψ‖ ≤ tol·|μ|`.
    pub tol: f64,
    pub max_iters: usize,
    pub init: Init,
    /// Checked before solving when present.
    pub policy: Option<BoxPolicy>,
    /// Keep the accepted energies.
    pub keep_history: bool,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iters: 20_000, init: Init::Oscillator, policy: Some(BoxPolicy::default()), keep_history: false }
    }
}

/// A converged minimizer with `φ = −√α σ_ψ`, centred and real positive.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: PolaronState,
    pub e_alpha: f64,
    pub mu: f64,
    /// `‖(h_{√αφ} − μ)ψ‖`.
    pub residual: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub model: Model,
    /// Set for `α = 0`, where the flat state is returned.
    pub degenerate: bool,
    pub energy_history: Vec<f64>,
}

impl GroundState {
    pub fn psi(&self) -> &ScalarFieldX {
        &self.state.psi
    }

    pub fn phi(&self) -> &crate::spectral::ScalarFieldK {
        &self.state.phi
    }

    pub fn grid(&self) -> &Grid {
        self.model.grid()
    }
}

fn initial_state(model: &Model, init: &Init) -> Result<ScalarFieldX> {
    let grid = model.grid();
    let osc = oscillator_params(model.medium(), model.alpha())?;
    let m_omega = model.m_e() * osc.omega;
    Ok(match init {
        Init::Oscillator => gaussian(grid, m_omega, [0.0; 3]),
        Init::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let width = m_omega * rng.gen_range(0.5..1.5);
            let center: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5) * osc.ell);
            let noise: Vec<f64> = (0..grid.size()).map(|_| 1.0 + 0.1 * rng.gen::<f64>()).collect();
            let mut psi = gaussian(grid, width, center);
            for (z, s) in psi.values_mut().iter_mut().zip(noise) {
                *z *= s;
            }
            psi.normalized()
        }
        Init::Given(psi) => {
            if psi.grid() != grid {
                return Err(Error::GridMismatch);
            }
            psi.normalized()
        }
    })
}

/// Removes the global phase so that the largest sample is real positive.
pub(crate) fn fix_phase(psi: &mut ScalarFieldX) {
    let peak = psi.values().iter().copied().fold(Complex64::default(), |a, z| if z.norm() > a.norm() { z } else { a });
    if peak.norm() > 0.0 {
        psi.scale(peak.conj() / peak.norm());
    }
}

/// Minimizes the reduced functional at the model's coupling.
pub fn solve_ground_state(model: &Model, opts: &GroundStateOptions) -> Result<GroundState> {
    let grid = model.grid();
    if model.alpha() == 0.0 {
        let c = 1.0 / grid.length().powf(1.5);
        let psi = ScalarFieldX::from_fn(grid, |_| Complex64::new(c, 0.0));
        let phi = minimizing_field(model, &psi);
        return Ok(GroundState {
            state: PolaronState::new(psi, phi)?,
            e_alpha: 0.0,
            mu: 0.0,
            residual: 0.0,
            iterations: 0,
            alpha: 0.0,
            model: model.clone(),
            degenerate: true,
            energy_history: vec![0.0],
        });
    }
    if let Some(policy) = &opts.policy {
        check_box(model, policy)?;
    }
    let start = initial_state(model, &opts.init)?;
    let problem = Problem { grid, alpha: model.alpha(), kinetic: model.kinetic(), kernel: model.kernel() };
    let settings = Settings { tol_rel: opts.tol, max_iters: opts.max_iters, recenter: true, keep_history: opts.keep_history };
    let out = descent::descend(&problem, problem.iterate(&start), &settings);
    if !out.converged {
        return Err(Error::NoConvergence {
            solver: "ground state",
            iterations: out.iterations,
            residual: out.residual,
            target: opts.tol * out.mu.abs(),
        });
    }
    let mut psi = out.iterate.psi;
    fix_phase(&mut psi);
    let phi = minimizing_field(model, &psi);
    Ok(GroundState {
        state: PolaronState::new(psi, phi)?,
        e_alpha: out.iterate.energy,
        mu: out.mu,
        residual: out.residual,
        iterations: out.iterations,
        alpha: model.alpha(),
        model: model.clone(),
        degenerate: false,
        energy_history: out.history,
    })
}

/// Builds the policy grid for `alpha` and solves on it.
pub fn solve_with_policy(med: &Medium, alpha: f64, opts: &GroundStateOptions) -> Result<GroundState> {
    let policy = opts.policy.unwrap_or_default();
    let grid = grid_for(med, alpha, &policy, None)?;
    let model = Model::new(grid, med.clone(), alpha)?;
    solve_ground_state(&model, opts)
}

/// `‖ |x|² ψ ‖₂` about the circular centre of mass.
pub fn x2_norm(psi: &ScalarFieldX) -> f64 {
    let grid = psi.grid();
    let c = center_of_mass(psi);
    let l = grid.length();
    let wrap = |d: f64| d - l * (d / l).round();
    let weighted = ScalarFieldX::from_fn(grid, |x| {
        let r2: f64 = (0..3).map(|a| wrap(x[a] - c[a]).powi(2)).sum();
        Complex64::new(r2, 0.0)
    });
    let vals: Vec<Complex64> = psi.values().iter().zip(weighted.values()).map(|(z, w)| z * w.re).collect();
    ScalarFieldX::from_values(grid, vals).map(|f| f.norm()).unwrap_or(f64::NAN)
}

/// `‖∇ψ‖₂`.
pub fn grad_norm(psi: &ScalarFieldX) -> f64 {
    forward_transform(psi).weighted_norm_sq(psi.grid().k2()).sqrt()
}

/// Least-squares slope of `ln|y|` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.abs().ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// One coupling of the strong-coupling table.
#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticsRow {
    pub alpha: f64,
    pub e_alpha: f64,
    /// `e_α + α M0 − e_osc`.
    pub e_shift: f64,
    /// `(e_α + α M0) / e_osc`.
    pub e_ratio: f64,
    pub dist_osc: f64,
    pub x2norm: f64,
    pub gradnorm: f64,
    pub mu: f64,
    /// `dist(ψ_α, ·)` to the Gaussian at the expansion frequency `√2 ω`.
    pub dist_harmonic: f64,
    /// `(e_α + α M0) / ((3/2) √2 ω)`.
    pub e_ratio_harmonic: f64,
    pub n: usize,
    pub length: f64,
}

/// Log-log slopes of each column against `α` (absolute values for signed columns).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticsSlopes {
    pub e_alpha: f64,
    pub e_shift: f64,
    pub dist_osc: f64,
    pub x2norm: f64,
    pub gradnorm: f64,
    pub mu: f64,
}

#[derive(Clone, Debug)]
pub struct AsymptoticsReport {
    pub rows: Vec<AsymptoticsRow>,
    pub slopes: AsymptoticsSlopes,
}

impl AsymptoticsReport {
    /// Whether `dist(ψ_α, ψ_osc)` strictly decreases along the rows.
    pub fn dist_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].dist_osc < w[0].dist_osc)
    }
}

/// Table row for a converged ground state.
pub fn asymptotics_row(gs: &GroundState) -> Result<AsymptoticsRow> {
    let med = gs.model.medium();
    let m0 = moments(med)?.m0;
    let osc = oscillator_params(med, gs.alpha)?;
    let reference = oscillator_reference(med, gs.alpha, gs.grid())?;
    let lifted = gs.e_alpha + gs.alpha * m0;
    Ok(AsymptoticsRow {
        alpha: gs.alpha,
        e_alpha: gs.e_alpha,
        e_shift: lifted - osc.e_osc,
        e_ratio: lifted / osc.e_osc,
        dist_osc: dist_mod_symmetry(gs.psi(), &reference)?.distance,
        x2norm: x2_norm(gs.psi()),
        gradnorm: grad_norm(gs.psi()),
        mu: gs.mu,
        dist_harmonic: dist_mod_symmetry(gs.psi(), &harmonic_reference(med, gs.alpha, gs.grid())?)?.distance,
        e_ratio_harmonic: lifted / (osc.e_osc * 2f64.sqrt()),
        n: gs.grid().n(),
        length: gs.grid().length(),
    })
}

/// Assembles rows and slopes from solved ground states.
pub fn asymptotics_from(states: &[GroundState]) -> Result<AsymptoticsReport> {
    if states.len() < 2 {
        return Err(Error::InvalidArgument("asymptotics need at least two couplings".into()));
    }
    let rows = states.iter().map(asymptotics_row).collect::<Result<Vec<_>>>()?;
    let a: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let col = |f: fn(&AsymptoticsRow) -> f64| loglog_slope(&a, &rows.iter().map(f).collect::<Vec<_>>());
    let slopes = AsymptoticsSlopes {
        e_alpha: col(|r| r.e_alpha),
        e_shift: col(|r| r.e_shift),
        dist_osc: col(|r| r.dist_osc),
        x2norm: col(|r| r.x2norm),
        gradnorm: col(|r| r.gradnorm),
        mu: col(|r| r.mu),
    };
    Ok(AsymptoticsReport { rows, slopes })
}

/// Solves on the policy grid at each coupling and tabulates the diagnostics.
pub fn asymptotics_report(med: &Medium, alphas: &[f64], opts: &GroundStateOptions) -> Result<AsymptoticsReport> {
    let states = alphas.iter().map(|&a| solve_with_policy(med, a, opts)).collect::<Result<Vec<_>>>()?;
    asymptotics_from(&states)
}
