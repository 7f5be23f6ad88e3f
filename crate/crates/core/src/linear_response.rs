//! Second variation of the reduced functional at a ground state: the
//! operators `H = h − μ` and `X f = ψ·(h * ψ̄f)`, projected solves and lowest
//! eigenvalues, first-order traveling-wave corrections and the effective mass.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ground_state::GroundState;
use crate::spectral::{
    convolve_kernel, derivative, forward_transform, inverse_transform, Grid, ScalarFieldK, ScalarFieldX, TWO_PI_3,
};
use crate::state::{density_hat, potential};

/// Which quadratic form: the imaginary sector uses `H` with zero mode `ψ`; the
/// real sector uses `H − 4αX` with zero modes `ψ, ∂₁ψ, ∂₂ψ, ∂₃ψ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sector {
    Im,
    Re,
}

/// Matrix-free Hessian pieces at a fixed ground state.
#[derive(Clone, Debug)]
pub struct HessianOps {
    grid: Grid,
    psi: ScalarFieldX,
    /// `√α V_{φ_α} − μ` on the lattice.
    shifted_potential: Vec<f64>,
    kinetic: Vec<f64>,
    kernel: Vec<f64>,
    alpha: f64,
    mu: f64,
    modes_im: Vec<ScalarFieldX>,
    modes_re: Vec<ScalarFieldX>,
}

fn orthonormalize(vectors: Vec<ScalarFieldX>) -> Vec<ScalarFieldX> {
    let mut out: Vec<ScalarFieldX> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        for _ in 0..2 {
            for q in &out {
                let c = q.inner_unchecked(&v);
                v.axpy(-c, q);
            }
        }
        let n = v.norm();
        if n > 1e-12 {
            v.scale(Complex64::new(1.0 / n, 0.0));
            out.push(v);
        }
    }
    out
}

impl HessianOps {
    pub fn new(gs: &GroundState) -> Self {
        let model = &gs.model;
        let sa = gs.alpha.sqrt();
        let shifted_potential = potential(model, gs.phi()).iter().map(|v| sa * v - gs.mu).collect();
        let psi = gs.psi().clone();
        let grads: Vec<ScalarFieldX> = (0..3).map(|a| derivative(&psi, a)).collect();
        let modes_im = orthonormalize(vec![psi.clone()]);
        let mut re = vec![psi.clone()];
        re.extend(grads);
        Self {
            grid: model.grid().clone(),
            psi,
            shifted_potential,
            kinetic: model.kinetic().to_vec(),
            kernel: model.kernel().to_vec(),
            alpha: gs.alpha,
            mu: gs.mu,
            modes_im,
            modes_re: orthonormalize(re),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn psi(&self) -> &ScalarFieldX {
        &self.psi
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `H f = (−Δ/2m + √α V_{φ_α} − μ) f`.
    pub fn apply_h(&self, f: &ScalarFieldX) -> ScalarFieldX {
        let mut out = inverse_transform(&forward_transform(f).mul_real(&self.kinetic));
        out.values_mut()
            .par_iter_mut()
            .zip(f.values().par_iter())
            .zip(self.shifted_potential.par_iter())
            .for_each(|((o, z), v)| *o += z * v);
        out
    }

    /// `X f = ψ · (h * (ψ̄ f))` with `h(x) = ∫ W e^{ik·x} dk`.
    pub fn apply_x(&self, f: &ScalarFieldX) -> ScalarFieldX {
        let prod: Vec<Complex64> = self.psi.values().par_iter().zip(f.values().par_iter()).map(|(p, z)| p.conj() * z).collect();
        let prod = ScalarFieldX::from_values(&self.grid, prod).expect("finite product");
        let conv = convolve_kernel(&prod, &self.kernel);
        let vals = self.psi.values().par_iter().zip(conv.values().par_iter()).map(|(p, c)| p * c).collect();
        ScalarFieldX::from_values(&self.grid, vals).expect("finite product")
    }

    /// `(H − c α X) f`.
    pub fn apply_h_minus_x(&self, f: &ScalarFieldX, c: f64) -> ScalarFieldX {
        let mut out = self.apply_h(f);
        out.axpy(Complex64::new(-c * self.alpha, 0.0), &self.apply_x(f));
        out
    }

    /// The sector operator: `H` or `H − 4αX`.
    pub fn apply(&self, f: &ScalarFieldX, sector: Sector) -> ScalarFieldX {
        match sector {
            Sector::Im => self.apply_h(f),
            Sector::Re => self.apply_h_minus_x(f, 4.0),
        }
    }

    /// Orthonormal basis of the deflated modes.
    pub fn zero_modes(&self, sector: Sector) -> &[ScalarFieldX] {
        match sector {
            Sector::Im => &self.modes_im,
            Sector::Re => &self.modes_re,
        }
    }

    /// Removes the deflated modes; returns the projection and the norm removed.
    pub fn project(&self, f: &ScalarFieldX, sector: Sector) -> (ScalarFieldX, f64) {
        project_out(f, self.zero_modes(sector))
    }

    /// `(T + s)⁻¹` with `s = max(|μ|, 1)`.
    fn precondition(&self, f: &ScalarFieldX) -> ScalarFieldX {
        let s = self.mu.abs().max(1.0);
        let inv: Vec<f64> = self.kinetic.iter().map(|k| 1.0 / (k + s)).collect();
        inverse_transform(&forward_transform(f).mul_real(&inv))
    }
}

fn project_out(f: &ScalarFieldX, modes: &[ScalarFieldX]) -> (ScalarFieldX, f64) {
    let mut out = f.clone();
    let mut removed = 0.0;
    for q in modes {
        let c = q.inner_unchecked(&out);
        removed += c.norm_sqr();
        out.axpy(-c, q);
    }
    (out, removed.sqrt())
}

/// Result of [`solve_h`].
#[derive(Clone, Debug)]
pub struct LinearSolve {
    pub x: ScalarFieldX,
    pub iterations: usize,
    /// `‖P((A − shift)x − rhs)‖ / ‖P rhs‖`.
    pub residual: f64,
    /// Norm of the zero-mode component removed from the right-hand side.
    pub removed: f64,
}

/// Solves `(A − shift) x = P rhs` for `x ⊥` the sector's zero modes by
/// preconditioned conjugate gradients, to `‖r‖ ≤ 1e−8 ‖P rhs‖`.
pub fn solve_h(ops: &HessianOps, rhs: &ScalarFieldX, sector: Sector, shift: f64) -> Result<LinearSolve> {
    solve_h_tol(ops, rhs, sector, shift, 1e-8, 2000)
}

pub fn solve_h_tol(
    ops: &HessianOps,
    rhs: &ScalarFieldX,
    sector: Sector,
    shift: f64,
    tol: f64,
    max_iters: usize,
) -> Result<LinearSolve> {
    let total = rhs.norm();
    let (b, removed) = ops.project(rhs, sector);
    let bn = b.norm();
    if total == 0.0 || bn <= 1e-8 * total {
        return Err(Error::RhsInKernel { removed });
    }
    let apply = |f: &ScalarFieldX| {
        let mut y = ops.apply(f, sector);
        if shift != 0.0 {
            y.axpy(Complex64::new(-shift, 0.0), f);
        }
        ops.project(&y, sector).0
    };
    let prec = |f: &ScalarFieldX| ops.project(&ops.precondition(f), sector).0;
    let mut x = ScalarFieldX::zeros(ops.grid());
    let mut r = b.clone();
    let mut z = prec(&r);
    let mut p = z.clone();
    let mut rz = r.inner_unchecked(&z).re;
    for it in 1..=max_iters {
        let ap = apply(&p);
        let pap = p.inner_unchecked(&ap).re;
        if pap <= 0.0 {
            return Err(Error::Indefinite { rayleigh: pap / p.norm_sq() });
        }
        let a = rz / pap;
        x.axpy(Complex64::new(a, 0.0), &p);
        r.axpy(Complex64::new(-a, 0.0), &ap);
        let rn = r.norm();
        if rn <= tol * bn {
            // Report the true residual, not the recursive one.
            let mut true_r = apply(&x);
            true_r.axpy(Complex64::new(-1.0, 0.0), &b);
            return Ok(LinearSolve { x, iterations: it, residual: true_r.norm() / bn, removed });
        }
        z = prec(&r);
        let rz_new = r.inner_unchecked(&z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        let mut np = z.clone();
        np.axpy(Complex64::new(beta, 0.0), &p);
        p = np;
    }
    Err(Error::NoConvergence { solver: "projected CG", iterations: max_iters, residual: r.norm() / bn, target: tol })
}

/// Lowest eigenpair on the complement of the deflated modes.
#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: ScalarFieldX,
    /// `‖A x − λ x‖` for the unit Ritz vector.
    pub ritz_residual: f64,
    pub iterations: usize,
    pub restarts: usize,
    /// Largest `|⟨q, x⟩|` over the deflated modes `q`.
    pub max_overlap: f64,
}

/// Locally optimal preconditioned iteration for the smallest eigenvalue of
/// `P A P`, with `P` the projector onto the complement of `modes`. Every new
/// search direction is re-projected against `modes`. Breakdowns restart from a
/// fresh random vector, at most three times.
pub fn lowest_eigenpair<A, P>(
    grid: &Grid,
    apply: A,
    precondition: P,
    modes: &[ScalarFieldX],
    tol: f64,
    max_iters: usize,
    seed: u64,
) -> Result<Eigenpair>
where
    A: Fn(&ScalarFieldX) -> ScalarFieldX,
    P: Fn(&ScalarFieldX) -> ScalarFieldX,
{
    let projected = |f: &ScalarFieldX| project_out(&apply(f), modes).0;
    let mut last_err = None;
    for restart in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64 * 7919));
        let vals = (0..grid.size()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
        let start = ScalarFieldX::from_values(grid, vals)?;
        match lobpcg(&projected, &precondition, modes, start, tol, max_iters) {
            Ok(mut e) => {
                e.restarts = restart;
                return Ok(e);
            }
            Err(err) => last_err = Some(err),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn lobpcg<A, P>(
    apply: &A,
    precondition: &P,
    modes: &[ScalarFieldX],
    start: ScalarFieldX,
    tol: f64,
    max_iters: usize,
) -> Result<Eigenpair>
where
    A: Fn(&ScalarFieldX) -> ScalarFieldX,
    P: Fn(&ScalarFieldX) -> ScalarFieldX,
{
    let unit = |f: ScalarFieldX| {
        let n = f.norm();
        f.scaled(Complex64::new(1.0 / n, 0.0))
    };
    let mut x = unit(project_out(&start, modes).0);
    let mut ax = apply(&x);
    let mut p: Option<(ScalarFieldX, ScalarFieldX)> = None;
    let mut lambda = x.inner_unchecked(&ax).re;
    let mut res_norm = f64::INFINITY;
    for it in 0..max_iters {
        let mut r = ax.clone();
        r.axpy(Complex64::new(-lambda, 0.0), &x);
        res_norm = r.norm();
        if res_norm <= tol {
            let max_overlap = modes.iter().map(|q| q.inner_unchecked(&x).norm()).fold(0.0, f64::max);
            return Ok(Eigenpair { value: lambda, vector: x, ritz_residual: res_norm, iterations: it, restarts: 0, max_overlap });
        }
        let w = unit(project_out(&precondition(&r), modes).0);
        let aw = apply(&w);
        let mut basis = vec![(x.clone(), ax.clone()), (w, aw)];
        if let Some((pv, apv)) = &p {
            let n = pv.norm();
            let s = Complex64::new(1.0 / n, 0.0);
            basis.push((pv.scaled(s), apv.scaled(s)));
        }
        let (coef, value) = match rayleigh_ritz(&basis) {
            Some(v) => v,
            None => {
                // Drop the momentum direction when the basis degenerates.
                basis.truncate(2);
                rayleigh_ritz(&basis).ok_or(Error::RankDeficient("eigen search basis collapsed".into()))?
            }
        };
        let combine = |skip_first: bool, pick: fn(&(ScalarFieldX, ScalarFieldX)) -> &ScalarFieldX| {
            let mut acc = ScalarFieldX::zeros(x.grid());
            for (j, b) in basis.iter().enumerate() {
                if skip_first && j == 0 {
                    continue;
                }
                acc.axpy(Complex64::new(coef[j], 0.0), pick(b));
            }
            acc
        };
        let new_p = (combine(true, |b| &b.0), combine(true, |b| &b.1));
        let mut nx = combine(false, |b| &b.0);
        let mut nax = combine(false, |b| &b.1);
        let n = nx.norm();
        nx.scale(Complex64::new(1.0 / n, 0.0));
        nax.scale(Complex64::new(1.0 / n, 0.0));
        // Re-project periodically to stop round-off drift into the modes.
        if it % 20 == 19 {
            nx = unit(project_out(&nx, modes).0);
            nax = apply(&nx);
        }
        x = nx;
        ax = nax;
        lambda = value.min(x.inner_unchecked(&ax).re);
        p = if new_p.0.norm() > 0.0 { Some(new_p) } else { None };
    }
    Err(Error::NoConvergence { solver: "lowest eigenpair", iterations: max_iters, residual: res_norm, target: tol })
}

/// Smallest Ritz pair of the operator on `span(basis)`, as coefficients.
fn rayleigh_ritz(basis: &[(ScalarFieldX, ScalarFieldX)]) -> Option<(Vec<f64>, f64)> {
    let k = basis.len();
    let g = DMatrix::from_fn(k, k, |i, j| basis[i].0.inner_unchecked(&basis[j].0).re);
    let s = DMatrix::from_fn(k, k, |i, j| {
        0.5 * (basis[i].0.inner_unchecked(&basis[j].1).re + basis[j].0.inner_unchecked(&basis[i].1).re)
    });
    let chol = g.clone().cholesky()?;
    let l = chol.l();
    // Reject nearly dependent bases.
    let diag_min = (0..k).map(|i| l[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if diag_min < 1e-7 {
        return None;
    }
    let linv = l.try_inverse()?;
    let m = &linv * s * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let (idx, value) = eig.eigenvalues.iter().copied().enumerate().fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
    let y = eig.eigenvectors.column(idx).into_owned();
    let c = linv.transpose() * y;
    Some((c.iter().copied().collect(), value))
}

/// Lowest eigenvalues of the two Hessian sectors on the complement of their zero modes.
#[derive(Clone, Debug)]
pub struct HessianGaps {
    pub gap_im: f64,
    /// Smallest eigenvalue of `H − 4αX` on `{ψ, ∂ψ}^⊥`.
    pub gap_re: f64,
    /// Smallest eigenvalue of `H − αX` on the same complement.
    pub gap_re_single: f64,
    pub ritz_res_im: f64,
    pub ritz_res_re: f64,
    pub ritz_res_re_single: f64,
    pub overlap_im: f64,
    pub overlap_re: f64,
}

/// Eigenvalue tolerance used by [`hessian_gaps`], relative to `|μ|`.
pub const GAP_TOL: f64 = 1e-6;

pub fn hessian_gaps(gs: &GroundState) -> Result<HessianGaps> {
    let ops = HessianOps::new(gs);
    let tol = GAP_TOL * gs.mu.abs().max(1.0);
    let grid = ops.grid().clone();
    let prec = |f: &ScalarFieldX| ops.precondition(f);
    let im = lowest_eigenpair(&grid, |f| ops.apply(f, Sector::Im), prec, ops.zero_modes(Sector::Im), tol, 1000, 11)?;
    let re = lowest_eigenpair(&grid, |f| ops.apply(f, Sector::Re), prec, ops.zero_modes(Sector::Re), tol, 1000, 12)?;
    let re1 = lowest_eigenpair(&grid, |f| ops.apply_h_minus_x(f, 1.0), prec, ops.zero_modes(Sector::Re), tol, 1000, 13)?;
    Ok(HessianGaps {
        gap_im: im.value,
        gap_re: re.value,
        gap_re_single: re1.value,
        ritz_res_im: im.ritz_residual,
        ritz_res_re: re.ritz_residual,
        ritz_res_re_single: re1.ritz_residual,
        overlap_im: im.max_overlap,
        overlap_re: re.max_overlap,
    })
}

/// First-order traveling-wave corrections along `v̂ = v/|v|`, with
/// `ψ_v ≈ ψ_α + |v| ξ` and `φ_v ≈ φ_α + |v| η`.
///
/// `ξ = i·Im ξ` with `H Im ξ = −v̂·∇ψ_α`, so that `Im ξ = m (v̂·x) ψ_α`, and
/// `η(k) = (v̂·k/ε(k)) φ_α(k)`.
pub fn first_order_corrections(gs: &GroundState, v: [f64; 3]) -> Result<(ScalarFieldX, ScalarFieldK)> {
    let speed = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let grid = gs.grid();
    if speed == 0.0 {
        return Ok((ScalarFieldX::zeros(grid), ScalarFieldK::zeros(grid)));
    }
    let e = v.map(|c| c / speed);
    let ops = HessianOps::new(gs);
    let mut rhs = ScalarFieldX::zeros(grid);
    for (a, &ea) in e.iter().enumerate() {
        if ea != 0.0 {
            rhs.axpy(Complex64::new(-ea, 0.0), &derivative(gs.psi(), a));
        }
    }
    let sol = solve_h(&ops, &rhs, Sector::Im, 0.0)?;
    let xi = sol.x.scaled(Complex64::i());
    let eps = gs.model.eps();
    let vals = gs
        .phi()
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let k = grid.k_at(i);
            p * ((e[0] * k[0] + e[1] * k[1] + e[2] * k[2]) / eps[i])
        })
        .collect();
    let eta = ScalarFieldK::from_values(grid, vals)?;
    Ok((xi, eta))
}

/// `m + (2(2π)³α/3) dk³ Σ k² (v²/ε³) |ϱ̂|²`.
pub fn closed_form_mass(gs: &GroundState) -> f64 {
    let model = &gs.model;
    let rho_hat = density_hat(gs.psi());
    let weights: Vec<f64> = model
        .grid()
        .k2()
        .iter()
        .zip(model.kernel())
        .zip(model.eps())
        .map(|((k2, w), e)| k2 * w / (e * e))
        .collect();
    model.m_e() + 2.0 * TWO_PI_3 * gs.alpha / 3.0 * rho_hat.weighted_norm_sq(&weights)
}

/// The two parts of the linear-response mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResponseMass {
    /// `2 ⟨∂₁ψ, H⁻¹ ∂₁ψ⟩`.
    pub electron: f64,
    /// `(2/3) dk³ Σ (k²/ε) |φ_α|²`.
    pub field: f64,
    pub total: f64,
    pub cg_iterations: usize,
}

/// `2 [⟨∂₁ψ_α, H⁻¹ ∂₁ψ_α⟩ + (1/3) dk³ Σ (k²/ε) |φ_α|²]`.
pub fn response_mass(gs: &GroundState) -> Result<ResponseMass> {
    let ops = HessianOps::new(gs);
    let d = derivative(gs.psi(), 0);
    let sol = solve_h(&ops, &d, Sector::Im, 0.0)?;
    let electron = 2.0 * d.inner_unchecked(&sol.x).re;
    let model = &gs.model;
    let weights: Vec<f64> = model.grid().k2().iter().zip(model.eps()).map(|(k2, e)| k2 / e).collect();
    let field = 2.0 / 3.0 * gs.phi().weighted_norm_sq(&weights);
    Ok(ResponseMass { electron, field, total: electron + field, cg_iterations: sol.iterations })
}

/// Decay rate of `(−Δ/2m − μ)⁻¹` applied to a narrow Gaussian, from a fit of
/// `ln(r G(r))` along the first axis over `r ∈ [r0, r1]`.
pub fn resolvent_decay_rate(grid: &Grid, m_e: f64, mu: f64, r0: f64, r1: f64) -> Result<f64> {
    if mu >= 0.0 {
        return Err(Error::InvalidArgument(format!("resolvent decay needs mu < 0, got {mu}")));
    }
    let width = 2.0 * grid.dx();
    let src = ScalarFieldX::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
    });
    let mult: Vec<f64> = grid.k2().iter().map(|k2| 1.0 / (k2 / (2.0 * m_e) - mu)).collect();
    let g = inverse_transform(&forward_transform(&src).mul_real(&mult));
    let n = grid.n();
    let centre = n / 2;
    let xs = grid.x_axis();
    let mut pts = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        if x >= r0 && x <= r1 {
            let val = g.values()[grid.ravel([i, centre, centre])].re;
            if val <= 0.0 {
                return Err(Error::InvalidArgument("resolvent profile lost positivity in the fit window".into()));
            }
            pts.push((x, (x * val).ln()));
        }
    }
    if pts.len() < 3 {
        return Err(Error::InvalidArgument("fit window holds fewer than three lattice points".into()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormalize_drops_dependent_vectors() {
        let g = Grid::new(8, 4.0).unwrap();
        let a = ScalarFieldX::from_fn(&g, |x| Complex64::new(x[0], 0.0));
        let b = a.scaled(Complex64::new(2.0, 0.0));
        let c = ScalarFieldX::from_fn(&g, |x| Complex64::new(x[1], 0.0));
        let q = orthonormalize(vec![a, b, c]);
        assert_eq!(q.len(), 2);
        assert!((q[0].norm() - 1.0).abs() < 1e-12);
        assert!(q[0].inner_unchecked(&q[1]).norm() < 1e-12);
    }

    #[test]
    fn lowest_eigenpair_of_a_diagonal_operator() {
        // A = T + 1 on the lattice; deflating the constant leaves the lowest
        // plane-wave level 1 + dk²/2.
        let g = Grid::new(8, 6.0).unwrap();
        let kin: Vec<f64> = g.k2().iter().map(|k| 0.5 * k).collect();
        let apply = |f: &ScalarFieldX| {
            let mut y = inverse_transform(&forward_transform(f).mul_real(&kin));
            y.axpy(Complex64::new(1.0, 0.0), f);
            y
        };
        let flat = ScalarFieldX::from_fn(&g, |_| Complex64::new(1.0, 0.0)).normalized();
        let e = lowest_eigenpair(&g, apply, |f: &ScalarFieldX| f.clone(), &[flat], 1e-10, 500, 3).unwrap();
        let want = 1.0 + 0.5 * g.dk() * g.dk();
        assert!((e.value - want).abs() < 1e-9, "{} {}", e.value, want);
        assert!(e.max_overlap < 1e-8);
    }
}
