//! The configuration `(ψ, φ)`, its observables and symmetry-reduced distances.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::parallel::chunked_sum;
use crate::spectral::{
    forward_transform, inverse_transform, Grid, ScalarFieldK, ScalarFieldX, TWO_PI_3, TWO_PI_3_2,
};

/// Electron wave function in position space and field in frequency space.
#[derive(Clone, Debug)]
pub struct PolaronState {
    pub psi: ScalarFieldX,
    pub phi: ScalarFieldK,
}

impl PolaronState {
    pub fn new(psi: ScalarFieldX, phi: ScalarFieldK) -> Result<Self> {
        if psi.grid() != phi.grid() {
            return Err(Error::GridMismatch);
        }
        if !psi.is_finite() {
            return Err(Error::NonFinite("psi"));
        }
        if !phi.is_finite() {
            return Err(Error::NonFinite("phi"));
        }
        Ok(Self { psi, phi })
    }

    pub fn grid(&self) -> &Grid {
        self.psi.grid()
    }
}

/// Everything `𝒢` decomposes into, plus momentum and multiplier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observables {
    /// `𝒢 = kinetic + coupling_energy + field_energy`.
    pub g: f64,
    /// `𝓔(ψ)`, the energy after optimizing the field.
    pub e_reduced: f64,
    pub kinetic: f64,
    /// `‖√ε φ‖²`.
    pub field_energy: f64,
    /// `√α ∫ V_φ |ψ|²`.
    pub coupling_energy: f64,
    pub momentum: [f64; 3],
    pub mu: f64,
}

/// Reduced energy and its two parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParts {
    pub kinetic: f64,
    /// `−α(2π)³ ∫ W |ϱ̂|²`.
    pub interaction: f64,
    pub total: f64,
}

/// `ϱ̂` for `ϱ = |ψ|²`.
pub fn density_hat(psi: &ScalarFieldX) -> ScalarFieldK {
    let rho = ScalarFieldX::from_real(psi.grid(), &psi.density());
    forward_transform(&rho)
}

/// `σ_ψ = (2π)^{3/2} (v/ε) ϱ̂_ψ`.
pub fn sigma(model: &Model, psi: &ScalarFieldX) -> ScalarFieldK {
    sigma_from_density_hat(model, &density_hat(psi))
}

pub(crate) fn sigma_from_density_hat(model: &Model, rho_hat: &ScalarFieldK) -> ScalarFieldK {
    let mut s = rho_hat.mul_real(model.v_over_eps());
    s.scale(Complex64::new(TWO_PI_3_2, 0.0));
    s
}

/// `V_φ = 2 Re[(2π)^{3/2} F⁻¹(v φ)]`, real.
pub fn potential(model: &Model, phi: &ScalarFieldK) -> Vec<f64> {
    let x = inverse_transform(&phi.mul_real(model.coupling()));
    x.values().par_iter().map(|z| 2.0 * TWO_PI_3_2 * z.re).collect()
}

/// `φ = −√α σ_ψ`.
pub fn minimizing_field(model: &Model, psi: &ScalarFieldX) -> ScalarFieldK {
    let mut s = sigma(model, psi);
    s.scale(Complex64::new(-model.alpha().sqrt(), 0.0));
    s
}

/// `(1/2m) ‖∇ψ‖²`.
pub fn kinetic_energy(model: &Model, psi: &ScalarFieldX) -> f64 {
    forward_transform(psi).weighted_norm_sq(model.kinetic())
}

/// `‖√ε φ‖²`.
pub fn field_energy(model: &Model, phi: &ScalarFieldK) -> f64 {
    phi.weighted_norm_sq(model.eps())
}

/// `√α ∫ V_φ |ψ|²`.
pub fn coupling_energy(model: &Model, psi: &ScalarFieldX, phi: &ScalarFieldK) -> f64 {
    let v = potential(model, phi);
    let vals = psi.values();
    let s = chunked_sum(vals.len(), |r| {
        vals[r.clone()].iter().zip(&v[r]).map(|(z, p)| p * z.norm_sqr()).sum::<f64>()
    });
    model.alpha().sqrt() * s * psi.grid().dx3()
}

/// `𝒢_α(ψ, φ)`.
pub fn energy_g(model: &Model, state: &PolaronState) -> f64 {
    kinetic_energy(model, &state.psi)
        + coupling_energy(model, &state.psi, &state.phi)
        + field_energy(model, &state.phi)
}

/// `(2π)³ ∫ W |ϱ̂|²`, the self-interaction integral.
pub(crate) fn self_interaction(model: &Model, rho_hat: &ScalarFieldK) -> f64 {
    TWO_PI_3 * rho_hat.weighted_norm_sq(model.kernel())
}

/// `𝓔_α(ψ) = (1/2m)‖∇ψ‖² − α(2π)³ ∫ W |ϱ̂_ψ|²`.
pub fn energy_e(model: &Model, psi: &ScalarFieldX) -> EnergyParts {
    let kinetic = kinetic_energy(model, psi);
    let interaction = -model.alpha() * self_interaction(model, &density_hat(psi));
    EnergyParts { kinetic, interaction, total: kinetic + interaction }
}

/// `μ = (1/2m)‖∇ψ‖² − 2α(2π)³ ∫ W |ϱ̂_ψ|²`.
pub fn lagrange_multiplier(model: &Model, psi: &ScalarFieldX) -> f64 {
    let parts = energy_e(model, psi);
    parts.kinetic + 2.0 * parts.interaction
}

/// `P_j = dk³ Σ k_j |ψ̂|² + dk³ Σ k_j |φ|²`.
pub fn total_momentum(state: &PolaronState) -> [f64; 3] {
    let e = electron_momentum(&state.psi);
    let f = field_momentum(&state.phi);
    [e[0] + f[0], e[1] + f[1], e[2] + f[2]]
}

pub fn electron_momentum(psi: &ScalarFieldX) -> [f64; 3] {
    first_moment_k(&forward_transform(psi))
}

pub fn field_momentum(phi: &ScalarFieldK) -> [f64; 3] {
    first_moment_k(phi)
}

/// `dk³ Σ k |f|²`; the Nyquist plane is its own mirror image and is left out.
fn first_moment_k(f: &ScalarFieldK) -> [f64; 3] {
    let grid = f.grid();
    let n = grid.n();
    let k_axis = grid.k_axis();
    let vals = f.values();
    let mut out = [0.0; 3];
    for (axis, slot) in out.iter_mut().enumerate() {
        let s = chunked_sum(vals.len(), |r| {
            let mut acc = 0.0;
            for idx in r {
                let m = grid.unravel(idx)[axis];
                if m != n / 2 {
                    acc += k_axis[m] * vals[idx].norm_sqr();
                }
            }
            acc
        });
        *slot = s * grid.dk3();
    }
    out
}

/// `v·k` on the lattice with the Nyquist components dropped, matching the
/// momentum sums above.
pub(crate) fn drift_symbol(grid: &Grid, v: [f64; 3]) -> Vec<f64> {
    let n = grid.n();
    let k_axis = grid.k_axis();
    (0..grid.size())
        .into_par_iter()
        .map(|idx| {
            let ijk = grid.unravel(idx);
            (0..3).filter(|&a| ijk[a] != n / 2).map(|a| v[a] * k_axis[ijk[a]]).sum()
        })
        .collect()
}

/// All observables of a configuration.
pub fn observables(model: &Model, state: &PolaronState) -> Observables {
    let kinetic = kinetic_energy(model, &state.psi);
    let coupling = coupling_energy(model, &state.psi, &state.phi);
    let field = field_energy(model, &state.phi);
    let parts = energy_e(model, &state.psi);
    Observables {
        g: kinetic + coupling + field,
        e_reduced: parts.total,
        kinetic,
        field_energy: field,
        coupling_energy: coupling,
        momentum: total_momentum(state),
        mu: parts.kinetic + 2.0 * parts.interaction,
    }
}

/// Per-axis phase `e^{-i k y}`; the Nyquist mode uses `cos(k y)` so that real
/// fields stay real under non-lattice shifts.
fn shift_phases(grid: &Grid, y: f64) -> Vec<Complex64> {
    let n = grid.n();
    grid.k_axis()
        .iter()
        .enumerate()
        .map(|(m, &k)| {
            if m == n / 2 {
                Complex64::new((k * y).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, -k * y)
            }
        })
        .collect()
}

/// Multiplies a frequency field by the translation phase of `f(· − y)`.
pub fn translate_k(f: &ScalarFieldK, y: [f64; 3]) -> ScalarFieldK {
    let grid = f.grid();
    let n = grid.n();
    let px = shift_phases(grid, y[0]);
    let py = shift_phases(grid, y[1]);
    let pz = shift_phases(grid, y[2]);
    let values = f
        .values()
        .par_iter()
        .enumerate()
        .map(|(idx, z)| {
            let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
            z * px[i] * py[j] * pz[l]
        })
        .collect();
    ScalarFieldK::from_raw(grid, values)
}

/// `f(· − y)` by a spectral shift (exact for lattice shifts).
pub fn translate(f: &ScalarFieldX, y: [f64; 3]) -> ScalarFieldX {
    inverse_transform(&translate_k(&forward_transform(f), y))
}

/// Circular mean position of `|ψ|²` per axis, in `[-L/2, L/2)`.
pub fn center_of_mass(psi: &ScalarFieldX) -> [f64; 3] {
    let grid = psi.grid();
    let l = grid.length();
    let rho = psi.density();
    let x = grid.x_axis();
    let n = grid.n();
    let mut out = [0.0; 3];
    for (axis, slot) in out.iter_mut().enumerate() {
        let phases: Vec<Complex64> = x
            .iter()
            .map(|&xi| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * xi / l))
            .collect();
        let s = chunked_sum(rho.len(), |r| {
            let mut acc = Complex64::default();
            for idx in r {
                let m = match axis {
                    0 => idx / (n * n),
                    1 => (idx / n) % n,
                    _ => idx % n,
                };
                acc += phases[m] * rho[idx];
            }
            acc
        });
        *slot = s.arg() * l / (2.0 * std::f64::consts::PI);
    }
    out
}

/// Plain first moment `∫ x |ψ|²` on the centred lattice.
pub fn mean_position(psi: &ScalarFieldX) -> [f64; 3] {
    let grid = psi.grid();
    let rho = psi.density();
    let mut out = [0.0; 3];
    for (axis, slot) in out.iter_mut().enumerate() {
        let s = chunked_sum(rho.len(), |r| {
            r.map(|idx| grid.x_at(idx)[axis] * rho[idx]).sum::<f64>()
        });
        *slot = s * grid.dx3();
    }
    out
}

/// Minimizer of `‖e^{iθ} a(· − y) − b‖` over shifts and phases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetryDistance {
    pub distance: f64,
    /// Shift `y*`, reduced to `[-L/2, L/2)` per axis.
    pub shift: [f64; 3],
    /// Phase `θ*` in `(-π, π]`.
    pub theta: f64,
}

/// Distance between `a` and `b` modulo translations and global phase.
///
/// The lattice shift comes from the FFT cross-correlation; it is then refined
/// continuously by Newton steps on `|⟨a(·−y), b⟩|²`.
pub fn dist_mod_symmetry(a: &ScalarFieldX, b: &ScalarFieldX) -> Result<SymmetryDistance> {
    let grid = a.grid();
    if grid != b.grid() {
        return Err(Error::GridMismatch);
    }
    let ah = forward_transform(a);
    let bh = forward_transform(b);
    let cross: Vec<Complex64> = ah
        .values()
        .par_iter()
        .zip(bh.values().par_iter())
        .map(|(x, y)| x.conj() * y)
        .collect();
    let mut corr = cross.clone();
    grid.fft(&mut corr, false);
    let (best, _) = corr
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, z)| if z.norm() > bv { (i, z.norm()) } else { (bi, bv) });
    let n = grid.n() as i64;
    let mut y = grid.unravel(best).map(|m| {
        let m = m as i64;
        let s = if m >= n / 2 { m - n } else { m };
        s as f64 * grid.dx()
    });
    polish_shift(grid, &cross, &mut y);

    let c = correlation_at(grid, &cross, y).0;
    let theta = c.arg();
    let moved = translate_k(&ah, y);
    let rotated = moved.scaled(Complex64::from_polar(1.0, theta));
    let distance = rotated.sub(&bh).norm();
    let l = grid.length();
    let shift = y.map(|v| v - l * ((v + 0.5 * l) / l).floor());
    Ok(SymmetryDistance { distance, shift, theta })
}

/// `c(y) = dk³ Σ F e^{ik·y}` with gradient and Hessian in `y`.
fn correlation_at(grid: &Grid, cross: &[Complex64], y: [f64; 3]) -> (Complex64, [Complex64; 3], [[Complex64; 3]; 3]) {
    let n = grid.n();
    let k = grid.k_axis();
    let ph: Vec<Vec<Complex64>> = (0..3)
        .map(|a| k.iter().map(|&kk| Complex64::from_polar(1.0, kk * y[a])).collect())
        .collect();
    type Acc = (Complex64, [Complex64; 3], [[Complex64; 3]; 3]);
    let zero: Acc = (Complex64::default(), [Complex64::default(); 3], [[Complex64::default(); 3]; 3]);
    let chunks = cross.len().div_ceil(crate::parallel::CHUNK);
    let partials: Vec<Acc> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = zero;
            let lo = c * crate::parallel::CHUNK;
            let hi = (lo + crate::parallel::CHUNK).min(cross.len());
            for idx in lo..hi {
                let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
                let kv = [k[i], k[j], k[l]];
                let t = cross[idx] * ph[0][i] * ph[1][j] * ph[2][l];
                acc.0 += t;
                for a in 0..3 {
                    acc.1[a] += Complex64::new(0.0, kv[a]) * t;
                    for b in 0..3 {
                        acc.2[a][b] -= t * (kv[a] * kv[b]);
                    }
                }
            }
            acc
        })
        .collect();
    let mut tot = zero;
    for p in partials {
        tot.0 += p.0;
        for a in 0..3 {
            tot.1[a] += p.1[a];
            for b in 0..3 {
                tot.2[a][b] += p.2[a][b];
            }
        }
    }
    let dk3 = grid.dk3();
    tot.0 *= dk3;
    for a in 0..3 {
        tot.1[a] *= dk3;
        for b in 0..3 {
            tot.2[a][b] *= dk3;
        }
    }
    tot
}

/// Newton ascent on `|c(y)|²` from the lattice peak; steps are capped at `dx`.
fn polish_shift(grid: &Grid, cross: &[Complex64], y: &mut [f64; 3]) {
    let dx = grid.dx();
    let start = *y;
    for _ in 0..30 {
        let (c, dc, ddc) = correlation_at(grid, cross, *y);
        // f = |c|², ∇f = 2 Re(c̄ ∇c), ∇²f = 2 Re(∇c̄ ∇cᵀ + c̄ ∇²c).
        let mut g = nalgebra::Vector3::zeros();
        let mut h = nalgebra::Matrix3::zeros();
        for a in 0..3 {
            g[a] = 2.0 * (c.conj() * dc[a]).re;
            for b in 0..3 {
                h[(a, b)] = 2.0 * (dc[a].conj() * dc[b] + c.conj() * ddc[a][b]).re;
            }
        }
        // Ascent needs a negative definite Hessian; the step is (−H)⁻¹ g.
        let mut delta = match (-h).cholesky() {
            Some(chol) => chol.solve(&g),
            None => break,
        };
        let len = delta.norm();
        if !len.is_finite() {
            break;
        }
        if len > dx {
            delta *= dx / len;
        }
        for a in 0..3 {
            y[a] += delta[a];
        }
        if len < 1e-13 * grid.length() {
            break;
        }
    }
    if (0..3).any(|a| (y[a] - start[a]).abs() > 2.0 * dx) {
        *y = start;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{builtin_medium, POLYNOMIAL};

    fn model(n: usize, l: f64, alpha: f64) -> Model {
        let grid = Grid::new(n, l).unwrap();
        Model::new(grid, builtin_medium(POLYNOMIAL, &[], 1.0).unwrap(), alpha).unwrap()
    }

    #[test]
    fn constant_state_has_sigma_only_at_origin() {
        let m = model(8, 4.0, 2.0);
        let g = m.grid().clone();
        let c = Complex64::new(g.length().powf(-1.5), 0.0);
        let psi = ScalarFieldX::from_fn(&g, |_| c);
        let s = sigma(&m, &psi);
        for (i, z) in s.values().iter().enumerate() {
            if i != 0 {
                assert!(z.norm() < 1e-14);
            }
        }
        // 𝓔 = −α(2π)³ W(0) |ϱ̂(0)|² dk³ with ϱ̂(0) = (2π)^{-3/2} L^{-3} L³.
        let e = energy_e(&m, &psi);
        let expect = -2.0 * TWO_PI_3 / g.length().powi(3);
        assert!((e.total - expect).abs() < 1e-12 * expect.abs());
        assert!(e.kinetic.abs() < 1e-20);
    }

    #[test]
    fn plane_wave_energy_and_momentum() {
        let m = model(8, 3.0, 0.0);
        let g = m.grid().clone();
        let idx = g.ravel([1, 0, 7]);
        let k = g.k_at(idx);
        let amp = g.length().powf(-1.5);
        let psi = ScalarFieldX::from_fn(&g, |x| Complex64::from_polar(amp, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]));
        let state = PolaronState::new(psi.clone(), ScalarFieldK::zeros(&g)).unwrap();
        let k2 = g.k2()[idx];
        assert!((energy_g(&m, &state) - k2 / 2.0).abs() < 1e-12);
        assert!((lagrange_multiplier(&m, &psi) - k2 / 2.0).abs() < 1e-12);
        let p = total_momentum(&state);
        for a in 0..3 {
            assert!((p[a] - k[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn lattice_shift_and_phase_are_recovered() {
        let g = Grid::new(16, 8.0).unwrap();
        let a = ScalarFieldX::from_fn(&g, |x| {
            let r2 = x[0] * x[0] + 2.0 * x[1] * x[1] + 0.5 * x[2] * x[2];
            Complex64::new((-r2).exp(), 0.3 * x[0] * (-r2).exp())
        });
        let shift = [2.0 * g.dx(), -3.0 * g.dx(), 1.0 * g.dx()];
        let theta = 1.1;
        let b = translate(&a, shift).scaled(Complex64::from_polar(1.0, theta));
        let d = dist_mod_symmetry(&a, &b).unwrap();
        assert!(d.distance < 1e-10, "{}", d.distance);
        for ax in 0..3 {
            assert!((d.shift[ax] - shift[ax]).abs() < 1e-9);
        }
        assert!((d.theta - theta).abs() < 1e-9);
    }
}
