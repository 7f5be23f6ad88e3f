use std::sync::OnceLock;

use num_complex::Complex64;
use pekarlab::ground_state::*;
use pekarlab::linear_response::closed_form_mass;
use pekarlab::medium::*;
use pekarlab::spectral::*;
use pekarlab::state::*;
use pekarlab::traveling_wave::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn medium() -> Medium {
    builtin_medium(POLYNOMIAL, &[], 1.0).unwrap()
}

fn gs12() -> &'static GroundState {
    static GS: OnceLock<GroundState> = OnceLock::new();
    GS.get_or_init(|| solve_with_policy(&medium(), 12.0, &GroundStateOptions::default()).unwrap())
}

fn vc() -> f64 {
    v_crit(&medium())
}

/// Waves at 0.02, 0.04, 0.05, 0.06 of `v_crit` along `+z`.
fn sweep12() -> &'static Vec<TravelingWave> {
    static SWEEP: OnceLock<Vec<TravelingWave>> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let speeds: Vec<f64> = [0.02, 0.04, 0.05, 0.06].iter().map(|f| f * vc()).collect();
        tw_energy_sweep(gs12(), &speeds, &TwOptions::default()).unwrap()
    })
}

fn field_dist(a: &ScalarFieldK, b: &ScalarFieldK, eps: &[f64]) -> f64 {
    a.sub(b).weighted_norm_sq(eps).sqrt()
}

#[test]
fn elimination_at_rest_is_the_minimizing_field() {
    let gs = gs12();
    let phi = eliminate_field(&gs.model, gs.psi(), [0.0; 3]).unwrap();
    let reference = minimizing_field(&gs.model, gs.psi());
    assert!(phi.sub(&reference).max_abs() <= 1e-14 * reference.max_abs());
}

#[test]
fn subsonic_denominator_bound() {
    let gs = gs12();
    let v = [0.0, 0.3 * vc(), 0.4 * vc()];
    assert!(denominator_floor(&gs.model, v).unwrap() >= 0.5);
    for bad in [[0.0, 0.0, vc()], [0.0, 0.8 * vc(), 0.8 * vc()]] {
        let err = eliminate_field(&gs.model, gs.psi(), bad).unwrap_err();
        assert!(matches!(err, pekarlab::Error::Supersonic { .. }), "{err}");
        assert!(scf_traveling_wave(gs, bad, &TwOptions::default()).is_err());
    }
}

#[test]
fn elimination_splits_into_even_and_odd_parts() {
    // For a real even density σ is real and even. With d = v·k/ε the even part of
    // φ_v − φ_α is −√α σ d²/(1 − d²) and the odd part is −√α σ d/(1 − d²).
    let gs = gs12();
    let m = &gs.model;
    let v = [0.0, 0.0, 0.3 * vc()];
    let phi_v = eliminate_field(m, gs.psi(), v).unwrap();
    let phi_0 = minimizing_field(m, gs.psi());
    let s = sigma(m, gs.psi());
    let grid = m.grid();
    let sa = 12f64.sqrt();
    let n = grid.n();
    let mut worst: f64 = 0.0;
    for idx in 0..grid.size() {
        let ijk = grid.unravel(idx);
        if ijk.contains(&(n / 2)) {
            continue;
        }
        let j = grid.negated_index(idx);
        let d = v[2] * grid.k_at(idx)[2] / m.eps()[idx];
        let diff = |i: usize| phi_v.values()[i] - phi_0.values()[i];
        let even = 0.5 * (diff(idx) + diff(j));
        let odd = 0.5 * (diff(idx) - diff(j));
        let sg = s.values()[idx];
        let even_ref = -sa * sg * (d * d / (1.0 - d * d));
        let odd_ref = -sa * sg * (d / (1.0 - d * d));
        worst = worst.max((even - even_ref).norm()).max((odd - odd_ref).norm());
    }
    assert!(worst <= 1e-12 * phi_0.max_abs(), "{worst}");
}

#[test]
fn wave_at_rest_is_the_ground_state() {
    let gs = gs12();
    let tw = scf_traveling_wave(gs, [0.0; 3], &TwOptions::default()).unwrap();
    assert!((tw.e_v + gs.mu).abs() <= 1e-9 * gs.mu.abs());
    assert_eq!(tw.eigenvalue(), -tw.e_v);
    let d = dist_mod_symmetry(gs.psi(), &tw.state.psi).unwrap();
    assert!(d.distance <= 1e-8, "{d:?}");
    assert!((tw.e_tw - gs.e_alpha).abs() <= 1e-10 * gs.e_alpha.abs());
    assert!(tw.phase_condition);
}

#[test]
fn moving_wave_solves_both_lines() {
    let gs = gs12();
    let tw = &sweep12()[2];
    let opts = TwOptions::default();
    assert!(tw.residual_psi <= 2.0 * opts.tol, "{}", tw.residual_psi);
    assert!(tw.residual_phi <= 1e-12, "{}", tw.residual_phi);
    assert!(tw.phase_condition);
    assert!(tw.e_tw >= gs.e_alpha);
    // Axial symmetry: momentum along v only, and positive.
    assert!(tw.momentum[0].abs() <= 1e-8 && tw.momentum[1].abs() <= 1e-8, "{:?}", tw.momentum);
    assert!(tw.momentum_along_v() > 0.0);
    // Gauge aligned to the ground state.
    let overlap = gs.psi().inner(&tw.state.psi).unwrap();
    assert!(overlap.re > 0.0 && overlap.im.abs() <= 1e-8, "{overlap}");
}

#[test]
fn converged_wave_is_a_fixed_point() {
    let gs = gs12();
    let tw = &sweep12()[2];
    let again = solve_traveling_wave(gs, tw.v, &tw.state.psi, &TwOptions::default()).unwrap();
    assert!(again.iterations <= 1, "{}", again.iterations);
    let d = dist_mod_symmetry(&tw.state.psi, &again.state.psi).unwrap();
    assert!(d.distance <= 1e-10, "{d:?}");
    assert!((again.e_v - tw.e_v).abs() <= 1e-10 * tw.e_v.abs());
}

#[test]
fn profile_moves_linearly_in_v() {
    let gs = gs12();
    let sweep = sweep12();
    let c: Vec<f64> = [1, 3]
        .iter()
        .map(|&i| dist_mod_symmetry(gs.psi(), &sweep[i].state.psi).unwrap().distance / sweep[i].speed())
        .collect();
    assert!(c[0] > 0.0 && c[1] / c[0] < 2.0 && c[0] / c[1] < 2.0, "{c:?}");
}

#[test]
fn field_deviation_scales_with_root_alpha() {
    let med = medium();
    let opts = GroundStateOptions::default();
    let v = 0.04 * vc();
    let c: Vec<f64> = [8.0, 32.0]
        .iter()
        .map(|&alpha| {
            let gs = solve_with_policy(&med, alpha, &opts).unwrap();
            let tw = scf_traveling_wave(&gs, [0.0, 0.0, v], &TwOptions::default()).unwrap();
            field_dist(&tw.state.phi, gs.phi(), gs.model.eps()) / (alpha.sqrt() * v)
        })
        .collect();
    assert!(c[1] / c[0] < 2.0 && c[0] / c[1] < 2.0, "{c:?}");
}

#[test]
fn action_at_rest_is_energy_minus_multiplier() {
    let gs = gs12();
    let j = action(&gs.model, gs.psi(), gs.phi(), [0.0; 3], -gs.mu);
    assert!((j - (gs.e_alpha - gs.mu)).abs() <= 1e-10 * gs.mu.abs(), "{j}");
}

#[test]
fn action_is_stationary_at_a_wave() {
    let gs = gs12();
    let tw = &sweep12()[2];
    let m = &gs.model;
    let j0 = action(m, &tw.state.psi, &tw.state.phi, tw.v, tw.e_v);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-4;
    for _ in 0..8 {
        let noise: Vec<Complex64> = (0..m.grid().size())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        // Smooth, localized direction: filter the noise by the kernel and cut by the state.
        let smooth = ScalarFieldX::from_values(m.grid(), noise.clone()).unwrap().forward().mul_real(m.kernel()).inverse();
        let dpsi = ScalarFieldX::from_values(
            m.grid(),
            smooth.values().iter().zip(tw.state.psi.values()).map(|(a, b)| a * b.norm()).collect(),
        )
        .unwrap();
        let dpsi = dpsi.normalized();
        let dphi = ScalarFieldK::from_values(m.grid(), noise.iter().zip(m.kernel()).map(|(z, w)| z * w.sqrt()).collect())
            .unwrap();
        let dphi = dphi.scaled(Complex64::new(1.0 / dphi.weighted_norm_sq(m.eps()).sqrt(), 0.0));
        let at = |t: f64| {
            let mut p = tw.state.psi.clone();
            p.axpy(Complex64::new(t, 0.0), &dpsi);
            let mut f = tw.state.phi.clone();
            f.axpy(Complex64::new(t, 0.0), &dphi);
            action(m, &p, &f, tw.v, tw.e_v)
        };
        let slope = (at(h) - at(-h)) / (2.0 * h);
        assert!(slope.abs() <= 1e-6 * j0.abs().max(1.0), "{slope}");
    }
}

#[test]
fn action_is_translation_invariant() {
    let tw = &sweep12()[2];
    let m = &gs12().model;
    let j0 = action(m, &tw.state.psi, &tw.state.phi, tw.v, tw.e_v);
    let y = [2.0 * m.grid().dx(), -m.grid().dx(), 5.0 * m.grid().dx()];
    let j1 = action(m, &translate(&tw.state.psi, y), &translate_k(&tw.state.phi, y), tw.v, tw.e_v);
    assert!((j1 - j0).abs() <= 1e-12 * j0.abs(), "{j0} {j1}");
}

#[test]
fn energy_grows_quadratically_with_the_mass() {
    let gs = gs12();
    let sweep = sweep12();
    let ratios: Vec<f64> = [0, 1, 3].iter().map(|&i| (sweep[i].e_tw - gs.e_alpha) / (0.5 * sweep[i].speed().powi(2))).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    assert!((hi - lo) / lo <= 0.05, "{ratios:?}");
    let m = closed_form_mass(gs);
    for tw in sweep {
        let mp = tw.momentum_along_v() / tw.speed();
        assert!((mp - m).abs() <= 0.03 * m, "{mp} vs {m}");
        assert!(tw.e_tw >= gs.e_alpha);
    }
}

#[test]
fn sweep_row_at_rest_reports_the_ground_energy() {
    let gs = gs12();
    let rows = tw_energy_sweep(gs, &[0.0], &TwOptions::default()).unwrap();
    let row = TwRow::from(&rows[0]);
    assert_eq!(row.v, 0.0);
    assert!((row.e_tw - gs.e_alpha).abs() <= 1e-10 * gs.e_alpha.abs());
}
