use std::f64::consts::PI;

use num_complex::Complex64;
use pekarlab::spectral::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(grid: &Grid, seed: u64) -> ScalarFieldX {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.size())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    ScalarFieldX::from_values(grid, values).unwrap()
}

fn max_rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).norm())) / scale
}

/// Brute-force discrete transform straight from the defining sum.
fn direct_forward(f: &ScalarFieldX) -> Vec<Complex64> {
    let g = f.grid();
    let c = g.dx3() / (2.0 * PI).powf(1.5);
    (0..g.size())
        .map(|ik| {
            let k = g.k_at(ik);
            let s: Complex64 = (0..g.size())
                .map(|ix| {
                    let x = g.x_at(ix);
                    let phase = -(k[0] * x[0] + k[1] * x[1] + k[2] * x[2]);
                    f.values()[ix] * Complex64::from_polar(1.0, phase)
                })
                .sum();
            s * c
        })
        .collect()
}

#[test]
fn forward_matches_the_defining_sum() {
    let g = Grid::new(8, 5.3).unwrap();
    let f = random_field(&g, 1);
    let direct = direct_forward(&f);
    assert!(max_rel_diff(&direct, forward_transform(&f).values()) < 1e-12);
}

#[test]
fn plane_wave_transforms_to_a_single_mode() {
    let g = Grid::new(8, 3.0).unwrap();
    let target = g.ravel([1, 7, 3]);
    let k0 = g.k_at(target);
    let f = ScalarFieldX::from_fn(&g, |x| {
        Complex64::from_polar(1.0, k0[0] * x[0] + k0[1] * x[1] + k0[2] * x[2])
    });
    let fhat = forward_transform(&f);
    let l3 = g.length().powi(3);
    for (i, z) in fhat.values().iter().enumerate() {
        if i == target {
            assert!((z - Complex64::new(l3 / (2.0 * PI).powf(1.5), 0.0)).norm() < 1e-12 * l3);
        } else {
            assert!(z.norm() < 1e-12 * l3);
        }
    }
    // dk³ |f̂(k₀)|² = L³ = ‖f‖² (Plancherel on a unimodular wave).
    assert!((fhat.norm_sq() - l3).abs() < 1e-11 * l3);
    let back = inverse_transform(&fhat);
    assert!(max_rel_diff(f.values(), back.values()) < 1e-13);
}

#[test]
fn gaussian_transform_matches_closed_form() {
    let g = Grid::new(40, 16.0).unwrap();
    let f = ScalarFieldX::from_fn(&g, |x| {
        Complex64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp(), 0.0)
    });
    let fhat = forward_transform(&f);
    let mut worst = 0.0f64;
    for (i, z) in fhat.values().iter().enumerate() {
        let k2 = g.k2()[i];
        if k2 <= 36.0 {
            worst = worst.max((z - Complex64::new((-k2 / 2.0).exp(), 0.0)).norm());
        }
    }
    assert!(worst < 1e-10, "worst deviation {worst:e}");
}

#[test]
fn round_trip_and_plancherel_on_random_fields() {
    for (n, l, seed) in [(8, 1.0, 3), (16, 7.5, 4), (12, 20.0, 5)] {
        let g = Grid::new(n, l).unwrap();
        let f = random_field(&g, seed);
        let fhat = forward_transform(&f);
        let back = inverse_transform(&fhat);
        assert!(max_rel_diff(f.values(), back.values()) < 1e-12);
        assert!((f.norm_sq() - fhat.norm_sq()).abs() < 1e-12 * f.norm_sq());
        let k_back = forward_transform(&inverse_transform(&fhat));
        assert!(max_rel_diff(fhat.values(), k_back.values()) < 1e-12);
    }
}

#[test]
fn multiplier_identity_and_eigenmode() {
    let g = Grid::new(8, 4.0).unwrap();
    let f = random_field(&g, 9).forward();
    let same = apply_multiplier(&f, |_| Complex64::new(1.0, 0.0));
    assert_eq!(same.values(), f.values());

    let mode = g.ravel([2, 0, 5]);
    let k0 = g.k_at(mode);
    let wave = ScalarFieldX::from_fn(&g, |x| {
        Complex64::from_polar(1.0, k0[0] * x[0] + k0[1] * x[1] + k0[2] * x[2])
    })
    .forward();
    let lap = apply_multiplier(&wave, |k| Complex64::new(k[0] * k[0] + k[1] * k[1] + k[2] * k[2], 0.0));
    let k02 = g.k2()[mode];
    let expect = wave.scaled(Complex64::new(k02, 0.0));
    assert!(max_rel_diff(expect.values(), lap.values()) < 1e-13);
}

/// Fourth-order central difference Laplacian on the periodic lattice.
fn fd_laplacian(f: &ScalarFieldX) -> Vec<Complex64> {
    let g = f.grid();
    let n = g.n() as isize;
    let h2 = g.dx() * g.dx();
    let at = |i: isize, j: isize, l: isize| {
        f.values()[g.ravel([i.rem_euclid(n) as usize, j.rem_euclid(n) as usize, l.rem_euclid(n) as usize])]
    };
    (0..g.size())
        .map(|idx| {
            let [i, j, l] = g.unravel(idx).map(|v| v as isize);
            let mut s = Complex64::default();
            for axis in 0..3 {
                let e = |d: isize| match axis {
                    0 => at(i + d, j, l),
                    1 => at(i, j + d, l),
                    _ => at(i, j, l + d),
                };
                s += (-e(2) + 16.0 * e(1) - 30.0 * e(0) + 16.0 * e(-1) - e(-2)) / (12.0 * h2);
            }
            s
        })
        .collect()
}

#[test]
fn spectral_laplacian_agrees_with_fourth_order_differences() {
    let err = |n: usize| {
        let g = Grid::new(n, 12.0).unwrap();
        let f = ScalarFieldX::from_fn(&g, |x| {
            Complex64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp(), 0.0)
        });
        let spec = apply_multiplier(&f.forward(), |k| {
            Complex64::new(-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]), 0.0)
        })
        .inverse();
        let fd = fd_laplacian(&f);
        spec.values().iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()))
    };
    let (coarse, fine) = (err(24), err(48));
    let ratio = coarse / fine;
    assert!(fine < 3e-3, "fine error {fine:e}");
    assert!((12.0..20.0).contains(&ratio), "convergence ratio {ratio}");
}

#[test]
fn convolution_matches_the_direct_periodic_sum() {
    let g = Grid::new(8, 6.0).unwrap();
    let w_hat = g.sample_radial(|k| (1.0 + k * k).powf(-4.5));
    let f = random_field(&g, 11);
    // w(d) = dk³ Σ_k W(k) e^{ik·d} on lattice differences.
    let n = g.n();
    let w_of = |d: [usize; 3]| -> Complex64 {
        let dvec = d.map(|m| m as f64 * g.dx());
        (0..g.size())
            .map(|ik| {
                let k = g.k_at(ik);
                w_hat[ik] * Complex64::from_polar(1.0, k[0] * dvec[0] + k[1] * dvec[1] + k[2] * dvec[2])
            })
            .sum::<Complex64>()
            * g.dk3()
    };
    let table: Vec<Complex64> = (0..g.size()).map(|i| w_of(g.unravel(i))).collect();
    let direct: Vec<Complex64> = (0..g.size())
        .map(|a| {
            let ia = g.unravel(a);
            (0..g.size())
                .map(|b| {
                    let ib = g.unravel(b);
                    let d = [0, 1, 2].map(|t| (ia[t] + n - ib[t]) % n);
                    table[g.ravel(d)] * f.values()[b]
                })
                .sum::<Complex64>()
                * g.dx3()
        })
        .collect();
    let fast = convolve_kernel(&f, &w_hat);
    assert!(max_rel_diff(&direct, fast.values()) < 1e-10);
}

#[test]
fn convolution_of_gaussians_matches_closed_form() {
    let g = Grid::new(48, 24.0).unwrap();
    let s = 1.0;
    let kernel = g.sample_radial(|k| (-k * k * s / 2.0).exp());
    let f = ScalarFieldX::from_fn(&g, |x| {
        Complex64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp(), 0.0)
    });
    let conv = convolve_kernel(&f, &kernel);
    let pref = (2.0 * PI).powi(3) / (1.0 + s).powf(1.5);
    let expect = ScalarFieldX::from_fn(&g, |x| {
        Complex64::new(pref * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * (1.0 + s))).exp(), 0.0)
    });
    assert!(max_rel_diff(expect.values(), conv.values()) < 1e-10);
    assert!(conv.values().iter().all(|z| z.im == 0.0));
}

#[test]
fn lattice_modes_are_orthogonal() {
    let g = Grid::new(8, 2.5).unwrap();
    let wave = |idx: usize| {
        let k = g.k_at(idx);
        ScalarFieldX::from_fn(&g, |x| Complex64::from_polar(1.0, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]))
    };
    let a = wave(g.ravel([1, 2, 3]));
    let b = wave(g.ravel([1, 2, 4]));
    assert!(a.inner(&b).unwrap().norm() < 1e-12);
    assert!((a.inner(&a).unwrap().re - g.length().powi(3)).abs() < 1e-12 * g.length().powi(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_is_identity(seed in any::<u64>(), half_n in 4usize..8, length in 0.5f64..40.0) {
        let g = Grid::new(2 * half_n, length).unwrap();
        let f = random_field(&g, seed);
        let back = inverse_transform(&forward_transform(&f));
        prop_assert!(max_rel_diff(f.values(), back.values()) < 1e-12);
    }

    #[test]
    fn plancherel_holds(seed in any::<u64>(), half_n in 4usize..8, length in 0.5f64..40.0) {
        let g = Grid::new(2 * half_n, length).unwrap();
        let f = random_field(&g, seed);
        let fhat = forward_transform(&f);
        prop_assert!((f.norm_sq() - fhat.norm_sq()).abs() <= 1e-12 * f.norm_sq());
    }

    #[test]
    fn inner_is_conjugate_symmetric_and_sesquilinear(seed in any::<u64>(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let g = Grid::new(8, 3.0).unwrap();
        let a = random_field(&g, seed);
        let b = random_field(&g, seed.wrapping_add(1));
        let c = Complex64::new(re, im);
        let ab = a.inner(&b).unwrap();
        let ba = b.inner(&a).unwrap();
        prop_assert!((ab - ba.conj()).norm() < 1e-12 * (1.0 + ab.norm()));
        let lhs = a.scaled(c).inner(&b).unwrap();
        prop_assert!((lhs - c.conj() * ab).norm() < 1e-12 * (1.0 + lhs.norm()));
        let rhs = a.inner(&b.scaled(c)).unwrap();
        prop_assert!((rhs - c * ab).norm() < 1e-12 * (1.0 + rhs.norm()));
        prop_assert!(a.inner(&a).unwrap().re > 0.0);
    }

    #[test]
    fn transforms_are_linear(seed in any::<u64>(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let g = Grid::new(10, 4.0).unwrap();
        let a = random_field(&g, seed);
        let b = random_field(&g, seed ^ 0x5555);
        let c = Complex64::new(re, im);
        let mut comb = a.clone();
        comb.axpy(c, &b);
        let mut sum = forward_transform(&a);
        sum.axpy(c, &forward_transform(&b));
        prop_assert!(max_rel_diff(sum.values(), forward_transform(&comb).values()) < 1e-12);
    }
}
