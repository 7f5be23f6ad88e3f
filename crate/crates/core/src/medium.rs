//! Coupling functions `ε(k)`, `v(k)` and the quantities derived from them.
//!
//! The interaction multiplier is `W = v²/ε`, the form factor `ĝ = v/√ε`
//! (so `h = g * g` has Fourier multiplier `W`), and `v_crit = inf ε(k)/|k|`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type Radial = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of geometric sample points used by the assumption checks.
pub const SAMPLE_COUNT: usize = 4096;
/// Sampled frequency window `[K_MIN, K_MAX]`.
pub const K_MIN: f64 = 1e-4;
pub const K_MAX: f64 = 1e4;

/// A radial medium: dispersion `ε`, coupling `v` and electron mass.
#[derive(Clone)]
pub struct Medium {
    name: String,
    params: Vec<(String, f64)>,
    m_e: f64,
    eps: Radial,
    coupling: Radial,
}

impl fmt::Debug for Medium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Medium")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("m_e", &self.m_e)
            .finish()
    }
}

/// The default family `v = (1+k²)^{-a}`, `ε = (1+k²)^{1/2}`.
pub const POLYNOMIAL: &str = "polynomial";
/// The non-regularized profile `ε = 1`, `v = 1/|k|`.
pub const PEKAR_NONREGULAR: &str = "pekar-nonregular";
pub const DEFAULT_A: f64 = 2.0;

impl Medium {
    /// Builds a medium from arbitrary radial profiles. Such media cannot be
    /// stored in snapshots.
    pub fn custom<E, V>(name: &str, m_e: f64, eps: E, v: V) -> Self
    where
        E: Fn(f64) -> f64 + Send + Sync + 'static,
        V: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            params: Vec::new(),
            m_e,
            eps: Arc::new(eps),
            coupling: Arc::new(v),
        }
    }

    /// Constructs a named profile without checking the standing assumptions.
    pub fn from_name(name: &str, params: &[(&str, f64)], m_e: f64) -> Result<Self> {
        if !(m_e.is_finite() && m_e > 0.0) {
            return Err(Error::InvalidMedium(format!("electron mass {m_e} must be positive")));
        }
        match name {
            POLYNOMIAL => {
                let mut a = DEFAULT_A;
                for &(key, value) in params {
                    match key {
                        "a" => a = value,
                        other => {
                            return Err(Error::InvalidMedium(format!(
                                "unknown parameter `{other}` for `{POLYNOMIAL}`"
                            )))
                        }
                    }
                }
                if !a.is_finite() {
                    return Err(Error::InvalidMedium(format!("exponent a = {a} is not finite")));
                }
                Ok(Self {
                    name: name.to_string(),
                    params: vec![("a".to_string(), a)],
                    m_e,
                    eps: Arc::new(|k| (1.0 + k * k).sqrt()),
                    coupling: Arc::new(move |k| (1.0 + k * k).powf(-a)),
                })
            }
            PEKAR_NONREGULAR => {
                if let Some((key, _)) = params.first() {
                    return Err(Error::InvalidMedium(format!(
                        "`{PEKAR_NONREGULAR}` takes no parameters (got `{key}`)"
                    )));
                }
                Ok(Self {
                    name: name.to_string(),
                    params: Vec::new(),
                    m_e,
                    eps: Arc::new(|_| 1.0),
                    coupling: Arc::new(|k| 1.0 / k),
                })
            }
            other => Err(Error::InvalidMedium(format!("unknown medium `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn m_e(&self) -> f64 {
        self.m_e
    }

    /// True for media that can be rebuilt from `(name, params)`.
    pub fn is_builtin(&self) -> bool {
        self.name == POLYNOMIAL || self.name == PEKAR_NONREGULAR
    }

    pub fn eps(&self, k: f64) -> f64 {
        (self.eps)(k)
    }

    pub fn v(&self, k: f64) -> f64 {
        (self.coupling)(k)
    }

    /// Interaction multiplier `W = v²/ε`.
    pub fn w(&self, k: f64) -> f64 {
        let v = self.v(k);
        v * v / self.eps(k)
    }

    /// Form factor `ĝ = v/√ε`.
    pub fn g_hat(&self, k: f64) -> f64 {
        self.v(k) / self.eps(k).sqrt()
    }
}

/// Builds a named medium and rejects it unless every assumption check passes.
pub fn builtin_medium(name: &str, params: &[(&str, f64)], m_e: f64) -> Result<Medium> {
    let medium = Medium::from_name(name, params, m_e)?;
    let report = validate(&medium);
    if report.passed() {
        Ok(medium)
    } else {
        Err(Error::InvalidMedium(report.failure_summary()))
    }
}

/// One sampled assumption check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub assumption: &'static str,
    pub passed: bool,
    /// Frequency at which the check failed, when there is one.
    pub witness_k: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub v_crit: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failure_summary(&self) -> String {
        self.failures()
            .map(|c| format!("{} ({}): {}", c.name, c.assumption, c.detail))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            write!(f, "{status} {} [{}] {}", c.name, c.assumption, c.detail)?;
            if let Some(k) = c.witness_k {
                write!(f, " (witness k = {k:.6e})")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "v_crit = {:.12e}", self.v_crit)
    }
}

fn sample_points() -> Vec<f64> {
    let ratio = (K_MAX / K_MIN).ln() / (SAMPLE_COUNT - 1) as f64;
    (0..SAMPLE_COUNT)
        .map(|i| K_MIN * (ratio * i as f64).exp())
        .collect()
}

/// Log-slope `d ln f / d ln k` by a centered difference.
fn log_slope<F: Fn(f64) -> f64>(f: F, k: f64) -> f64 {
    let h: f64 = 1e-3;
    let (lo, hi) = (k * (-h).exp(), k * h.exp());
    (f(hi).abs().ln() - f(lo).abs().ln()) / (2.0 * h)
}

/// Infimum of `ε(k)/k` over `(0, ∞)`; zero when the ratio keeps decaying in the tail.
pub fn v_crit(med: &Medium) -> f64 {
    let ratio = |k: f64| med.eps(k) / k;
    let ks = sample_points();
    let vals: Vec<f64> = ks.iter().map(|&k| ratio(k)).collect();
    let (imin, &vmin) = vals
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap_or((0, &f64::NAN));
    if !vmin.is_finite() {
        return 0.0;
    }
    if imin == ks.len() - 1 {
        // Minimum at the window edge: still decaying means the infimum is 0.
        let decade = ratio(K_MAX / 10.0);
        if vmin < 0.9 * decade {
            return 0.0;
        }
        return vmin;
    }
    if imin == 0 {
        return vmin;
    }
    golden_min(ratio, ks[imin - 1], ks[imin + 1]).min(vmin)
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

/// Checks the standing assumptions on a geometric sample of frequencies.
pub fn validate(med: &Medium) -> ValidationReport {
    let ks = sample_points();
    let mut checks = Vec::new();

    let bad_eps = std::iter::once(0.0)
        .chain(ks.iter().copied())
        .find(|&k| !(med.eps(k).is_finite() && med.eps(k) > 0.0));
    checks.push(Check {
        name: "eps-positive",
        assumption: "positive dispersion: eps > 0",
        passed: bad_eps.is_none(),
        witness_k: bad_eps,
        detail: match bad_eps {
            Some(k) => format!("eps({k:.3e}) = {:.3e}", med.eps(k)),
            None => "eps > 0 at all samples".into(),
        },
    });

    let vc = v_crit(med);
    checks.push(Check {
        name: "v-crit-positive",
        assumption: "subsonic threshold: v_crit = inf eps(k)/|k| > 0",
        passed: vc > 0.0,
        witness_k: (vc <= 0.0).then_some(K_MAX),
        detail: if vc > 0.0 {
            format!("v_crit = {vc:.12e}")
        } else {
            "v_crit = 0: eps(k)/|k| decays to zero".into()
        },
    });

    // g ∈ H²: the radial integrand k²(1+k²)²W must decay faster than 1/k
    // and stay integrable at the origin.
    let h2_integrand = |k: f64| k * k * (1.0 + k * k).powi(2) * med.w(k);
    let tail = log_slope(h2_integrand, K_MAX);
    let head = log_slope(h2_integrand, K_MIN);
    let finite = ks.iter().all(|&k| med.w(k).is_finite());
    let h2_ok = finite && tail < -1.0 && head > -1.0;
    checks.push(Check {
        name: "g-in-H2",
        assumption: "regular form factor: g in H^2",
        passed: h2_ok,
        witness_k: if h2_ok {
            None
        } else if tail >= -1.0 {
            Some(K_MAX)
        } else {
            Some(K_MIN)
        },
        detail: format!("tail log-slope {tail:.6}, origin log-slope {head:.6} of k^2 (1+k^2)^2 W"),
    });

    let bad_ghat = std::iter::once(0.0).chain(ks.iter().copied()).find(|&k| {
        let lower = (1.0 + k).powf(-4.5);
        let g = med.g_hat(k);
        !(g.is_finite() && g >= lower * (1.0 - 1e-12))
    });
    checks.push(Check {
        name: "g-hat-lower-bound",
        assumption: "form factor lower bound: g_hat(k) >= (1+|k|)^(-9/2)",
        passed: bad_ghat.is_none(),
        witness_k: bad_ghat,
        detail: match bad_ghat {
            Some(k) => format!("g_hat({k:.3e}) = {:.3e} < {:.3e}", med.g_hat(k), (1.0 + k).powf(-4.5)),
            None => "bound holds at all samples".into(),
        },
    });

    ValidationReport { checks, v_crit: vc }
}

/// Radial moments of the interaction multiplier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MediumMoments {
    /// `∫ W dk = ‖g‖²`.
    pub m0: f64,
    /// `∫ k² W dk = ‖∇g‖²`.
    pub m2: f64,
    pub v_crit: f64,
    pub w0: f64,
}

/// `∫₀^∞ f(r) dr` to roughly `rel_tol`, split at 1 and mapped `r = 1/u` on the tail.
pub(crate) fn radial_integral<F: Fn(f64) -> f64>(f: F, rel_tol: f64) -> f64 {
    let pieces = |abs_tol: f64| -> (f64, f64) {
        let a = quadrature::integrate(&f, 0.0, 1.0, abs_tol);
        let b = quadrature::integrate(
            |u: f64| if u > 0.0 { f(1.0 / u) / (u * u) } else { 0.0 },
            0.0,
            1.0,
            abs_tol,
        );
        (a.integral + b.integral, a.error_estimate + b.error_estimate)
    };
    let (rough, _) = pieces(1e-6);
    let (fine, _) = pieces((rel_tol * rough.abs()).max(1e-300));
    fine
}

/// `M0 = 4π∫r²W`, `M2 = 4π∫r⁴W` by adaptive radial quadrature.
pub fn moments(med: &Medium) -> Result<MediumMoments> {
    let zero = sample_points().iter().all(|&k| med.w(k) == 0.0) && med.w(0.0) == 0.0;
    let w0 = med.w(0.0);
    let vc = v_crit(med);
    if zero {
        return Ok(MediumMoments { m0: 0.0, m2: 0.0, v_crit: vc, w0 });
    }
    let tail = log_slope(|k| k.powi(4) * med.w(k), K_MAX);
    if !(tail < -1.0) {
        return Err(Error::InvalidMedium(format!(
            "divergent tail: k^4 W decays with log-slope {tail:.6} >= -1"
        )));
    }
    let m0 = 4.0 * PI * radial_integral(|r| r * r * med.w(r), 1e-12);
    let m2 = 4.0 * PI * radial_integral(|r| r.powi(4) * med.w(r), 1e-12);
    if !(m0.is_finite() && m2.is_finite()) {
        return Err(Error::InvalidMedium("moments are not finite".into()));
    }
    Ok(MediumMoments { m0, m2, v_crit: vc, w0 })
}

/// Harmonic-oscillator reference scales at coupling `alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorParams {
    pub omega: f64,
    pub e_osc: f64,
    /// Length scale `1/√(m ω)`; infinite when degenerate.
    pub ell: f64,
    /// Set when `α = 0` and no oscillator exists.
    pub degenerate: bool,
}

/// `ω = √(α M2 / (3m))`, `e_osc = (3/2)ω`, `ℓ = 1/√(mω)`.
pub fn oscillator_params(med: &Medium, alpha: f64) -> Result<OscillatorParams> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("coupling alpha = {alpha} must be >= 0")));
    }
    let m2 = moments(med)?.m2;
    Ok(oscillator_from_m2(m2, med.m_e(), alpha))
}

pub(crate) fn oscillator_from_m2(m2: f64, m_e: f64, alpha: f64) -> OscillatorParams {
    let omega = (alpha * m2 / (3.0 * m_e)).sqrt();
    if omega == 0.0 {
        return OscillatorParams { omega: 0.0, e_osc: 0.0, ell: f64::INFINITY, degenerate: true };
    }
    OscillatorParams {
        omega,
        e_osc: 1.5 * omega,
        ell: 1.0 / (m_e * omega).sqrt(),
        degenerate: false,
    }
}

/// Smallest `k` beyond which `W(k) ≤ rel · W(0)` (searched on the sample window).
pub fn kernel_cutoff(med: &Medium, rel: f64) -> f64 {
    let w0 = med.w(0.0);
    let ks = sample_points();
    let mut last_above = 0.0;
    for &k in &ks {
        if med.w(k).abs() > rel * w0.abs() {
            last_above = k;
        }
    }
    // Refine between the last sample above and the next one.
    let mut lo = last_above;
    let mut hi = ks.iter().copied().find(|&k| k > last_above).unwrap_or(K_MAX);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if med.w(mid).abs() > rel * w0.abs() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Relative periodization error of the kernel at the origin on a box of side `length`:
/// `|dk³ Σ_q W(q·dk) − M0| / M0` over the full integer lattice, which by Poisson
/// summation equals the summed image values `Σ_{n≠0} h(nL) / h(0)`.
pub fn image_error(med: &Medium, m0: f64, length: f64) -> f64 {
    let dk = 2.0 * PI / length;
    let k_cut = kernel_cutoff(med, 1e-16);
    let qmax = (k_cut / dk).ceil() as i64;
    let q2max = (k_cut / dk).powi(2);
    // W depends on q² only; tabulate it.
    let table: Vec<f64> = (0..=(3 * qmax * qmax) as usize)
        .map(|q2| med.w(dk * (q2 as f64).sqrt()))
        .collect();
    let mut sum = 0.0;
    for qx in -qmax..=qmax {
        for qy in -qmax..=qmax {
            let base = qx * qx + qy * qy;
            if base as f64 > q2max {
                continue;
            }
            for qz in -qmax..=qmax {
                let q2 = base + qz * qz;
                if q2 as f64 <= q2max {
                    sum += table[q2 as usize];
                }
            }
        }
    }
    (sum * dk.powi(3) - m0).abs() / m0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_medium_is_valid() {
        let m = builtin_medium(POLYNOMIAL, &[], 1.0).unwrap();
        assert_eq!(m.params(), &[("a".to_string(), 2.0)]);
        assert!(validate(&m).passed());
    }

    #[test]
    fn unknown_names_and_parameters_are_rejected() {
        assert!(Medium::from_name("phonon", &[], 1.0).is_err());
        assert!(Medium::from_name(POLYNOMIAL, &[("b", 1.0)], 1.0).is_err());
        assert!(Medium::from_name(POLYNOMIAL, &[], 0.0).is_err());
    }

    #[test]
    fn v_crit_of_default_family_is_one() {
        let m = builtin_medium(POLYNOMIAL, &[], 1.0).unwrap();
        assert!((v_crit(&m) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn v_crit_with_interior_minimum() {
        // ε/k = (1 + k²)/k has its minimum 2 at k = 1.
        let m = Medium::custom("test", 1.0, |k| 1.0 + k * k, |k| (1.0 + k * k).powi(-2));
        assert!((v_crit(&m) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_kernel_has_zero_moments() {
        let m = Medium::custom("zero", 1.0, |k| (1.0 + k * k).sqrt(), |_| 0.0);
        let mm = moments(&m).unwrap();
        assert_eq!((mm.m0, mm.m2), (0.0, 0.0));
    }

    #[test]
    fn degenerate_oscillator_at_zero_coupling() {
        let m = builtin_medium(POLYNOMIAL, &[], 1.0).unwrap();
        let p = oscillator_params(&m, 0.0).unwrap();
        assert!(p.degenerate && p.omega == 0.0 && p.ell.is_infinite());
        assert!(oscillator_params(&m, -1.0).is_err());
    }

    #[test]
    fn kernel_cutoff_of_default_family() {
        let m = builtin_medium(POLYNOMIAL, &[], 1.0).unwrap();
        let k = kernel_cutoff(&m, 1e-8);
        assert!(((1.0 + k * k).powf(-4.5) - 1e-8).abs() < 1e-12);
    }
}
