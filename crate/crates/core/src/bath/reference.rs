//! Quadrature references for bath correlation functions, independent of the
//! pole decomposition.
//!
//! Every frequency integral is split as `coth(βω/2) = 1 + 2 n(ω)`:
//!
//! - the thermal part (weight `2 n(ω)`, exponentially decaying) is integrated
//!   along the positive real axis;
//! - the zero-temperature part `∫₀^∞ J(ω) K(ω) dω`, whose kernel `K` is
//!   analytic and decays in the fourth quadrant, is integrated along the ray
//!   `ω = r e^{-iθ}` with `θ` below every pole of `J`, which removes the slow
//!   oscillatory `1/ω` tail of the real-axis integrand.

use std::f64::consts::PI;

use super::{BathSpec, SpectralDensity};
use crate::quad::{integrate, integrate_to_infinity, QuadOptions};
use crate::{Error, Result, C64};

/// Absolute tolerance for reference integrals.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// `x / (e^{βx} - 1)`, with the series near the origin.
fn bose_weight(beta: f64, x: f64) -> f64 {
    let bx = beta * x;
    if bx.abs() < 1e-6 {
        (1.0 - 0.5 * bx) / beta
    } else {
        x / bx.exp_m1()
    }
}

/// `e^z - 1` without cancellation for small `|z|`.
fn cexpm1(z: C64) -> C64 {
    if z.norm() < 1e-3 {
        z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0))))
    } else {
        z.exp() - 1.0
    }
}

fn options(tolerance: f64) -> QuadOptions {
    QuadOptions { abs_tol: tolerance * PI * 0.25, rel_tol: 1e-13, max_intervals: 200_000 }
}

/// `(1/π) ∫₀^∞ 2 J(ω) n(ω) g(ω) dω` on the real axis; `g` is an oscillatory
/// factor with frequency up to `t`.
fn thermal_part(spec: &BathSpec, t: f64, tolerance: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    let beta = spec.beta;
    let family = spec.family;
    let omega_max = 45.0 / beta + 10.0 * family.scale();
    let mut breaks = Vec::new();
    if let SpectralDensity::Brownian { omega0, .. } = family {
        breaks.push(omega0);
    }
    let pieces = ((omega_max * t / PI).ceil() as usize).clamp(8, 100_000);
    breaks.extend((1..pieces).map(|k| omega_max * k as f64 / pieces as f64));
    let f = |w: f64| {
        let j = family.reduced(C64::new(w, 0.0)).re;
        C64::new(2.0 * j * bose_weight(beta, w) * g(w), 0.0)
    };
    let r = integrate(f, 0.0, omega_max, &breaks, options(tolerance))?;
    Ok(r.value.re / PI)
}

/// `(1/π) ∫₀^∞ J(ω) K(ω) dω` evaluated along a ray in the fourth quadrant.
fn zero_temperature_part(spec: &BathSpec, tolerance: f64, kernel: impl Fn(C64) -> C64) -> Result<C64> {
    let family = spec.family;
    let theta = (0.5 * family.min_pole_angle()).min(PI / 4.0);
    let dir = C64::from_polar(1.0, -theta);
    let f = |r: f64| {
        let w = dir * r;
        family.reduced(w) * kernel(w) * dir
    };
    let r = integrate_to_infinity(f, 0.0, family.scale(), options(tolerance))?;
    Ok(r.value / PI)
}

/// `C(t)` on a grid of non-negative times.
///
/// For a Drude bath `Re C(t)` diverges logarithmically as `t → 0`, so `t = 0`
/// yields [`Error::Quadrature`].
pub fn correlation_reference(spec: &BathSpec, t_grid: &[f64]) -> Result<Vec<C64>> {
    correlation_reference_tol(spec, t_grid, DEFAULT_TOLERANCE)
}

pub fn correlation_reference_tol(spec: &BathSpec, t_grid: &[f64], tolerance: f64) -> Result<Vec<C64>> {
    spec.validate()?;
    t_grid
        .iter()
        .map(|&t| {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::config("t_grid", format!("times must be finite and >= 0, got {t}")));
            }
            if spec.family.lambda() == 0.0 {
                return Ok(C64::new(0.0, 0.0));
            }
            if t == 0.0 && matches!(spec.family, SpectralDensity::Drude { .. }) {
                // J(ω) ~ 1/ω: the zero-temperature integral diverges
                return Err(Error::Quadrature { estimate: f64::INFINITY, tolerance });
            }
            let thermal = thermal_part(spec, t, tolerance, |w| (w * t).cos())?;
            let cold = zero_temperature_part(spec, tolerance, |w| w * (-C64::i() * w * t).exp())?;
            Ok(cold + thermal)
        })
        .collect()
}

/// Pure-dephasing exponent
/// `Γ(t) = (1/π) ∫₀^∞ dω J(ω) coth(βω/2) (1 - cos ωt) / ω² = ∫₀^t ∫₀^s Re C(u) du ds`.
pub fn dephasing_reference(spec: &BathSpec, t: f64) -> Result<f64> {
    spec.validate()?;
    if spec.family.lambda() == 0.0 || t == 0.0 {
        return Ok(0.0);
    }
    // 1 - cos ωt = 2 sin²(ωt/2)
    let thermal = thermal_part(spec, t, DEFAULT_TOLERANCE, |w| {
        if w == 0.0 {
            0.5 * t * t
        } else {
            let s = (0.5 * w * t).sin() / w;
            2.0 * s * s
        }
    })?;
    let cold = zero_temperature_part(spec, DEFAULT_TOLERANCE, |w| -cexpm1(-C64::i() * w * t) / w)?;
    Ok(thermal + cold.re)
}

/// `∫₀^t Re C(u) du = (1/π) ∫₀^∞ dω J(ω) coth(βω/2) sin(ωt) / ω`.
pub fn integrated_correlation_reference(spec: &BathSpec, t: f64) -> Result<f64> {
    spec.validate()?;
    if spec.family.lambda() == 0.0 || t == 0.0 {
        return Ok(0.0);
    }
    let thermal = thermal_part(spec, t, DEFAULT_TOLERANCE, |w| if w == 0.0 { t } else { (w * t).sin() / w })?;
    // on the real axis Re[i (e^{-iωt} - 1)] = sin ωt
    let cold = zero_temperature_part(spec, DEFAULT_TOLERANCE, |w| C64::i() * cexpm1(-C64::i() * w * t))?;
    Ok(thermal + cold.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BoseScheme;

    fn drude() -> BathSpec {
        BathSpec {
            family: SpectralDensity::Drude { lambda: 0.2, gamma: 0.1 },
            beta: 2.4,
            n_pade: 2,
            scheme: BoseScheme::Pade,
        }
    }

    fn brownian() -> BathSpec {
        BathSpec {
            family: SpectralDensity::Brownian { lambda: 2.5, gamma: 1.0, omega0: 1.0 },
            beta: 2.4,
            n_pade: 3,
            scheme: BoseScheme::Pade,
        }
    }

    /// Bath pole with the exact cotangent plus 10⁴ Matsubara terms.
    fn drude_matsubara(t: f64) -> C64 {
        let (lambda, gamma, beta): (f64, f64, f64) = (0.2, 0.1, 2.4);
        let mut c = C64::new(lambda * gamma / (0.5 * beta * gamma).tan(), -lambda * gamma) * (-gamma * t).exp();
        for k in 1..=10_000 {
            let nu = 2.0 * PI * k as f64 / beta;
            c += 4.0 * lambda * gamma * nu / (beta * (nu * nu - gamma * gamma)) * (-nu * t).exp();
        }
        c
    }

    #[test]
    fn zero_coupling_is_zero() {
        let spec = BathSpec { family: SpectralDensity::Drude { lambda: 0.0, gamma: 0.1 }, ..drude() };
        assert!(correlation_reference(&spec, &[0.0, 1.0, 5.0]).unwrap().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn drude_agrees_with_matsubara_sum() {
        for t in [0.05, 0.5, 3.0, 20.0] {
            let c = correlation_reference(&drude(), &[t]).unwrap()[0];
            let m = drude_matsubara(t);
            assert!((c - m).norm() < 1e-8, "t={t}: {c} vs {m}");
        }
    }

    #[test]
    fn imaginary_part_is_temperature_independent() {
        let hot = BathSpec { beta: 0.5, ..brownian() };
        for t in [0.3, 2.0, 7.5] {
            let a = correlation_reference(&brownian(), &[t]).unwrap()[0];
            let b = correlation_reference(&hot, &[t]).unwrap()[0];
            assert!((a.im - b.im).abs() < 1e-9);
            assert!((a.re - b.re).abs() > 1e-3);
        }
    }

    #[test]
    fn drude_at_zero_reports_divergence() {
        assert!(matches!(correlation_reference(&drude(), &[0.0]), Err(Error::Quadrature { .. })));
    }

    #[test]
    fn brownian_at_zero_is_finite_and_positive() {
        let c = correlation_reference(&brownian(), &[0.0]).unwrap()[0];
        assert!(c.re > 0.0 && c.im.abs() < 1e-9);
    }

    #[test]
    fn dephasing_matches_double_integral_of_pole_sum() {
        // Γ(t) = Σ c'_j/γ_j² (γ_j t - 1 + e^{-γ_j t}) for the Matsubara series.
        let (lambda, gamma, beta): (f64, f64, f64) = (0.2, 0.1, 2.4);
        let g = |c: f64, r: f64, t: f64| c / (r * r) * (r * t - 1.0 + (-r * t).exp());
        for t in [0.5, 4.0, 30.0] {
            let mut expected = g(lambda * gamma / (0.5 * beta * gamma).tan(), gamma, t);
            for k in 1..=200_000 {
                let nu = 2.0 * PI * k as f64 / beta;
                expected += g(4.0 * lambda * gamma * nu / (beta * (nu * nu - gamma * gamma)), nu, t);
            }
            // remainder: terms → c_k t / ν_k with Σ_{k>N} c_k/ν_k ≈ 4λγβ/(4π² N)
            expected += t * 4.0 * lambda * gamma * beta / (4.0 * PI * PI * 200_000.0);
            let got = dephasing_reference(&drude(), t).unwrap();
            assert!((got - expected).abs() < 1e-7, "t={t}: {got} vs {expected}");
        }
    }

    #[test]
    fn integrated_correlation_tends_to_sum_rule() {
        for spec in [drude(), brownian()] {
            let total = integrated_correlation_reference(&spec, 400.0).unwrap();
            let expected = spec.family.slope_at_zero() / spec.beta;
            assert!((total - expected).abs() < 1e-6 * expected, "{total} vs {expected}");
        }
    }
}
