//! Harmonic baths: spectral densities and their correlation functions.
//!
//! A bath enters the dynamics only through its correlation function
//!
//! ```text
//! C(t) = (1/π) ∫₀^∞ dω J(ω) [coth(βω/2) cos ωt - i sin ωt]
//! ```
//!
//! which [`expand`] writes as `Σ_j (c'_j + i c''_j) e^{-γ_j t} + 2Δ δ(t)`.
//! Here `c'_j` and `c''_j` are the coefficients of `Re C(t)` and `Im C(t)`
//! respectively. They are real when `γ_j` is real. For an underdamped
//! Brownian mode the rates come as a complex-conjugate pair and the two
//! coefficients of each pair are complex conjugates of each other.

mod bose;
pub mod reference;

pub use bose::{bose_expansion_value, bose_poles, BosePole, BoseScheme};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Spectral density family. Parameters are in units of ω₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SpectralDensity {
    /// `J(ω) = 2λγω / (ω² + γ²)`
    Drude { lambda: f64, gamma: f64 },
    /// `J(ω) = 2λγω₀²ω / ((ω₀² - ω²)² + γ²ω²)`
    Brownian { lambda: f64, gamma: f64, omega0: f64 },
}

impl SpectralDensity {
    pub fn lambda(&self) -> f64 {
        match *self {
            SpectralDensity::Drude { lambda, .. } | SpectralDensity::Brownian { lambda, .. } => lambda,
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            SpectralDensity::Drude { gamma, .. } | SpectralDensity::Brownian { gamma, .. } => gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lambda = self.lambda();
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda", format!("reorganization energy must be >= 0, got {lambda}")));
        }
        let gamma = self.gamma();
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::config("gamma", format!("damping must be > 0, got {gamma}")));
        }
        if let SpectralDensity::Brownian { omega0, .. } = *self {
            if !(omega0 > 0.0 && omega0.is_finite()) {
                return Err(Error::config("omega0", format!("oscillator frequency must be > 0, got {omega0}")));
            }
        }
        Ok(())
    }

    /// `J(ω)` at real frequency; odd in ω.
    pub fn eval(&self, omega: f64) -> f64 {
        self.eval_complex(C64::new(omega, 0.0)).re
    }

    /// Analytic continuation of `J` (a rational function) to complex ω.
    pub fn eval_complex(&self, w: C64) -> C64 {
        w * self.reduced(w)
    }

    /// `J(ω) / ω`, even in ω and regular at the origin.
    pub fn reduced(&self, w: C64) -> C64 {
        match *self {
            SpectralDensity::Drude { lambda, gamma } => 2.0 * lambda * gamma / (w * w + gamma * gamma),
            SpectralDensity::Brownian { lambda, gamma, omega0 } => {
                let w02 = omega0 * omega0;
                let d = w02 - w * w;
                2.0 * lambda * gamma * w02 / (d * d + gamma * gamma * w * w)
            }
        }
    }

    /// `dJ/dω` at ω = 0.
    pub fn slope_at_zero(&self) -> f64 {
        self.reduced(C64::new(0.0, 0.0)).re
    }

    /// Poles of `J` in the lower half plane.
    fn lower_poles(&self) -> Result<Vec<C64>> {
        match *self {
            SpectralDensity::Drude { gamma, .. } => Ok(vec![C64::new(0.0, -gamma)]),
            SpectralDensity::Brownian { gamma, omega0, .. } => {
                let zeta = C64::new(omega0 * omega0 - 0.25 * gamma * gamma, 0.0).sqrt();
                if zeta.norm() <= 1e-10 * omega0 {
                    return Err(Error::Bath(format!(
                        "critically damped Brownian mode (omega0 = {omega0}, gamma = {gamma}) has a double pole"
                    )));
                }
                let half = C64::new(0.0, -0.5 * gamma);
                Ok(vec![zeta + half, -zeta + half])
            }
        }
    }

    /// Residue of `J` at one of its simple poles.
    fn residue(&self, pole: C64) -> C64 {
        match *self {
            // J = 2λγω / ((ω - iγ)(ω + iγ)), only pole used is -iγ
            SpectralDensity::Drude { lambda, gamma } => {
                debug_assert!((pole - C64::new(0.0, -gamma)).norm() < 1e-12 * gamma);
                C64::new(lambda * gamma, 0.0)
            }
            SpectralDensity::Brownian { lambda, gamma, omega0 } => {
                let w02 = omega0 * omega0;
                // d/dω [(ω₀² - ω²)² + γ²ω²] = ω (-4(ω₀² - ω²) + 2γ²)
                2.0 * lambda * gamma * w02 / (-4.0 * (w02 - pole * pole) + 2.0 * gamma * gamma)
            }
        }
    }

    /// Smallest angle below the real axis at which `J` has a pole.
    pub(crate) fn min_pole_angle(&self) -> f64 {
        match self.lower_poles() {
            Ok(poles) => poles.iter().map(|p| (-p.im).atan2(p.re.abs())).fold(std::f64::consts::FRAC_PI_2, f64::min),
            Err(_) => std::f64::consts::FRAC_PI_4,
        }
    }

    /// Frequency scale for quadrature grids.
    pub(crate) fn scale(&self) -> f64 {
        match *self {
            SpectralDensity::Drude { gamma, .. } => gamma,
            SpectralDensity::Brownian { gamma, omega0, .. } => omega0.max(gamma),
        }
    }
}

/// A bath: spectral density, temperature and expansion order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub family: SpectralDensity,
    /// Inverse temperature βħω₀.
    pub beta: f64,
    /// Number of Bose-function poles kept.
    pub n_pade: usize,
    #[serde(default)]
    pub scheme: BoseScheme,
}

impl BathSpec {
    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", format!("inverse temperature must be > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// One exponential `(c' + i c'') e^{-γ t}` of a correlation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub c_real: C64,
    pub c_imag: C64,
    pub rate: C64,
}

impl ExpTerm {
    pub fn coefficient(&self) -> C64 {
        self.c_real + C64::i() * self.c_imag
    }
}

/// Exponential decomposition of one bath correlation function.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialSeries {
    pub terms: Vec<ExpTerm>,
    /// Strength of the `2Δ δ(t)` Markovian residual.
    pub delta: f64,
}

impl ExponentialSeries {
    /// `Σ_j (c'_j + i c''_j) e^{-γ_j t}` for `t >= 0` (the δ part excluded).
    pub fn eval(&self, t: f64) -> C64 {
        self.terms.iter().map(|term| term.coefficient() * (-term.rate * t).exp()).sum()
    }

    /// `(Σ c'_j e^{-γ_j t}, Σ c''_j e^{-γ_j t})`; both are real up to rounding
    /// because complex terms come in conjugate pairs.
    pub fn eval_parts(&self, t: f64) -> (C64, C64) {
        self.terms.iter().fold((C64::new(0.0, 0.0), C64::new(0.0, 0.0)), |(re, im), term| {
            let e = (-term.rate * t).exp();
            (re + term.c_real * e, im + term.c_imag * e)
        })
    }

    /// True when the bath is decoupled (every coefficient and Δ zero).
    pub fn is_zero(&self) -> bool {
        self.delta == 0.0 && self.terms.iter().all(|t| t.c_real == C64::new(0.0, 0.0) && t.c_imag == C64::new(0.0, 0.0))
    }

    /// Index of the term whose rate and coefficients are the complex
    /// conjugates of term `j` (itself for real-rate terms).
    pub fn conjugate_partner(&self, j: usize) -> usize {
        let target = self.terms[j];
        let close = |a: C64, b: C64| (a - b).norm() <= 1e-12 * (1.0 + a.norm().max(b.norm()));
        self.terms
            .iter()
            .position(|t| {
                close(t.rate, target.rate.conj())
                    && close(t.c_real, target.c_real.conj())
                    && close(t.c_imag, target.c_imag.conj())
            })
            .unwrap_or(j)
    }
}

/// Bose function `1 / (1 - e^{-βz})` at complex argument.
fn bose(beta: f64, z: C64) -> C64 {
    1.0 / (1.0 - (-beta * z).exp())
}

/// Residue theorem applied to `(1/π) ∫ dω J(ω) n(ω) e^{-iωt}` closed in the
/// lower half plane: `-2i Σ Res`.
fn close_contour(spec: &BathSpec) -> Result<Vec<(C64, C64)>> {
    let family = &spec.family;
    let mut raw = Vec::new();
    for pole in family.lower_poles()? {
        let coefficient = C64::new(0.0, -2.0) * family.residue(pole) * bose(spec.beta, pole);
        raw.push((coefficient, C64::i() * pole));
    }
    for p in bose_poles(spec.scheme, spec.beta, spec.n_pade)? {
        let w = C64::new(0.0, -p.nu);
        if family.lower_poles()?.iter().any(|q| (q - w).norm() < 1e-10 * p.nu) {
            return Err(Error::Bath(format!("Bose pole at -i{} coincides with a pole of J(ω)", p.nu)));
        }
        // Bose residues are real; J(-iν) is purely imaginary, so this is real.
        let coefficient = C64::new(0.0, -2.0) * family.eval_complex(w) * (p.eta / spec.beta);
        raw.push((C64::new(coefficient.re, 0.0), C64::new(p.nu, 0.0)));
    }
    Ok(raw)
}

/// Decomposes the correlation function of `spec` into exponentials plus a
/// Markovian δ residual.
///
/// Bath poles use the exact Bose function; the Bose poles use the chosen
/// expansion. `Δ` is the time integral of what the kept exponentials miss,
/// `∫₀^∞ Re C dt - Σ Re(c'_j / γ_j)`, where `∫₀^∞ Re C dt = J'(0) / β`.
pub fn expand(spec: &BathSpec) -> Result<ExponentialSeries> {
    spec.validate()?;
    let raw = close_contour(spec)?;
    let mut terms = Vec::with_capacity(raw.len());
    for &(coefficient, rate) in &raw {
        let partner = raw
            .iter()
            .position(|&(_, r)| (r - rate.conj()).norm() <= 1e-12 * rate.norm())
            .map(|k| raw[k].0)
            .unwrap_or(coefficient.conj());
        terms.push(ExpTerm {
            c_real: 0.5 * (coefficient + partner.conj()),
            c_imag: (coefficient - partner.conj()) / C64::new(0.0, 2.0),
            rate,
        });
    }
    // exact zeros for the real-rate terms
    for term in terms.iter_mut().filter(|t| t.rate.im == 0.0) {
        term.c_real.im = 0.0;
        term.c_imag.im = 0.0;
    }
    let kept: f64 = terms.iter().map(|t| (t.c_real / t.rate).re).sum();
    let delta = (spec.family.slope_at_zero() / spec.beta - kept).max(0.0);
    Ok(ExponentialSeries { terms, delta })
}

/// [`expand`] restricted to Drude baths.
pub fn expand_drude(spec: &BathSpec) -> Result<ExponentialSeries> {
    match spec.family {
        SpectralDensity::Drude { .. } => expand(spec),
        _ => Err(Error::config("family", "expected a Drude spectral density")),
    }
}

/// [`expand`] restricted to Brownian baths. Underdamped modes yield a
/// conjugate pair of rates `γ/2 ± iζ`; overdamped ones two real rates;
/// critical damping is rejected.
pub fn expand_brownian(spec: &BathSpec) -> Result<ExponentialSeries> {
    match spec.family {
        SpectralDensity::Brownian { .. } => expand(spec),
        _ => Err(Error::config("family", "expected a Brownian spectral density")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drude(lambda: f64, gamma: f64, n_pade: usize) -> BathSpec {
        BathSpec { family: SpectralDensity::Drude { lambda, gamma }, beta: 2.4, n_pade, scheme: BoseScheme::Pade }
    }

    fn brownian(lambda: f64, gamma: f64, omega0: f64, n_pade: usize) -> BathSpec {
        BathSpec {
            family: SpectralDensity::Brownian { lambda, gamma, omega0 },
            beta: 2.4,
            n_pade,
            scheme: BoseScheme::Pade,
        }
    }

    #[test]
    fn spectral_density_values() {
        let d = SpectralDensity::Drude { lambda: 0.2, gamma: 0.1 };
        assert_eq!(d.eval(0.0), 0.0);
        assert!((d.eval(0.1) - 0.2).abs() < 1e-15);
        assert!((d.eval(-0.37) + d.eval(0.37)).abs() < 1e-15);
        let b = SpectralDensity::Brownian { lambda: 2.5, gamma: 1.0, omega0: 1.0 };
        assert!((b.eval(1.0) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn drude_leading_imaginary_part() {
        for (lambda, gamma, beta) in [(0.2, 0.1, 2.4), (0.5, 1.3, 0.7), (0.01, 0.5, 10.0)] {
            let spec = BathSpec { beta, ..drude(lambda, gamma, 2) };
            let s = expand_drude(&spec).unwrap();
            assert_eq!(s.terms[0].rate, C64::new(gamma, 0.0));
            assert!((s.terms[0].c_imag.re + lambda * gamma).abs() < 1e-14);
            let cot = 1.0 / (0.5 * beta * gamma).tan();
            assert!((s.terms[0].c_real.re - lambda * gamma * cot).abs() < 1e-12);
            // Bose-pole terms carry no imaginary part
            assert!(s.terms[1..].iter().all(|t| t.c_imag == C64::new(0.0, 0.0)));
        }
    }

    #[test]
    fn zero_coupling_gives_zero_series() {
        for spec in [drude(0.0, 0.1, 2), brownian(0.0, 1.0, 1.0, 3)] {
            let s = expand(&spec).unwrap();
            assert!(s.is_zero());
            assert_eq!(s.delta, 0.0);
        }
    }

    #[test]
    fn brownian_rates() {
        let s = expand_brownian(&brownian(2.5, 1.0, 1.0, 3)).unwrap();
        assert_eq!(s.terms.len(), 5);
        let z = 0.75f64.sqrt();
        assert!((s.terms[0].rate - C64::new(0.5, z)).norm() < 1e-15);
        assert!((s.terms[1].rate - C64::new(0.5, -z)).norm() < 1e-15);
        assert_eq!(s.conjugate_partner(0), 1);
        assert_eq!(s.conjugate_partner(1), 0);
        assert_eq!(s.conjugate_partner(2), 2);
    }

    #[test]
    fn overdamped_brownian_has_real_rates() {
        let s = expand_brownian(&brownian(0.3, 3.0, 1.0, 1)).unwrap();
        let r = (2.25f64 - 1.0).sqrt();
        let mut rates: Vec<f64> = s.terms[..2].iter().map(|t| t.rate.re).collect();
        rates.sort_by(f64::total_cmp);
        assert!((rates[0] - (1.5 - r)).abs() < 1e-14 && (rates[1] - (1.5 + r)).abs() < 1e-14);
        assert!(s.terms.iter().all(|t| t.rate.im.abs() < 1e-14 && t.c_real.im == 0.0));
    }

    #[test]
    fn critical_damping_rejected() {
        assert!(matches!(expand_brownian(&brownian(1.0, 2.0, 1.0, 2)), Err(Error::Bath(_))));
    }

    #[test]
    fn wrong_family_rejected() {
        assert!(expand_brownian(&drude(0.1, 0.1, 1)).is_err());
        assert!(expand_drude(&brownian(0.1, 0.5, 1.0, 1)).is_err());
    }

    #[test]
    fn validation() {
        assert!(expand(&drude(-0.1, 0.1, 1)).is_err());
        assert!(expand(&drude(0.1, 0.0, 1)).is_err());
        assert!(expand(&BathSpec { beta: -1.0, ..drude(0.1, 0.1, 1) }).is_err());
        assert!(expand(&brownian(0.1, 0.1, 0.0, 1)).is_err());
    }

    #[test]
    fn reality_of_parts() {
        let s = expand(&brownian(2.5, 0.6, 0.6, 2)).unwrap();
        for t in [0.0, 0.3, 1.7, 12.0] {
            let (re, im) = s.eval_parts(t);
            assert!(re.im.abs() < 1e-13 && im.im.abs() < 1e-13);
            let total = s.eval(t);
            assert!((total - C64::new(re.re, im.re)).norm() < 1e-13);
        }
    }

    #[test]
    fn matsubara_residual_is_the_dropped_tail() {
        // For plain Matsubara terms the residual is Σ_{k>K} c_k/ν_k.
        let spec = BathSpec { scheme: BoseScheme::Matsubara, ..drude(0.2, 0.1, 3) };
        let s = expand(&spec).unwrap();
        let beta = spec.beta;
        let tail: f64 = (4..200_000)
            .map(|k| {
                let nu = 2.0 * std::f64::consts::PI * k as f64 / beta;
                4.0 * 0.2 * 0.1 * nu / (beta * (nu * nu - 0.01)) / nu
            })
            .sum::<f64>()
            // Σ_{k>N} 1/k² ≈ 1/N for the remainder, where c_k/ν_k → 4λγβ/(2πk)²
            + 4.0 * 0.2 * 0.1 * beta / (4.0 * std::f64::consts::PI.powi(2)) / 200_000.0;
        assert!((s.delta - tail).abs() < 1e-6 * tail, "{} vs {}", s.delta, tail);
    }

    #[test]
    fn pade_drude_residual_vanishes() {
        // [K-1/K] reproduces the zero-frequency sum rule of the Drude bath.
        for k in 1..=4 {
            let s = expand(&drude(0.2, 0.1, k)).unwrap();
            assert!(s.delta < 1e-8, "K={k}: {}", s.delta);
        }
    }
}
