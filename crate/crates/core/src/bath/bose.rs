//! Sum-over-poles expansions of the Bose function `1 / (1 - exp(-βω))`.
//!
//! Both schemes share the form
//!
//! ```text
//! 1/(1 - e^{-x}) ≈ 1/x + 1/2 + Σ_j 2 η_j x / (x² + ξ_j²),   x = βω
//! ```
//!
//! so the lower-half-plane poles sit at `ω = -i ν_j` with `ν_j = ξ_j / β`,
//! each with residue `η_j / β`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoseScheme {
    /// [K-1/K] Padé spectrum decomposition.
    #[default]
    Pade,
    /// Plain Matsubara frequencies `ξ_k = 2πk`, `η_k = 1`.
    Matsubara,
}

/// One pole of the expanded Bose function: `nu` is the decay rate it
/// contributes to the correlation function, `eta` its dimensionless weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BosePole {
    pub nu: f64,
    pub eta: f64,
}

/// Poles sorted by ascending `nu`.
pub fn bose_poles(scheme: BoseScheme, beta: f64, n_terms: usize) -> Result<Vec<BosePole>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::config("beta", format!("inverse temperature must be positive, got {beta}")));
    }
    let (xi, eta) = match scheme {
        BoseScheme::Matsubara => (
            (1..=n_terms).map(|k| 2.0 * std::f64::consts::PI * k as f64).collect(),
            vec![1.0; n_terms],
        ),
        BoseScheme::Pade => pade_xi_eta(n_terms)?,
    };
    Ok(xi.into_iter().zip(eta).map(|(x, e)| BosePole { nu: x / beta, eta: e }).collect())
}

/// Positive roots `2 / λ` of the tridiagonal matrix with off-diagonal
/// entries `1 / sqrt(b_m b_{m+1})`, `b_m = 2m + 1`, for `m` starting at `first`.
fn tridiagonal_roots(size: usize, first: usize) -> Result<Vec<f64>> {
    if size == 0 {
        return Ok(Vec::new());
    }
    let b = |m: usize| (2 * m + 1) as f64;
    let mut mat = DMatrix::<f64>::zeros(size, size);
    for k in 0..size - 1 {
        let v = 1.0 / (b(first + k) * b(first + k + 1)).sqrt();
        mat[(k, k + 1)] = v;
        mat[(k + 1, k)] = v;
    }
    let eig = SymmetricEigen::try_new(mat, 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen(format!("tridiagonal eigenproblem of size {size} did not converge")))?;
    let mut roots: Vec<f64> = eig.eigenvalues.iter().filter(|&&v| v > 1e-14).map(|&v| 2.0 / v).collect();
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

fn pade_xi_eta(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let xi = tridiagonal_roots(2 * n, 1)?;
    let zeta = tridiagonal_roots(2 * n - 1, 2)?;
    if xi.len() != n || zeta.len() != n - 1 {
        return Err(Error::Eigen(format!(
            "expected {n} poles and {} zeros, found {} and {}",
            n - 1,
            xi.len(),
            zeta.len()
        )));
    }
    let prefactor = 0.5 * n as f64 * (2 * n + 3) as f64;
    let eta = xi
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let x2 = x * x;
            let num: f64 = zeta.iter().map(|z| z * z - x2).product();
            let den: f64 = xi.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, y)| y * y - x2).product();
            prefactor * num / den
        })
        .collect::<Vec<_>>();
    if eta.iter().any(|e| !e.is_finite()) {
        return Err(Error::Eigen(format!("non-finite Padé residue for {n} terms")));
    }
    Ok((xi, eta))
}

/// Evaluates the expanded Bose function at real `x = βω` (for tests and
/// diagnostics).
pub fn bose_expansion_value(poles: &[BosePole], beta: f64, omega: f64) -> f64 {
    let x = beta * omega;
    1.0 / x
        + 0.5
        + poles
            .iter()
            .map(|p| {
                let xi = p.nu * beta;
                2.0 * p.eta * x / (x * x + xi * xi)
            })
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn matsubara_first_pole() {
        let p = bose_poles(BoseScheme::Matsubara, 2.4, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0].nu - 2.0 * PI / 2.4).abs() < 1e-15);
        assert_eq!(p[0].eta, 1.0);
    }

    #[test]
    fn zero_terms_is_empty() {
        assert!(bose_poles(BoseScheme::Pade, 1.0, 0).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_beta() {
        assert!(bose_poles(BoseScheme::Pade, 0.0, 2).is_err());
        assert!(bose_poles(BoseScheme::Pade, f64::NAN, 2).is_err());
    }

    // Bernoulli numbers B_2, B_4, ..., B_16.
    const BERNOULLI_EVEN: [f64; 8] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
    ];

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Independent check of the [K-1/K] approximant: its Taylor coefficients
    /// in x must reproduce those of 1/(1 - e^{-x}) - 1/x - 1/2, which are
    /// B_{2m+2} x^{2m+1} / (2m+2)!, through order x^{4K-1}.
    #[test]
    fn pade_matches_bernoulli_series() {
        for n in 1..=4 {
            let poles = bose_poles(BoseScheme::Pade, 1.0, n).unwrap();
            for m in 0..2 * n {
                let expected = BERNOULLI_EVEN[m] / factorial(2 * m + 2);
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let got: f64 = poles.iter().map(|p| sign * 2.0 * p.eta / p.nu.powi(2 * m as i32 + 2)).sum();
                assert!(
                    (got - expected).abs() <= 1e-10 * expected.abs(),
                    "K={n}, order x^{}: {got} vs {expected}",
                    2 * m + 1
                );
            }
        }
    }

    /// Frozen K = 2 values; computed independently (numpy eigvalsh of the
    /// same tridiagonal construction).
    #[test]
    fn pade_two_terms_frozen() {
        let beta = 2.4;
        let p = bose_poles(BoseScheme::Pade, beta, 2).unwrap();
        let xi = [6.305_939_144_224_808_5, 19.499_618_752_922_675];
        let eta = [1.032_824_181_024_155_6, 5.967_175_818_975_845];
        for j in 0..2 {
            assert!((p[j].nu * beta - xi[j]).abs() < 1e-11);
            assert!((p[j].eta - eta[j]).abs() < 1e-11);
        }
        assert!(p[0].nu < p[1].nu);
    }

    #[test]
    fn expansion_approaches_bose_function() {
        let beta = 2.4;
        let exact = |w: f64| 1.0 / (1.0 - (-beta * w).exp());
        for n in [2, 4, 8] {
            let poles = bose_poles(BoseScheme::Pade, beta, n).unwrap();
            for w in [0.1, 0.5, 1.0, 2.0] {
                let err = (bose_expansion_value(&poles, beta, w) - exact(w)).abs();
                assert!(err < 10f64.powi(-(n as i32)), "K={n} w={w} err={err}");
            }
        }
    }
}
