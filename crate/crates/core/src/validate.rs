//! Numerical checks against independent answers: closed-form dynamics,
//! quadrature references and a dense superoperator assembled from Kronecker
//! products. Each check yields a [`CheckReport`].

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bath::reference::{correlation_reference, dephasing_reference};
use crate::bath::{expand, BathSpec, BoseScheme, ExponentialSeries, SpectralDensity};
use crate::hierarchy::{TruncationPolicy, DEFAULT_MAX_ADOS};
use crate::model::{CouplingKind, CouplingOperator, SystemHamiltonian};
use crate::propagator::{propagate, site_state, ADOState, HeomOperator, PropagationOptions, Trajectory};
use crate::scenarios::{builtin_scenario, ModelName, Regime};
use crate::{Error, Result, C64};

/// Names accepted by [`run_suite`].
pub const SUITES: [&str; 6] = ["superop", "rabi", "dephasing", "correlation", "thermal", "order"];

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
    pub detail: String,
}

impl CheckReport {
    fn new(name: impl Into<String>, error: f64, tolerance: f64, started: Instant, detail: String) -> Self {
        CheckReport {
            name: name.into(),
            error,
            tolerance,
            passed: error < tolerance,
            seconds: started.elapsed().as_secs_f64(),
            detail,
        }
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: error {:.3e} (tolerance {:.1e}, {:.2} s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.error,
            self.tolerance,
            self.seconds,
            self.detail
        )
    }
}

pub fn run_suite(name: &str) -> Result<Vec<CheckReport>> {
    match name {
        "superop" => Ok(vec![superop()?]),
        "rabi" => Ok(vec![rabi()?]),
        "dephasing" => Ok(vec![dephasing()?]),
        "correlation" => correlation(),
        "thermal" => Ok(vec![thermal()?]),
        "order" => Ok(vec![integrator_order()?]),
        other => Err(Error::config("suite", format!("unknown suite {other:?}; expected one of {}", SUITES.join(", ")))),
    }
}

fn real_hamiltonian(rows: &[&[f64]]) -> SystemHamiltonian {
    let n = rows.len();
    SystemHamiltonian { matrix: DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0)) }
}

fn drude_spec(lambda: f64, gamma: f64, n_pade: usize) -> BathSpec {
    BathSpec { family: SpectralDensity::Drude { lambda, gamma }, beta: 2.4, n_pade, scheme: BoseScheme::Pade }
}

/// Every index vector of `n_fields` non-negative entries with sum at most
/// `depth`, by brute force.
fn brute_indices(n_fields: usize, depth: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    for _ in 0..n_fields {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<u8>| {
                let used: usize = prefix.iter().map(|&x| x as usize).sum();
                (0..=depth - used).map(move |k| {
                    let mut v = prefix.clone();
                    v.push(k as u8);
                    v
                })
            })
            .collect();
    }
    out
}

/// Dense generator of a single-bath hierarchy truncated at total `depth`,
/// built block by block from Kronecker products on row-major vectorised
/// matrices: `vec(A X) = (A ⊗ 1) vec X`, `vec(X B) = (1 ⊗ Bᵀ) vec X`.
pub fn dense_generator(
    h: &DMatrix<C64>,
    v: &DMatrix<f64>,
    series: &ExponentialSeries,
    depth: usize,
) -> (Vec<Vec<u8>>, DMatrix<C64>) {
    let d = h.nrows();
    let one = DMatrix::<C64>::identity(d, d);
    let v = v.map(|x| C64::new(x, 0.0));
    let left = |a: &DMatrix<C64>| a.kronecker(&one);
    let right = |a: &DMatrix<C64>| one.kronecker(&a.transpose());
    let i = C64::i();
    let comm_v = left(&v) - right(&v);
    let anti_v = left(&v) + right(&v);
    let local = (left(h) - right(h)) * (-i) - &comm_v * &comm_v * C64::new(series.delta, 0.0);
    let indices = brute_indices(series.terms.len(), depth);
    let d2 = d * d;
    let mut m = DMatrix::<C64>::zeros(indices.len() * d2, indices.len() * d2);
    let find = |n: &[u8]| indices.iter().position(|x| x.as_slice() == n);
    for (row, n) in indices.iter().enumerate() {
        let damping: C64 = n.iter().zip(&series.terms).map(|(&k, t)| t.rate * k as f64).sum();
        let block = &local - DMatrix::<C64>::identity(d2, d2) * damping;
        m.view_mut((row * d2, row * d2), (d2, d2)).copy_from(&block);
        for (j, term) in series.terms.iter().enumerate() {
            let mut up = n.clone();
            up[j] += 1;
            if let Some(col) = find(&up) {
                let block = &comm_v * (-i);
                let mut target = m.view_mut((row * d2, col * d2), (d2, d2));
                target += block;
            }
            if n[j] > 0 {
                let mut down = n.clone();
                down[j] -= 1;
                let col = find(&down).expect("lowered index present");
                // -n Θ with Θ = c' i[V,·] - c'' {V,·}
                let theta = &comm_v * (i * term.c_real) - &anti_v * term.c_imag;
                let mut target = m.view_mut((row * d2, col * d2), (d2, d2));
                target -= theta * C64::new(n[j] as f64, 0.0);
            }
        }
    }
    (indices, m)
}

/// Largest entry of `|L_heom - L_dense|` over every column.
pub fn superop_error(h: &SystemHamiltonian, coupling: CouplingKind, spec: &BathSpec, depth: usize) -> Result<f64> {
    let d = h.dim();
    let series = expand(spec)?;
    let v = CouplingOperator::new(coupling, d)?;
    let (indices, dense) = dense_generator(&h.matrix, &v.matrix, &series, depth);
    let op = HeomOperator::new(h, &[(v, series)], &TruncationPolicy::TotalDepth { depth }, DEFAULT_MAX_ADOS)?;
    if op.n_ados() != indices.len() {
        return Err(Error::Dimension(format!("{} ADOs, oracle has {}", op.n_ados(), indices.len())));
    }
    let d2 = d * d;
    // operator position of every oracle index
    let place: Vec<usize> = indices
        .iter()
        .map(|n| op.hierarchy().position(n).ok_or_else(|| Error::Dimension(format!("index {n:?} missing"))))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for (col_ado, &col_pos) in place.iter().enumerate() {
        for e in 0..d2 {
            let mut state = ADOState { ados: vec![C64::new(0.0, 0.0); op.state_len()], dim: d, time: 0.0 };
            state.ados[col_pos * d2 + e] = C64::new(1.0, 0.0);
            let out = op.heom_rhs(&state)?;
            for (row_ado, &row_pos) in place.iter().enumerate() {
                for k in 0..d2 {
                    let diff = out[row_pos * d2 + k] - dense[(row_ado * d2 + k, col_ado * d2 + e)];
                    worst = worst.max(diff.norm());
                }
            }
        }
    }
    Ok(worst)
}

/// Two levels, one Drude bath with two exponentials, depth 2 (six ADOs).
pub fn superop() -> Result<CheckReport> {
    let started = Instant::now();
    let h = real_hamiltonian(&[&[0.3, 0.5], &[0.5, -0.2]]);
    let error = superop_error(&h, CouplingKind::Diagonal { site: 1 }, &drude_spec(0.2, 0.1, 1), 2)?;
    Ok(CheckReport::new("superop", error, 1e-12, started, "2 levels, Drude K=1, depth 2".into()))
}

/// Two degenerate sites coupled by `J = 0.5`, no bath: `P₂ = sin²(Jt)`.
pub fn rabi() -> Result<CheckReport> {
    let started = Instant::now();
    let j = 0.5;
    let h = real_hamiltonian(&[&[0.0, j], &[j, 0.0]]);
    let op = HeomOperator::new(&h, &[], &TruncationPolicy::TotalDepth { depth: 0 }, DEFAULT_MAX_ADOS)?;
    // ten periods of P₂, each π / J long
    let steps = 6000;
    let t_max = 10.0 * std::f64::consts::PI / j;
    let opts = PropagationOptions { dt: t_max / steps as f64, t_max, record_every: 1, ..Default::default() };
    let traj = propagate(&op, ADOState::factorized(&site_state(2, 0), 1), &opts)?;
    let error = traj
        .times
        .iter()
        .zip(&traj.populations)
        .map(|(t, p)| (p[1] - (j * t).sin().powi(2)).abs())
        .fold(0.0, f64::max);
    Ok(CheckReport::new("rabi", error, 1e-6, started, format!("{} steps over t = 20π", steps)))
}

/// Parameters of the pure-dephasing problem: two levels, bath on level 1.
pub struct DephasingSetup {
    pub bath: BathSpec,
    pub depth: usize,
    pub operator: HeomOperator,
}

pub fn dephasing_setup() -> Result<DephasingSetup> {
    let bath = drude_spec(0.2, 0.1, 2);
    let depth = 12;
    let h = real_hamiltonian(&[&[0.2, 0.0], &[0.0, 0.0]]);
    let v = CouplingOperator::new(CouplingKind::Diagonal { site: 1 }, 2)?;
    let operator =
        HeomOperator::new(&h, &[(v, expand(&bath)?)], &TruncationPolicy::TotalDepth { depth }, DEFAULT_MAX_ADOS)?;
    Ok(DephasingSetup { bath, depth, operator })
}

/// Runs the dephasing problem from `|+⟩⟨+|` and returns `|ρ₁₂|` per sample.
pub fn dephasing_coherence(setup: &DephasingSetup, dt: f64, t_max: f64, record_every: usize) -> Result<Trajectory> {
    let plus = DMatrix::from_element(2, 2, C64::new(0.5, 0.0));
    let initial = ADOState::factorized(&plus, setup.operator.n_ados());
    let opts = PropagationOptions { dt, t_max, record_every, ..Default::default() };
    propagate(&setup.operator, initial, &opts)
}

/// `|ρ₁₂(t)|` against `½ exp(-Γ(t))` from quadrature, `t ∈ [0, 100]`.
pub fn dephasing() -> Result<CheckReport> {
    let started = Instant::now();
    let setup = dephasing_setup()?;
    let traj = dephasing_coherence(&setup, 0.01, 100.0, 50)?;
    let mut error = 0.0f64;
    for (t, coh) in traj.times.iter().zip(&traj.coherences) {
        let exact = 0.5 * (-dephasing_reference(&setup.bath, *t)?).exp();
        error = error.max((coh[0] - exact).abs());
    }
    Ok(CheckReport::new(
        "dephasing",
        error,
        1e-3,
        started,
        format!("Drude λ=0.2 γ=0.1 β=2.4 K=2, depth {}, {} samples", setup.depth, traj.len()),
    ))
}

/// Time grid of the reconstruction check: `t = 0.1, 0.2, …, 50`. The Drude
/// correlation function is log-singular at `t = 0`, so the origin is left out.
pub fn reconstruction_grid() -> Vec<f64> {
    (1..=500).map(|k| 0.1 * k as f64).collect()
}

/// Relative L² distance between the exponential series and the quadrature
/// correlation function on `grid`.
pub fn reconstruction_error(spec: &BathSpec, grid: &[f64]) -> Result<f64> {
    let series = expand(spec)?;
    let reference = correlation_reference(spec, grid)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (&t, r) in grid.iter().zip(&reference) {
        num += (series.eval(t) - r).norm_sqr();
        den += r.norm_sqr();
    }
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((num / den).sqrt())
}

/// Every distinct bath of the shipped presets (regime d carries the largest
/// off-diagonal coupling; regime a's is zero and skipped).
pub fn correlation() -> Result<Vec<CheckReport>> {
    let grid = reconstruction_grid();
    let mut seen: Vec<BathSpec> = Vec::new();
    let mut out = Vec::new();
    for model in ModelName::ALL {
        for regime in Regime::ALL {
            let config = builtin_scenario(model, regime);
            for k in 0..config.baths.len() {
                let spec = config.bath_spec(k);
                if spec.family.lambda() == 0.0 || seen.contains(&spec) {
                    continue;
                }
                seen.push(spec);
                let started = Instant::now();
                let error = reconstruction_error(&spec, &grid)?;
                out.push(CheckReport::new(
                    format!("correlation {model} bath {}", k + 1),
                    error,
                    1e-2,
                    started,
                    format!("{:?} K={}", spec.family, spec.n_pade),
                ));
            }
        }
    }
    Ok(out)
}

/// Weak-coupling relaxation of a two-level system with gap 0.5 through an
/// off-diagonal Drude bath: `P₂/P₁` against `e^{-βΔε}` within 10 %.
pub fn thermal() -> Result<CheckReport> {
    let started = Instant::now();
    let gap = 0.5;
    let spec = drude_spec(0.01, 0.1, 1);
    let h = real_hamiltonian(&[&[gap, 0.0], &[0.0, 0.0]]);
    let v = CouplingOperator::new(CouplingKind::OffDiagonal { a: 1, b: 2 }, 2)?;
    let op = HeomOperator::new(&h, &[(v, expand(&spec)?)], &TruncationPolicy::TotalDepth { depth: 4 }, DEFAULT_MAX_ADOS)?;
    let opts = PropagationOptions { dt: 0.05, t_max: 3000.0, record_every: 100, ..Default::default() };
    let traj = propagate(&op, ADOState::factorized(&site_state(2, 0), op.n_ados()), &opts)?;
    let last = traj.populations.last().expect("trajectory has samples");
    let ratio = last[0] / last[1];
    let boltzmann = (-spec.beta * gap).exp();
    let error = (ratio / boltzmann - 1.0).abs();
    Ok(CheckReport::new(
        "thermal",
        error,
        0.1,
        started,
        format!("ratio {ratio:.5} vs Boltzmann {boltzmann:.5} at t = {}", opts.t_max),
    ))
}

/// Largest `|a - b|` of the coherence at the sample times `a` and `b` share.
fn coherence_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    let stride = (b.len() - 1) / (a.len() - 1);
    a.coherences
        .iter()
        .enumerate()
        .map(|(s, c)| (c[0] - b.coherences[s * stride][0]).abs())
        .fold(0.0, f64::max)
}

/// Successive errors of the dephasing run at `dt`, `dt/2` and `dt/4`.
/// Returns `(e(dt), e(dt/2))` with `e(h) = max |y_h - y_{h/2}|`.
pub fn order_errors(dt: f64, t_max: f64) -> Result<(f64, f64)> {
    let setup = dephasing_setup()?;
    let samples = 20;
    let steps = (t_max / dt).round() as usize;
    if !steps.is_multiple_of(samples) {
        return Err(Error::config("dt", format!("{steps} steps do not split into {samples} equal samples")));
    }
    let runs: Vec<Trajectory> = [1usize, 2, 4]
        .iter()
        .map(|&k| {
            let n = steps * k;
            dephasing_coherence(&setup, t_max / n as f64, t_max, n / samples)
        })
        .collect::<Result<_>>()?;
    Ok((coherence_gap(&runs[0], &runs[1]), coherence_gap(&runs[1], &runs[2])))
}

/// Halving the step should cut the error by 16 for a fourth-order scheme.
/// The reported error is the distance of the observed ratio from the
/// window `[12, 20]` (zero inside it).
pub fn integrator_order() -> Result<CheckReport> {
    let started = Instant::now();
    let (coarse, fine) = order_errors(0.05, 10.0)?;
    let ratio = coarse / fine;
    let outside = if ratio < 12.0 {
        12.0 - ratio
    } else if ratio > 20.0 {
        ratio - 20.0
    } else {
        0.0
    };
    let mut report = CheckReport::new(
        "order",
        outside,
        f64::MIN_POSITIVE,
        started,
        format!("error ratio {ratio:.3} (e(h) = {coarse:.3e}, e(h/2) = {fine:.3e}, h = 0.05)"),
    );
    report.passed = outside == 0.0;
    Ok(report)
}
