//! Right-hand side of the hierarchical equations of motion and its time
//! integration.
//!
//! For every ADO `ρ_n` the generator is
//!
//! ```text
//! dρ_n/dt = -i[H, ρ_n] - Σ_j n_j γ_j ρ_n - Σ_k Δ_k [V_k, [V_k, ρ_n]]
//!           - i Σ_k [V_k, Σ_{j∈k} ρ_{n+e_j}]
//!           - i Σ_k [V_k, Σ_{j∈k} n_j c'_j ρ_{n-e_j}]
//!           +   Σ_k {V_k, Σ_{j∈k} n_j c''_j ρ_{n-e_j}}
//! ```
//!
//! The last two lines are `-Σ n_j Θ_j ρ_{n-e_j}` with `Θ = c' Φ - c'' Ψ`,
//! `Φ = i[V, ·]` and `Ψ = {V, ·}`. Writing `a = c' + i c''` and
//! `ã = c' - i c''` they combine into `-i n_j (a_j V ρ - ã_j ρ V)`, the
//! familiar left/right form. Rates may be complex (Brownian modes); then
//! `ρ_n† = ρ_{n̄}` where `n̄` swaps the indices of conjugate-pair fields.

mod diagnostics;
mod integrator;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use diagnostics::{equilibration_time, steady_diagnostics, write_csv, csv_header, SteadyDiagnostics};
pub use integrator::{propagate, propagate_observed, propagate_partial, PropagationOptions, Trajectory};

use crate::bath::ExponentialSeries;
use crate::hierarchy::{HierarchyIndexSet, TruncationPolicy, OUTSIDE};
use crate::model::{CouplingOperator, SystemHamiltonian};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Sparse `d² × d²` superoperator acting on row-major flattened matrices.
#[derive(Debug, Clone, Default)]
struct SparseSuperop {
    entries: Vec<(u32, u32, C64)>,
}

impl SparseSuperop {
    /// Records the action of `op` on every matrix unit `|p⟩⟨q|`.
    fn assemble(dim: usize, op: impl Fn(&DMatrix<C64>) -> DMatrix<C64>) -> Self {
        let mut entries = Vec::new();
        for p in 0..dim {
            for q in 0..dim {
                let mut unit = DMatrix::zeros(dim, dim);
                unit[(p, q)] = C64::new(1.0, 0.0);
                let image = op(&unit);
                for i in 0..dim {
                    for j in 0..dim {
                        let c = image[(i, j)];
                        if c != ZERO {
                            entries.push(((i * dim + j) as u32, (p * dim + q) as u32, c));
                        }
                    }
                }
            }
        }
        entries.sort_by_key(|&(o, i, _)| (o, i));
        SparseSuperop { entries }
    }

    #[inline]
    fn apply_add(&self, input: &[C64], out: &mut [C64]) {
        for &(o, i, c) in &self.entries {
            out[o as usize] += c * input[i as usize];
        }
    }
}

/// Field data of one active bath.
#[derive(Debug, Clone)]
struct ActiveBath {
    /// Index into the caller's bath list.
    source: usize,
    /// Nonzero `(row, col, value)` entries of `V_k`.
    v: Vec<(usize, usize, f64)>,
    fields: std::ops::Range<usize>,
}

/// Everything needed to evaluate the HEOM right-hand side.
#[derive(Debug, Clone)]
pub struct HeomOperator {
    dim: usize,
    hierarchy: HierarchyIndexSet,
    baths: Vec<ActiveBath>,
    c_real: Vec<C64>,
    c_imag: Vec<C64>,
    rates: Vec<C64>,
    /// `-i[H, ·] - Σ_k Δ_k [V_k, [V_k, ·]]`.
    local: SparseSuperop,
    /// Whether `H` is real, which enables the fixed-size kernels.
    h_real: bool,
    /// Off-diagonal `(row, col, value)` entries of a real `H`.
    h_offdiagonal: Vec<(usize, usize, f64)>,
    /// `-i(H_ii - H_jj) + D_ij` per element as interleaved `(re, im)`, with
    /// `D` the diagonal of the dissipator.
    diagonal_weight: Vec<f64>,
    /// Off-diagonal entries of `-Σ_k Δ_k [V_k, [V_k, ·]]`, which is real.
    dissipator: Vec<(u32, u32, f64)>,
    /// `Σ_j n_j γ_j` per ADO.
    damping: Vec<C64>,
    /// Position of `n̄` for every ADO.
    conjugate: Vec<usize>,
}

impl HeomOperator {
    /// Builds the operator. Baths whose series is identically zero are left
    /// out of the hierarchy; `policy` is given per entry of `baths` and is
    /// restricted accordingly.
    pub fn new(
        system: &SystemHamiltonian,
        baths: &[(CouplingOperator, ExponentialSeries)],
        policy: &TruncationPolicy,
        max_ados: usize,
    ) -> Result<Self> {
        let dim = system.dim();
        if let TruncationPolicy::PerBathDepth { caps, .. } = policy {
            if caps.len() != baths.len() {
                return Err(Error::config(
                    "truncation.caps",
                    format!("{} caps given for {} baths", caps.len(), baths.len()),
                ));
            }
        }
        let mut active = Vec::new();
        let (mut c_real, mut c_imag, mut rates) = (Vec::new(), Vec::new(), Vec::new());
        let mut partner = Vec::new();
        let mut deltas = Vec::new();
        for (k, (coupling, series)) in baths.iter().enumerate() {
            if coupling.matrix.nrows() != dim {
                return Err(Error::Dimension(format!(
                    "coupling operator {k} is {}x{}, system is {dim}x{dim}",
                    coupling.matrix.nrows(),
                    coupling.matrix.ncols()
                )));
            }
            if series.is_zero() {
                continue;
            }
            let start = c_real.len();
            for (j, term) in series.terms.iter().enumerate() {
                c_real.push(term.c_real);
                c_imag.push(term.c_imag);
                rates.push(term.rate);
                partner.push(start + series.conjugate_partner(j));
            }
            if series.delta > 0.0 {
                deltas.push((coupling.matrix.map(|x| C64::new(x, 0.0)), series.delta));
            }
            active.push(ActiveBath { source: k, v: coupling.nonzeros(), fields: start..c_real.len() });
        }

        let fields_per_bath: Vec<usize> = active.iter().map(|b| b.fields.len()).collect();
        let policy = match policy {
            TruncationPolicy::PerBathDepth { caps, global_cap } => TruncationPolicy::PerBathDepth {
                caps: active.iter().map(|b| caps[b.source]).collect(),
                global_cap: *global_cap,
            },
            p => p.clone(),
        };
        let hierarchy = HierarchyIndexSet::enumerate(&fields_per_bath, &policy, max_ados)?;

        let h = system.matrix.clone();
        let dissipate = |rho: &DMatrix<C64>| {
            let mut out = DMatrix::zeros(dim, dim);
            for (v, delta) in &deltas {
                let inner = v * rho - rho * v;
                out -= (v * &inner - &inner * v) * C64::new(*delta, 0.0);
            }
            out
        };
        let local = SparseSuperop::assemble(dim, |rho| (&h * rho - rho * &h) * C64::new(0.0, -1.0) + dissipate(rho));
        let h_real = h.iter().all(|z| z.im == 0.0);
        let mut diagonal_weight = vec![0.0; 2 * dim * dim];
        let mut dissipator = Vec::new();
        for (o, i, c) in SparseSuperop::assemble(dim, dissipate).entries {
            if o == i {
                diagonal_weight[2 * o as usize] = c.re;
            } else {
                dissipator.push((o, i, c.re));
            }
        }
        let mut h_offdiagonal = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                diagonal_weight[2 * (i * dim + j) + 1] = -(h[(i, i)].re - h[(j, j)].re);
                if i != j && h[(i, j)] != ZERO {
                    h_offdiagonal.push((i, j, h[(i, j)].re));
                }
            }
        }
        let damping = (0..hierarchy.len())
            .map(|pos| hierarchy.index(pos).iter().zip(&rates).map(|(&n, &g)| g * n as f64).sum())
            .collect();
        let conjugate = hierarchy.permuted_positions(&partner);
        Ok(HeomOperator {
            dim,
            hierarchy,
            baths: active,
            c_real,
            c_imag,
            rates,
            local,
            h_real,
            h_offdiagonal,
            diagonal_weight,
            dissipator,
            damping,
            conjugate,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hierarchy(&self) -> &HierarchyIndexSet {
        &self.hierarchy
    }

    pub fn n_ados(&self) -> usize {
        self.hierarchy.len()
    }

    /// Length of the flattened ADO stack.
    pub fn state_len(&self) -> usize {
        self.hierarchy.len() * self.dim * self.dim
    }

    /// Decay rates of all fields, in hierarchy order.
    pub fn rates(&self) -> &[C64] {
        &self.rates
    }

    pub(crate) fn damping(&self) -> &[C64] {
        &self.damping
    }

    /// Indices (into the caller's bath list) of the baths kept in the hierarchy.
    pub fn active_baths(&self) -> Vec<usize> {
        self.baths.iter().map(|b| b.source).collect()
    }

    /// `max_n max_ij |ρ_n[i,j] - conj(ρ_{n̄}[j,i])|`.
    pub fn hermiticity_defect(&self, state: &[C64]) -> f64 {
        let d = self.dim;
        let d2 = d * d;
        let mut worst = 0.0f64;
        for (pos, &bar) in self.conjugate.iter().enumerate() {
            let a = &state[pos * d2..(pos + 1) * d2];
            let b = &state[bar * d2..(bar + 1) * d2];
            for i in 0..d {
                for j in 0..d {
                    worst = worst.max((a[i * d + j] - b[j * d + i].conj()).norm());
                }
            }
        }
        worst
    }

    /// Full right-hand side, damping included.
    pub fn heom_rhs(&self, state: &ADOState) -> Result<Vec<C64>> {
        self.check_state(state)?;
        let mut out = vec![ZERO; self.state_len()];
        self.apply(&state.ados, &mut out, true, 1);
        Ok(out)
    }

    fn check_state(&self, state: &ADOState) -> Result<()> {
        if state.dim != self.dim || state.ados.len() != self.state_len() {
            return Err(Error::Dimension(format!(
                "state holds {} entries of a {}x{} system, operator expects {} ADOs of {}x{}",
                state.ados.len(),
                state.dim,
                state.dim,
                self.n_ados(),
                self.dim,
                self.dim
            )));
        }
        Ok(())
    }

    /// Writes the generator applied to `input` into `out`. Without
    /// `damping` the diagonal `Σ n_j γ_j` term is left to the integrator.
    /// The result does not depend on `threads`.
    pub(crate) fn apply(&self, input: &[C64], out: &mut [C64], damping: bool, threads: usize) {
        let kernel = self.kernel();
        let d2 = self.dim * self.dim;
        if threads <= 1 {
            let mut scratch = Scratch::new(d2);
            for (pos, chunk) in out.chunks_mut(d2).enumerate() {
                kernel(self, pos, input, chunk, damping, &mut scratch);
            }
        } else {
            out.par_chunks_mut(d2)
                .enumerate()
                .with_min_len(16)
                .for_each_init(|| Scratch::new(d2), |s, (pos, chunk)| kernel(self, pos, input, chunk, damping, s));
        }
    }

    /// Fixed-size kernel for small real Hamiltonians, generic otherwise.
    fn kernel(&self) -> Kernel {
        if !self.h_real {
            return Self::ado_derivative;
        }
        match self.dim {
            1 => Self::ado_derivative_fixed::<1, 2>,
            2 => Self::ado_derivative_fixed::<2, 4>,
            3 => Self::ado_derivative_fixed::<3, 6>,
            4 => Self::ado_derivative_fixed::<4, 8>,
            5 => Self::ado_derivative_fixed::<5, 10>,
            6 => Self::ado_derivative_fixed::<6, 12>,
            7 => Self::ado_derivative_fixed::<7, 14>,
            8 => Self::ado_derivative_fixed::<8, 16>,
            _ => Self::ado_derivative,
        }
    }

    /// Specialized kernel on interleaved `(re, im)` rows of width `W = 2D`,
    /// so that real coefficients act as plain vectorizable scalings.
    fn ado_derivative_fixed<const D: usize, const W: usize>(
        &self,
        pos: usize,
        input: &[C64],
        out: &mut [C64],
        damping: bool,
        _: &mut Scratch,
    ) {
        let x: &[f64] = bytemuck::cast_slice(input);
        let rows = x.as_chunks::<W>().0;
        let block = |p: usize| -> &[[f64; W]; D] { rows[p * D..(p + 1) * D].try_into().unwrap() };
        let rho = block(pos);

        // diagonal part: out_ij = w_ij ρ_ij
        let y: &mut [f64] = bytemuck::cast_slice_mut(out);
        let out: &mut [[f64; W]; D] = y.as_chunks_mut::<W>().0.try_into().unwrap();
        let weight: &[[f64; W]; D] = self.diagonal_weight.as_chunks::<W>().0.try_into().unwrap();
        for i in 0..D {
            for j in 0..D {
                let (wr, wi) = (weight[i][2 * j], weight[i][2 * j + 1]);
                let (re, im) = (rho[i][2 * j], rho[i][2 * j + 1]);
                out[i][2 * j] = wr * re - wi * im;
                out[i][2 * j + 1] = wr * im + wi * re;
            }
        }
        // off-diagonal H: acc = Hρ - ρH, out += -i acc
        let mut acc = [[0.0f64; W]; D];
        for &(a, b, v) in &self.h_offdiagonal {
            for w in 0..W {
                acc[a][w] += v * rho[b][w];
            }
            for i in 0..D {
                acc[i][2 * b] -= v * rho[i][2 * a];
                acc[i][2 * b + 1] -= v * rho[i][2 * a + 1];
            }
        }
        for i in 0..D {
            for j in 0..D {
                out[i][2 * j] += acc[i][2 * j + 1];
                out[i][2 * j + 1] -= acc[i][2 * j];
            }
        }
        for &(o, i, c) in &self.dissipator {
            let (o, i) = (o as usize, i as usize);
            out[o / D][2 * (o % D)] += c * rho[i / D][2 * (i % D)];
            out[o / D][2 * (o % D) + 1] += c * rho[i / D][2 * (i % D) + 1];
        }
        if damping {
            let g = self.damping[pos];
            for i in 0..D {
                for j in 0..D {
                    let (re, im) = (rho[i][2 * j], rho[i][2 * j + 1]);
                    out[i][2 * j] -= g.re * re - g.im * im;
                    out[i][2 * j + 1] -= g.re * im + g.im * re;
                }
            }
        }

        let n = self.hierarchy.index(pos);
        let raised = self.hierarchy.raised_row(pos);
        let lowered = self.hierarchy.lowered_row(pos);
        let mut comm = [[0.0f64; W]; D];
        let mut anti = [[0.0f64; W]; D];
        for bath in &self.baths {
            let mut comm_used = false;
            let mut anti_used = false;
            for f in bath.fields.clone() {
                let up = raised[f];
                if up != OUTSIDE {
                    let src = block(up as usize);
                    if !comm_used {
                        comm = [[0.0; W]; D];
                        comm_used = true;
                    }
                    for i in 0..D {
                        for w in 0..W {
                            comm[i][w] += src[i][w];
                        }
                    }
                }
                if n[f] > 0 {
                    let src = block(lowered[f] as usize);
                    let cr = self.c_real[f] * n[f] as f64;
                    let ci = self.c_imag[f] * n[f] as f64;
                    if !comm_used {
                        comm = [[0.0; W]; D];
                        comm_used = true;
                    }
                    if !anti_used {
                        anti = [[0.0; W]; D];
                        anti_used = true;
                    }
                    scaled_add_pair(&mut comm, &mut anti, src, cr, ci);
                }
            }
            // -i[V, comm] + {V, anti}
            for &(a, b, v) in &bath.v {
                if comm_used {
                    for j in 0..D {
                        out[a][2 * j] += v * comm[b][2 * j + 1];
                        out[a][2 * j + 1] -= v * comm[b][2 * j];
                        out[j][2 * b] -= v * comm[j][2 * a + 1];
                        out[j][2 * b + 1] += v * comm[j][2 * a];
                    }
                }
                if anti_used {
                    for j in 0..D {
                        out[a][2 * j] += v * anti[b][2 * j];
                        out[a][2 * j + 1] += v * anti[b][2 * j + 1];
                        out[j][2 * b] += v * anti[j][2 * a];
                        out[j][2 * b + 1] += v * anti[j][2 * a + 1];
                    }
                }
            }
        }
    }

    #[inline]
    fn ado_derivative(&self, pos: usize, input: &[C64], out: &mut [C64], damping: bool, s: &mut Scratch) {
        let d = self.dim;
        let d2 = d * d;
        let rho = &input[pos * d2..(pos + 1) * d2];
        out.fill(ZERO);
        self.local.apply_add(rho, out);
        if damping {
            let g = self.damping[pos];
            for (o, r) in out.iter_mut().zip(rho) {
                *o -= g * r;
            }
        }
        let n = self.hierarchy.index(pos);
        let raised = self.hierarchy.raised_row(pos);
        let lowered = self.hierarchy.lowered_row(pos);
        for bath in &self.baths {
            let mut comm_used = false;
            let mut anti_used = false;
            for f in bath.fields.clone() {
                let up = raised[f];
                if up != OUTSIDE {
                    let src = &input[up as usize * d2..(up as usize + 1) * d2];
                    if comm_used {
                        s.comm.iter_mut().zip(src).for_each(|(x, y)| *x += y);
                    } else {
                        s.comm.copy_from_slice(src);
                        comm_used = true;
                    }
                }
                if n[f] > 0 {
                    let down = lowered[f] as usize;
                    let src = &input[down * d2..(down + 1) * d2];
                    let cr = self.c_real[f] * n[f] as f64;
                    let ci = self.c_imag[f] * n[f] as f64;
                    if comm_used {
                        s.comm.iter_mut().zip(src).for_each(|(x, y)| *x += cr * y);
                    } else {
                        s.comm.iter_mut().zip(src).for_each(|(x, y)| *x = cr * y);
                        comm_used = true;
                    }
                    if anti_used {
                        s.anti.iter_mut().zip(src).for_each(|(x, y)| *x += ci * y);
                    } else {
                        s.anti.iter_mut().zip(src).for_each(|(x, y)| *x = ci * y);
                        anti_used = true;
                    }
                }
            }
            // -i[V, comm] + {V, anti}
            for &(a, b, v) in &bath.v {
                if comm_used {
                    let mi = C64::new(0.0, -v);
                    for j in 0..d {
                        out[a * d + j] += mi * s.comm[b * d + j];
                        out[j * d + b] -= mi * s.comm[j * d + a];
                    }
                }
                if anti_used {
                    for j in 0..d {
                        out[a * d + j] += v * s.anti[b * d + j];
                        out[j * d + b] += v * s.anti[j * d + a];
                    }
                }
            }
        }
    }
}

/// `comm += cr * src` and `anti += ci * src` on interleaved rows, with a
/// fast path for real coefficients.
#[inline(always)]
fn scaled_add_pair<const D: usize, const W: usize>(
    comm: &mut [[f64; W]; D],
    anti: &mut [[f64; W]; D],
    src: &[[f64; W]; D],
    cr: C64,
    ci: C64,
) {
    if cr.im == 0.0 && ci.im == 0.0 {
        let (a, b) = (cr.re, ci.re);
        for i in 0..D {
            for w in 0..W {
                let x = src[i][w];
                comm[i][w] += a * x;
                anti[i][w] += b * x;
            }
        }
    } else {
        for i in 0..D {
            for j in 0..D {
                let (re, im) = (src[i][2 * j], src[i][2 * j + 1]);
                comm[i][2 * j] += cr.re * re - cr.im * im;
                comm[i][2 * j + 1] += cr.re * im + cr.im * re;
                anti[i][2 * j] += ci.re * re - ci.im * im;
                anti[i][2 * j + 1] += ci.re * im + ci.im * re;
            }
        }
    }
}

type Kernel = fn(&HeomOperator, usize, &[C64], &mut [C64], bool, &mut Scratch);

struct Scratch {
    comm: Vec<C64>,
    anti: Vec<C64>,
}

impl Scratch {
    fn new(d2: usize) -> Self {
        Scratch { comm: vec![ZERO; d2], anti: vec![ZERO; d2] }
    }
}

/// The stack of auxiliary density operators, row-major `dim × dim` blocks
/// in hierarchy order. Block 0 is the physical reduced density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ADOState {
    pub ados: Vec<C64>,
    pub dim: usize,
    pub time: f64,
}

impl ADOState {
    /// Factorized initial condition: `ρ` in block 0, every other ADO zero.
    pub fn factorized(rho: &DMatrix<C64>, n_ados: usize) -> Self {
        let dim = rho.nrows();
        let mut ados = vec![ZERO; n_ados * dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                ados[i * dim + j] = rho[(i, j)];
            }
        }
        ADOState { ados, dim, time: 0.0 }
    }

    /// Block `pos` as a matrix.
    pub fn ado(&self, pos: usize) -> DMatrix<C64> {
        let d = self.dim;
        DMatrix::from_row_slice(d, d, &self.ados[pos * d * d..(pos + 1) * d * d])
    }

    pub fn rho(&self) -> DMatrix<C64> {
        self.ado(0)
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.ados[i * self.dim + i]).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.ados[i * self.dim + i].re).collect()
    }
}

/// Density matrix `|site⟩⟨site|`.
pub fn site_state(dim: usize, site: usize) -> DMatrix<C64> {
    let mut rho = DMatrix::zeros(dim, dim);
    rho[(site, site)] = C64::new(1.0, 0.0);
    rho
}
