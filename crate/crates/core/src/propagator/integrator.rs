//! Fixed-step Lawson (integrating-factor) Runge–Kutta 4.
//!
//! The per-ADO scalar damping `D_n = Σ_j n_j γ_j` is integrated exactly by
//! `E(s) = exp(-D_n s)`; classical RK4 handles the rest, `N`:
//!
//! ```text
//! k1 = N(y)
//! k2 = N(E(h/2) (y + h/2 k1))
//! k3 = N(E(h/2) y + h/2 k2)
//! k4 = N(E(h) y + h E(h/2) k3)
//! y' = E(h) y + h/6 (E(h) k1 + 2 E(h/2) (k2 + k3) + k4)
//! ```

use super::{ADOState, HeomOperator, ZERO};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOptions {
    pub dt: f64,
    pub t_max: f64,
    /// Record every this many steps (step 0 included).
    pub record_every: usize,
    /// Abort when `|tr ρ - tr ρ(0)|` exceeds this.
    pub trace_tolerance: f64,
    /// Abort when any population drops below `-negativity_tolerance`.
    pub negativity_tolerance: f64,
    /// Worker threads for the right-hand side; results do not depend on it.
    pub threads: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            dt: 0.01,
            t_max: 1.0,
            record_every: 10,
            trace_tolerance: 1e-4,
            negativity_tolerance: 1e-3,
            threads: 1,
        }
    }
}

impl PropagationOptions {
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("run.dt", format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::config("run.t_max", format!("must be finite and >= 0, got {}", self.t_max)));
        }
        let steps = self.t_max / self.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return Err(Error::config(
                "run.t_max",
                format!("{} is not an integer number of steps of {}", self.t_max, self.dt),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::config("run.record_every", "must be at least 1"));
        }
        if self.threads == 0 {
            return Err(Error::config("threads", "must be at least 1"));
        }
        Ok(())
    }
}

/// Sampled observables of the physical density matrix.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `populations[s][i] = Re ρ_ii` at sample `s`.
    pub populations: Vec<Vec<f64>>,
    /// `|ρ_ij|` for `i < j`, row by row.
    pub coherences: Vec<Vec<f64>>,
    pub trace: Vec<C64>,
    /// Largest `|ρ_n - ρ_n̄†|` entry over every ADO.
    pub hermiticity: Vec<f64>,
    pub final_state: ADOState,
}

impl Trajectory {
    fn new(final_state: ADOState) -> Self {
        Trajectory {
            times: Vec::new(),
            populations: Vec::new(),
            coherences: Vec::new(),
            trace: Vec::new(),
            hermiticity: Vec::new(),
            final_state,
        }
    }

    fn record(&mut self, op: &HeomOperator, state: &ADOState) {
        let d = state.dim;
        self.times.push(state.time);
        self.populations.push(state.populations());
        let mut coh = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in i + 1..d {
                coh.push(state.ados[i * d + j].norm());
            }
        }
        self.coherences.push(coh);
        self.trace.push(state.trace());
        self.hermiticity.push(op.hermiticity_defect(&state.ados));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Population of `site` at every sample.
    pub fn population(&self, site: usize) -> Vec<f64> {
        self.populations.iter().map(|p| p[site]).collect()
    }

    pub fn max_trace_error(&self) -> f64 {
        self.trace.iter().map(|t| (t - 1.0).norm()).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        self.hermiticity.iter().copied().fold(0.0, f64::max)
    }
}

pub fn propagate(op: &HeomOperator, initial: ADOState, options: &PropagationOptions) -> Result<Trajectory> {
    propagate_observed(op, initial, options, |_, _| {})
}

/// [`propagate`], calling `observer(step, n_steps)` after every recorded sample.
pub fn propagate_observed(
    op: &HeomOperator,
    initial: ADOState,
    options: &PropagationOptions,
    observer: impl FnMut(usize, usize) + Send,
) -> Result<Trajectory> {
    match propagate_partial(op, initial, options, observer)? {
        (traj, None) => Ok(traj),
        (_, Some(abort)) => Err(abort),
    }
}

/// Like [`propagate_observed`], but a numerical abort still returns the
/// samples recorded up to that point together with the error. The outer
/// `Err` is reserved for invalid inputs.
pub fn propagate_partial(
    op: &HeomOperator,
    initial: ADOState,
    options: &PropagationOptions,
    mut observer: impl FnMut(usize, usize) + Send,
) -> Result<(Trajectory, Option<Error>)> {
    options.validate()?;
    if initial.dim != op.dim() || initial.ados.len() != op.state_len() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, operator expects {}",
            initial.ados.len(),
            op.state_len()
        )));
    }
    if options.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?;
        Ok(pool.install(|| run(op, initial, options, &mut observer)))
    } else {
        Ok(run(op, initial, options, &mut observer))
    }
}

fn run(
    op: &HeomOperator,
    initial: ADOState,
    options: &PropagationOptions,
    observer: &mut (dyn FnMut(usize, usize) + Send),
) -> (Trajectory, Option<Error>) {
    let h = options.dt;
    let d2 = op.dim() * op.dim();
    let n_steps = options.n_steps();
    let threads = options.threads;
    let half: Vec<C64> = op.damping().iter().map(|g| (-g * (0.5 * h)).exp()).collect();
    let full: Vec<C64> = op.damping().iter().map(|g| (-g * h).exp()).collect();
    let scale = |factors: &[C64], v: &mut [C64]| {
        for (chunk, &f) in v.chunks_mut(d2).zip(factors) {
            chunk.iter_mut().for_each(|x| *x *= f);
        }
    };

    let trace0 = initial.trace();
    let t0 = initial.time;
    let mut state = initial;
    let len = state.ados.len();
    let (mut k1, mut k2, mut k3, mut k4, mut u) =
        (vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]);
    let mut traj = Trajectory::new(state.clone());
    traj.record(op, &state);
    observer(0, n_steps);

    for step in 1..=n_steps {
        let y = &mut state.ados;
        op.apply(y, &mut k1, false, threads);
        for ((ui, yi), ki) in u.iter_mut().zip(y.iter()).zip(&k1) {
            *ui = yi + ki * (0.5 * h);
        }
        scale(&half, &mut u);
        op.apply(&u, &mut k2, false, threads);
        u.copy_from_slice(y);
        scale(&half, &mut u);
        for (ui, ki) in u.iter_mut().zip(&k2) {
            *ui += ki * (0.5 * h);
        }
        op.apply(&u, &mut k3, false, threads);
        // u = E(h) y + h E(h/2) k3
        for (pos, ((uc, yc), kc)) in u.chunks_mut(d2).zip(y.chunks(d2)).zip(k3.chunks(d2)).enumerate() {
            let (eh, ef) = (half[pos], full[pos]);
            for ((ui, yi), ki) in uc.iter_mut().zip(yc).zip(kc) {
                *ui = ef * yi + eh * ki * h;
            }
        }
        op.apply(&u, &mut k4, false, threads);
        for (pos, yc) in y.chunks_mut(d2).enumerate() {
            let (eh, ef) = (half[pos], full[pos]);
            let r = pos * d2..(pos + 1) * d2;
            for ((((yi, a), b), c), e) in yc.iter_mut().zip(&k1[r.clone()]).zip(&k2[r.clone()]).zip(&k3[r.clone()]).zip(&k4[r])
            {
                *yi = ef * *yi + (ef * a + eh * (b + c) * 2.0 + e) * (h / 6.0);
            }
        }
        state.time = t0 + step as f64 * h;
        if let Err(abort) = check(op, &state, trace0, options) {
            traj.final_state = state;
            return (traj, Some(abort));
        }
        if step % options.record_every == 0 {
            traj.record(op, &state);
            observer(step, n_steps);
        }
    }
    traj.final_state = state;
    (traj, None)
}

fn check(op: &HeomOperator, state: &ADOState, trace0: C64, options: &PropagationOptions) -> Result<()> {
    let d2 = state.dim * state.dim;
    if let Some(k) = state.ados.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        let pos = k / d2;
        return Err(Error::Numerical {
            time: state.time,
            message: format!("non-finite entry in ADO {pos} with index {:?}", op.hierarchy().index(pos)),
        });
    }
    let drift = (state.trace() - trace0).norm();
    if drift > options.trace_tolerance {
        return Err(Error::Numerical {
            time: state.time,
            message: format!("trace drifted by {drift:e} (limit {:e})", options.trace_tolerance),
        });
    }
    for (site, p) in state.populations().into_iter().enumerate() {
        if p < -options.negativity_tolerance {
            return Err(Error::Numerical {
                time: state.time,
                message: format!("population of site {site} is {p:e} (limit -{:e})", options.negativity_tolerance),
            });
        }
    }
    Ok(())
}
