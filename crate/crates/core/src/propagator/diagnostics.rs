use std::io::Write;

use super::Trajectory;
use crate::{Error, Result};

/// `t,P_e1,...,P_c6,trace_re,trace_im` for the given site labels.
pub fn csv_header(labels: &[String]) -> String {
    let mut header = String::from("t");
    for label in labels {
        header.push_str(",P_");
        header.push_str(label);
    }
    header.push_str(",trace_re,trace_im");
    header
}

/// Writes one row per sample. Numbers use the shortest representation that
/// round-trips exactly (exponent form for very small or large magnitudes),
/// so the output is deterministic and lossless.
pub fn write_csv(traj: &Trajectory, labels: &[String], mut out: impl Write) -> Result<()> {
    if let Some(p) = traj.populations.first() {
        if p.len() != labels.len() {
            return Err(Error::Dimension(format!("{} labels for {} sites", labels.len(), p.len())));
        }
    }
    writeln!(out, "{}", csv_header(labels))?;
    let mut line = String::new();
    for ((t, pops), tr) in traj.times.iter().zip(&traj.populations).zip(&traj.trace) {
        line.clear();
        line.push_str(&format!("{t:?}"));
        for p in pops {
            line.push_str(&format!(",{p:?}"));
        }
        line.push_str(&format!(",{:?},{:?}", tr.re, tr.im));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyDiagnostics {
    pub window: (f64, f64),
    /// Time-averaged population per site over the window.
    pub means: Vec<f64>,
    /// Least-squares slope per site over the window (per unit time).
    pub drifts: Vec<f64>,
}

fn window_range(traj: &Trajectory, window: (f64, f64)) -> Result<std::ops::Range<usize>> {
    let (start, end) = window;
    let (first, last) = match (traj.times.first(), traj.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::config("window", "trajectory is empty")),
    };
    let slack = 1e-9 * (1.0 + last.abs());
    if !(start <= end) || start < first - slack || end > last + slack {
        return Err(Error::config(
            "window",
            format!("[{start}, {end}] is not inside the trajectory span [{first}, {last}]"),
        ));
    }
    let lo = traj.times.partition_point(|&t| t < start - slack);
    let hi = traj.times.partition_point(|&t| t <= end + slack);
    if hi - lo < 2 {
        return Err(Error::config("window", format!("[{start}, {end}] holds fewer than two samples")));
    }
    Ok(lo..hi)
}

/// Trapezoidal time averages and linear drifts over `window = (start, end)`.
pub fn steady_diagnostics(traj: &Trajectory, window: (f64, f64)) -> Result<SteadyDiagnostics> {
    let range = window_range(traj, window)?;
    let times = &traj.times[range.clone()];
    let span = times[times.len() - 1] - times[0];
    let n_sites = traj.populations[0].len();
    let t_mean = times.iter().sum::<f64>() / times.len() as f64;
    let t_var: f64 = times.iter().map(|t| (t - t_mean).powi(2)).sum();
    let mut means = Vec::with_capacity(n_sites);
    let mut drifts = Vec::with_capacity(n_sites);
    for site in 0..n_sites {
        let values: Vec<f64> = traj.populations[range.clone()].iter().map(|p| p[site]).collect();
        let area: f64 = times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum();
        means.push(area / span);
        let v_mean = values.iter().sum::<f64>() / values.len() as f64;
        let cov: f64 = times.iter().zip(&values).map(|(t, v)| (t - t_mean) * (v - v_mean)).sum();
        drifts.push(cov / t_var);
    }
    Ok(SteadyDiagnostics { window: (times[0], times[times.len() - 1]), means, drifts })
}

/// First sample time at which `series` reaches 90 % of `plateau`, or `None`
/// if it never does.
pub fn equilibration_time(times: &[f64], series: &[f64], plateau: f64) -> Option<f64> {
    let target = 0.9 * plateau;
    times.iter().zip(series).find(|(_, &v)| if plateau >= 0.0 { v >= target } else { v <= target }).map(|(&t, _)| t)
}
