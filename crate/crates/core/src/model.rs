//! Site-basis model of the exciton/electron transfer system.
//!
//! The single-excitation basis is ordered `|e_1>, ..., |e_{n_xt}>, |c_{n_xt+1}>,
//! ..., |c_N>`: exciton (XT) sites first, then charge-transfer (ET) sites, both
//! ascending. Site labels in specifications are 1-based; matrix indices are
//! 0-based.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// One XT-XT electronic coupling `J_ij` between 1-based XT sites `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteCoupling {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Declarative description of the system Hamiltonian. All energies are in
/// units of ω₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub n_xt: usize,
    pub n_total: usize,
    pub eps_xt: Vec<f64>,
    pub eps_et: Vec<f64>,
    pub j_couplings: Vec<SiteCoupling>,
    pub t_e: f64,
}

impl SystemSpec {
    pub fn n_et(&self) -> usize {
        self.n_total.saturating_sub(self.n_xt)
    }

    /// Column label of a 0-based site: `e1`, ..., `c6`.
    pub fn site_label(&self, site: usize) -> String {
        if site < self.n_xt {
            format!("e{}", site + 1)
        } else {
            format!("c{}", site + 1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_xt < 1 || self.n_xt >= self.n_total {
            return Err(Error::config(
                "n_xt",
                format!("need 1 <= n_xt < n_total, got n_xt = {}, n_total = {}", self.n_xt, self.n_total),
            ));
        }
        if self.eps_xt.len() != self.n_xt {
            return Err(Error::config(
                "eps_xt",
                format!("expected {} entries (n_xt), got {}", self.n_xt, self.eps_xt.len()),
            ));
        }
        if self.eps_et.len() != self.n_et() {
            return Err(Error::config(
                "eps_et",
                format!("expected {} entries (n_total - n_xt), got {}", self.n_et(), self.eps_et.len()),
            ));
        }
        for (name, values) in [("eps_xt", &self.eps_xt), ("eps_et", &self.eps_et)] {
            if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::config(format!("{name}[{pos}]"), "energy must be finite"));
            }
        }
        for (pos, c) in self.j_couplings.iter().enumerate() {
            let path = format!("j_couplings[{pos}]");
            if c.i == c.j || c.i < 1 || c.j < 1 || c.i > self.n_xt || c.j > self.n_xt {
                return Err(Error::config(
                    path,
                    format!("pair ({}, {}) must name two distinct XT sites in 1..={}", c.i, c.j, self.n_xt),
                ));
            }
            if !c.value.is_finite() {
                return Err(Error::config(path, "coupling must be finite"));
            }
        }
        if !self.t_e.is_finite() {
            return Err(Error::config("t_e", "coupling must be finite"));
        }
        Ok(())
    }
}

/// Dense system Hamiltonian in units of ω₀.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemHamiltonian {
    pub matrix: DMatrix<C64>,
}

impl SystemHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Builds the XT/ET tight-binding Hamiltonian.
///
/// Diagonal: XT then ET site energies. Off-diagonal: the listed XT couplings,
/// `t_e` between the last XT site and the first ET site, and `t_e` between
/// consecutive ET sites.
pub fn build_hamiltonian(spec: &SystemSpec) -> Result<SystemHamiltonian> {
    spec.validate()?;
    let n = spec.n_total;
    let mut h = DMatrix::<C64>::zeros(n, n);
    for (k, &e) in spec.eps_xt.iter().chain(spec.eps_et.iter()).enumerate() {
        h[(k, k)] = C64::new(e, 0.0);
    }
    let mut couple = |a: usize, b: usize, v: f64| {
        h[(a, b)] += C64::new(v, 0.0);
        h[(b, a)] = h[(a, b)];
    };
    for c in &spec.j_couplings {
        couple(c.i - 1, c.j - 1, c.value);
    }
    for a in spec.n_xt - 1..n - 1 {
        couple(a, a + 1, spec.t_e);
    }
    Ok(SystemHamiltonian { matrix: h })
}

/// Which system operator a bath couples to. Sites are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingKind {
    /// `|k><k|`
    Diagonal { site: usize },
    /// `|a><b| + |b><a|`
    OffDiagonal { a: usize, b: usize },
}

impl CouplingKind {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            CouplingKind::Diagonal { site } => {
                if site < 1 || site > dim {
                    return Err(Error::config("site", format!("site {site} outside 1..={dim}")));
                }
            }
            CouplingKind::OffDiagonal { a, b } => {
                for (name, s) in [("a", a), ("b", b)] {
                    if s < 1 || s > dim {
                        return Err(Error::config(name, format!("site {s} outside 1..={dim}")));
                    }
                }
                if a == b {
                    return Err(Error::config("b", "off-diagonal coupling needs two distinct sites"));
                }
            }
        }
        Ok(())
    }
}

/// Real-symmetric system part `V_k` of the k-th system-bath interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOperator {
    pub kind: CouplingKind,
    pub matrix: DMatrix<f64>,
}

impl CouplingOperator {
    pub fn new(kind: CouplingKind, dim: usize) -> Result<Self> {
        kind.validate(dim)?;
        let mut matrix = DMatrix::zeros(dim, dim);
        match kind {
            CouplingKind::Diagonal { site } => matrix[(site - 1, site - 1)] = 1.0,
            CouplingKind::OffDiagonal { a, b } => {
                matrix[(a - 1, b - 1)] = 1.0;
                matrix[(b - 1, a - 1)] = 1.0;
            }
        }
        Ok(CouplingOperator { kind, matrix })
    }

    /// Nonzero entries `(row, col, value)` in row-major order.
    pub fn nonzeros(&self) -> Vec<(usize, usize, f64)> {
        let n = self.matrix.nrows();
        let mut out = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = self.matrix[(r, c)];
                if v != 0.0 {
                    out.push((r, c, v));
                }
            }
        }
        out
    }
}

/// One coupling operator per bath assignment, in order.
pub fn build_coupling_operators(spec: &SystemSpec, assignments: &[CouplingKind]) -> Result<Vec<CouplingOperator>> {
    spec.validate()?;
    assignments
        .iter()
        .enumerate()
        .map(|(k, kind)| {
            CouplingOperator::new(*kind, spec.n_total).map_err(|e| e.prefixed(&format!("baths[{k}].coupling")))
        })
        .collect()
}

impl Error {
    /// Prepends `prefix.` to the field path of a configuration error.
    pub fn prefixed(self, prefix: &str) -> Error {
        match self {
            Error::Config { path, message } => Error::Config { path: format!("{prefix}.{path}"), message },
            other => other,
        }
    }
}
