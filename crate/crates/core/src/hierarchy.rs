//! Multi-index bookkeeping for the auxiliary density operators (ADOs).
//!
//! Every exponential term of every bath is one *field*. An ADO is labelled by
//! a vector `n` of non-negative integers, one per field. The set of kept
//! vectors is downward closed (if `n` is kept, so is every `n - e_f`), stored
//! level by level (`ℓ(n) = Σ n_f`) and, within a level, in descending
//! lexicographic order. Position 0 is the zero vector, i.e. the physical
//! reduced density matrix.
//!
//! # Truncation boundary
//!
//! Raising neighbors `n + e_f` outside the kept set are dropped (treated as
//! zero). Dissipation carried by the discarded high-frequency part of each
//! correlation function is represented separately by the Markovian `Δ` term
//! of the equations of motion. See [`HierarchyIndexSet::terminator_action`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Marker for a neighbor outside the kept set.
pub const OUTSIDE: u32 = u32::MAX;

/// Default cap on the number of ADOs a hierarchy may hold.
pub const DEFAULT_MAX_ADOS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TruncationPolicy {
    /// Keep every `n` with `Σ n_f <= depth`.
    TotalDepth { depth: usize },
    /// Keep every `n` whose per-bath level `Σ_{f ∈ bath k} n_f` is at most
    /// `caps[k]`, and whose total level is at most `global_cap` if given.
    PerBathDepth {
        caps: Vec<usize>,
        #[serde(default)]
        global_cap: Option<usize>,
    },
}

impl TruncationPolicy {
    /// Per-bath caps of 5 for Drude and 8 for Brownian baths with a global
    /// level cap of 18.
    pub fn paper_faithful(is_brownian: &[bool]) -> Self {
        TruncationPolicy::PerBathDepth {
            caps: is_brownian.iter().map(|&b| if b { 8 } else { 5 }).collect(),
            global_cap: Some(18),
        }
    }

    fn max_level(&self) -> usize {
        match self {
            TruncationPolicy::TotalDepth { depth } => *depth,
            TruncationPolicy::PerBathDepth { caps, global_cap } => {
                let sum: usize = caps.iter().sum();
                global_cap.map_or(sum, |g| g.min(sum))
            }
        }
    }
}

/// Boundary closure of one ADO: the fields whose raising neighbors are
/// outside the hierarchy and therefore dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Terminator {
    pub dropped_fields: Vec<usize>,
}

impl Terminator {
    pub fn is_noop(&self) -> bool {
        self.dropped_fields.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct HierarchyIndexSet {
    n_fields: usize,
    /// Bath owning each field.
    field_bath: Vec<usize>,
    /// Flat `len × n_fields` storage of the index vectors.
    indices: Vec<u8>,
    levels: Vec<u32>,
    raise: Vec<u32>,
    lower: Vec<u32>,
    lookup: HashMap<Box<[u8]>, u32>,
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of index vectors the policy keeps, computed without enumerating.
pub fn projected_count(fields_per_bath: &[usize], policy: &TruncationPolicy) -> u128 {
    let n_fields: usize = fields_per_bath.iter().sum();
    match policy {
        TruncationPolicy::TotalDepth { depth } => binomial((n_fields + depth) as u128, *depth as u128),
        TruncationPolicy::PerBathDepth { caps, .. } => {
            let top = policy.max_level();
            // by_level[s] = number of vectors with total level s
            let mut by_level = vec![0u128; top + 1];
            by_level[0] = 1;
            for (&m, &cap) in fields_per_bath.iter().zip(caps) {
                if m == 0 {
                    continue;
                }
                let mut next = vec![0u128; top + 1];
                for (s, &count) in by_level.iter().enumerate().filter(|(_, &c)| c > 0) {
                    for add in 0..=cap.min(top - s) {
                        let ways = binomial((add + m - 1) as u128, add as u128);
                        next[s + add] = next[s + add].saturating_add(count.saturating_mul(ways));
                    }
                }
                by_level = next;
            }
            by_level.iter().fold(0u128, |a, &b| a.saturating_add(b))
        }
    }
}

impl HierarchyIndexSet {
    /// Enumerates all index vectors kept by `policy` for a hierarchy whose
    /// baths own `fields_per_bath[k]` fields each.
    pub fn enumerate(fields_per_bath: &[usize], policy: &TruncationPolicy, max_ados: usize) -> Result<Self> {
        let n_fields: usize = fields_per_bath.iter().sum();
        if let TruncationPolicy::PerBathDepth { caps, .. } = policy {
            if caps.len() != fields_per_bath.len() {
                return Err(Error::config(
                    "truncation.caps",
                    format!("{} caps given for {} baths", caps.len(), fields_per_bath.len()),
                ));
            }
        }
        let max_level = policy.max_level();
        if max_level > u8::MAX as usize {
            return Err(Error::config("truncation", format!("depth {max_level} exceeds {}", u8::MAX)));
        }
        let count = projected_count(fields_per_bath, policy);
        if count > max_ados as u128 {
            return Err(Error::HierarchyBudget { count, budget: max_ados });
        }

        if n_fields == 0 {
            // only the physical density matrix
            let lookup = HashMap::from([(Vec::new().into_boxed_slice(), 0u32)]);
            return Ok(HierarchyIndexSet {
                n_fields,
                field_bath: Vec::new(),
                indices: Vec::new(),
                levels: vec![0],
                raise: Vec::new(),
                lower: Vec::new(),
                lookup,
            });
        }
        let field_bath: Vec<usize> =
            fields_per_bath.iter().enumerate().flat_map(|(k, &m)| std::iter::repeat_n(k, m)).collect();
        let caps: Vec<usize> = match policy {
            TruncationPolicy::TotalDepth { depth } => vec![*depth; fields_per_bath.len()],
            TruncationPolicy::PerBathDepth { caps, .. } => caps.clone(),
        };

        let mut indices = Vec::with_capacity(count as usize * n_fields);
        let mut levels = Vec::with_capacity(count as usize);
        let mut current = vec![0u8; n_fields];
        let mut bath_load = vec![0usize; fields_per_bath.len()];
        for level in 0..=max_level {
            let before = levels.len();
            fill(0, level, &field_bath, &caps, &mut bath_load, &mut current, &mut indices);
            levels.resize(indices.len() / n_fields, level as u32);
            if levels.len() == before && level > 0 {
                break;
            }
        }

        let len = levels.len();
        let mut lookup = HashMap::with_capacity(len);
        for (pos, n) in indices.chunks_exact(n_fields).enumerate() {
            lookup.insert(n.to_vec().into_boxed_slice(), pos as u32);
        }
        let mut raise = vec![OUTSIDE; len * n_fields];
        let mut lower = vec![OUTSIDE; len * n_fields];
        let mut probe = vec![0u8; n_fields];
        for pos in 0..len {
            probe.copy_from_slice(&indices[pos * n_fields..(pos + 1) * n_fields]);
            for f in 0..n_fields {
                if probe[f] < u8::MAX {
                    probe[f] += 1;
                    if let Some(&m) = lookup.get(probe.as_slice()) {
                        raise[pos * n_fields + f] = m;
                    }
                    probe[f] -= 1;
                }
                if probe[f] > 0 {
                    probe[f] -= 1;
                    lower[pos * n_fields + f] = lookup[probe.as_slice()];
                    probe[f] += 1;
                }
            }
        }
        Ok(HierarchyIndexSet { n_fields, field_bath, indices, levels, raise, lower, lookup })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    pub fn field_bath(&self) -> &[usize] {
        &self.field_bath
    }

    pub fn index(&self, pos: usize) -> &[u8] {
        &self.indices[pos * self.n_fields..(pos + 1) * self.n_fields]
    }

    pub fn level(&self, pos: usize) -> usize {
        self.levels[pos] as usize
    }

    pub fn position(&self, n: &[u8]) -> Option<usize> {
        self.lookup.get(n).map(|&p| p as usize)
    }

    /// Position of `n + e_field`, or [`OUTSIDE`].
    #[inline]
    pub fn raised(&self, pos: usize, field: usize) -> u32 {
        self.raise[pos * self.n_fields + field]
    }

    /// Position of `n - e_field`, or [`OUTSIDE`] when `n_field = 0`.
    #[inline]
    pub fn lowered(&self, pos: usize, field: usize) -> u32 {
        self.lower[pos * self.n_fields + field]
    }

    /// Raising neighbors of every field of `pos`, `OUTSIDE` where dropped.
    #[inline]
    pub fn raised_row(&self, pos: usize) -> &[u32] {
        &self.raise[pos * self.n_fields..(pos + 1) * self.n_fields]
    }

    #[inline]
    pub fn lowered_row(&self, pos: usize) -> &[u32] {
        &self.lower[pos * self.n_fields..(pos + 1) * self.n_fields]
    }

    pub fn terminator_action(&self, pos: usize) -> Terminator {
        Terminator { dropped_fields: (0..self.n_fields).filter(|&f| self.raised(pos, f) == OUTSIDE).collect() }
    }

    /// Maps every position to the position of its index vector with fields
    /// permuted by `perm` (`m[f] = n[perm[f]]`). `perm` must preserve the
    /// kept set (true for swaps of fields inside one bath).
    pub fn permuted_positions(&self, perm: &[usize]) -> Vec<usize> {
        let mut probe = vec![0u8; self.n_fields];
        (0..self.len())
            .map(|pos| {
                let n = self.index(pos);
                for (f, p) in probe.iter_mut().enumerate() {
                    *p = n[perm[f]];
                }
                self.position(&probe).expect("permutation leaves the hierarchy")
            })
            .collect()
    }

    /// Bytes held by the index tables.
    pub fn memory_bytes(&self) -> usize {
        self.indices.len() + 4 * (self.levels.len() + self.raise.len() + self.lower.len())
            + self.lookup.len() * (self.n_fields + 8 + 16)
    }
}

/// Appends, in descending lexicographic order, every completion of
/// `current[pos..]` with total `remaining` that respects the per-bath caps.
fn fill(
    pos: usize,
    remaining: usize,
    field_bath: &[usize],
    caps: &[usize],
    bath_load: &mut [usize],
    current: &mut [u8],
    out: &mut Vec<u8>,
) {
    let n_fields = current.len();
    if pos == n_fields {
        if remaining == 0 {
            out.extend_from_slice(current);
        }
        return;
    }
    let bath = field_bath[pos];
    let room = caps[bath] - bath_load[bath];
    // capacity of later baths (fields are grouped by bath)
    let mut later = 0usize;
    let mut prev = bath;
    for &b in &field_bath[pos + 1..] {
        if b != prev {
            later += caps[b];
            prev = b;
        }
    }
    let continues = pos + 1 < n_fields && field_bath[pos + 1] == bath;
    let hi = remaining.min(room);
    let lo = if continues {
        if remaining > room + later {
            return;
        }
        0
    } else {
        remaining.saturating_sub(later)
    };
    if lo > hi {
        return;
    }
    for v in (lo..=hi).rev() {
        current[pos] = v as u8;
        bath_load[bath] += v;
        fill(pos + 1, remaining - v, field_bath, caps, bath_load, current, out);
        bath_load[bath] -= v;
    }
    current[pos] = 0;
}
