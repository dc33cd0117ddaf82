//! Ising models, spin states and energy evaluation.
//!
//! Energies follow the convention
//!
//! ```text
//! E(S) = -sum_{i<j} J_ij S_i S_j - sum_i h_i S_i
//! ```
//!
//! so a positive coupling is ferromagnetic. Couplings are kept both as a
//! canonical sorted edge list (for I/O and deterministic iteration) and as
//! per-spin adjacency lists so that single-flip updates cost O(degree).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A configuration of ±1 spins.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinState(Vec<i8>);

impl SpinState {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(pos) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::input(format!(
                "spin {pos} has value {} (expected -1 or +1)",
                spins[pos]
            )));
        }
        Ok(SpinState(spins))
    }

    pub fn all_up(n: usize) -> Self {
        SpinState(vec![1; n])
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        SpinState((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    /// Decodes a state from its binary encoding: bit `i` set means spin `i`
    /// is +1, spin 0 is the least significant bit.
    pub fn from_code(code: u64, n: usize) -> Self {
        assert!(n <= 64, "binary encoding holds at most 64 spins");
        SpinState((0..n).map(|i| if code >> i & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn code(&self) -> u64 {
        assert!(self.0.len() <= 64, "binary encoding holds at most 64 spins");
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0u64, |acc, (i, _)| acc | 1 << i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    /// Global spin flip.
    pub fn inverted(&self) -> Self {
        SpinState(self.0.iter().map(|&s| -s).collect())
    }
}

/// Run-length encoding used in trace files, e.g. `+3-2+1` for `+++--+`.
impl fmt::Display for SpinState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut iter = self.0.iter().peekable();
        while let Some(&s) = iter.next() {
            let mut run = 1;
            while iter.peek() == Some(&&s) {
                iter.next();
                run += 1;
            }
            write!(f, "{}{}", if s > 0 { '+' } else { '-' }, run)?;
        }
        Ok(())
    }
}

impl FromStr for SpinState {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut spins = Vec::new();
        let mut chars = text.char_indices().peekable();
        while let Some((pos, c)) = chars.next() {
            let sign = match c {
                '+' => 1,
                '-' => -1,
                _ => return Err(Error::input(format!("bad run marker {c:?} at {pos}"))),
            };
            let start = pos + 1;
            let mut end = start;
            while let Some(&(p, d)) = chars.peek() {
                if !d.is_ascii_digit() {
                    break;
                }
                end = p + 1;
                chars.next();
            }
            let run: usize = text[start..end]
                .parse()
                .map_err(|_| Error::input(format!("missing run length at {pos}")))?;
            spins.extend(std::iter::repeat_n(sign, run));
        }
        Ok(SpinState(spins))
    }
}

impl Serialize for SpinState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpinState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// On-disk layout of a model: `{ "n", "couplings": [[i, j, J_ij], ...], "fields" }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    n: usize,
    couplings: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
}

/// Sparse symmetric Ising model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct IsingModel {
    n: usize,
    /// Canonical `(i, j, J_ij)` with `i < j`, sorted by `(i, j)`.
    couplings: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

impl IsingModel {
    /// Builds a model, orienting each pair as `i < j`. Self-loops,
    /// duplicate pairs and out-of-range indices are rejected.
    pub fn new(n: usize, couplings: Vec<(usize, usize, f64)>, fields: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("model must have at least one spin"));
        }
        if fields.len() != n {
            return Err(Error::input(format!(
                "expected {n} fields, got {}",
                fields.len()
            )));
        }
        if let Some(h) = fields.iter().find(|h| !h.is_finite()) {
            return Err(Error::input(format!("non-finite field {h}")));
        }
        let mut canonical = Vec::with_capacity(couplings.len());
        for (a, b, w) in couplings {
            if a == b {
                return Err(Error::input(format!("self-loop on spin {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::input(format!(
                    "coupling ({a}, {b}) out of range for {n} spins"
                )));
            }
            if !w.is_finite() {
                return Err(Error::input(format!("non-finite coupling on ({a}, {b})")));
            }
            canonical.push((a.min(b), a.max(b), w));
        }
        canonical.sort_by_key(|&(i, j, _)| (i, j));
        if let Some(pair) = canonical.windows(2).find(|p| (p[0].0, p[0].1) == (p[1].0, p[1].1)) {
            return Err(Error::input(format!(
                "duplicate coupling ({}, {})",
                pair[0].0, pair[0].1
            )));
        }

        let (offsets, neighbors, weights) = adjacency(n, canonical.iter().map(|&(i, j, w)| (i, j, w)));
        Ok(IsingModel {
            n,
            couplings: canonical,
            fields,
            offsets,
            neighbors,
            weights,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.couplings
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Neighbors of `i` with their coupling weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.neighbors[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&j, &w)| (j as usize, w))
    }

    fn check_len(&self, state: &SpinState) -> Result<()> {
        if state.len() != self.n {
            return Err(Error::input(format!(
                "state has {} spins, model has {}",
                state.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Cost energy `-sum J_ij S_i S_j - sum h_i S_i`.
    pub fn energy(&self, state: &SpinState) -> Result<f64> {
        self.check_len(state)?;
        Ok(self.energy_unchecked(state))
    }

    pub(crate) fn energy_unchecked(&self, state: &SpinState) -> f64 {
        let s = state.as_slice();
        let pair: f64 = self
            .couplings
            .iter()
            .map(|&(i, j, w)| w * f64::from(s[i]) * f64::from(s[j]))
            .sum();
        let field: f64 = self.fields.iter().zip(s).map(|(h, &si)| h * f64::from(si)).sum();
        -pair - field
    }

    /// `sum_j J_ij S_j + h_i` for every spin.
    pub fn local_fields(&self, state: &SpinState) -> Result<LocalFields> {
        self.check_len(state)?;
        Ok(LocalFields::compute(self, state))
    }
}

impl TryFrom<ModelFile> for IsingModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        IsingModel::new(file.n, file.couplings, file.fields)
    }
}

impl From<IsingModel> for ModelFile {
    fn from(model: IsingModel) -> Self {
        ModelFile {
            n: model.n,
            couplings: model.couplings,
            fields: model.fields,
        }
    }
}

/// Compressed adjacency (offsets, neighbor ids, weights) of a symmetric
/// edge list.
pub(crate) fn adjacency<W: Copy>(
    n: usize,
    edges: impl Iterator<Item = (usize, usize, W)> + Clone,
) -> (Vec<usize>, Vec<u32>, Vec<W>) {
    let mut degree = vec![0usize; n];
    for (i, j, _) in edges.clone() {
        degree[i] += 1;
        degree[j] += 1;
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for d in &degree {
        offsets.push(offsets.last().unwrap() + d);
    }
    let mut fill = offsets[..n].to_vec();
    let total = offsets[n];
    let mut neighbors = vec![0u32; total];
    let mut weights: Vec<Option<W>> = vec![None; total];
    for (i, j, w) in edges {
        neighbors[fill[i]] = j as u32;
        weights[fill[i]] = Some(w);
        fill[i] += 1;
        neighbors[fill[j]] = i as u32;
        weights[fill[j]] = Some(w);
        fill[j] += 1;
    }
    (offsets, neighbors, weights.into_iter().map(Option::unwrap).collect())
}

/// Cache of `sum_j J_ij S_j + h_i` per spin.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFields(Vec<f64>);

impl LocalFields {
    pub(crate) fn compute(model: &IsingModel, state: &SpinState) -> Self {
        LocalFields(
            (0..model.n)
                .map(|i| {
                    model.fields[i]
                        + model
                            .neighbors(i)
                            .map(|(j, w)| w * f64::from(state.get(j)))
                            .sum::<f64>()
                })
                .collect(),
        )
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Updates the cache after spin `i` has been flipped to `new_spin`.
    #[inline]
    pub(crate) fn record_flip(&mut self, model: &IsingModel, i: usize, new_spin: i8) {
        let change = 2.0 * f64::from(new_spin);
        for k in model.offsets[i]..model.offsets[i + 1] {
            self.0[model.neighbors[k] as usize] += model.weights[k] * change;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `E(state with spin i flipped) - E(state)`, using a cache that matches
/// `state`.
#[inline]
pub fn delta_energy_flip(state: &SpinState, i: usize, cache: &LocalFields) -> f64 {
    2.0 * f64::from(state.get(i)) * cache.get(i)
}

/// Flips spin `i` and keeps `cache` consistent.
pub fn flip_spin(model: &IsingModel, state: &mut SpinState, i: usize, cache: &mut LocalFields) {
    state.flip(i);
    cache.record_flip(model, i, state.get(i));
}

/// Cost and constraint parts of a penalized energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub f: f64,
    pub g: f64,
}

impl EnergyBreakdown {
    /// `f + P g`.
    #[inline]
    pub fn total(&self, penalty: f64) -> f64 {
        self.f + penalty * self.g
    }

    pub fn is_feasible(&self) -> bool {
        self.g == 0.0
    }
}
