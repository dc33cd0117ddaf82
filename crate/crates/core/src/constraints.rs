//! Copy constraints, sparsification into copy chains, and decoding.
//!
//! The constraint function is a sum of mismatch terms `(S_a - S_b)^2`, each
//! worth 0 when the pair agrees and 4 when it does not. For ±1 spins a term
//! equals `2 (1 - S_a S_b)`, so `P g` is a ferromagnetic coupling of
//! strength `2P` per pair plus the constant `2 P m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{adjacency, EnergyBreakdown, IsingModel, SpinState};

/// Quadratic mismatch terms over spin pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConstraintFile", into = "ConstraintFile")]
pub struct ConstraintSet {
    n: usize,
    pairs: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    partners: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintFile {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl TryFrom<ConstraintFile> for ConstraintSet {
    type Error = Error;

    fn try_from(file: ConstraintFile) -> Result<Self> {
        ConstraintSet::new(file.n, file.pairs)
    }
}

impl From<ConstraintSet> for ConstraintFile {
    fn from(set: ConstraintSet) -> Self {
        ConstraintFile {
            n: set.n,
            pairs: set.pairs,
        }
    }
}

impl ConstraintSet {
    pub fn new(n: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        for &(a, b) in &pairs {
            if a == b {
                return Err(Error::input(format!("constraint pairs spin {a} with itself")));
            }
            if a >= n || b >= n {
                return Err(Error::input(format!(
                    "constraint ({a}, {b}) out of range for {n} spins"
                )));
            }
        }
        let (offsets, partners, _) = adjacency(n, pairs.iter().map(|&(a, b)| (a, b, ())));
        Ok(ConstraintSet {
            n,
            pairs,
            offsets,
            partners,
        })
    }

    pub fn empty(n: usize) -> Self {
        ConstraintSet::new(n, Vec::new()).expect("empty set is valid")
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of constraint terms touching spin `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub(crate) fn partners(&self, i: usize) -> &[u32] {
        &self.partners[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `sum (S_a - S_b)^2`, always a multiple of 4.
    pub fn evaluate(&self, state: &SpinState) -> u64 {
        self.pairs
            .iter()
            .filter(|&&(a, b)| state.get(a) != state.get(b))
            .count() as u64
            * 4
    }
}

/// A cost model together with its copy constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemFile", into = "ProblemFile")]
pub struct ConstrainedProblem {
    cost: IsingModel,
    constraints: ConstraintSet,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    model: IsingModel,
    constraints: Vec<(usize, usize)>,
}

impl TryFrom<ProblemFile> for ConstrainedProblem {
    type Error = Error;

    fn try_from(file: ProblemFile) -> Result<Self> {
        let n = file.model.n_spins();
        ConstrainedProblem::new(file.model, ConstraintSet::new(n, file.constraints)?)
    }
}

impl From<ConstrainedProblem> for ProblemFile {
    fn from(problem: ConstrainedProblem) -> Self {
        ProblemFile {
            model: problem.cost,
            constraints: problem.constraints.pairs,
        }
    }
}

impl ConstrainedProblem {
    pub fn new(cost: IsingModel, constraints: ConstraintSet) -> Result<Self> {
        if constraints.n_spins() != cost.n_spins() {
            return Err(Error::input(format!(
                "constraints cover {} spins but the model has {}",
                constraints.n_spins(),
                cost.n_spins()
            )));
        }
        Ok(ConstrainedProblem { cost, constraints })
    }

    pub fn unconstrained(cost: IsingModel) -> Self {
        let n = cost.n_spins();
        ConstrainedProblem {
            cost,
            constraints: ConstraintSet::empty(n),
        }
    }

    pub fn cost(&self) -> &IsingModel {
        &self.cost
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn n_spins(&self) -> usize {
        self.cost.n_spins()
    }

    pub fn breakdown(&self, state: &SpinState) -> Result<EnergyBreakdown> {
        let f = self.cost.energy(state)?;
        Ok(EnergyBreakdown {
            f,
            g: self.constraints.evaluate(state) as f64,
        })
    }
}

/// The penalized landscape `f + P g` of one replica column.
///
/// `merged` folds every constraint pair into the cost model as an extra
/// coupling of `2P`; its energy differs from `f + P g` by `-offset`.
#[derive(Debug, Clone)]
pub struct EffectiveModel<'a> {
    problem: &'a ConstrainedProblem,
    penalty: f64,
    merged: IsingModel,
    offset: f64,
}

/// Builds the penalized model for penalty strength `penalty >= 0`.
pub fn build_effective(problem: &ConstrainedProblem, penalty: f64) -> Result<EffectiveModel<'_>> {
    if !(penalty >= 0.0 && penalty.is_finite()) {
        return Err(Error::input(format!("penalty must be finite and >= 0, got {penalty}")));
    }
    let mut couplings: Vec<(usize, usize, f64)> = problem.cost.couplings().to_vec();
    if penalty > 0.0 {
        for &(a, b) in problem.constraints.pairs() {
            couplings.push((a.min(b), a.max(b), 2.0 * penalty));
        }
    }
    couplings.sort_by_key(|&(i, j, _)| (i, j));
    let mut merged_edges: Vec<(usize, usize, f64)> = Vec::with_capacity(couplings.len());
    for (i, j, w) in couplings {
        match merged_edges.last_mut() {
            Some(last) if (last.0, last.1) == (i, j) => last.2 += w,
            _ => merged_edges.push((i, j, w)),
        }
    }
    let merged = IsingModel::new(
        problem.n_spins(),
        merged_edges,
        problem.cost.fields().to_vec(),
    )?;
    Ok(EffectiveModel {
        problem,
        penalty,
        merged,
        offset: 2.0 * penalty * problem.constraints.len() as f64,
    })
}

impl<'a> EffectiveModel<'a> {
    pub fn problem(&self) -> &'a ConstrainedProblem {
        self.problem
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn merged(&self) -> &IsingModel {
        &self.merged
    }

    /// Constant that must be added to `merged` energies to obtain `f + P g`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `f + P g` through the merged model.
    pub fn energy(&self, state: &SpinState) -> Result<f64> {
        Ok(self.merged.energy(state)? + self.offset)
    }

    pub fn breakdown(&self, state: &SpinState) -> Result<EnergyBreakdown> {
        self.problem.breakdown(state)
    }
}

/// Which physical spins represent each logical node, and where each logical
/// coupling landed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsificationMap {
    pub n_logical: usize,
    pub n_physical: usize,
    pub max_degree: usize,
    /// Per logical node, its chain of physical spins in path order.
    pub copies: Vec<Vec<usize>>,
    /// `(u, v, physical_u, physical_v)` per logical coupling.
    pub edge_assignment: Vec<(usize, usize, usize, usize)>,
}

/// Extra neighbor slots a node needs after its chain edges are placed.
pub fn chain_slots(copies_per_node: usize, max_degree: usize) -> usize {
    match copies_per_node {
        0 => 0,
        1 => max_degree,
        k => k * max_degree - 2 * (k - 1),
    }
}

/// Smallest degree cap that admits a node with `degree` logical neighbors.
pub fn min_max_degree(degree: usize, copies_per_node: usize) -> usize {
    (1..)
        .find(|&d| {
            (copies_per_node == 1 || d >= 3) && chain_slots(copies_per_node, d) >= degree
        })
        .unwrap()
}

/// Rewrites `logical` with `copies_per_node` physical spins per node so no
/// physical spin exceeds `max_degree` neighbors (cost edges plus chain
/// edges).
///
/// Copies of node `u` are the physical spins `u*k .. u*k + k`, chained as a
/// path. Couplings are visited in sorted order and each endpoint is placed on
/// the copy with the most remaining budget (lowest copy index on ties).
/// Fields stay on the first copy.
pub fn sparsify(
    logical: &IsingModel,
    copies_per_node: usize,
    max_degree: usize,
) -> Result<(ConstrainedProblem, SparsificationMap)> {
    let n = logical.n_spins();
    let k = copies_per_node;
    if k == 0 {
        return Err(Error::config("copies_per_node must be at least 1"));
    }
    if k > 1 && max_degree < 3 {
        return Err(Error::config(format!(
            "max_degree {max_degree} cannot hold a chain of {k} copies (need at least 3)"
        )));
    }
    for u in 0..n {
        let budget = chain_slots(k, max_degree);
        if logical.degree(u) > budget {
            return Err(Error::DegreeCap {
                node: u,
                degree: logical.degree(u),
                copies: k,
                budget,
                max_degree,
            });
        }
    }

    if k == 1 {
        let map = SparsificationMap {
            n_logical: n,
            n_physical: n,
            max_degree,
            copies: (0..n).map(|u| vec![u]).collect(),
            edge_assignment: logical.couplings().iter().map(|&(u, v, _)| (u, v, u, v)).collect(),
        };
        return Ok((ConstrainedProblem::unconstrained(logical.clone()), map));
    }

    let copies: Vec<Vec<usize>> = (0..n).map(|u| (u * k..u * k + k).collect()).collect();
    let mut remaining = vec![0usize; n * k];
    for chain in &copies {
        for (c, &p) in chain.iter().enumerate() {
            let chain_edges = if c == 0 || c == k - 1 { 1 } else { 2 };
            remaining[p] = max_degree - chain_edges;
        }
    }
    let pick = |u: usize, remaining: &mut [usize]| -> usize {
        let p = *copies[u]
            .iter()
            .rev()
            .max_by_key(|&&p| remaining[p])
            .expect("chain is non-empty");
        debug_assert!(remaining[p] > 0, "budget was checked up front");
        remaining[p] -= 1;
        p
    };

    let mut physical_couplings = Vec::with_capacity(logical.couplings().len());
    let mut edge_assignment = Vec::with_capacity(logical.couplings().len());
    for &(u, v, w) in logical.couplings() {
        let pu = pick(u, &mut remaining);
        let pv = pick(v, &mut remaining);
        physical_couplings.push((pu, pv, w));
        edge_assignment.push((u, v, pu, pv));
    }
    let mut fields = vec![0.0; n * k];
    for (u, chain) in copies.iter().enumerate() {
        fields[chain[0]] = logical.fields()[u];
    }
    let pairs = copies
        .iter()
        .flat_map(|chain| chain.windows(2).map(|w| (w[0], w[1])))
        .collect();

    let cost = IsingModel::new(n * k, physical_couplings, fields)?;
    let constraints = ConstraintSet::new(n * k, pairs)?;
    for p in 0..n * k {
        let degree = cost.degree(p) + constraints.degree(p);
        assert!(degree <= max_degree, "physical spin {p} has degree {degree}");
    }
    let problem = ConstrainedProblem::new(cost, constraints)?;
    let map = SparsificationMap {
        n_logical: n,
        n_physical: n * k,
        max_degree,
        copies,
        edge_assignment,
    };
    Ok((problem, map))
}

impl SparsificationMap {
    /// Majority vote per chain (first copy breaks ties); `feasible` is true
    /// iff every chain is internally aligned.
    pub fn decode(&self, physical: &SpinState) -> Result<(SpinState, bool)> {
        if physical.len() != self.n_physical {
            return Err(Error::input(format!(
                "physical state has {} spins, map expects {}",
                physical.len(),
                self.n_physical
            )));
        }
        let mut feasible = true;
        let logical = self
            .copies
            .iter()
            .map(|chain| {
                let sum: i32 = chain.iter().map(|&p| i32::from(physical.get(p))).sum();
                if sum.unsigned_abs() as usize != chain.len() {
                    feasible = false;
                }
                match sum.signum() {
                    0 => physical.get(chain[0]),
                    s => s as i8,
                }
            })
            .collect();
        Ok((SpinState::new(logical)?, feasible))
    }

    /// Physical state with every copy set to its logical value.
    pub fn embed(&self, logical: &SpinState) -> SpinState {
        let mut spins = vec![1i8; self.n_physical];
        for (u, chain) in self.copies.iter().enumerate() {
            for &p in chain {
                spins[p] = logical.get(u);
            }
        }
        SpinState::new(spins).expect("copies of valid spins")
    }
}
