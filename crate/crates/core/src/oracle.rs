//! Exact results for small systems by exhaustive enumeration.
//!
//! States are indexed by their binary encoding (bit `i` set means spin `i`
//! is +1, spin 0 is the least significant bit), so histograms written by one
//! run can be compared against distributions computed by another.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstrainedProblem, EffectiveModel};
use crate::error::{Error, Result};
use crate::ising::{IsingModel, SpinState};

/// Hard limit on enumeration size.
pub const MAX_ENUMERATION_SPINS: usize = 24;

/// Anything with an energy (and optionally a constraint value) per state.
pub trait EnergyModel: Sync {
    fn n_spins(&self) -> usize;

    fn energy_of(&self, state: &SpinState) -> f64;

    fn constraint_of(&self, _state: &SpinState) -> f64 {
        0.0
    }
}

impl EnergyModel for IsingModel {
    fn n_spins(&self) -> usize {
        IsingModel::n_spins(self)
    }

    fn energy_of(&self, state: &SpinState) -> f64 {
        self.energy_unchecked(state)
    }
}

impl EnergyModel for EffectiveModel<'_> {
    fn n_spins(&self) -> usize {
        self.problem().n_spins()
    }

    fn energy_of(&self, state: &SpinState) -> f64 {
        self.merged().energy_unchecked(state) + self.offset()
    }

    fn constraint_of(&self, state: &SpinState) -> f64 {
        self.problem().constraints().evaluate(state) as f64
    }
}

/// `f + P g` evaluated term by term, without the merged-coupling route.
#[derive(Debug, Clone, Copy)]
pub struct Penalized<'a> {
    pub problem: &'a ConstrainedProblem,
    pub penalty: f64,
}

impl EnergyModel for Penalized<'_> {
    fn n_spins(&self) -> usize {
        self.problem.n_spins()
    }

    fn energy_of(&self, state: &SpinState) -> f64 {
        self.problem.cost().energy_unchecked(state)
            + self.penalty * self.problem.constraints().evaluate(state) as f64
    }

    fn constraint_of(&self, state: &SpinState) -> f64 {
        self.problem.constraints().evaluate(state) as f64
    }
}

fn guard(n: usize) -> Result<()> {
    if n > MAX_ENUMERATION_SPINS {
        return Err(Error::TooLarge {
            n,
            limit: MAX_ENUMERATION_SPINS,
        });
    }
    Ok(())
}

/// `(energy, constraint)` for every state in encoding order.
fn tabulate<M: EnergyModel + ?Sized>(model: &M) -> Result<Vec<(f64, f64)>> {
    let n = model.n_spins();
    guard(n)?;
    Ok((0..1u64 << n)
        .into_par_iter()
        .map(|code| {
            let s = SpinState::from_code(code, n);
            (model.energy_of(&s), model.constraint_of(&s))
        })
        .collect())
}

/// Energy of every state in encoding order.
pub fn tabulate_energies<M: EnergyModel + ?Sized>(model: &M) -> Result<Vec<f64>> {
    Ok(tabulate(model)?.into_iter().map(|(e, _)| e).collect())
}

/// Boltzmann distribution over all `2^N` states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub n: usize,
    pub beta: f64,
    pub probabilities: Vec<f64>,
    pub log_partition: f64,
}

impl ExactDistribution {
    pub fn prob(&self, code: u64) -> f64 {
        self.probabilities[code as usize]
    }

    /// Total-variation distance to a histogram over the same encoding.
    pub fn total_variation(&self, hist: &Histogram) -> f64 {
        let t = hist.total as f64;
        let observed: f64 = hist
            .counts
            .iter()
            .map(|(&c, &k)| (k as f64 / t - self.prob(c)).abs())
            .sum();
        let unobserved: f64 = self
            .probabilities
            .iter()
            .enumerate()
            .filter(|(c, _)| !hist.counts.contains_key(&(*c as u64)))
            .map(|(_, p)| p)
            .sum();
        0.5 * (observed + unobserved)
    }
}

pub fn enumerate_boltzmann<M: EnergyModel + ?Sized>(model: &M, beta: f64) -> Result<ExactDistribution> {
    let table = tabulate(model)?;
    Ok(boltzmann_from_energies(
        model.n_spins(),
        beta,
        table.iter().map(|&(e, _)| e),
    ))
}

fn boltzmann_from_energies(
    n: usize,
    beta: f64,
    energies: impl Iterator<Item = f64> + Clone,
) -> ExactDistribution {
    let max_log = energies
        .clone()
        .map(|e| -beta * e)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = energies.map(|e| (-beta * e - max_log).exp()).collect();
    let sum: f64 = weights.iter().sum();
    ExactDistribution {
        n,
        beta,
        probabilities: weights.iter().map(|w| w / sum).collect(),
        log_partition: max_log + sum.ln(),
    }
}

/// Global minimum; ties go to the smallest encoding.
pub fn exact_ground_state<M: EnergyModel + ?Sized>(model: &M) -> Result<(SpinState, f64)> {
    let table = tabulate(model)?;
    let (code, energy) = table
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |best, (c, &(e, _))| {
            if e < best.1 {
                (c, e)
            } else {
                best
            }
        });
    Ok((SpinState::from_code(code as u64, model.n_spins()), energy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_e: f64,
    pub var_e: f64,
    pub mean_g: f64,
    pub var_g: f64,
}

pub fn exact_moments<M: EnergyModel + ?Sized>(model: &M, beta: f64) -> Result<Moments> {
    let table = tabulate(model)?;
    let dist = boltzmann_from_energies(model.n_spins(), beta, table.iter().map(|&(e, _)| e));
    let mean = |pick: fn(&(f64, f64)) -> f64| -> f64 {
        table.iter().zip(&dist.probabilities).map(|(x, p)| p * pick(x)).sum()
    };
    let mean_e = mean(|x| x.0);
    let mean_g = mean(|x| x.1);
    let var = |pick: fn(&(f64, f64)) -> f64, m: f64| -> f64 {
        table
            .iter()
            .zip(&dist.probabilities)
            .map(|(x, p)| p * (pick(x) - m).powi(2))
            .sum::<f64>()
            .max(0.0)
    };
    Ok(Moments {
        mean_e,
        var_e: var(|x| x.0, mean_e),
        mean_g,
        var_g: var(|x| x.1, mean_g),
    })
}

/// Sparse count histogram over state encodings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Histogram {
    pub n: usize,
    pub counts: BTreeMap<u64, u64>,
    pub total: u64,
}

impl Histogram {
    pub fn new(n: usize) -> Self {
        Histogram {
            n,
            ..Default::default()
        }
    }

    pub fn record(&mut self, code: u64) {
        *self.counts.entry(code).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn record_state(&mut self, state: &SpinState) {
        self.record(state.code());
    }
}

/// Empirical-versus-target divergence `sum p_hat log(p_hat / p)`, natural
/// log, summed over observed states only.
pub fn kl_divergence(empirical: &Histogram, exact: &ExactDistribution) -> Result<f64> {
    if empirical.total == 0 {
        return Err(Error::input("empty histogram"));
    }
    if empirical.n != exact.n {
        return Err(Error::input(format!(
            "histogram over {} spins, distribution over {}",
            empirical.n, exact.n
        )));
    }
    let t = empirical.total as f64;
    let mut kl = 0.0;
    for (&code, &count) in &empirical.counts {
        if count == 0 {
            continue;
        }
        let p = exact
            .probabilities
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::input(format!("code {code} outside {} spins", exact.n)))?;
        if p <= 0.0 {
            return Err(Error::Support(code));
        }
        let q = count as f64 / t;
        kl += q * (q / p).ln();
    }
    Ok(kl.max(0.0))
}

/// Leading-order expectation `(k - 1) / (2t)` of the empirical KL from `t`
/// independent samples of a `k`-state distribution.
pub fn expected_kl_bias(k: u64, t: u64) -> f64 {
    assert!(k >= 2 && t >= 1, "need k >= 2 states and t >= 1 samples");
    (k - 1) as f64 / (2.0 * t as f64)
}
