//! Single-spin-flip Metropolis sweeps over the penalized energy `f + P g`.
//!
//! A [`Replica`] caches the cost local fields and, per spin, the sum of its
//! constraint partners' spins. Both caches are independent of `P`, so a
//! replica can move between columns of the grid without recomputation.

use rand::Rng;

use crate::constraints::{ConstrainedProblem, EffectiveModel};
use crate::error::{Error, Result};
use crate::ising::{EnergyBreakdown, IsingModel, LocalFields, SpinState};

const CHECK_EVERY: u32 = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct Replica {
    state: SpinState,
    cost_local: LocalFields,
    partner_sum: Vec<i32>,
    f: f64,
    g: i64,
    sweeps_since_check: u32,
}

impl Replica {
    pub fn new(problem: &ConstrainedProblem, state: SpinState) -> Result<Self> {
        if state.len() != problem.n_spins() {
            return Err(Error::input(format!(
                "state has {} spins, problem has {}",
                state.len(),
                problem.n_spins()
            )));
        }
        let cost_local = LocalFields::compute(problem.cost(), &state);
        let partner_sum = partner_sums(problem, &state);
        let f = problem.cost().energy_unchecked(&state);
        let g = problem.constraints().evaluate(&state) as i64;
        Ok(Replica {
            state,
            cost_local,
            partner_sum,
            f,
            g,
            sweeps_since_check: 0,
        })
    }

    pub fn random<R: Rng + ?Sized>(problem: &ConstrainedProblem, rng: &mut R) -> Self {
        Replica::new(problem, SpinState::random(problem.n_spins(), rng)).expect("length matches")
    }

    pub fn state(&self) -> &SpinState {
        &self.state
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn g(&self) -> u64 {
        self.g as u64
    }

    pub fn breakdown(&self) -> EnergyBreakdown {
        EnergyBreakdown {
            f: self.f,
            g: self.g as f64,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.g == 0
    }

    /// Largest relative deviation of the cached `(f, g)` and local fields
    /// from a fresh recomputation.
    pub fn drift(&self, problem: &ConstrainedProblem) -> f64 {
        let fresh = Replica::new(problem, self.state.clone()).expect("length matches");
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        let mut worst = rel(self.f, fresh.f).max(rel(self.g as f64, fresh.g as f64));
        for (a, b) in self.cost_local.as_slice().iter().zip(fresh.cost_local.as_slice()) {
            worst = worst.max(rel(*a, *b));
        }
        if self.partner_sum != fresh.partner_sum {
            worst = f64::INFINITY;
        }
        worst
    }

    /// Replaces every cache with a fresh recomputation.
    pub fn resync(&mut self, problem: &ConstrainedProblem) {
        *self = Replica::new(problem, std::mem::replace(&mut self.state, SpinState::all_up(0)))
            .expect("length matches");
    }

    #[inline]
    fn flip(&mut self, cost: &IsingModel, problem: &ConstrainedProblem, i: usize, df: f64, dg: i64) {
        self.state.flip(i);
        let s = self.state.get(i);
        self.cost_local.record_flip(cost, i, s);
        for &b in problem.constraints().partners(i) {
            self.partner_sum[b as usize] += 2 * i32::from(s);
        }
        self.f += df;
        self.g += dg;
    }
}

fn partner_sums(problem: &ConstrainedProblem, state: &SpinState) -> Vec<i32> {
    (0..problem.n_spins())
        .map(|i| {
            problem
                .constraints()
                .partners(i)
                .iter()
                .map(|&b| i32::from(state.get(b as usize)))
                .sum()
        })
        .collect()
}

/// One sweep over `view`: each spin in index order proposes a flip accepted
/// with probability `min(1, exp(-beta * dE))`, `dE = df + P dg`.
pub fn metropolis_sweep<R: Rng + ?Sized>(
    view: &EffectiveModel<'_>,
    beta: f64,
    replica: &mut Replica,
    rng: &mut R,
) -> EnergyBreakdown {
    sweep(view.problem(), beta, view.penalty(), replica, rng);
    replica.breakdown()
}

/// Kernel shared with the replica grid, which supplies `penalty` directly.
#[inline]
pub(crate) fn sweep<R: Rng + ?Sized>(
    problem: &ConstrainedProblem,
    beta: f64,
    penalty: f64,
    replica: &mut Replica,
    rng: &mut R,
) {
    let cost = problem.cost();
    for i in 0..problem.n_spins() {
        let s = f64::from(replica.state.get(i));
        let df = 2.0 * s * replica.cost_local.get(i);
        let dg = 4 * i64::from(replica.state.get(i)) * i64::from(replica.partner_sum[i]);
        let de = df + penalty * dg as f64;
        if de <= 0.0 || rng.random::<f64>() < (-beta * de).exp() {
            replica.flip(cost, problem, i, df, dg);
        }
    }

    replica.sweeps_since_check += 1;
    if cfg!(debug_assertions) && replica.sweeps_since_check >= CHECK_EVERY {
        replica.sweeps_since_check = 0;
        let drift = replica.drift(problem);
        debug_assert!(drift < 1e-6, "cached energies drifted by {drift}");
    }
}
