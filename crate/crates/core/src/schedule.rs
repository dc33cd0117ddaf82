//! Adaptive construction of the temperature and penalty ladders.
//!
//! The first column (penalty `P0`) climbs in beta by `alpha_beta / sigma_E`
//! until the energy spread of a probe population drops to `sigma_min`,
//! which fixes the number of rows. Each probed row also proposes the next
//! penalty `P + alpha_P / (beta sigma_g)`; the next column takes the median
//! proposal. Later columns repeat the beta climb over the same number of rows
//! and stop once the coldest probe has mean constraint value below 0.5. The
//! final beta of each row is the median over columns.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstrainedProblem;
use crate::error::{Error, Result};
use crate::rng;
use crate::sweep::{self, Replica};

/// Columns stop being added once the coldest probe's mean `g` is below this.
pub const FEASIBLE_MEAN_G: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub beta0: f64,
    pub p0: f64,
    pub i_max: usize,
    pub j_max: usize,
    /// Defaults to `0.5 sqrt(N)` for `N` physical spins.
    pub sigma_min: Option<f64>,
    pub alpha_beta: f64,
    pub alpha_p: f64,
    pub n_chains: usize,
    pub sweeps_per_probe: u64,
    /// Upper bound on `I * J`.
    pub budget: usize,
    pub seed: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            beta0: 0.1,
            p0: 0.5,
            i_max: 20,
            j_max: 20,
            sigma_min: None,
            alpha_beta: 1.0,
            alpha_p: 1.0,
            n_chains: 32,
            sweeps_per_probe: 1000,
            budget: 400,
            seed: 0,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("beta0", self.beta0)?;
        positive("alpha_beta", self.alpha_beta)?;
        positive("alpha_p", self.alpha_p)?;
        if let Some(s) = self.sigma_min {
            positive("sigma_min", s)?;
        }
        if !(self.p0 >= 0.0 && self.p0.is_finite()) {
            return Err(Error::config(format!("p0 must be >= 0, got {}", self.p0)));
        }
        if self.i_max == 0 || self.j_max == 0 {
            return Err(Error::config("i_max and j_max must be at least 1"));
        }
        if self.i_max * self.j_max > self.budget {
            return Err(Error::config(format!(
                "i_max * j_max = {} exceeds the replica budget {}",
                self.i_max * self.j_max,
                self.budget
            )));
        }
        if self.n_chains < 2 {
            return Err(Error::config("n_chains must be at least 2"));
        }
        if self.sweeps_per_probe == 0 {
            return Err(Error::config("sweeps_per_probe must be at least 1"));
        }
        Ok(())
    }

    pub fn sigma_min_for(&self, n_spins: usize) -> f64 {
        self.sigma_min.unwrap_or(0.5 * (n_spins as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub sigma_e: f64,
    pub sigma_g: f64,
    pub mean_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub row: usize,
    pub col: usize,
    pub beta: f64,
    pub penalty: f64,
    #[serde(flatten)]
    pub stats: ProbeStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub betas: Vec<f64>,
    pub penalties: Vec<f64>,
    #[serde(default)]
    pub probe_stats: Vec<ProbeRecord>,
    /// The column budget ran out before the last column became feasible.
    #[serde(default)]
    pub budget_exhausted: bool,
}

impl Schedule {
    pub fn explicit(betas: Vec<f64>, penalties: Vec<f64>) -> Result<Self> {
        let schedule = Schedule {
            betas,
            penalties,
            probe_stats: Vec::new(),
            budget_exhausted: false,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", &self.betas), ("penalty", &self.penalties)] {
            if v.is_empty() {
                return Err(Error::config(format!("{name} ladder is empty")));
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::config(format!("{name} ladder has a negative or non-finite entry")));
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config(format!("{name} ladder is not strictly increasing")));
            }
        }
        Ok(())
    }

    pub fn mean_penalty(&self) -> f64 {
        self.penalties.iter().sum::<f64>() / self.penalties.len() as f64
    }

    pub fn replicas(&self) -> usize {
        self.betas.len() * self.penalties.len()
    }
}

/// Runs `n_chains` independent chains from random states for `sweeps`
/// sweeps at `(beta, penalty)` and discards the first half of each chain.
/// Each chain contributes the standard deviations of `E = f + P g` and `g`
/// and the mean of `g` over its kept sweeps; the result is the average over
/// chains.
pub fn probe_population(
    problem: &ConstrainedProblem,
    beta: f64,
    penalty: f64,
    n_chains: usize,
    sweeps: u64,
    seed: u64,
) -> Result<ProbeStats> {
    if n_chains < 2 {
        return Err(Error::config("a probe needs at least 2 chains"));
    }
    if sweeps == 0 {
        return Err(Error::config("a probe needs at least 1 sweep"));
    }
    let burn = sweeps / 2;
    let per_chain: Vec<ProbeStats> = (0..n_chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng::stream(seed, c);
            let mut replica = Replica::random(problem, &mut stream);
            let mut kept = Vec::with_capacity((sweeps - burn) as usize);
            for s in 0..sweeps {
                sweep::sweep(problem, beta, penalty, &mut replica, &mut stream);
                if s >= burn {
                    let b = replica.breakdown();
                    kept.push((b.total(penalty), b.g));
                }
            }
            let (_, sigma_e) = mean_std(kept.iter().map(|s| s.0));
            let (mean_g, sigma_g) = mean_std(kept.iter().map(|s| s.1));
            ProbeStats {
                sigma_e,
                sigma_g,
                mean_g,
            }
        })
        .collect();
    let average = |f: fn(&ProbeStats) -> f64| per_chain.iter().map(f).sum::<f64>() / n_chains as f64;
    Ok(ProbeStats {
        sigma_e: average(|s| s.sigma_e),
        sigma_g: average(|s| s.sigma_g),
        mean_g: average(|s| s.mean_g),
    })
}

/// Two-pass mean and population standard deviation.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Lower median.
fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

fn penalty_step(cfg: &ScheduleConfig, beta: f64, sigma_g: f64) -> f64 {
    let cap = 2.0 * cfg.p0 + 1.0;
    if sigma_g > 0.0 {
        (cfg.alpha_p / (beta * sigma_g)).min(cap)
    } else {
        cap
    }
}

struct Prober<'a> {
    problem: &'a ConstrainedProblem,
    cfg: &'a ScheduleConfig,
    records: Vec<ProbeRecord>,
}

impl Prober<'_> {
    fn probe(&mut self, row: usize, col: usize, beta: f64, penalty: f64) -> Result<ProbeStats> {
        let seed = rng::derive_seed(self.cfg.seed, ((col as u64) << 32) | row as u64);
        let stats = probe_population(
            self.problem,
            beta,
            penalty,
            self.cfg.n_chains,
            self.cfg.sweeps_per_probe,
            seed,
        )?;
        self.records.push(ProbeRecord {
            row,
            col,
            beta,
            penalty,
            stats,
        });
        Ok(stats)
    }
}

pub fn build_schedule(problem: &ConstrainedProblem, cfg: &ScheduleConfig) -> Result<Schedule> {
    cfg.validate()?;
    let sigma_min = cfg.sigma_min_for(problem.n_spins());
    let mut prober = Prober {
        problem,
        cfg,
        records: Vec::new(),
    };

    // First column: grow rows while the energy spread exceeds sigma_min.
    let mut first = vec![cfg.beta0];
    let mut proposals = Vec::new();
    let mut coldest_mean_g;
    loop {
        let i = first.len() - 1;
        let beta = first[i];
        let stats = prober.probe(i, 0, beta, cfg.p0)?;
        proposals.push(cfg.p0 + penalty_step(cfg, beta, stats.sigma_g));
        coldest_mean_g = stats.mean_g;
        if stats.sigma_e > sigma_min && first.len() < cfg.i_max {
            first.push(beta + cfg.alpha_beta / stats.sigma_e);
        } else {
            break;
        }
    }
    let rows = first.len();
    let j_cap = cfg.j_max.min(cfg.budget / rows).max(1);
    let mut columns = vec![first];
    let mut penalties = vec![cfg.p0];

    // Remaining columns: fixed row count, median penalty proposal.
    while coldest_mean_g >= FEASIBLE_MEAN_G && penalties.len() < j_cap {
        let col = penalties.len();
        let penalty = median(&proposals);
        penalties.push(penalty);
        proposals.clear();
        let mut betas = vec![cfg.beta0];
        for i in 0..rows {
            let beta = betas[i];
            let stats = prober.probe(i, col, beta, penalty)?;
            if i + 1 < rows {
                betas.push(beta + cfg.alpha_beta / stats.sigma_e.max(sigma_min));
            }
            proposals.push(penalty + penalty_step(cfg, beta, stats.sigma_g));
            coldest_mean_g = stats.mean_g;
        }
        columns.push(betas);
    }

    let budget_exhausted = coldest_mean_g >= FEASIBLE_MEAN_G;
    if budget_exhausted {
        warn!(
            "schedule stopped at {} columns with coldest mean g {:.3}",
            penalties.len(),
            coldest_mean_g
        );
    }
    let betas = (0..rows)
        .map(|i| median(&columns.iter().map(|c| c[i]).collect::<Vec<_>>()))
        .collect();
    let schedule = Schedule {
        betas,
        penalties,
        probe_stats: prober.records,
        budget_exhausted,
    };
    schedule.validate()?;
    Ok(schedule)
}
