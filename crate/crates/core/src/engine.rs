//! The replica grid: rows of increasing inverse temperature, columns of
//! increasing penalty strength, with configuration exchanges along both
//! axes.
//!
//! Each round every replica performs `sweeps_per_swap` Metropolis sweeps,
//! then one swap phase runs. Round `n` (1-based) attempts the adjacent pairs
//! `(p, p + 1)` for `p = even, even + 2, ...` where `even = (n % 2 == 0)`.
//! The phase direction starts on the penalty axis and flips after every
//! even round, so the axes alternate in blocks of two rounds. A grid with a
//! single row or column has pairs on one axis only and swaps along it every
//! round.
//!
//! Every grid position owns a random stream for its sweeps and one further
//! stream drives all swap decisions, so a fixed seed yields the same trace
//! regardless of how many threads execute the sweep phase.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstrainedProblem;
use crate::error::{Error, Result};
use crate::ising::SpinState;
use crate::rng::{self, Stream};
use crate::schedule::Schedule;
use crate::sweep::{self, Replica};

/// Swap acceptance along the penalty axis at fixed `beta`:
/// `min(1, exp(beta dP dg))`.
pub fn p_swap_probability(beta: f64, dp: f64, dg: f64) -> f64 {
    probability(beta * dp * dg)
}

/// Swap acceptance along the temperature axis at fixed penalty:
/// `min(1, exp(dbeta dE))`.
pub fn beta_swap_probability(dbeta: f64, de: f64) -> f64 {
    probability(dbeta * de)
}

/// Exchange acceptance between two replicas with arbitrary parameters,
/// `min(1, exp(beta_a dE_a + beta_b dE_b))` where `dE_a = E_a(S_a) - E_a(S_b)`
/// and `dE_b = E_b(S_b) - E_b(S_a)`.
pub fn general_swap_probability(beta_a: f64, beta_b: f64, de_a: f64, de_b: f64) -> f64 {
    probability(beta_a * de_a + beta_b * de_b)
}

#[inline]
fn probability(exponent: f64) -> f64 {
    if exponent >= 0.0 {
        1.0
    } else {
        exponent.exp()
    }
}

#[inline]
fn accept<R: Rng + ?Sized>(exponent: f64, rng: &mut R) -> bool {
    exponent >= 0.0 || rng.random::<f64>() < exponent.exp()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub total_sweeps: u64,
    pub sweeps_per_swap: u64,
    pub seed: u64,
    /// Store only the target replica's state each round; otherwise every
    /// replica's state is kept as well.
    #[serde(default = "default_true")]
    pub store_target_only: bool,
    /// Run both swap phases in every round instead of alternating.
    #[serde(default)]
    pub both_directions: bool,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn new(total_sweeps: u64, sweeps_per_swap: u64, seed: u64) -> Self {
        RunConfig {
            total_sweeps,
            sweeps_per_swap,
            seed,
            store_target_only: true,
            both_directions: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps_per_swap == 0 {
            return Err(Error::config("sweeps_per_swap must be at least 1"));
        }
        if self.total_sweeps < self.sweeps_per_swap {
            return Err(Error::config(format!(
                "total_sweeps {} is smaller than sweeps_per_swap {}",
                self.total_sweeps, self.sweeps_per_swap
            )));
        }
        Ok(())
    }

    pub fn rounds(&self) -> u64 {
        self.total_sweeps / self.sweeps_per_swap
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub accepted: u64,
    pub attempted: u64,
}

impl PairCount {
    pub fn rate(&self) -> Option<f64> {
        (self.attempted > 0).then(|| self.accepted as f64 / self.attempted as f64)
    }
}

/// `I x J` replicas stored row-major.
#[derive(Debug, Clone)]
pub struct ReplicaGrid<'p> {
    problem: &'p ConstrainedProblem,
    betas: Vec<f64>,
    penalties: Vec<f64>,
    replicas: Vec<Replica>,
    streams: Vec<Stream>,
    swap_stream: Stream,
    p_counts: Vec<PairCount>,
    beta_counts: Vec<PairCount>,
}

fn check_ladder(name: &str, values: &[f64], strict: bool) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(format!("{name} ladder is empty")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::config(format!("{name} ladder has invalid entry {v}")));
    }
    if strict && values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(format!("{name} ladder is not strictly increasing")));
    }
    Ok(())
}

impl<'p> ReplicaGrid<'p> {
    /// Grid with strictly increasing ladders and random initial states.
    pub fn new(problem: &'p ConstrainedProblem, betas: &[f64], penalties: &[f64], seed: u64) -> Result<Self> {
        check_ladder("beta", betas, true)?;
        check_ladder("penalty", penalties, true)?;
        Ok(Self::build(problem, betas, penalties, seed))
    }

    fn build(problem: &'p ConstrainedProblem, betas: &[f64], penalties: &[f64], seed: u64) -> Self {
        let count = betas.len() * penalties.len();
        let mut streams: Vec<Stream> = (0..count as u64).map(|k| rng::stream(seed, k)).collect();
        let replicas = streams
            .iter_mut()
            .map(|s| Replica::random(problem, s))
            .collect();
        ReplicaGrid {
            problem,
            betas: betas.to_vec(),
            penalties: penalties.to_vec(),
            replicas,
            streams,
            swap_stream: rng::stream(seed, rng::SWAP_STREAM),
            p_counts: vec![PairCount::default(); betas.len() * (penalties.len() - 1)],
            beta_counts: vec![PairCount::default(); (betas.len() - 1) * penalties.len()],
        }
    }

    pub fn problem(&self) -> &'p ConstrainedProblem {
        self.problem
    }

    pub fn rows(&self) -> usize {
        self.betas.len()
    }

    pub fn cols(&self) -> usize {
        self.penalties.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn penalties(&self) -> &[f64] {
        &self.penalties
    }

    pub fn replica(&self, i: usize, j: usize) -> &Replica {
        &self.replicas[i * self.cols() + j]
    }

    pub fn replicas(&self) -> &[Replica] {
        &self.replicas
    }

    /// Largest beta, largest penalty.
    pub fn target(&self) -> &Replica {
        self.replicas.last().expect("grid is non-empty")
    }

    /// Counters for penalty-axis pairs, `I x (J - 1)` row-major.
    pub fn p_counts(&self) -> &[PairCount] {
        &self.p_counts
    }

    /// Counters for temperature-axis pairs, `(I - 1) x J` row-major.
    pub fn beta_counts(&self) -> &[PairCount] {
        &self.beta_counts
    }

    /// `sweeps` Metropolis sweeps on every replica at its own `(beta, P)`.
    pub fn sweep_all(&mut self, sweeps: u64) {
        let problem = self.problem;
        let cols = self.cols();
        let (betas, penalties) = (&self.betas, &self.penalties);
        let work = |(k, (replica, stream)): (usize, (&mut Replica, &mut Stream))| {
            let (beta, penalty) = (betas[k / cols], penalties[k % cols]);
            for _ in 0..sweeps {
                sweep::sweep(problem, beta, penalty, replica, stream);
            }
        };
        if rayon::current_num_threads() > 1 && self.replicas.len() > 1 {
            self.replicas
                .par_iter_mut()
                .zip(self.streams.par_iter_mut())
                .enumerate()
                .for_each(work);
        } else {
            self.replicas
                .iter_mut()
                .zip(self.streams.iter_mut())
                .enumerate()
                .for_each(work);
        }
    }

    /// Penalty-axis exchanges in every row for pairs starting at `offset`.
    pub fn p_swap_phase(&mut self, offset: usize) {
        let cols = self.cols();
        for i in 0..self.rows() {
            for p in (offset..cols.saturating_sub(1)).step_by(2) {
                let (a, b) = (i * cols + p, i * cols + p + 1);
                let dp = self.penalties[p + 1] - self.penalties[p];
                let dg = self.replicas[b].g() as f64 - self.replicas[a].g() as f64;
                let count = &mut self.p_counts[i * (cols - 1) + p];
                count.attempted += 1;
                if accept(self.betas[i] * dp * dg, &mut self.swap_stream) {
                    count.accepted += 1;
                    self.replicas.swap(a, b);
                }
            }
        }
    }

    /// Temperature-axis exchanges in every column for pairs starting at
    /// `offset`; energies use the column's own penalty.
    pub fn beta_swap_phase(&mut self, offset: usize) {
        let (rows, cols) = (self.rows(), self.cols());
        for j in 0..cols {
            let penalty = self.penalties[j];
            for b in (offset..rows.saturating_sub(1)).step_by(2) {
                let (lo, hi) = (b * cols + j, (b + 1) * cols + j);
                let dbeta = self.betas[b + 1] - self.betas[b];
                let de = self.replicas[hi].breakdown().total(penalty)
                    - self.replicas[lo].breakdown().total(penalty);
                let count = &mut self.beta_counts[b * cols + j];
                count.attempted += 1;
                if accept(dbeta * de, &mut self.swap_stream) {
                    count.accepted += 1;
                    self.replicas.swap(lo, hi);
                }
            }
        }
    }
}

/// State of the grid handed to observers after each round's swap phase.
pub struct RoundView<'a, 'p> {
    pub round: u64,
    pub sweep_count: u64,
    pub grid: &'a ReplicaGrid<'p>,
}

/// Runs the grid over `schedule`, calling `observe` after every round.
/// Returns the final grid.
pub fn run_2dpt_with<'p, F>(
    problem: &'p ConstrainedProblem,
    schedule: &Schedule,
    cfg: &RunConfig,
    mut observe: F,
) -> Result<ReplicaGrid<'p>>
where
    F: FnMut(&RoundView<'_, 'p>),
{
    cfg.validate()?;
    let mut grid = ReplicaGrid::new(problem, &schedule.betas, &schedule.penalties, cfg.seed)?;
    let mut direction = 1i8;
    for n in 1..=cfg.rounds() {
        let even = n % 2 == 0;
        grid.sweep_all(cfg.sweeps_per_swap);
        let offset = usize::from(even);
        if cfg.both_directions {
            grid.p_swap_phase(offset);
            grid.beta_swap_phase(offset);
        } else if penalty_phase(&grid, direction) {
            grid.p_swap_phase(offset);
        } else {
            grid.beta_swap_phase(offset);
        }
        observe(&RoundView {
            round: n,
            sweep_count: n * cfg.sweeps_per_swap,
            grid: &grid,
        });
        if even {
            direction = -direction;
        }
    }
    Ok(grid)
}

fn penalty_phase(grid: &ReplicaGrid<'_>, direction: i8) -> bool {
    match (grid.rows(), grid.cols()) {
        (1, _) => true,
        (_, 1) => false,
        _ => direction == 1,
    }
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRecord {
    pub round: u64,
    pub sweep_count: u64,
    pub f: f64,
    pub g: f64,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<SpinState>,
    /// Every replica's state, row-major, when not storing the target only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica_states: Option<Vec<SpinState>>,
    /// Fraction of cold replicas that were feasible (fixed-penalty baseline).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible_fraction: Option<f64>,
    /// Cumulative rates per penalty-axis pair, one inner list per row.
    #[serde(rename = "acceptance_rates_P")]
    pub acceptance_rates_p: Vec<Vec<Option<f64>>>,
    /// Cumulative rates per temperature-axis pair, one inner list per
    /// upper row of the pair.
    #[serde(rename = "acceptance_rates_beta")]
    pub acceptance_rates_beta: Vec<Vec<Option<f64>>>,
    #[serde(rename = "attempted_P")]
    pub attempted_p: Vec<Vec<u64>>,
    pub attempted_beta: Vec<Vec<u64>>,
}

fn nested_rates(counts: &[PairCount], width: usize) -> (Vec<Vec<Option<f64>>>, Vec<Vec<u64>>) {
    if width == 0 {
        return (Vec::new(), Vec::new());
    }
    counts
        .chunks(width)
        .map(|row| {
            (
                row.iter().map(PairCount::rate).collect(),
                row.iter().map(|c| c.attempted).collect(),
            )
        })
        .unzip()
}

/// Per-round records of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<RoundRecord>,
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Trace { records })
    }

    /// Final cumulative counters `(penalty_pairs, beta_pairs)` recovered from
    /// the last record, shaped like the record's nested lists.
    pub fn final_counts(&self) -> (Vec<Vec<PairCount>>, Vec<Vec<PairCount>>) {
        let Some(last) = self.records.last() else {
            return (Vec::new(), Vec::new());
        };
        let rebuild = |rates: &Vec<Vec<Option<f64>>>, attempts: &Vec<Vec<u64>>| {
            rates
                .iter()
                .zip(attempts)
                .map(|(r, a)| {
                    r.iter()
                        .zip(a)
                        .map(|(rate, &attempted)| PairCount {
                            accepted: (rate.unwrap_or(0.0) * attempted as f64).round() as u64,
                            attempted,
                        })
                        .collect()
                })
                .collect()
        };
        (
            rebuild(&last.acceptance_rates_p, &last.attempted_p),
            rebuild(&last.acceptance_rates_beta, &last.attempted_beta),
        )
    }
}

pub fn record_round(view: &RoundView<'_, '_>, store_target_only: bool) -> RoundRecord {
    let grid = view.grid;
    let target = grid.target();
    let (acceptance_rates_p, attempted_p) = nested_rates(&grid.p_counts, grid.cols() - 1);
    let (acceptance_rates_beta, attempted_beta) = nested_rates(&grid.beta_counts, grid.cols());
    RoundRecord {
        round: view.round,
        sweep_count: view.sweep_count,
        f: target.f(),
        g: target.g() as f64,
        feasible: target.is_feasible(),
        state: Some(target.state().clone()),
        replica_states: (!store_target_only)
            .then(|| grid.replicas.iter().map(|r| r.state().clone()).collect()),
        feasible_fraction: None,
        acceptance_rates_p,
        acceptance_rates_beta,
        attempted_p,
        attempted_beta,
    }
}

/// Two-dimensional parallel tempering; records the target replica every
/// round.
pub fn run_2dpt(problem: &ConstrainedProblem, schedule: &Schedule, cfg: &RunConfig) -> Result<Trace> {
    let mut trace = Trace::default();
    run_2dpt_with(problem, schedule, cfg, |view| {
        trace.records.push(record_round(view, cfg.store_target_only));
    })?;
    Ok(trace)
}

/// Baseline: `j_repeats` independent standard tempering runs sharing one
/// temperature ladder at the fixed penalty `p_fixed`.
///
/// Temperature exchanges run every round with alternating pair parity. Each
/// record holds the lowest-cost feasible cold sample across repeats (or,
/// when none is feasible, the lowest penalized energy, flagged infeasible)
/// and the fraction of repeats whose cold replica was feasible.
pub fn run_jcolumn_pt(
    problem: &ConstrainedProblem,
    betas: &[f64],
    p_fixed: f64,
    j_repeats: usize,
    cfg: &RunConfig,
) -> Result<Trace> {
    cfg.validate()?;
    check_ladder("beta", betas, true)?;
    if !(p_fixed > 0.0 && p_fixed.is_finite()) {
        return Err(Error::config(format!("fixed penalty must be positive, got {p_fixed}")));
    }
    if j_repeats == 0 {
        return Err(Error::config("j_repeats must be at least 1"));
    }
    let penalties = vec![p_fixed; j_repeats];
    let mut grid = ReplicaGrid::build(problem, betas, &penalties, cfg.seed);
    let cold = betas.len() - 1;
    let mut trace = Trace::default();
    for n in 1..=cfg.rounds() {
        grid.sweep_all(cfg.sweeps_per_swap);
        grid.beta_swap_phase(usize::from(n % 2 == 0));

        let colds: Vec<&Replica> = (0..j_repeats).map(|j| grid.replica(cold, j)).collect();
        let feasible = colds.iter().filter(|r| r.is_feasible()).count();
        let best = colds
            .iter()
            .filter(|r| r.is_feasible())
            .min_by(|a, b| a.f().total_cmp(&b.f()))
            .or_else(|| {
                colds
                    .iter()
                    .min_by(|a, b| a.breakdown().total(p_fixed).total_cmp(&b.breakdown().total(p_fixed)))
            })
            .expect("at least one repeat");
        let (acceptance_rates_beta, attempted_beta) = nested_rates(&grid.beta_counts, grid.cols());
        trace.records.push(RoundRecord {
            round: n,
            sweep_count: n * cfg.sweeps_per_swap,
            f: best.f(),
            g: best.g() as f64,
            feasible: best.is_feasible(),
            state: Some(best.state().clone()),
            replica_states: (!cfg.store_target_only)
                .then(|| grid.replicas.iter().map(|r| r.state().clone()).collect()),
            feasible_fraction: Some(feasible as f64 / j_repeats as f64),
            acceptance_rates_p: Vec::new(),
            acceptance_rates_beta,
            attempted_p: Vec::new(),
            attempted_beta,
        });
    }
    Ok(trace)
}
