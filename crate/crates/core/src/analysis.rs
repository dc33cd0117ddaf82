//! Post-processing of traces: residual energies, KL curves, swap rates and
//! finite-size-scaling collapse.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::SparsificationMap;
use crate::engine::Trace;
use crate::error::{Error, Result};
use crate::ising::{IsingModel, SpinState};
use crate::oracle::{kl_divergence, ExactDistribution, Histogram};
use crate::rng;

/// What to do with stored states that violate constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Infeasible {
    /// Majority-vote decode, then evaluate the logical cost.
    #[default]
    Decode,
    /// Skip the sample.
    Drop,
}

/// Logical state of every record, `None` where dropped.
pub fn logical_states(
    trace: &Trace,
    map: Option<&SparsificationMap>,
    policy: Infeasible,
) -> Result<Vec<(u64, Option<SpinState>)>> {
    trace
        .records
        .iter()
        .map(|r| {
            let Some(state) = &r.state else {
                return Err(Error::input(format!("round {} has no stored state", r.round)));
            };
            if !r.feasible && policy == Infeasible::Drop {
                return Ok((r.sweep_count, None));
            }
            let logical = match map {
                Some(m) => m.decode(state)?.0,
                None => state.clone(),
            };
            Ok((r.sweep_count, Some(logical)))
        })
        .collect()
}

/// Logical cost energy per record.
pub fn energy_series(
    trace: &Trace,
    logical: &IsingModel,
    map: Option<&SparsificationMap>,
    policy: Infeasible,
) -> Result<Vec<(u64, Option<f64>)>> {
    logical_states(trace, map, policy)?
        .into_iter()
        .map(|(t, s)| Ok((t, s.map(|s| logical.energy(&s)).transpose()?)))
        .collect()
}

/// One trial's energies against its instance's ground-state reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSeries {
    pub instance: usize,
    pub e_gs: Option<f64>,
    pub energies: Vec<(u64, Option<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: u64,
    pub rho_e: f64,
    /// Half-width of the bootstrap 95% interval.
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCurve {
    pub n_logical: usize,
    pub points: Vec<CurvePoint>,
    pub trials: usize,
    pub instances: usize,
    /// Some point rests on a single sample, so its interval has zero width.
    pub degenerate: bool,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Mean residual energy per spin `(E - E_gs) / N` at each sweep count, with
/// a percentile bootstrap over trials.
pub fn residual_curve(trials: &[TrialSeries], n_logical: usize, resamples: usize, seed: u64) -> Result<ResidualCurve> {
    if n_logical == 0 {
        return Err(Error::input("n_logical must be positive"));
    }
    let mut by_t: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (k, trial) in trials.iter().enumerate() {
        let e_gs = trial
            .e_gs
            .ok_or_else(|| Error::input(format!("trial {k} (instance {}) has no ground-state reference", trial.instance)))?;
        for &(t, e) in &trial.energies {
            if let Some(e) = e {
                by_t.entry(t).or_default().push((e - e_gs) / n_logical as f64);
            }
        }
    }
    let mut degenerate = false;
    let points = by_t
        .into_iter()
        .enumerate()
        .map(|(k, (t, values))| {
            degenerate |= values.len() < 2;
            let (rho_e, ci95) = mean_with_bootstrap(&values, resamples, rng::derive_seed(seed, k as u64));
            CurvePoint { t, rho_e, ci95 }
        })
        .collect();
    let mut instances: Vec<usize> = trials.iter().map(|t| t.instance).collect();
    instances.sort_unstable();
    instances.dedup();
    Ok(ResidualCurve {
        n_logical,
        points,
        trials: trials.len(),
        instances: instances.len(),
        degenerate,
    })
}

fn mean_with_bootstrap(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 || resamples == 0 {
        return (mean, 0.0);
    }
    let mut r = rng::stream(seed, 0);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[r.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = means[((0.025 * resamples as f64) as usize).min(resamples - 1)];
    let hi = means[((0.975 * resamples as f64) as usize).min(resamples - 1)];
    (mean, 0.5 * (hi - lo))
}

impl ResidualCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,rho_E,ci95\n");
        for p in &self.points {
            writeln!(out, "{},{},{}", p.t, p.rho_e, p.ci95).unwrap();
        }
        out
    }

    /// Whitespace-separated columns for gnuplot.
    pub fn to_dat(&self) -> String {
        let mut out = format!("# N = {}\n# t rho_E ci95\n", self.n_logical);
        for p in &self.points {
            writeln!(out, "{} {} {}", p.t, p.rho_e, p.ci95).unwrap();
        }
        out
    }
}

/// First sweep count at which the residual energy per spin is at most
/// `threshold`, or `None` if it never is.
pub fn time_to_target(energies: &[(u64, Option<f64>)], e_gs: f64, n_logical: usize, threshold: f64) -> Option<u64> {
    energies
        .iter()
        .find(|(_, e)| e.is_some_and(|e| (e - e_gs) / n_logical as f64 <= threshold))
        .map(|&(t, _)| t)
}

/// Median of hitting times where a miss counts as later than any hit.
/// For an even count the lower middle is returned.
pub fn median_hitting_time(times: &[Option<u64>]) -> Option<u64> {
    if times.is_empty() {
        return None;
    }
    let mut sorted = times.to_vec();
    sorted.sort_by_key(|t| t.unwrap_or(u64::MAX));
    sorted[(sorted.len() - 1) / 2]
}

/// Paired comparison of hitting times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X >= wins)` for `X ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

/// One-sided sign test that `a` hits strictly earlier than `b`.
pub fn sign_test(a: &[Option<u64>], b: &[Option<u64>]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::input(format!("{} versus {} paired samples", a.len(), b.len())));
    }
    let key = |t: Option<u64>| t.unwrap_or(u64::MAX);
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (&x, &y) in a.iter().zip(b) {
        match key(x).cmp(&key(y)) {
            std::cmp::Ordering::Less => wins += 1,
            std::cmp::Ordering::Greater => losses += 1,
            std::cmp::Ordering::Equal => ties += 1,
        }
    }
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value: binomial_upper_tail(wins + losses, wins),
    })
}

fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    let mut ln_choose = 0.0;
    let mut tail = 0.0;
    for i in 0..=n {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            tail += (ln_choose - n as f64 * std::f64::consts::LN_2).exp();
        }
    }
    tail.min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRate {
    pub row: usize,
    pub col: usize,
    pub attempted: u64,
    pub rate: Option<f64>,
}

/// Cumulative acceptance per adjacent pair at the end of a trace. A
/// penalty-axis pair `(row, col)` joins columns `col` and `col + 1`; a
/// temperature-axis pair joins rows `row` and `row + 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SwapRateReport {
    pub penalty_pairs: Vec<PairRate>,
    pub beta_pairs: Vec<PairRate>,
}

pub fn swap_rate_report(trace: &Trace) -> SwapRateReport {
    let Some(last) = trace.records.last() else {
        return SwapRateReport::default();
    };
    let flatten = |rates: &Vec<Vec<Option<f64>>>, attempts: &Vec<Vec<u64>>| {
        rates
            .iter()
            .zip(attempts)
            .enumerate()
            .flat_map(|(row, (r, a))| {
                r.iter().zip(a).enumerate().map(move |(col, (&rate, &attempted))| PairRate {
                    row,
                    col,
                    attempted,
                    rate,
                })
            })
            .collect()
    };
    SwapRateReport {
        penalty_pairs: flatten(&last.acceptance_rates_p, &last.attempted_p),
        beta_pairs: flatten(&last.acceptance_rates_beta, &last.attempted_beta),
    }
}

impl SwapRateReport {
    pub fn is_empty(&self) -> bool {
        self.penalty_pairs.is_empty() && self.beta_pairs.is_empty()
    }

    /// Fraction of attempted pairs (both axes) whose rate lies in `[lo, hi]`.
    pub fn fraction_within(&self, lo: f64, hi: f64) -> Option<f64> {
        let rates: Vec<f64> = self
            .penalty_pairs
            .iter()
            .chain(&self.beta_pairs)
            .filter_map(|p| p.rate)
            .collect();
        if rates.is_empty() {
            return None;
        }
        Some(rates.iter().filter(|r| (lo..=hi).contains(*r)).count() as f64 / rates.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlPoint {
    pub sweeps: u64,
    pub samples: u64,
    pub kl: f64,
    /// `(k - 1) / (2 samples)`, the expectation for independent samples.
    pub reference: f64,
}

/// KL divergence of the time-accumulated histogram of `samples` from
/// `exact`, evaluated after the last sample at or before each checkpoint.
pub fn kl_curve(samples: &[(u64, SpinState)], exact: &ExactDistribution, checkpoints: &[u64]) -> Result<Vec<KlPoint>> {
    let k = 1u64 << exact.n;
    let mut hist = Histogram::new(exact.n);
    let mut next = 0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &cp in checkpoints {
        while next < samples.len() && samples[next].0 <= cp {
            hist.record_state(&samples[next].1);
            next += 1;
        }
        if hist.total == 0 {
            continue;
        }
        out.push(KlPoint {
            sweeps: cp,
            samples: hist.total,
            kl: kl_divergence(&hist, exact)?,
            reference: (k - 1) as f64 / (2.0 * hist.total as f64),
        });
    }
    Ok(out)
}

/// `n` checkpoints spaced evenly in `ln t` between `lo` and `hi`, deduplicated.
pub fn log_checkpoints(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    let (a, b) = ((lo.max(1) as f64).ln(), (hi.max(1) as f64).ln());
    let mut out: Vec<u64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n.max(2) - 1) as f64).exp().round() as u64)
        .collect();
    out.dedup();
    out
}

/// Least-squares slope of `ln y` against `ln x` over positive points.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollapseOptions {
    pub b: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_step: f64,
    /// Sweep range used from every curve, inclusive.
    pub window: Option<(f64, f64)>,
    /// Abscissa points in the shared rescaled grid.
    pub grid_points: usize,
    /// Fewest grid points covered by two or more curves for a valid `mu`.
    pub min_overlap: usize,
}

impl Default for CollapseOptions {
    fn default() -> Self {
        CollapseOptions {
            b: 0.0,
            mu_min: 0.0,
            mu_max: 15.0,
            mu_step: 0.1,
            window: None,
            grid_points: 100,
            min_overlap: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub b: f64,
    pub mu: f64,
    pub objective: f64,
    pub window: (f64, f64),
    /// `(mu, objective)` for every grid value with enough overlap.
    pub scan: Vec<(f64, f64)>,
}

/// Rescales each curve to `(ln t - mu ln N, ln rho + b ln N)` and, for each
/// `mu` on the grid, measures the mean squared deviation from the pointwise
/// median on a shared abscissa. Points with `rho <= 0` are dropped.
pub fn fss_collapse(curves: &[ResidualCurve], opts: &CollapseOptions) -> Result<CollapseResult> {
    let mut sizes: Vec<usize> = curves.iter().map(|c| c.n_logical).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::input(format!(
            "collapse needs at least 3 distinct sizes, got {}",
            sizes.len()
        )));
    }
    if !(opts.mu_step > 0.0 && opts.mu_max >= opts.mu_min) {
        return Err(Error::config("mu grid must have a positive step and mu_max >= mu_min"));
    }
    let (t_lo, t_hi) = opts.window.unwrap_or((0.0, f64::INFINITY));
    let logs: Vec<(f64, Vec<(f64, f64)>)> = curves
        .iter()
        .map(|c| {
            let pts = c
                .points
                .iter()
                .filter(|p| (p.t as f64) >= t_lo && (p.t as f64) <= t_hi && p.rho_e > 0.0 && p.t > 0)
                .map(|p| ((p.t as f64).ln(), p.rho_e.ln()))
                .collect();
            ((c.n_logical as f64).ln(), pts)
        })
        .collect();
    if logs.iter().all(|(_, p)| p.is_empty()) {
        return Err(Error::input("collapse window excludes every point"));
    }
    let window = (
        logs.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).fold(f64::INFINITY, f64::min).exp(),
        logs.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).fold(f64::NEG_INFINITY, f64::max).exp(),
    );

    let steps = ((opts.mu_max - opts.mu_min) / opts.mu_step + 1e-9).floor() as usize;
    let scan: Vec<(f64, f64)> = (0..=steps)
        .into_par_iter()
        .map(|k| {
            let mu = opts.mu_min + k as f64 * opts.mu_step;
            (mu, collapse_objective(&logs, mu, opts))
        })
        .filter(|(_, o)| o.is_finite())
        .collect();
    let &(mu, objective) = scan
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::input("no mu on the grid gives enough overlap between curves"))?;
    Ok(CollapseResult {
        b: opts.b,
        mu,
        objective,
        window,
        scan,
    })
}

fn collapse_objective(logs: &[(f64, Vec<(f64, f64)>)], mu: f64, opts: &CollapseOptions) -> f64 {
    let scaled: Vec<Vec<(f64, f64)>> = logs
        .iter()
        .filter(|(_, p)| !p.is_empty())
        .map(|(ln_n, p)| p.iter().map(|&(x, y)| (x - mu * ln_n, y + opts.b * ln_n)).collect())
        .collect();
    let lo = scaled.iter().map(|c| c[0].0).fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().map(|c| c[c.len() - 1].0).fold(f64::NEG_INFINITY, f64::max);
    let m = opts.grid_points.max(2);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut covered = 0usize;
    for k in 0..m {
        let x = lo + (hi - lo) * k as f64 / (m - 1) as f64;
        let mut ys: Vec<f64> = scaled.iter().filter_map(|c| interpolate(c, x)).collect();
        if ys.len() < 2 {
            continue;
        }
        covered += 1;
        ys.sort_by(f64::total_cmp);
        let h = ys.len() / 2;
        let median = if ys.len() % 2 == 1 { ys[h] } else { 0.5 * (ys[h - 1] + ys[h]) };
        sum += ys.iter().map(|y| (y - median).powi(2)).sum::<f64>();
        count += ys.len();
    }
    if covered < opts.min_overlap {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

/// Linear interpolation on points sorted by `x`; `None` outside the range.
fn interpolate(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let (first, last) = (curve.first()?, curve.last()?);
    if x < first.0 || x > last.0 {
        return None;
    }
    let k = curve.partition_point(|p| p.0 < x);
    if k == 0 {
        return Some(first.1);
    }
    let (a, b) = (curve[k - 1], curve[k]);
    if b.0 == a.0 {
        return Some(b.1);
    }
    Some(a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::sparsify;
    use crate::engine::{run_2dpt, RoundRecord, RunConfig};
    use crate::schedule::Schedule;
    use crate::test_support::random_model;
    use crate::ConstrainedProblem;
    use rand_distr::{Distribution, Normal};

    fn record(round: u64, state: SpinState, feasible: bool) -> RoundRecord {
        RoundRecord {
            round,
            sweep_count: round * 10,
            f: 0.0,
            g: if feasible { 0.0 } else { 4.0 },
            feasible,
            state: Some(state),
            replica_states: None,
            feasible_fraction: None,
            acceptance_rates_p: vec![],
            acceptance_rates_beta: vec![],
            attempted_p: vec![],
            attempted_beta: vec![],
        }
    }

    fn synthetic(n: usize, rho: impl Fn(f64) -> f64) -> ResidualCurve {
        let points = (0..=70)
            .map(|k| {
                let t = 10f64.powf(3.0 + k as f64 * 0.1);
                CurvePoint {
                    t: t.round() as u64,
                    rho_e: rho(t),
                    ci95: 0.0,
                }
            })
            .collect();
        ResidualCurve {
            n_logical: n,
            points,
            trials: 1,
            instances: 1,
            degenerate: true,
        }
    }

    #[test]
    fn planted_trace_gives_flat_zero() {
        let model = random_model(4, 1);
        let (gs, e) = crate::oracle::exact_ground_state(&model).unwrap();
        let trace = Trace {
            records: (1..=5).map(|r| record(r, gs.clone(), true)).collect(),
        };
        let energies = energy_series(&trace, &model, None, Infeasible::Decode).unwrap();
        let curve = residual_curve(
            &[TrialSeries {
                instance: 0,
                e_gs: Some(e),
                energies,
            }],
            4,
            100,
            0,
        )
        .unwrap();
        assert_eq!(curve.points.len(), 5);
        assert!(curve.points.iter().all(|p| p.rho_e.abs() < 1e-12 && p.ci95 == 0.0));
        assert!(curve.degenerate);
        assert!(curve.to_csv().starts_with("t,rho_E,ci95\n10,"));
    }

    #[test]
    fn missing_reference_is_an_error() {
        let t = TrialSeries {
            instance: 0,
            e_gs: None,
            energies: vec![(1, Some(0.0))],
        };
        assert!(residual_curve(&[t], 3, 10, 0).is_err());
    }

    #[test]
    fn shifting_the_reference_shifts_every_point() {
        let trials: Vec<TrialSeries> = (0..4)
            .map(|k| TrialSeries {
                instance: k / 2,
                e_gs: Some(-10.0),
                energies: (1..20).map(|t| (t * 5, Some(-10.0 + 7.0 / t as f64 + k as f64 * 0.3))).collect(),
            })
            .collect();
        let base = residual_curve(&trials, 8, 200, 3).unwrap();
        let c = 2.5;
        let shifted_trials: Vec<TrialSeries> = trials
            .iter()
            .map(|t| TrialSeries {
                e_gs: Some(-10.0 - c),
                ..t.clone()
            })
            .collect();
        let shifted = residual_curve(&shifted_trials, 8, 200, 3).unwrap();
        assert_eq!(base.instances, 2);
        for (a, b) in base.points.iter().zip(&shifted.points) {
            assert!((b.rho_e - a.rho_e - c / 8.0).abs() < 1e-12);
            assert!((b.ci95 - a.ci95).abs() < 1e-9);
        }
    }

    #[test]
    fn drop_policy_skips_infeasible_rounds() {
        let model = random_model(3, 2);
        let (_, map) = sparsify(&model, 2, 4).unwrap();
        let logical = SpinState::new(vec![1, -1, 1]).unwrap();
        let good = map.embed(&logical);
        let mut bad = good.clone();
        bad.flip(1);
        let trace = Trace {
            records: vec![record(1, good, true), record(2, bad, false)],
        };
        let dropped = energy_series(&trace, &model, Some(&map), Infeasible::Drop).unwrap();
        assert_eq!(dropped[1].1, None);
        let decoded = energy_series(&trace, &model, Some(&map), Infeasible::Decode).unwrap();
        let e = model.energy(&logical).unwrap();
        assert_eq!(decoded[0].1, Some(e));
        assert!(decoded[1].1.is_some());
    }

    /// Interval width on i.i.d. data scales as 1/sqrt(trials).
    #[test]
    fn bootstrap_width_shrinks_with_trials() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let width = |trials: usize| {
            let mut r = rng::stream(11, trials as u64);
            let series: Vec<TrialSeries> = (0..trials)
                .map(|k| TrialSeries {
                    instance: k,
                    e_gs: Some(0.0),
                    energies: (1..=200).map(|t| (t, Some(normal.sample(&mut r)))).collect(),
                })
                .collect();
            let curve = residual_curve(&series, 1, 400, 5).unwrap();
            curve.points.iter().map(|p| p.ci95).sum::<f64>() / curve.points.len() as f64
        };
        let ratio = width(25) / width(100);
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "width ratio {ratio}");
    }

    #[test]
    fn hitting_times_and_sign_test() {
        let e = vec![(10, Some(5.0)), (20, None), (30, Some(1.2)), (40, Some(1.0))];
        assert_eq!(time_to_target(&e, 1.0, 4, 0.05), Some(30));
        assert_eq!(time_to_target(&e, 0.0, 4, 0.05), None);
        assert_eq!(median_hitting_time(&[Some(5), None, Some(1)]), Some(5));
        assert_eq!(median_hitting_time(&[None, None, Some(1)]), None);

        let a = vec![Some(1); 15].into_iter().chain(vec![None; 5]).collect::<Vec<_>>();
        let b = vec![Some(2); 20];
        let s = sign_test(&a, &b).unwrap();
        assert_eq!((s.wins, s.losses, s.ties), (15, 5, 0));
        assert!((s.p_value - 0.020694732666015625).abs() < 1e-12);
        assert!((binomial_upper_tail(10, 0) - 1.0).abs() < 1e-12);
        assert!((binomial_upper_tail(3, 3) - 0.125).abs() < 1e-15);
        assert!(sign_test(&a, &b[..3]).is_err());
    }

    #[test]
    fn swap_report_shapes() {
        let problem = ConstrainedProblem::unconstrained(random_model(4, 4));
        let single = run_2dpt(&problem, &Schedule::explicit(vec![1.0], vec![1.0]).unwrap(), &RunConfig::new(20, 2, 1)).unwrap();
        assert!(swap_rate_report(&single).is_empty());
        assert_eq!(swap_rate_report(&single).fraction_within(0.0, 1.0), None);

        let (physical, _) = sparsify(&random_model(3, 5), 2, 4).unwrap();
        let schedule = Schedule::explicit(vec![0.5, 1.0], vec![1.0, 2.0, 3.0]).unwrap();
        let trace = run_2dpt(&physical, &schedule, &RunConfig::new(400, 1, 2)).unwrap();
        let report = swap_rate_report(&trace);
        assert_eq!(report.penalty_pairs.len(), 4);
        assert_eq!(report.beta_pairs.len(), 3);
        assert!(report.penalty_pairs.iter().all(|p| p.attempted > 0));
        let f = report.fraction_within(0.0, 1.0).unwrap();
        assert_eq!(f, 1.0);
    }

    #[test]
    fn kl_curve_and_slope() {
        let exact = crate::oracle::enumerate_boltzmann(&random_model(3, 6), 0.0).unwrap();
        let samples: Vec<(u64, SpinState)> = (0..64u64).map(|t| (t + 1, SpinState::from_code(t % 8, 3))).collect();
        let curve = kl_curve(&samples, &exact, &[0, 8, 64]).unwrap();
        assert_eq!(curve.len(), 2);
        assert!(curve[0].kl.abs() < 1e-12 && curve[1].kl.abs() < 1e-12);
        assert_eq!(curve[0].samples, 8);
        assert!((curve[1].reference - 7.0 / 128.0).abs() < 1e-15);

        let pts: Vec<(f64, f64)> = (1..10).map(|k| (k as f64, 3.0 / k as f64)).collect();
        assert!((log_log_slope(&pts).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(log_checkpoints(1, 1000, 4), vec![1, 10, 100, 1000]);
    }

    fn g(u: f64) -> f64 {
        0.5 * (1.0 + u).powf(-0.7)
    }

    #[test]
    fn collapse_recovers_planted_exponent() {
        let curves: Vec<ResidualCurve> = [4usize, 6, 8, 12]
            .iter()
            .map(|&n| synthetic(n, |t| g(t * (n as f64).powf(-5.0) * 1e3)))
            .collect();
        let res = fss_collapse(&curves, &CollapseOptions::default()).unwrap();
        assert!((res.mu - 5.0).abs() <= 0.1 + 1e-9, "mu = {}", res.mu);
        assert!(res.objective >= 0.0);
    }

    #[test]
    fn identical_curves_collapse_at_zero() {
        let curves: Vec<ResidualCurve> = [8usize, 16, 32].iter().map(|&n| synthetic(n, |t| g(t / 1e5))).collect();
        let res = fss_collapse(&curves, &CollapseOptions::default()).unwrap();
        assert_eq!(res.mu, 0.0);
        assert!(res.objective < 1e-20);
    }

    #[test]
    fn collapse_invariances() {
        let make = |scale: f64| -> Vec<ResidualCurve> {
            [5usize, 7, 10]
                .iter()
                .map(|&n| synthetic(n, move |t| g(t / scale * (n as f64).powf(-3.0) * 10.0) * (1.0 + n as f64 * 0.01)))
                .collect()
        };
        let opts = CollapseOptions::default();
        let base = fss_collapse(&make(1.0), &opts).unwrap();
        let mut reversed = make(1.0);
        reversed.reverse();
        assert_eq!(fss_collapse(&reversed, &opts).unwrap(), base);

        // Multiplying every t by the same factor leaves every objective as is.
        let mut shifted = make(1.0);
        for c in &mut shifted {
            for p in &mut c.points {
                p.t *= 100;
            }
        }
        let moved = fss_collapse(&shifted, &opts).unwrap();
        assert_eq!(moved.mu, base.mu);
        for (a, b) in base.scan.iter().zip(&moved.scan) {
            assert!((a.1 - b.1).abs() < 1e-6 * a.1.max(1e-12), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn collapse_refusals() {
        let two: Vec<ResidualCurve> = [8usize, 16].iter().map(|&n| synthetic(n, |t| 1.0 / t)).collect();
        assert!(fss_collapse(&two, &CollapseOptions::default()).is_err());
        let three: Vec<ResidualCurve> = [8usize, 16, 32].iter().map(|&n| synthetic(n, |t| 1.0 / t)).collect();
        let opts = CollapseOptions {
            window: Some((1.0, 10.0)),
            ..Default::default()
        };
        assert!(fss_collapse(&three, &opts).is_err());
    }
}
