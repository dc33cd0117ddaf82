use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use tempergrid::analysis::{
    energy_series, fss_collapse, kl_curve, log_checkpoints, logical_states, residual_curve, swap_rate_report,
    time_to_target, CollapseOptions, CurvePoint, Infeasible, ResidualCurve, SwapRateReport, TrialSeries,
};
use tempergrid::engine::{record_round, run_2dpt_with};
use tempergrid::instances::{self, Bundle, WishartSpec};
use tempergrid::oracle::enumerate_boltzmann;
use tempergrid::{run_jcolumn_pt, Error, Result, ScheduleConfig, Trace};

use crate::config::{self, ExperimentConfig, InstanceSource, SparsifyParams};

pub const TRACE_FILE: &str = "trace.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SCHEDULE_FILE: &str = "schedule.json";
pub const INSTANCE_DIR: &str = "instance";
/// Wall-clock details that differ between otherwise identical runs.
pub const RUN_META_FILE: &str = "run_meta.json";

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
    }
}

fn json_text<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn generate_wishart(spec: WishartSpec, verify: bool, out: &Path, force: bool) -> Result<()> {
    let instance = if verify {
        let (instance, rejected) = instances::generate_wishart_verified(&spec, 100)?;
        if !rejected.is_empty() {
            log::warn!("rejected seeds {rejected:?}; using seed {}", instance.spec.seed);
        }
        instance
    } else {
        instances::generate_wishart(&spec)?
    };
    let mut bundle = Bundle::from_wishart(&instance);
    bundle.meta["verified"] = verify.into();
    bundle.write(out, force)?;
    log::info!(
        "wrote {} (n = {}, planted energy {})",
        out.display(),
        spec.n_logical,
        instance.planted_energy
    );
    Ok(())
}

pub fn generate_five_node(couplings: Option<&Path>, out: &Path, force: bool) -> Result<()> {
    let bundle = config::five_node_bundle(couplings)?;
    bundle.write(out, force)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

pub fn sparsify(dir: &Path, params: SparsifyParams, force: bool) -> Result<()> {
    let mut bundle = Bundle::read(dir)?;
    if bundle.map.is_some() && !force {
        return Err(Error::Exists(dir.join(instances::MAP_FILE)));
    }
    config::apply_sparsify(&mut bundle, params)?;
    bundle.write(dir, true)?;
    let map = bundle.map.as_ref().expect("just sparsified");
    log::info!(
        "{} logical -> {} physical spins, max degree {}",
        map.n_logical,
        map.n_physical,
        map.max_degree
    );
    Ok(())
}

pub fn schedule(dir: &Path, cfg_path: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut cfg: ScheduleConfig = match cfg_path {
        Some(p) => instances::read_json(p)?,
        None => ScheduleConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let loaded = config::load_instance(&InstanceSource::Bundle { path: dir.to_path_buf() }, None)?;
    let schedule = tempergrid::build_schedule(&loaded.problem, &cfg)?;
    log::info!("schedule: {} x {} replicas", schedule.betas.len(), schedule.penalties.len());
    emit(out, &json_text(&schedule)?)
}

#[derive(Debug, Serialize)]
struct RunSummary {
    mode: &'static str,
    rows: usize,
    cols: usize,
    rounds: usize,
    total_sweeps: u64,
    /// Logical cost of the last usable target sample.
    final_energy: Option<f64>,
    reference_energy: Option<f64>,
    final_rho_e: Option<f64>,
    feasible_fraction: f64,
    swap_rates: SwapRateReport,
}

pub fn run(cfg_path: &Path, baseline: bool, force: bool, threads: usize) -> Result<()> {
    let started = Instant::now();
    let cfg = ExperimentConfig::load(cfg_path)?;
    let trace_path = cfg.output.join(TRACE_FILE);
    if trace_path.exists() && !force {
        return Err(Error::Exists(trace_path));
    }
    let loaded = config::load_instance(&cfg.instance, cfg.sparsify)?;
    let schedule = config::resolve_schedule(&cfg.schedule, &loaded.problem)?;
    let rounds = cfg.run.rounds();
    let (rows, cols) = (schedule.betas.len(), schedule.penalties.len());

    let (trace, mode, policy) = if baseline {
        log::info!(
            "J-column baseline: {cols} columns of {rows} temperatures at P = {}",
            schedule.mean_penalty()
        );
        let trace = run_jcolumn_pt(&loaded.problem, &schedule.betas, schedule.mean_penalty(), cols, &cfg.run)?;
        (trace, "jcolumn", Infeasible::Drop)
    } else {
        log::info!("2D-PT: {rows} x {cols} replicas, {rounds} rounds");
        let mut trace = Trace::default();
        let step = (rounds / 10).max(1);
        run_2dpt_with(&loaded.problem, &schedule, &cfg.run, |view| {
            trace.records.push(record_round(view, cfg.run.store_target_only));
            if view.round % step == 0 {
                log::info!("round {}/{rounds}", view.round);
            }
        })?;
        (trace, "2dpt", Infeasible::Decode)
    };

    let bundle = &loaded.bundle;
    let energies = energy_series(&trace, &bundle.model, bundle.map.as_ref(), policy)?;
    let final_energy = energies.iter().rev().find_map(|(_, e)| *e);
    let reference = bundle.reference_energy();
    let feasible_fraction = if baseline {
        let f: Vec<f64> = trace.records.iter().filter_map(|r| r.feasible_fraction).collect();
        f.iter().sum::<f64>() / f.len().max(1) as f64
    } else {
        trace.records.iter().filter(|r| r.feasible).count() as f64 / trace.records.len().max(1) as f64
    };
    let summary = RunSummary {
        mode,
        rows,
        cols,
        rounds: trace.records.len(),
        total_sweeps: cfg.run.total_sweeps,
        final_energy,
        reference_energy: reference,
        final_rho_e: final_energy.zip(reference).map(|(e, r)| (e - r) / loaded.n_logical() as f64),
        feasible_fraction,
        swap_rates: swap_rate_report(&trace),
    };

    fs::create_dir_all(&cfg.output).map_err(|e| Error::Io {
        path: cfg.output.clone(),
        source: e,
    })?;
    bundle.write(&cfg.output.join(INSTANCE_DIR), true)?;
    instances::write_json(&cfg.output.join(SCHEDULE_FILE), &schedule)?;
    fs::write(&trace_path, trace.to_jsonl()).map_err(|e| Error::Io {
        path: trace_path.clone(),
        source: e,
    })?;
    instances::write_json(&cfg.output.join(SUMMARY_FILE), &summary)?;
    instances::write_json(
        &cfg.output.join(RUN_META_FILE),
        &serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "threads": threads,
            "elapsed_seconds": started.elapsed().as_secs_f64(),
        }),
    )?;
    log::info!(
        "wrote {}; feasible fraction {:.3}, final rho_E {:?}",
        cfg.output.display(),
        summary.feasible_fraction,
        summary.final_rho_e
    );
    Ok(())
}

pub fn kl(trace_path: &Path, dir: &Path, beta: f64, points: usize, out: Option<&Path>) -> Result<()> {
    let bundle = Bundle::read(dir)?;
    let trace = read_trace(trace_path)?;
    let exact = enumerate_boltzmann(&bundle.model, beta)?;
    let samples: Vec<_> = logical_states(&trace, bundle.map.as_ref(), Infeasible::Decode)?
        .into_iter()
        .filter_map(|(t, s)| s.map(|s| (t, s)))
        .collect();
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Err(Error::Input(format!("{} has no samples", trace_path.display())));
    };
    let checkpoints = log_checkpoints(first.0, last.0, points);
    let mut text = String::from("sweeps,samples,kl,reference\n");
    for p in kl_curve(&samples, &exact, &checkpoints)? {
        text.push_str(&format!("{},{},{},{}\n", p.sweeps, p.samples, p.kl, p.reference));
    }
    emit(out, &text)
}

#[derive(Debug, Serialize)]
struct TraceReport {
    trace: PathBuf,
    time_to_target: Option<u64>,
    swap_rates: SwapRateReport,
}

#[allow(clippy::too_many_arguments)]
pub fn analyze(
    traces: &[PathBuf],
    dir: &Path,
    policy: Infeasible,
    threshold: f64,
    resamples: usize,
    seed: u64,
    out: Option<&Path>,
    report: Option<&Path>,
) -> Result<()> {
    let bundle = Bundle::read(dir)?;
    let n = bundle.model.n_spins();
    let e_gs = bundle.reference_energy();
    let mut trials = Vec::with_capacity(traces.len());
    let mut reports = Vec::with_capacity(traces.len());
    for path in traces {
        let trace = read_trace(path)?;
        let energies = energy_series(&trace, &bundle.model, bundle.map.as_ref(), policy)?;
        reports.push(TraceReport {
            trace: path.clone(),
            time_to_target: e_gs.and_then(|e| time_to_target(&energies, e, n, threshold)),
            swap_rates: swap_rate_report(&trace),
        });
        trials.push(TrialSeries {
            instance: 0,
            e_gs,
            energies,
        });
    }
    if let Some(path) = report {
        instances::write_json(path, &reports)?;
    }
    if e_gs.is_none() {
        return Err(Error::Input(format!(
            "{} has no {}; residual energies need a ground-state reference",
            dir.display(),
            instances::PLANTED_FILE
        )));
    }
    let curve = residual_curve(&trials, n, resamples, seed)?;
    if curve.degenerate {
        log::warn!("some points rest on a single sample; their intervals are zero");
    }
    emit(out, &curve.to_csv())
}

/// Parses `N=PATH` where `PATH` is a residual CSV from `analyze`.
pub fn parse_curve_arg(arg: &str) -> std::result::Result<(usize, PathBuf), String> {
    let (n, path) = arg.split_once('=').ok_or_else(|| format!("expected N=PATH, got {arg:?}"))?;
    let n = n.trim().parse().map_err(|e| format!("bad size {n:?}: {e}"))?;
    Ok((n, PathBuf::from(path)))
}

pub fn read_curve_csv(n_logical: usize, path: &Path) -> Result<ResidualCurve> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let bad = |line: usize, what: &str| Error::Input(format!("{}:{line}: {what}", path.display()));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "t,rho_E,ci95" => {}
        _ => return Err(bad(1, "expected header t,rho_E,ci95")),
    }
    let mut points = Vec::new();
    for (k, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [t, rho, ci] = fields[..] else {
            return Err(bad(k + 1, "expected 3 columns"));
        };
        points.push(CurvePoint {
            t: t.parse().map_err(|_| bad(k + 1, "bad t"))?,
            rho_e: rho.parse().map_err(|_| bad(k + 1, "bad rho_E"))?,
            ci95: ci.parse().map_err(|_| bad(k + 1, "bad ci95"))?,
        });
    }
    Ok(ResidualCurve {
        n_logical,
        points,
        trials: 0,
        instances: 0,
        degenerate: false,
    })
}

pub fn collapse(curves: &[(usize, PathBuf)], options: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let opts: CollapseOptions = match options {
        Some(p) => instances::read_json(p)?,
        None => CollapseOptions::default(),
    };
    let curves = curves
        .iter()
        .map(|(n, p)| read_curve_csv(*n, p))
        .collect::<Result<Vec<_>>>()?;
    let result = fss_collapse(&curves, &opts)?;
    log::info!("mu = {} (objective {})", result.mu, result.objective);
    emit(out, &json_text(&result)?)
}

fn read_trace(path: &Path) -> Result<Trace> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Trace::from_jsonl(&text)
}
