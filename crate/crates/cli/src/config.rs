use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempergrid::constraints::min_max_degree;
use tempergrid::instances::{self, Bundle, GeneratedInstance, WishartSpec};
use tempergrid::{sparsify, ConstrainedProblem, Error, IsingModel, Result, RunConfig, Schedule, ScheduleConfig};

pub const CONFIG_VERSION: u32 = 1;

/// Everything a `run` needs. Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub instance: InstanceSource,
    #[serde(default)]
    pub sparsify: Option<SparsifyParams>,
    pub schedule: ScheduleSource,
    pub run: RunConfig,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Bundle { path: PathBuf },
    Wishart { n_logical: usize, alpha: f64, seed: u64 },
    FiveNode {
        #[serde(default)]
        couplings: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsifyParams {
    pub copies: usize,
    /// Smallest feasible cap when absent.
    #[serde(default)]
    pub max_degree: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSource {
    Adaptive(ScheduleConfig),
    Explicit { betas: Vec<f64>, penalties: Vec<f64> },
    File(PathBuf),
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = instances::read_json(path)?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported config version {} (expected {CONFIG_VERSION})",
                path.display(),
                cfg.version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.run.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.instance {
            InstanceSource::Bundle { path } => fix(path),
            InstanceSource::FiveNode { couplings: Some(p) } => fix(p),
            _ => {}
        }
        if let ScheduleSource::File(p) = &mut self.schedule {
            fix(p);
        }
        fix(&mut self.output);
    }
}

/// A bundle in memory plus the problem the engine samples.
pub struct Loaded {
    pub bundle: Bundle,
    pub problem: ConstrainedProblem,
}

impl Loaded {
    pub fn n_logical(&self) -> usize {
        self.bundle.model.n_spins()
    }
}

pub fn load_instance(source: &InstanceSource, params: Option<SparsifyParams>) -> Result<Loaded> {
    let mut bundle = match source {
        InstanceSource::Bundle { path } => Bundle::read(path)?,
        InstanceSource::Wishart { n_logical, alpha, seed } => {
            let instance: GeneratedInstance = instances::generate_wishart(&WishartSpec::new(*n_logical, *alpha, *seed)?)?;
            Bundle::from_wishart(&instance)
        }
        InstanceSource::FiveNode { couplings } => five_node_bundle(couplings.as_deref())?,
    };
    if let Some(p) = params {
        apply_sparsify(&mut bundle, p)?;
    }
    let problem = match &bundle.physical {
        Some(physical) => physical.clone(),
        None => ConstrainedProblem::unconstrained(bundle.model.clone()),
    };
    Ok(Loaded { bundle, problem })
}

pub fn five_node_bundle(couplings: Option<&Path>) -> Result<Bundle> {
    let model = instances::five_node_complete(couplings)?;
    let (state, energy) = tempergrid::oracle::exact_ground_state(&model)?;
    let meta = serde_json::json!({
        "kind": "five_node",
        "source": couplings.map_or("default".to_string(), |p| p.display().to_string()),
        "version": env!("CARGO_PKG_VERSION"),
    });
    Ok(Bundle {
        planted: Some(instances::Planted { state, energy }),
        ..Bundle::new(model, meta)
    })
}

pub fn max_logical_degree(model: &IsingModel) -> usize {
    (0..model.n_spins()).map(|i| model.degree(i)).max().unwrap_or(0)
}

pub fn apply_sparsify(bundle: &mut Bundle, params: SparsifyParams) -> Result<()> {
    let max_degree = params
        .max_degree
        .unwrap_or_else(|| min_max_degree(max_logical_degree(&bundle.model), params.copies));
    let (physical, map) = sparsify(&bundle.model, params.copies, max_degree)?;
    bundle.physical = Some(physical);
    bundle.map = Some(map);
    Ok(())
}

pub fn resolve_schedule(source: &ScheduleSource, problem: &ConstrainedProblem) -> Result<Schedule> {
    match source {
        ScheduleSource::Adaptive(cfg) => tempergrid::build_schedule(problem, cfg),
        ScheduleSource::Explicit { betas, penalties } => Schedule::explicit(betas.clone(), penalties.clone()),
        ScheduleSource::File(path) => {
            let schedule: Schedule = instances::read_json(path)?;
            schedule.validate()?;
            Ok(schedule)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let text = r#"{
            "version": 1,
            "instance": {"kind": "wishart", "n_logical": 8, "alpha": 0.75, "seed": 3},
            "sparsify": {"copies": 3},
            "schedule": {"explicit": {"betas": [0.5, 1.0], "penalties": [1.0, 2.0]}},
            "run": {"total_sweeps": 100, "sweeps_per_swap": 10, "seed": 1},
            "output": "out"
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.sparsify.unwrap().copies, 3);
        let round: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(round, cfg);

        let typo = text.replace("\"output\"", "\"outptu\"");
        assert!(serde_json::from_str::<ExperimentConfig>(&typo).is_err());
        let nested = text.replace("\"copies\": 3", "\"copies\": 3, \"copy\": 2");
        assert!(serde_json::from_str::<ExperimentConfig>(&nested).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut cfg = ExperimentConfig {
            version: 1,
            instance: InstanceSource::Bundle { path: "inst".into() },
            sparsify: None,
            schedule: ScheduleSource::File("s.json".into()),
            run: RunConfig::new(10, 10, 0),
            output: "/abs/out".into(),
        };
        cfg.resolve(Path::new("/cfg"));
        assert_eq!(cfg.instance, InstanceSource::Bundle { path: "/cfg/inst".into() });
        assert_eq!(cfg.schedule, ScheduleSource::File("/cfg/s.json".into()));
        assert_eq!(cfg.output, PathBuf::from("/abs/out"));
    }
}
