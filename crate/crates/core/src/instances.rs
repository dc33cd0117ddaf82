//! Problem generators and on-disk instance bundles.
//!
//! # Planted Wishart recipe
//!
//! For `n` spins and density `alpha`, with `m = round(alpha n)`:
//!
//! 1. draw the planted state `t` uniformly from `{-1, +1}^n`;
//! 2. draw `m` columns `z ~ N(0, I_n)`, project out the planted direction,
//!    `w = z - (z.t / n) t`, and rescale by `sqrt(n / (n - 1))` so each
//!    column has covariance `(n / (n - 1)) (I - t t^T / n)`;
//! 3. set `J = -(1/n) W W^T` with the diagonal dropped, and `h = 0`.
//!
//! With this convention `E(s) = (1/2n) (sum_mu (w_mu . s)^2 - tr W W^T)`,
//! which is minimized by any `s` with `W^T s = 0`. Every column is
//! orthogonal to `t`, so `t` and `-t` are ground states. All draws come from
//! stream 0 of the instance seed, planted state first.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstrainedProblem, SparsificationMap};
use crate::error::{Error, Result};
use crate::ising::{IsingModel, SpinState};
use crate::oracle::{tabulate_energies, MAX_ENUMERATION_SPINS};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WishartSpec {
    pub n_logical: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl WishartSpec {
    pub fn new(n_logical: usize, alpha: f64, seed: u64) -> Result<Self> {
        let spec = WishartSpec {
            n_logical,
            alpha,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_logical < 3 {
            return Err(Error::config(format!("Wishart instances need n >= 3, got {}", self.n_logical)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.columns() == 0 {
            return Err(Error::config("round(alpha n) must be at least 1"));
        }
        Ok(())
    }

    pub fn columns(&self) -> usize {
        (self.alpha * self.n_logical as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedInstance {
    pub model: IsingModel,
    pub planted_state: SpinState,
    pub planted_energy: f64,
    /// Parameters (including the seed) that produced this instance.
    pub spec: WishartSpec,
}

pub fn generate_wishart(spec: &WishartSpec) -> Result<GeneratedInstance> {
    spec.validate()?;
    let n = spec.n_logical;
    let m = spec.columns();
    let mut r = rng::stream(spec.seed, 0);
    let t = SpinState::random(n, &mut r);
    let scale = (n as f64 / (n as f64 - 1.0)).sqrt();

    // Row-major n x m.
    let mut w = vec![0.0; n * m];
    for mu in 0..m {
        let z: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let overlap = z.iter().zip(t.as_slice()).map(|(z, &s)| z * f64::from(s)).sum::<f64>() / n as f64;
        for i in 0..n {
            w[i * m + mu] = scale * (z[i] - overlap * f64::from(t.get(i)));
        }
    }

    let mut couplings = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = (0..m).map(|mu| w[i * m + mu] * w[j * m + mu]).sum();
            couplings.push((i, j, -dot / n as f64));
        }
    }
    let model = IsingModel::new(n, couplings, vec![0.0; n])?;
    let planted_energy = model.energy(&t)?;
    Ok(GeneratedInstance {
        model,
        planted_state: t,
        planted_energy,
        spec: *spec,
    })
}

/// Outcome of checking a planted instance by exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedCheck {
    pub ground_energy: f64,
    /// Lowest energy over states other than `t` and `-t`.
    pub best_other: f64,
}

impl PlantedCheck {
    /// `t` is the unique ground state up to a global flip, by a margin
    /// above floating-point noise.
    pub fn is_unique(&self, planted_energy: f64) -> bool {
        let tol = 1e-9 * planted_energy.abs().max(1.0);
        (planted_energy - self.ground_energy).abs() <= tol && self.best_other > planted_energy + tol
    }
}

pub fn check_planted(instance: &GeneratedInstance) -> Result<PlantedCheck> {
    let n = instance.model.n_spins();
    if n > MAX_ENUMERATION_SPINS {
        return Err(Error::TooLarge {
            n,
            limit: MAX_ENUMERATION_SPINS,
        });
    }
    let energies = tabulate_energies(&instance.model)?;
    let t = instance.planted_state.code();
    let minus_t = instance.planted_state.inverted().code();
    let mut check = PlantedCheck {
        ground_energy: f64::INFINITY,
        best_other: f64::INFINITY,
    };
    for (code, &e) in energies.iter().enumerate() {
        check.ground_energy = check.ground_energy.min(e);
        if code as u64 != t && code as u64 != minus_t {
            check.best_other = check.best_other.min(e);
        }
    }
    Ok(check)
}

/// Generates and enumerates, moving to `seed + 1` whenever the planted state
/// is not the unique ground state up to a global flip. Returns the instance
/// and the seeds that were rejected.
pub fn generate_wishart_verified(spec: &WishartSpec, max_attempts: usize) -> Result<(GeneratedInstance, Vec<u64>)> {
    let mut rejected = Vec::new();
    let mut current = *spec;
    for _ in 0..max_attempts.max(1) {
        let instance = generate_wishart(&current)?;
        if check_planted(&instance)?.is_unique(instance.planted_energy) {
            return Ok((instance, rejected));
        }
        log::warn!("seed {} does not plant a unique ground state; regenerating", current.seed);
        rejected.push(current.seed);
        current.seed = current.seed.wrapping_add(1);
    }
    Err(Error::config(format!(
        "no uniquely planted instance within {max_attempts} seeds starting at {}",
        spec.seed
    )))
}

/// Penalty weights of the default five-node instance: `J_ij = -c_i c_j`.
/// The 8 states with `c . s = 0` are the rows of a full adder
/// (`a + b + c_in = s + 2 c_out` in spin form) and sit at energy -4 before
/// fields; every other state is at least 2 higher.
pub const FIVE_NODE_WEIGHTS: [f64; 5] = [1.0, 1.0, 1.0, -1.0, -2.0];

/// Small fields that split the 8 valid rows and make the ground state unique.
pub const FIVE_NODE_FIELDS: [f64; 5] = [0.3, -0.2, 0.1, 0.25, -0.15];

pub fn five_node_default() -> IsingModel {
    let c = FIVE_NODE_WEIGHTS;
    let mut couplings = Vec::with_capacity(10);
    for i in 0..5 {
        for j in i + 1..5 {
            couplings.push((i, j, -c[i] * c[j]));
        }
    }
    IsingModel::new(5, couplings, FIVE_NODE_FIELDS.to_vec()).expect("default instance is valid")
}

/// The default instance, or a 5-spin model read from `path`.
pub fn five_node_complete(path: Option<&Path>) -> Result<IsingModel> {
    let Some(path) = path else {
        return Ok(five_node_default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model: IsingModel =
        serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    if model.n_spins() != 5 {
        return Err(Error::input(format!(
            "{}: expected 5 spins, found {}",
            path.display(),
            model.n_spins()
        )));
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Planted {
    pub state: SpinState,
    pub energy: f64,
}

/// Files of an instance directory. `map` and `physical` appear after
/// sparsification.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub model: IsingModel,
    pub planted: Option<Planted>,
    pub map: Option<SparsificationMap>,
    pub physical: Option<ConstrainedProblem>,
    pub meta: serde_json::Value,
}

pub const MODEL_FILE: &str = "model.json";
pub const PLANTED_FILE: &str = "planted.json";
pub const MAP_FILE: &str = "map.json";
pub const PHYSICAL_FILE: &str = "physical.json";
pub const META_FILE: &str = "meta.json";

impl Bundle {
    pub fn new(model: IsingModel, meta: serde_json::Value) -> Self {
        Bundle {
            model,
            planted: None,
            map: None,
            physical: None,
            meta,
        }
    }

    pub fn from_wishart(instance: &GeneratedInstance) -> Self {
        let meta = serde_json::json!({
            "kind": "wishart",
            "spec": instance.spec,
            "version": env!("CARGO_PKG_VERSION"),
        });
        Bundle {
            planted: Some(Planted {
                state: instance.planted_state.clone(),
                energy: instance.planted_energy,
            }),
            ..Bundle::new(instance.model.clone(), meta)
        }
    }

    /// Ground-state reference: the planted energy if any.
    pub fn reference_energy(&self) -> Option<f64> {
        self.planted.as_ref().map(|p| p.energy)
    }

    /// Writes every present file. An existing `model.json` is only replaced
    /// when `force` is set.
    pub fn write(&self, dir: &Path, force: bool) -> Result<()> {
        let model_path = dir.join(MODEL_FILE);
        if model_path.exists() && !force {
            return Err(Error::Exists(model_path));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&model_path, &self.model)?;
        if let Some(p) = &self.planted {
            write_json(&dir.join(PLANTED_FILE), p)?;
        }
        if let Some(m) = &self.map {
            write_json(&dir.join(MAP_FILE), m)?;
        }
        if let Some(p) = &self.physical {
            write_json(&dir.join(PHYSICAL_FILE), p)?;
        }
        write_json(&dir.join(META_FILE), &self.meta)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let model = read_json(&dir.join(MODEL_FILE))?;
        let optional = |name: &str| -> Result<Option<PathBuf>> {
            let p = dir.join(name);
            Ok(p.exists().then_some(p))
        };
        let planted = optional(PLANTED_FILE)?.map(|p| read_json(&p)).transpose()?;
        let map = optional(MAP_FILE)?.map(|p| read_json(&p)).transpose()?;
        let physical = optional(PHYSICAL_FILE)?.map(|p| read_json(&p)).transpose()?;
        let meta = optional(META_FILE)?
            .map(|p| read_json(&p))
            .transpose()?
            .unwrap_or(serde_json::Value::Null);
        Ok(Bundle {
            model,
            planted,
            map,
            physical,
            meta,
        })
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}
