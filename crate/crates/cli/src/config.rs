//! Run configuration: one JSON document with `sim`, `fit`, `train` and
//! `plan` sections, a global seed and an output directory. Values are
//! layered as defaults, then the config file, then dotted command-line
//! overrides such as `--sim.n_particles=20`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use splatpush::dynamics::{Matching, ModelConfig, TrainConfig};
use splatpush::math::{derive_seed, Aabb};
use splatpush::planner::{MpcConfig, PlanConfig};
use splatpush::scene_init::InitConfig;
use splatpush::sim::SimConfig;
use splatpush::splat::FitConfig;

/// Top-level section names accepted as override prefixes.
pub const SECTIONS: [&str; 4] = ["sim", "fit", "train", "plan"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub sim: SimConfig,
    pub fit: FitSection,
    pub train: TrainSection,
    pub plan: PlanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            sim: SimConfig::default(),
            fit: FitSection::default(),
            train: TrainSection::default(),
            plan: PlanConfig::default(),
        }
    }
}

/// Reconstruction settings for offline fitting and for closed-loop
/// observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub lr: f64,
    /// Epochs per frame when converting a dataset.
    pub epochs: usize,
    /// Epochs per observation inside the control loop.
    pub mpc_epochs: usize,
    pub ssim_weight: f64,
    pub min_scale: f64,
    pub samples_per_particle: usize,
    pub default_scale: f64,
    pub default_sigma: f64,
    pub sigma_min: f64,
    /// Lifted points below this height are treated as table and dropped.
    pub crop_floor: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let fit = FitConfig::default();
        let init = InitConfig::default();
        FitSection {
            lr: fit.lr,
            epochs: fit.epochs,
            mpc_epochs: MpcConfig::default().fit.epochs,
            ssim_weight: fit.ssim_weight,
            min_scale: fit.min_scale,
            samples_per_particle: init.samples_per_particle,
            default_scale: init.default_scale,
            default_sigma: init.default_sigma,
            sigma_min: init.sigma_min,
            crop_floor: init.crop.min[2],
        }
    }
}

/// Dynamics architecture and optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hidden: usize,
    pub gamma: usize,
    pub omega: f64,
    pub position_scale: f64,
    pub size_scale: f64,
    pub delta_scale: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub matching: Matching,
}

impl Default for TrainSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        TrainSection {
            hidden: m.hidden,
            gamma: m.gamma,
            omega: m.omega,
            position_scale: m.position_scale,
            size_scale: m.size_scale,
            delta_scale: m.delta_scale,
            lr: t.lr,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lambda: t.lambda,
            matching: t.matching,
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid with `file` when given, then with `overrides`
    /// as `(dotted.key, value)` pairs.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let layer: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            merge(&mut value, layer);
        }
        for (key, raw) in overrides {
            set_dotted(&mut value, key, parse_scalar(raw))?;
        }
        serde_json::from_value(value).map_err(|e| anyhow!("invalid configuration: {e}"))
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            lr: self.fit.lr,
            epochs: self.fit.epochs,
            ssim_weight: self.fit.ssim_weight,
            background: self.sim.rig.table_color,
            min_scale: self.fit.min_scale,
        }
    }

    pub fn init_config(&self) -> InitConfig {
        let ws = self.sim.workspace;
        InitConfig {
            crop: Aabb::new([ws.min[0], ws.min[1], self.fit.crop_floor], ws.max),
            workspace: ws,
            samples_per_particle: self.fit.samples_per_particle,
            default_scale: self.fit.default_scale,
            default_sigma: self.fit.default_sigma,
            sigma_min: self.fit.sigma_min,
        }
    }

    pub fn mpc_config(&self) -> MpcConfig {
        MpcConfig {
            plan: self.plan.clone(),
            init: self.init_config(),
            fit: FitConfig {
                epochs: self.fit.mpc_epochs,
                ..self.fit_config()
            },
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let t = &self.train;
        ModelConfig {
            hidden: t.hidden,
            gamma: t.gamma,
            omega: t.omega,
            position_scale: t.position_scale,
            size_scale: t.size_scale,
            delta_scale: t.delta_scale,
            seed: derive_seed(self.seed, 0),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lambda: t.lambda,
            matching: t.matching,
            seed: derive_seed(self.seed, 1),
        }
    }
}

/// Recursively overlays `layer` onto `base`; non-object values replace.
fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// JSON literal when it parses as one, otherwise a bare string.
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("malformed override key `{key}`");
    }
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("override `{key}` descends into a non-object"))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| anyhow!("override `{key}` descends into a non-object"))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// `(dotted key, raw value)` pairs taken from the command line.
pub type Overrides = Vec<(String, String)>;

/// Splits dotted section overrides out of the raw argument list. Both
/// `--sim.n_particles=20` and `--sim.n_particles 20` are accepted.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        let is_override = key
            .split_once('.')
            .is_some_and(|(section, _)| SECTIONS.contains(&section));
        if !is_override {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => iter
                .next()
                .ok_or_else(|| anyhow!("override `--{key}` is missing a value"))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}
