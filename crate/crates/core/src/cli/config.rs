//! Run configuration: presets, TOML files and flag overrides merged into one validated view.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::denoiser::{ModelConfig, SamplingConfig};
use crate::error::{Error, Result};
use crate::evaluation::{EvalConfig, EvaluatorConfig};
use crate::masking::MaskKind;
use crate::motion::io::read_motion_dir;
use crate::motion::{generate_synthetic_dataset, GeneratorConfig, MotionSequence, Skeleton};
use crate::trainer::TrainConfig;

/// Environment variable naming a dataset root used when `data.dir` is unset.
pub const DATA_DIR_ENV: &str = "MMDM_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory of `.mmot` clips. With `train/` and `test/` subdirectories
    /// those are used as the splits; otherwise every fifth clip is held out.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Synthetic corpus used when no directory is configured.
    pub generator: GeneratorConfig,
    pub seed: u64,
    pub test_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { dir: None, generator: GeneratorConfig::default(), seed: 1, test_seed: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Run directory for checkpoints, logs and reports.
    pub out: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { out: PathBuf::from("runs/default") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sampling: SamplingConfig,
    pub eval: EvalConfig,
    pub evaluator: EvaluatorConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset("desk").expect("desk preset")
    }
}

/// Train and test clips with their shared skeleton.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<MotionSequence>,
    pub test: Vec<MotionSequence>,
    pub skeleton: Skeleton,
}

pub const PRESETS: [&str; 3] = ["micro", "desk", "paper"];

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let strategy = MaskKind::TimeFrames;
        match name {
            "micro" => Ok(RunConfig {
                data: DataConfig {
                    generator: GeneratorConfig { samples_per_archetype: 16, min_len: 24, max_len: 32, ..Default::default() },
                    ..Default::default()
                },
                model: ModelConfig::micro(strategy),
                train: TrainConfig {
                    learning_rate: 1e-3,
                    batch_size: 8,
                    total_steps: 200,
                    seq_len: 24,
                    checkpoint_interval: 0,
                    ..Default::default()
                },
                sampling: SamplingConfig::default(),
                eval: EvalConfig { repeats: 2, samples: 32, mm_prompts: 2, mm_per_prompt: 3, ..Default::default() },
                evaluator: EvaluatorConfig { steps: 150, ..Default::default() },
                paths: PathsConfig { out: PathBuf::from("runs/micro") },
            }),
            "desk" => Ok(RunConfig {
                data: DataConfig::default(),
                model: ModelConfig::desk(strategy),
                train: TrainConfig::default(),
                sampling: SamplingConfig::default(),
                eval: EvalConfig::default(),
                evaluator: EvaluatorConfig::default(),
                paths: PathsConfig::default(),
            }),
            "paper" => Ok(RunConfig {
                data: DataConfig {
                    generator: GeneratorConfig { samples_per_archetype: 200, ..Default::default() },
                    ..Default::default()
                },
                model: ModelConfig::paper(strategy),
                train: TrainConfig { batch_size: 64, total_steps: 200_000, seq_len: 64, ..Default::default() },
                sampling: SamplingConfig::default(),
                eval: EvalConfig::default(),
                evaluator: EvaluatorConfig { hidden_dim: 256, embedding_dim: 512, steps: 4000, ..Default::default() },
                paths: PathsConfig { out: PathBuf::from("runs/paper") },
            }),
            other => Err(Error::config(format!("unknown preset {other:?} (expected one of {})", PRESETS.join(", ")))),
        }
    }

    /// Preset, then the TOML file, then `key=value` overrides; later layers win.
    pub fn load(preset: &str, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut merged = Value::try_from(RunConfig::preset(preset)?).map_err(|e| Error::Serde(e.to_string()))?;
        let known = merged.clone();
        let mut layers = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let value: Value = text
                .parse::<toml::Table>()
                .map(Value::Table)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            layers.push(value);
        }
        for o in overrides {
            layers.push(parse_override(o)?);
        }
        let mut unknown = Vec::new();
        for layer in &layers {
            unknown_keys(&known, layer, "", &mut unknown);
        }
        if !unknown.is_empty() {
            return Err(Error::config(format!("unknown keys: {}", unknown.join(", "))));
        }
        for layer in layers {
            deep_merge(&mut merged, layer);
        }
        let config: RunConfig = merged.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every section and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let checks = [
            self.data.generator.validate(),
            self.model.validate(),
            self.train.validate(),
            self.sampling.validate(),
            self.eval.validate(),
            self.evaluator.validate(),
        ];
        let mut problems: Vec<String> = checks.into_iter().filter_map(|r| r.err()).map(|e| strip(&e)).collect();
        if self.sampling.frames > self.model.max_length {
            problems.push(format!(
                "sampling.frames {} exceeds model.max_length {}",
                self.sampling.frames, self.model.max_length
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// The configured directory, else `$MMDM_DATA_DIR`, else none (synthetic data).
    pub fn data_dir(&self) -> Option<PathBuf> {
        self.data.dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }

    pub fn load_data(&self) -> Result<Dataset> {
        match self.data_dir() {
            Some(dir) => {
                let (train_dir, test_dir) = (dir.join("train"), dir.join("test"));
                if train_dir.is_dir() && test_dir.is_dir() {
                    let (train, skeleton) = read_motion_dir(&train_dir)?;
                    let (test, test_skeleton) = read_motion_dir(&test_dir)?;
                    if test_skeleton != skeleton {
                        return Err(Error::invalid("train and test splits use different skeletons"));
                    }
                    Ok(Dataset { train, test, skeleton })
                } else {
                    let (all, skeleton) = read_motion_dir(&dir)?;
                    let (mut train, mut test) = (Vec::new(), Vec::new());
                    for (i, m) in all.into_iter().enumerate() {
                        if i % 5 == 4 { test.push(m) } else { train.push(m) }
                    }
                    Ok(Dataset { train, test, skeleton })
                }
            }
            None => Ok(Dataset {
                train: generate_synthetic_dataset(&self.data.generator, self.data.seed)?,
                test: generate_synthetic_dataset(&self.data.generator, self.data.test_seed)?,
                skeleton: self.data.generator.skeleton(),
            }),
        }
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::InvalidConfig(m) => m.clone(),
        other => other.to_string(),
    }
}

/// `a.b.c=value` as a nested table; the value is parsed as TOML, falling back to a string.
pub fn parse_override(text: &str) -> Result<Value> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {text:?} is not of the form key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut out = value;
    for part in key.trim().rsplit('.') {
        let mut t = toml::Table::new();
        t.insert(part.to_string(), out);
        out = Value::Table(t);
    }
    Ok(out)
}

fn deep_merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Table(b), Value::Table(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(existing) if existing.is_table() && v.is_table() => deep_merge(existing, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, l) => *b = l,
    }
}

/// Dotted paths present in `layer` but not in the `known` schema.
fn unknown_keys(known: &Value, layer: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Table(k), Value::Table(l)) = (known, layer) else { return };
    for (key, v) in l {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match k.get(key) {
            Some(sub) => unknown_keys(sub, v, &path, out),
            // Optional fields are absent from the serialized defaults.
            None if path == "data.dir" => {}
            None => out.push(path),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in PRESETS {
            RunConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(RunConfig::preset("huge").is_err());
    }

    #[test]
    fn every_unknown_key_is_listed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[train]\nlr = 1.0\nbatch_size = 4\n[bogus]\nx = 1\n[data]\ndir = \"/tmp\"\n").unwrap();
        let err = RunConfig::load("micro", Some(&path), &[]).unwrap_err().to_string();
        assert!(err.contains("train.lr") && err.contains("bogus"), "{err}");
        assert!(!err.contains("data.dir"), "{err}");
    }

    #[test]
    fn layers_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[train]\nbatch_size = 4\ntotal_steps = 7\n").unwrap();
        let c = RunConfig::load("micro", Some(&path), &["train.total_steps=9".into(), "model.strategy=\"body_parts\"".into()])
            .unwrap();
        assert_eq!((c.train.batch_size, c.train.total_steps), (4, 9));
        assert_eq!(c.model.strategy, MaskKind::BodyParts);
        assert_eq!(c.model.hidden_dim, RunConfig::preset("micro").unwrap().model.hidden_dim);
    }

    #[test]
    fn validation_collects_all_problems() {
        let err = RunConfig::load("micro", None, &["train.mask_ratio=1.5".into(), "model.heads=3".into()])
            .unwrap_err()
            .to_string();
        assert!(err.contains("mask_ratio") && err.contains("heads"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::preset("desk").unwrap();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
