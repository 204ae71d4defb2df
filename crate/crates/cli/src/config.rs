//! Plain-text configuration files: TOML with one section per pipeline
//! stage. Every field is optional; values overlay the scale-appropriate
//! defaults, so a config file only needs the keys it wants to change.

use std::path::Path;

use serde::Deserialize;

use echosteal_core::extraction::ExtractionConfig;
use echosteal_core::harness::ExperimentSpec;
use echosteal_core::model::TrainConfig;
use echosteal_core::rfsim::Scale;
use echosteal_core::{Error, Result};

/// Top-level config file. Unknown sections or keys are rejected so typos
/// fail loudly instead of silently running with defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub extraction: ExtractionSection,
    #[serde(default)]
    pub victim_training: TrainingSection,
    #[serde(default)]
    pub inner_training: TrainingSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub scale: Option<String>,
    pub victim_frames_per_class: Option<usize>,
    pub perp_frames_per_class: Option<usize>,
    pub cal_frames: Option<usize>,
    pub repeats: Option<usize>,
    pub swept: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionSection {
    pub epsilon: Option<f64>,
    pub iterations: Option<usize>,
    pub label_percentile: Option<f64>,
    pub snr: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub flip_prob: Option<f64>,
    pub validation_fraction: Option<f64>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    /// Parse a config file; a `None` path yields all-default sections.
    pub fn load(path: Option<&Path>) -> Result<ConfigFile> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, format!("invalid config: {e}")))
    }
}

impl ExperimentSection {
    pub fn scale(&self) -> Result<Option<Scale>> {
        self.scale.as_deref().map(parse_scale).transpose()
    }

    pub fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(v) = self.victim_frames_per_class {
            spec.victim_frames_per_class = v;
        }
        if let Some(v) = self.perp_frames_per_class {
            spec.perp_frames_per_class = v;
        }
        if let Some(v) = self.cal_frames {
            spec.cal_frames = v;
        }
        if let Some(v) = self.repeats {
            spec.repeats = v;
        }
        if let Some(v) = &self.swept {
            spec.swept = v.clone();
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
    }
}

impl ExtractionSection {
    pub fn apply(&self, cfg: &mut ExtractionConfig) {
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.label_percentile {
            cfg.label_percentile = v;
        }
        if let Some(v) = self.snr {
            cfg.snr = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

impl TrainingSection {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.flip_prob {
            cfg.flip_prob = v;
        }
        if let Some(v) = self.validation_fraction {
            cfg.validation_fraction = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

pub fn parse_scale(s: &str) -> Result<Scale> {
    match s {
        "full" => Ok(Scale::Full),
        "desk" => Ok(Scale::Desk),
        "compact" => Ok(Scale::Compact),
        other => Err(Error::config(format!(
            "unknown scale '{other}' (expected full, desk, or compact)"
        ))),
    }
}

/// Scale-appropriate training defaults, inferred from a frame's line count.
pub fn train_preset_for(n_lateral: usize) -> TrainConfig {
    if n_lateral >= 256 {
        TrainConfig::full()
    } else if n_lateral >= 128 {
        TrainConfig::desk()
    } else {
        TrainConfig::compact()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn missing_config_path_yields_defaults() {
        let cfg = ConfigFile::load(None).unwrap();
        assert!(cfg.experiment.repeats.is_none());
        assert!(cfg.extraction.epsilon.is_none());
    }

    #[test]
    fn sections_overlay_only_the_given_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(
            f,
            "[experiment]\nrepeats = 3\nseed = 9\n\n[extraction]\nepsilon = 25.0\n\n\
             [inner_training]\nepochs = 4"
        )
        .unwrap();
        drop(f);

        let cfg = ConfigFile::load(Some(&path)).unwrap();
        let mut ext = ExtractionConfig::default();
        cfg.extraction.apply(&mut ext);
        assert_eq!(ext.epsilon, 25.0);
        // Untouched keys keep their defaults.
        assert_eq!(ext.iterations, ExtractionConfig::default().iterations);

        let mut train = TrainConfig::desk();
        cfg.inner_training.apply(&mut train);
        assert_eq!(train.epochs, 4);
        assert_eq!(train.batch_size, TrainConfig::desk().batch_size);
    }

    #[test]
    fn unknown_keys_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "[extraction]\nepsilonn = 20.0\n").unwrap();
        assert!(matches!(
            ConfigFile::load(Some(&path)),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn scale_names_parse() {
        assert_eq!(parse_scale("desk").unwrap(), Scale::Desk);
        assert!(parse_scale("medium").is_err());
    }
}
