//! File-backed run configuration; command-line flags override it.

use std::fs;
use std::path::Path;

use crackseq::datapipe::BuildParams;
use crackseq::evalsuite::EvalParams;
use crackseq::nets::{SwinSpec, UNetSpec};
use crackseq::synthgen::SceneSpec;
use crackseq::trainer::TrainConfig;
use crackseq::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub scenes: usize,
    pub seed: u64,
    pub scene: SceneSpec,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self { scenes: 4, seed: 0, scene: SceneSpec::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub generate: GenerateConfig,
    pub build: BuildParams,
    pub train: TrainConfig,
    pub swin: SwinSpec,
    pub unet: UNetSpec,
    pub eval: EvalParams,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Invalid(format!("config serialization: {e}")))
    }

    /// Writes the resolved config as `<dir>/<name>`.
    pub fn dump(&self, dir: &Path, name: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(name);
        fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        let partial: RunConfig = toml::from_str("[train]\nmax_epochs = 7\n[generate.scene]\nwidth_px = 96\n").unwrap();
        assert_eq!(partial.train.max_epochs, 7);
        assert_eq!(partial.generate.scene.width_px, 96);
        assert_eq!(partial.train.batch_size, 4);
        let build: RunConfig = toml::from_str("[build]\npatch_size = 64\n").unwrap();
        assert_eq!(build.build, BuildParams { patch_size: 64, ..BuildParams::default() });
    }
}
