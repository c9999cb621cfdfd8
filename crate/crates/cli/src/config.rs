use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use irgnm_core::benchmarks::{DenseRate, SmoothCoefficient};
use irgnm_core::irgnm::RunConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    #[default]
    Single,
    RateStudy,
    EstimatorStudy,
    Validate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemConfig {
    Smooth(SmoothCoefficient),
    Dense(DenseRate),
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::Smooth(SmoothCoefficient::default())
    }
}

impl ProblemConfig {
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ProblemConfig::Smooth(s) => s.seed = seed,
            ProblemConfig::Dense(d) => d.seed = seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateStudyConfig {
    pub deltas: Vec<f64>,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        RateStudyConfig { deltas: vec![1e-1, 1.778_279_410_038_923e-2, 3.162_277_660_168_379_5e-3, 5.623_413_251_903_491e-4, 1e-4] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorStudyConfig {
    /// Cell counts of the uniform meshes.
    pub cells: Vec<usize>,
    pub beta: f64,
    /// Levels of uniform refinement for the reference solution, as a factor.
    pub fine_factor: usize,
}

impl Default for EstimatorStudyConfig {
    fn default() -> Self {
        EstimatorStudyConfig { cells: vec![8, 16, 32, 64, 128, 256], beta: 0.02, fine_factor: 8 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub study: StudyKind,
    pub output_dir: Option<PathBuf>,
    /// Overrides the seed of the problem section.
    pub seed: Option<u64>,
    /// Also write the final coefficient as `vertex,value` CSV.
    pub dump_functions: bool,
    pub problem: ProblemConfig,
    pub irgnm: RunConfig,
    pub rate_study: RateStudyConfig,
    pub estimator_study: EstimatorStudyConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    /// Applies command-line overrides and the file-level seed.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>, fine_factor: Option<usize>) -> Self {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.problem.set_seed(s);
        }
        if out.is_some() {
            self.output_dir = out;
        }
        if let Some(f) = fine_factor {
            self.estimator_study.fine_factor = f;
        }
        self
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ConfigFile::parse("").unwrap();
        assert_eq!(c, ConfigFile::default());
    }

    #[test]
    fn dense_section_parses() {
        let c = ConfigFile::parse("[problem]\nkind = \"dense\"\nn = 16\n\n[irgnm]\nc_tc = 0.0\n").unwrap();
        match c.problem {
            ProblemConfig::Dense(d) => assert_eq!(d.n, 16),
            other => panic!("{other:?}"),
        }
        assert_eq!(c.irgnm.c_tc, 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::parse("[irgnm]\ntua = 3.0\n").is_err());
        assert!(ConfigFile::parse("[problem]\nkind = \"smooth\"\nwidth = 2\n").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = ConfigFile::default().resolve(Some(3), None, Some(4));
        let back = ConfigFile::parse(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
