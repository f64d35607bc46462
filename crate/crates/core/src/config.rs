//! Run configuration for the command-line tool.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmark::ComparisonGrid;
use crate::chain::ChainConfig;
use crate::entanglement::DEFAULT_WITNESS_SIGMA;
use crate::error::{invalid, Error, Result};
use crate::estimate::DEFAULT_BLOCKS;
use crate::gaussian::GaussianState;
use crate::reconstruction::SpmOptions;
use crate::tables::check_order;
use crate::C64;

/// Single-mode input state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    #[default]
    Vacuum,
    Thermal { n: f64 },
    /// `[re, im]`
    Coherent { alpha: [f64; 2] },
    /// `ξ = r e^{iθ}` as `[re, im]`
    Squeezed { xi: [f64; 2] },
}

impl InputSpec {
    pub fn state(&self) -> Result<GaussianState> {
        match self {
            InputSpec::Vacuum => GaussianState::vacuum(1),
            InputSpec::Thermal { n } => GaussianState::thermal(*n),
            InputSpec::Coherent { alpha } => finite(alpha).map(|a| GaussianState::coherent(a)),
            InputSpec::Squeezed { xi } => finite(xi).map(|x| GaussianState::squeezed_vacuum(x)),
        }
    }
}

fn finite(v: &[f64; 2]) -> Result<C64> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(C64::new(v[0], v[1]))
    } else {
        Err(invalid("complex parameter must be finite"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sampling {
    pub shots: usize,
    pub seed: u64,
    /// Simulate one chain without the beam splitter.
    pub single_path: bool,
    /// Also simulate a vacuum-input run through the same chain.
    pub reference: bool,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { shots: 10_000, seed: 0, single_path: false, reference: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Spm,
    Dpm,
    Refstate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    pub method: Option<MethodArg>,
    pub order: usize,
    pub blocks: usize,
    pub shots: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    /// Coherent amplitude of the single-path reference run.
    pub reference_alpha: [f64; 2],
    pub spm: SpmOptions,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig { method: None, order: 4, blocks: DEFAULT_BLOCKS, shots: None, reference: None, reference_alpha: [0.0, 0.0], spm: SpmOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WitnessConfig {
    pub sigma: f64,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig { sigma: DEFAULT_WITNESS_SIGMA }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: InputSpec,
    pub chain: ChainConfig,
    pub sampling: Sampling,
    pub reconstruct: ReconstructConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare: Option<ComparisonGrid>,
    pub witness: WitnessConfig,
    pub output: OutputConfig,
}

pub const OUT_DIR_ENV: &str = "DUALPATH_OUT_DIR";

impl RunConfig {
    /// TOML config file, or a JSON report whose `config` field is used.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Embedded {
                config: RunConfig,
            }
            let e: Embedded = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
            Ok(e.config)
        } else {
            toml::from_str(&text).map_err(|e| invalid(format!("{}: {}", path.display(), e.message())))
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.input.state()?;
        self.chain.validate()?;
        if self.sampling.shots == 0 {
            return Err(invalid("sampling.shots must be positive"));
        }
        check_order(self.reconstruct.order)?;
        if self.reconstruct.order == 0 {
            return Err(invalid("reconstruct.order must be at least 1"));
        }
        if self.reconstruct.blocks < 2 {
            return Err(invalid("reconstruct.blocks must be at least 2"));
        }
        finite(&self.reconstruct.reference_alpha)?;
        if !(self.witness.sigma > 0.0) {
            return Err(invalid("witness.sigma must be positive"));
        }
        if let Some(g) = &self.compare {
            g.validate()?;
        }
        Ok(())
    }

    /// Output directory: config value, then the environment, then `.`.
    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_parsing() {
        let c: RunConfig = toml::from_str(
            r#"
            [input]
            kind = "squeezed"
            xi = [0.0, 0.5]
            [chain]
            n_amp1 = 5.0
            [sampling]
            shots = 100
            seed = 42
            "#,
        )
        .unwrap();
        assert_eq!(c.input, InputSpec::Squeezed { xi: [0.0, 0.5] });
        assert_eq!(c.chain.n_amp1, 5.0);
        assert_eq!(c.chain.g1, 1e4);
        assert_eq!(c.sampling.seed, 42);
        assert!(c.validate().is_ok());
        assert!(toml::from_str::<RunConfig>("[sampling]\nshot = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("[input]\nkind = \"thermal\"\nn = 1.0\nalpha = [0.0, 0.0]\n").is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.input = InputSpec::Thermal { n: -1.0 };
        assert!(c.validate().is_err());
        let c = RunConfig { reconstruct: ReconstructConfig { order: 9, ..Default::default() }, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
