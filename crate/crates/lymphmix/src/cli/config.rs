//! Config-file loading and flag merging. Every output artifact embeds the
//! fully resolved settings (excluding the thread count, which affects
//! scheduling only) so a run can be reproduced from its own outputs.

use crate::error::{Error, Result};
use crate::mcmc::ChainConfig;
use crate::model::registry;
use crate::model::{FamilyKind, ModelSpec};
use crate::sim::design::DesignPreset;
use crate::sim::{presets, TrueParams};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Raw TOML config file: top-level globals plus per-command sections.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub strict: Option<bool>,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub summarize: SummarizeSection,
    #[serde(default)]
    pub power: PowerSection,
    #[serde(default)]
    pub recover: RecoverSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub family: Option<String>,
    pub design: Option<String>,
    pub truth: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub family: Option<String>,
    pub method: Option<String>,
    pub fields: Option<PathBuf>,
    pub vessels: Option<PathBuf>,
    pub rho_zero: Option<bool>,
    pub delta_equal: Option<bool>,
    pub fine_delta: Option<bool>,
    pub nodes: Option<usize>,
    pub burn_in: Option<usize>,
    pub keep: Option<usize>,
    pub thin: Option<usize>,
    pub chains: Option<usize>,
    pub prior_sensitivity: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarizeSection {
    pub fields: Option<PathBuf>,
    pub vessels: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub means: Option<String>,
    pub sd: Option<f64>,
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub target: Option<f64>,
    pub oracle_reps: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverSection {
    pub family: Option<String>,
    pub method: Option<String>,
    pub replicates: Option<usize>,
    pub design: Option<String>,
    pub truth: Option<String>,
    pub conditional_contrast: Option<bool>,
    pub burn_in: Option<usize>,
    pub keep: Option<usize>,
    pub thin: Option<usize>,
    pub chains: Option<usize>,
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Globals shared by every command, fully resolved.
#[derive(Debug, Clone, Serialize)]
pub struct Globals {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub strict: bool,
    /// Not part of provenance: scheduling only.
    #[serde(skip)]
    pub threads: usize,
}

pub fn resolve_globals(cli: &super::Cli, file: &FileConfig) -> Globals {
    Globals {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out_dir: cli
            .out_dir
            .clone()
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
        strict: cli.strict || file.strict.unwrap_or(false),
        threads: cli.threads.or(file.threads).unwrap_or(0),
    }
}

pub fn parse_family(name: &str) -> Result<FamilyKind> {
    Ok(registry::by_name(name)?.kind())
}

/// Parses a design spec string: `study`, `studyxK`, `balanced:N,F`,
/// `single:N,F`.
pub fn parse_design(s: &str) -> Result<DesignPreset> {
    let bad = |msg: &str| Error::Config(format!("invalid design '{s}': {msg}"));
    if s == "study" {
        return Ok(DesignPreset::study_default());
    }
    if let Some(k) = s.strip_prefix("studyx") {
        let k: usize = k.parse().map_err(|_| bad("expected studyxK"))?;
        if k == 0 {
            return Err(bad("scale factor must be positive"));
        }
        return Ok(DesignPreset::study_scaled(k));
    }
    let parse_pair = |rest: &str| -> Result<(usize, usize)> {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 2 {
            return Err(bad("expected two comma-separated integers"));
        }
        let a = parts[0].trim().parse().map_err(|_| bad("bad integer"))?;
        let b = parts[1].trim().parse().map_err(|_| bad("bad integer"))?;
        Ok((a, b))
    };
    if let Some(rest) = s.strip_prefix("balanced:") {
        let (n, f) = parse_pair(rest)?;
        return Ok(DesignPreset::balanced(n, f));
    }
    if let Some(rest) = s.strip_prefix("single:") {
        let (n, f) = parse_pair(rest)?;
        return Ok(DesignPreset::single_group(
            n,
            crate::domain::TissueCode::ControlEctocervix,
            f,
        ));
    }
    Err(bad("unknown design preset"))
}

/// `reference` or a truth JSON file holding `{ spec, theta }`.
pub fn parse_truth(spec_family: FamilyKind, s: &str) -> Result<TrueParams> {
    if s == "reference" {
        return Ok(presets::reference_truth(spec_family));
    }
    let text = std::fs::read_to_string(s).map_err(|e| Error::Io {
        path: s.to_string(),
        source: e,
    })?;
    let parsed: TruthFile =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{s}: {e}")))?;
    let truth = parsed.truth;
    if truth.spec.family != spec_family {
        return Err(Error::Config(format!(
            "truth file is for family {}, requested {}",
            truth.spec.family.name(),
            spec_family.name()
        )));
    }
    truth.validate()?;
    Ok(truth)
}

/// Accepts either a bare `TrueParams` document or a full `truth.json`
/// artifact with the truth nested under `truth`.
#[derive(Debug, Deserialize)]
struct TruthFile {
    #[serde(flatten)]
    truth: TrueParams,
}

pub fn chain_config(
    seed: u64,
    burn_in: Option<usize>,
    keep: Option<usize>,
    thin: Option<usize>,
    chains: Option<usize>,
) -> ChainConfig {
    let mut c = ChainConfig::default();
    c.seed = seed;
    if let Some(b) = burn_in {
        c.burn_in = b;
    }
    if let Some(k) = keep {
        c.keep_iterations = k;
    }
    if let Some(t) = thin {
        c.thin = t;
    }
    if let Some(n) = chains {
        c.n_chains = n;
    }
    c
}

pub fn model_spec(
    family: FamilyKind,
    rho_zero: bool,
    delta_equal: bool,
    fine_delta: bool,
) -> Result<ModelSpec> {
    let mut spec = ModelSpec::new(family);
    if rho_zero {
        spec = spec.with_rho_zero();
    }
    if delta_equal {
        spec = spec.with_delta_equal();
    }
    if fine_delta {
        spec = spec.with_fine_delta();
    }
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_strings_parse() {
        assert_eq!(parse_design("study").unwrap().n_specimens(), 62);
        assert_eq!(parse_design("studyx2").unwrap().n_specimens(), 124);
        assert_eq!(parse_design("balanced:5,3").unwrap().n_specimens(), 20);
        assert_eq!(parse_design("single:7,2").unwrap().n_specimens(), 7);
        assert!(parse_design("nope").is_err());
        assert!(parse_design("balanced:x,y").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
seed = 42
strict = true

[fit]
family = "joint"
method = "mcmc"
chains = 2
"#;
        let cfg: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, Some(42));
        assert_eq!(cfg.fit.family.as_deref(), Some("joint"));
        assert_eq!(cfg.fit.chains, Some(2));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "sed = 42\n";
        assert!(toml::from_str::<FileConfig>(text).is_err());
    }
}
