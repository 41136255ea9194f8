//! Activation dumps, manifests, run configuration, and result files.

pub mod manifest;
pub mod npy;
pub mod results;
pub mod svg;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::activation::IndexKind;
use crate::error::{Error, Result};
use crate::indexes::{DegeneratePolicy, DEFAULT_SVCCA_THRESHOLD};

pub use manifest::{ActivationManifest, ManifestFile, ManifestSet, Pooling, ResolvedDump};
pub use npy::{read_activation_dump, write_activation_dump};
pub use results::{read_results, write_results, CurvePoint, LayerCurve, OutputFormat};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerSelection {
    #[default]
    All,
    List(Vec<usize>),
}

impl LayerSelection {
    /// Keeps the requested layers; `All` keeps whatever is available.
    pub fn resolve(&self, available: &[usize]) -> Vec<usize> {
        match self {
            LayerSelection::All => available.to_vec(),
            LayerSelection::List(layers) => layers.clone(),
        }
    }
}

impl std::str::FromStr for LayerSelection {
    type Err = Error;

    /// `all`, or a comma list of layers and inclusive ranges: `0,3,6-12`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(LayerSelection::All);
        }
        let bad = || Error::InvalidParam(format!("bad layer selection '{s}'"));
        let mut layers = Vec::new();
        for part in s.split(',').map(str::trim) {
            match part.split_once('-') {
                Some((a, b)) => {
                    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                    if a > b {
                        return Err(bad());
                    }
                    layers.extend(a..=b);
                }
                None => layers.push(part.parse().map_err(|_| bad())?),
            }
        }
        layers.sort_unstable();
        layers.dedup();
        Ok(LayerSelection::List(layers))
    }
}

/// A source/target language pair, written `src-tgt`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LanguagePair {
    pub source: String,
    pub target: String,
}

impl LanguagePair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.source, self.target)
    }
}

impl std::str::FromStr for LanguagePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().split_once('-') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok(LanguagePair::new(a, b)),
            _ => Err(Error::InvalidParam(format!("language pair '{s}' must look like en-fr"))),
        }
    }
}

pub fn parse_pairs(s: &str) -> Result<Vec<LanguagePair>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

pub fn parse_indexes(s: &str) -> Result<Vec<IndexKind>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(IndexKind::ALL.to_vec());
    }
    let mut out: Vec<IndexKind> = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Everything a batch run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest_paths: Vec<PathBuf>,
    pub indexes: Vec<IndexKind>,
    pub language_pairs: Vec<LanguagePair>,
    pub layers: LayerSelection,
    pub svcca_threshold: f64,
    pub anc_policy: DegeneratePolicy,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Aligned row subsample size; `None` uses every row.
    pub sample_size: Option<usize>,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest_paths: Vec::new(),
            indexes: vec![IndexKind::Anc],
            language_pairs: Vec::new(),
            layers: LayerSelection::All,
            svcca_threshold: DEFAULT_SVCCA_THRESHOLD,
            anc_policy: DegeneratePolicy::Zero,
            output_dir: PathBuf::from("."),
            seed: 0,
            sample_size: None,
            format: OutputFormat::Csv,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_selection_parsing() {
        assert_eq!("all".parse::<LayerSelection>().unwrap(), LayerSelection::All);
        assert_eq!(
            "5, 0-2,2".parse::<LayerSelection>().unwrap(),
            LayerSelection::List(vec![0, 1, 2, 5])
        );
        assert!("3-1".parse::<LayerSelection>().is_err());
        assert!("x".parse::<LayerSelection>().is_err());
    }

    #[test]
    fn pair_and_index_parsing() {
        let pairs = parse_pairs("en-fr,en-de").unwrap();
        assert_eq!(pairs[1].label(), "en-de");
        assert!(parse_pairs("enfr").is_err());
        assert_eq!(parse_indexes("cka,anc,cka").unwrap(), vec![IndexKind::Anc, IndexKind::Cka]);
        assert_eq!(parse_indexes("all").unwrap().len(), 5);
    }
}
