//! Pipeline configuration: one TOML file, every field optional.
//!
//! Relative paths resolve against the directory holding the config file
//! (or the working directory when no file is given).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pnd_core::evaluation::DocFilter;
use pnd_core::explain::ShapleyConfig;
use pnd_core::features::Weighting;
use pnd_core::market_events::{DEFAULT_SIGMA_MULTIPLIER, DEFAULT_SLOPE_THRESHOLD};
use pnd_core::models::{ModelKind, TrainConfig};
use pnd_core::synth::CorpusConfig;

use crate::error::{CliError, CliResult, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub posts: PathBuf,
    pub comments: PathBuf,
    pub ohlcv_dir: PathBuf,
    pub sectors: PathBuf,
    /// Listed tickers; every ticker in the sector map when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub listings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contractions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empath_terms: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom_terms: Option<PathBuf>,
    /// Where every stage reads and writes its intermediate files.
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            posts: "posts.jsonl".into(),
            comments: "comments.jsonl".into(),
            ohlcv_dir: "ohlcv".into(),
            sectors: "sectors.csv".into(),
            listings: None,
            stopwords: None,
            contractions: None,
            lemmas: None,
            empath_terms: None,
            custom_terms: None,
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSettings {
    pub sigma_multiplier: f64,
    pub slope_threshold: f64,
    /// Replace the threshold by the median slope of anomalous windows.
    pub calibrate_slope: bool,
}

impl Default for MarketSettings {
    fn default() -> Self {
        MarketSettings {
            sigma_multiplier: DEFAULT_SIGMA_MULTIPLIER,
            slope_threshold: DEFAULT_SLOPE_THRESHOLD,
            calibrate_slope: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub kind: ModelKind,
    /// Documents the final model is trained on.
    pub docs: DocFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub min_count: u64,
    pub weighting: Weighting,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings { min_count: 1, weighting: Weighting::Counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub k: usize,
    pub seed: u64,
    /// One report row per document filter.
    pub conditions: Vec<DocFilter>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { k: 5, seed: 7, conditions: vec![DocFilter::Posts, DocFilter::All] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainSettings {
    #[serde(flatten)]
    pub shapley: ShapleyConfig,
    /// Documents attributed, spread evenly over the labeled set.
    pub instances: usize,
    /// Background documents, spread evenly over the labeled set.
    pub background: usize,
    pub top_n: usize,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings { shapley: ShapleyConfig::default(), instances: 100, background: 20, top_n: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub market: MarketSettings,
    pub model: ModelSettings,
    pub features: FeatureSettings,
    pub train: TrainConfig<f64>,
    pub eval: EvalSettings,
    pub explain: ExplainSettings,
    pub simulate: CorpusConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| CliError::usage(Stage::Config, e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(Stage::Config, format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        PipelineConfig::from_toml(&text, &base)
    }

    pub fn defaults_in(base_dir: &Path) -> Self {
        PipelineConfig { base_dir: base_dir.to_path_buf(), ..Default::default() }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the effective configuration, quoted in reports.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.resolve(&self.paths.out_dir).join(name)
    }

    /// Range checks that do not touch the filesystem.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::usage(Stage::Config, msg));
        let m = &self.market;
        if !(m.sigma_multiplier.is_finite() && m.sigma_multiplier >= 0.0) {
            return bad(format!("market.sigma_multiplier must be a non-negative number, got {}", m.sigma_multiplier));
        }
        if !m.slope_threshold.is_finite() {
            return bad(format!("market.slope_threshold must be finite, got {}", m.slope_threshold));
        }
        if self.eval.k < 2 {
            return bad(format!("eval.k must be at least 2, got {}", self.eval.k));
        }
        if self.eval.conditions.is_empty() {
            return bad("eval.conditions must name at least one of posts, all".into());
        }
        if self.explain.shapley.samples == 0 || self.explain.instances == 0 || self.explain.background == 0 {
            return bad("explain.samples, explain.instances and explain.background must be positive".into());
        }
        if self.model.kind == ModelKind::Mlp && (self.train.hidden.is_empty() || self.train.hidden.contains(&0)) {
            return bad("train.hidden must list at least one positive width for the mlp model".into());
        }
        self.train
            .validate()
            .map_err(|e| CliError::usage(Stage::Config, format!("train: {e}")))?;
        self.simulate
            .validate()
            .map_err(|e| CliError::usage(Stage::Config, format!("simulate: {e}")))
    }

    /// The optional word-list paths that are set.
    pub fn word_lists(&self) -> Vec<&Path> {
        let p = &self.paths;
        [&p.stopwords, &p.contractions, &p.lemmas, &p.empath_terms, &p.custom_terms]
            .into_iter()
            .filter_map(|o| o.as_deref())
            .collect()
    }
}
