use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use matdnn::corpus::FeatureConfig;
use matdnn::init::InitConfig;
use matdnn::mdnn::MdnnConfig;
use matdnn::reinforce::{LdaConfig, ReinforceConfig};
use matdnn::retrieval::{RankMode, StdFixtureSpec, Stream};
use matdnn::tokenizer::{GranularityGrid, TokenizerConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Most mutual-reinforcement rounds a run may request.
pub const MAX_MR_ROUNDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// MAT / MDNN alternations run by `iterate`.
    pub iterations: usize,
    pub paths: PathsConfig,
    pub seeds: SeedConfig,
    pub synth: StdFixtureSpec,
    pub features: FeatureConfig,
    pub grid: GranularityGrid,
    pub init: InitConfig,
    pub tokenizer: TokenizerConfig,
    pub mr: MrConfig,
    pub mdnn: MdnnSection,
    pub retrieval: RetrievalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            iterations: 2,
            paths: PathsConfig::default(),
            seeds: SeedConfig::default(),
            synth: StdFixtureSpec::default(),
            features: FeatureConfig::default(),
            grid: GranularityGrid::default(),
            init: InitConfig::default(),
            tokenizer: TokenizerConfig::default(),
            mr: MrConfig::default(),
            mdnn: MdnnSection::default(),
            retrieval: RetrievalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out: PathBuf,
    /// Directory of 16-bit mono WAV documents read by `features`.
    pub audio: Option<PathBuf>,
    /// Directory of WAV queries read by `features`.
    pub queries: Option<PathBuf>,
    /// `query_id,doc_id,relevant` table copied next to the queries.
    pub relevance: Option<PathBuf>,
    /// `utterance_id,speaker_id` table copied next to the corpus.
    pub speakers: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { out: PathBuf::from("out"), audio: None, queries: None, relevance: None, speakers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    /// Every stage seed is derived from this value and the stage name.
    pub base: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig { base: 1 }
    }
}

impl SeedConfig {
    pub fn stage(&self, stage: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.base.to_le_bytes());
        h.update(stage.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MrConfig {
    pub rounds: usize,
    pub tau: f64,
    pub min_gap: usize,
    pub lda: LdaConfig,
}

impl Default for MrConfig {
    fn default() -> Self {
        let r = ReinforceConfig::default();
        MrConfig { rounds: 0, tau: r.tau, min_gap: r.min_gap, lda: r.lda }
    }
}

impl MrConfig {
    pub fn reinforce(&self) -> ReinforceConfig {
        ReinforceConfig { tau: self.tau, min_gap: self.min_gap, lda: self.lda.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdnnSection {
    /// Context frames on each side of the center frame.
    pub context: usize,
    /// Append per-utterance mean/std statistics to every frame.
    pub utterance_vector: bool,
    pub hidden: Vec<usize>,
    pub bottleneck: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
}

impl Default for MdnnSection {
    fn default() -> Self {
        let n = MdnnConfig::default();
        MdnnSection {
            context: 4,
            utterance_vector: true,
            hidden: n.hidden,
            bottleneck: n.bottleneck,
            batch_size: n.batch_size,
            learning_rate: n.learning_rate,
            momentum: n.momentum,
            epochs: n.epochs,
        }
    }
}

impl MdnnSection {
    pub fn network(&self) -> MdnnConfig {
        MdnnConfig {
            hidden: self.hidden.clone(),
            bottleneck: self.bottleneck,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            epochs: self.epochs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Token,
    /// Frame DTW on the MFCC stream.
    Mfcc,
    /// Frame DTW on the current iteration's bottleneck features.
    Bnf,
    /// Mean of the token, MFCC and BNF scores.
    Fusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub mode: SearchMode,
    /// Fusion weights for token, MFCC and BNF scores.
    pub weights: Option<Vec<f64>>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { mode: SearchMode::Token, weights: None }
    }
}

impl RetrievalConfig {
    /// Feature stream 0 is MFCC, stream 1 is BNF.
    pub fn rank_mode(&self) -> RankMode {
        match self.mode {
            SearchMode::Token => RankMode::Token,
            SearchMode::Mfcc => RankMode::Frame(0),
            SearchMode::Bnf => RankMode::Frame(1),
            SearchMode::Fusion => RankMode::Fusion {
                streams: vec![Stream::Token, Stream::Frame(0), Stream::Frame(1)],
                weights: self.weights.clone(),
            },
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            bail!("iterations must be at least 1");
        }
        if self.mr.rounds > MAX_MR_ROUNDS {
            bail!("mr.rounds must be between 0 and {MAX_MR_ROUNDS}, got {}", self.mr.rounds);
        }
        self.grid.validate()?;
        if self.mdnn.bottleneck == 0 || self.mdnn.batch_size == 0 {
            bail!("mdnn bottleneck and batch_size must be positive");
        }
        if let Some(w) = &self.retrieval.weights {
            if w.len() != 3 {
                bail!("retrieval.weights needs one weight for each of token, mfcc and bnf");
            }
        }
        for (name, p) in [
            ("audio", &self.paths.audio),
            ("queries", &self.paths.queries),
            ("relevance", &self.paths.relevance),
            ("speakers", &self.paths.speakers),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    bail!("paths.{name} {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.grid.temporal, vec![3, 5, 7, 9]);
        assert_eq!(cfg.grid.phonetic, vec![50, 100, 300, 500]);
        assert_eq!(cfg.mdnn.bottleneck, 39);
        assert_eq!(cfg.mdnn.context, 4);
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let cfg = PipelineConfig::from_toml("iterations = 1\n[grid]\ntemporal = [3]\nphonetic = [5]\n[mr]\nrounds = 2\n").unwrap();
        assert_eq!(cfg.iterations, 1);
        assert_eq!(cfg.grid.len(), 1);
        assert_eq!(cfg.mr.rounds, 2);
        assert_eq!(cfg.mr.tau, ReinforceConfig::default().tau);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(PipelineConfig::from_toml("[mr]\nrounds = 4\n").is_err());
        assert!(PipelineConfig::from_toml("iterations = 0\n").is_err());
        assert!(PipelineConfig::from_toml("[grid]\ntemporal = [5, 3]\nphonetic = [5]\n").is_err());
        assert!(PipelineConfig::from_toml("[bogus]\nx = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[paths]\naudio = \"/no/such/dir\"\n").is_err());
        assert!(PipelineConfig::from_toml("[retrieval]\nmode = \"fusion\"\nweights = [1.0]\n").is_err());
    }

    #[test]
    fn stage_seeds_differ_and_repeat() {
        let s = SeedConfig { base: 9 };
        assert_eq!(s.stage("init"), s.stage("init"));
        assert_ne!(s.stage("init"), s.stage("mdnn"));
        assert_ne!(s.stage("init"), SeedConfig { base: 10 }.stage("init"));
    }
}
