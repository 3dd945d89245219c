use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::{PipelineConfig, SearchMode};
use crate::pipeline::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "matdnn", version, about = "Unsupervised acoustic tokens, bottleneck features and query-by-example search")]
pub struct Cli {
    /// TOML pipeline config; every section is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `seeds.base`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `paths.out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Rerun stages the manifest reports as up to date.
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct IterArg {
    #[arg(long, default_value_t = 1)]
    pub iter: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic corpus, queries, truth and relevance table.
    Synth,
    /// Extract MFCC features from `paths.audio` (and `paths.queries`).
    Features,
    /// Initial labels for every phonetic granularity.
    Init(IterArg),
    /// Train and decode every level of the grid.
    Mat {
        #[command(flatten)]
        iter: IterArg,
        #[arg(long, default_value_t = 0)]
        round: usize,
    },
    /// Reinforce round `round - 1` into initial labels for `round`.
    Mr {
        #[command(flatten)]
        iter: IterArg,
        #[arg(long)]
        round: usize,
    },
    /// Train the multi-target network on the final round's labels.
    Mdnn(IterArg),
    /// Bottleneck features for documents and queries.
    Extract(IterArg),
    /// Rank documents for every query.
    Std {
        #[command(flatten)]
        iter: IterArg,
        /// Overrides `retrieval.mode`.
        #[arg(long, value_enum)]
        mode: Option<SearchMode>,
    },
    /// Score every level against the ground truth.
    Eval(IterArg),
    /// Co-occurrence and speaker/token maps.
    Viz(IterArg),
    /// Run the whole pipeline.
    Iterate {
        /// Overrides `iterations`.
        #[arg(long)]
        iters: Option<usize>,
        /// Overrides `mr.rounds`.
        #[arg(long)]
        rounds: Option<usize>,
    },
}

impl Cli {
    /// Config file with flag overrides applied.
    pub fn resolve_config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds.base = s;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = o.clone();
        }
        match &self.command {
            Command::Iterate { iters, rounds } => {
                if let Some(i) = iters {
                    cfg.iterations = *i;
                }
                if let Some(r) = rounds {
                    cfg.mr.rounds = *r;
                }
            }
            Command::Std { mode: Some(m), .. } => cfg.retrieval.mode = *m,
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.resolve_config()?;
    let mut p = Pipeline::open(cfg)?;
    p.force = cli.force;
    p.quiet = cli.quiet;
    match cli.command {
        Command::Synth => p.cmd_synth().map(drop),
        Command::Features => p.cmd_features().map(drop),
        Command::Init(a) => p.cmd_init(a.iter).map(drop),
        Command::Mat { iter, round } => p.cmd_mat(iter.iter, round).map(drop),
        Command::Mr { iter, round } => p.cmd_mr(iter.iter, round).map(drop),
        Command::Mdnn(a) => p.cmd_mdnn(a.iter).map(drop),
        Command::Extract(a) => p.cmd_extract(a.iter).map(drop),
        Command::Std { iter, .. } => p.cmd_std(iter.iter).map(drop),
        Command::Eval(a) => p.cmd_eval(a.iter).map(drop),
        Command::Viz(a) => p.cmd_viz(a.iter).map(drop),
        Command::Iterate { .. } => p.cmd_iterate(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cli = Cli::parse_from(["matdnn", "--seed", "7", "--out", "/tmp/x", "iterate", "--iters", "1", "--rounds", "2"]);
        let cfg = cli.resolve_config().unwrap();
        assert_eq!(cfg.seeds.base, 7);
        assert_eq!(cfg.paths.out, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.iterations, 1);
        assert_eq!(cfg.mr.rounds, 2);
    }

    #[test]
    fn bad_override_fails_validation() {
        let cli = Cli::parse_from(["matdnn", "iterate", "--rounds", "9"]);
        assert!(cli.resolve_config().is_err());
    }

    #[test]
    fn stage_arguments_parse() {
        let cli = Cli::parse_from(["matdnn", "mat", "--iter", "2", "--round", "1"]);
        assert!(matches!(cli.command, Command::Mat { iter: IterArg { iter: 2 }, round: 1 }));
        let cli = Cli::parse_from(["matdnn", "std", "--mode", "fusion"]);
        assert!(matches!(cli.command, Command::Std { mode: Some(SearchMode::Fusion), .. }));
    }
}
