//! Artifact layout under the output directory and atomic file I/O.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use matdnn::corpus::{read_matf, write_matf, Corpus, FeatureSequence};
use matdnn::labels::LabelSet;
use matdnn::tokenizer::Granularity;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().context("artifact path has no parent")?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("artifact path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn ordinal(k: usize) -> String {
    let suffix = match (k % 10, k % 100) {
        (1, r) if r != 11 => "st",
        (2, r) if r != 12 => "nd",
        (3, r) if r != 13 => "rd",
        _ => "th",
    };
    format!("{k}{suffix}")
}

/// Output-directory layout. Paths returned here are relative to `root`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn abs(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }

    pub fn corpus_dir() -> PathBuf {
        PathBuf::from("corpus")
    }

    pub fn queries_dir() -> PathBuf {
        PathBuf::from("queries")
    }

    pub fn truth() -> PathBuf {
        PathBuf::from("truth.jsonl")
    }

    pub fn query_truth() -> PathBuf {
        PathBuf::from("query_truth.jsonl")
    }

    pub fn relevance() -> PathBuf {
        PathBuf::from("relevance.csv")
    }

    pub fn tok(iter: usize) -> PathBuf {
        PathBuf::from(format!("TOK-{}", ordinal(iter)))
    }

    pub fn init_labels(iter: usize, n: usize) -> PathBuf {
        Self::tok(iter).join("init").join(format!("n{n}.jsonl"))
    }

    pub fn mat_round(iter: usize, round: usize) -> PathBuf {
        Self::tok(iter).join(format!("MR-{round}"))
    }

    pub fn level_model(iter: usize, round: usize, g: Granularity) -> PathBuf {
        Self::mat_round(iter, round).join(format!("{g}.matm"))
    }

    pub fn level_labels(iter: usize, round: usize, g: Granularity) -> PathBuf {
        Self::mat_round(iter, round).join(format!("{g}.jsonl"))
    }

    /// Initial labels for round `round > 0`, produced by reinforcing round `round - 1`.
    pub fn mr_labels(iter: usize, round: usize, n: usize) -> PathBuf {
        Self::mat_round(iter, round).join("init").join(format!("n{n}.jsonl"))
    }

    pub fn bnf(iter: usize, round: usize) -> PathBuf {
        PathBuf::from(format!("BNF-{}", ordinal(iter))).join(format!("MR-{round}"))
    }

    pub fn std(iter: usize, round: usize) -> PathBuf {
        PathBuf::from(format!("STD-{}", ordinal(iter))).join(format!("MR-{round}"))
    }

    pub fn eval(iter: usize, round: usize) -> PathBuf {
        PathBuf::from(format!("EVAL-{}", ordinal(iter))).join(format!("MR-{round}"))
    }
}

/// Writes one MATF file per utterance into `dir`.
pub fn corpus_files(dir: &Path, utterances: &[FeatureSequence]) -> Vec<(PathBuf, Vec<u8>)> {
    utterances.iter().map(|u| (dir.join(format!("{}.matf", u.utterance_id)), write_matf(u))).collect()
}

/// Every `*.matf` in `dir`, with ids taken from file stems.
pub fn read_feature_dir(dir: &Path) -> Result<Vec<FeatureSequence>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "matf"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .matf files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let id = p.file_stem().expect("has extension").to_string_lossy().into_owned();
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            read_matf(&bytes, id).with_context(|| format!("decoding {}", p.display()))
        })
        .collect()
}

pub fn speakers_csv(speakers: &BTreeMap<String, String>) -> String {
    let mut out = String::from("utterance_id,speaker_id\n");
    for (u, s) in speakers {
        out.push_str(&format!("{u},{s}\n"));
    }
    out
}

pub fn parse_speakers_csv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("utterance_id,speaker_id") {
        bail!("speaker table must start with the header utterance_id,speaker_id");
    }
    let mut out = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((u, s)) = line.split_once(',') else { bail!("speaker table line {}: expected two fields", i + 2) };
        if out.insert(u.trim().to_string(), s.trim().to_string()).is_some() {
            bail!("speaker table line {}: duplicate utterance {u}", i + 2);
        }
    }
    Ok(out)
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let corpus = Corpus::new(read_feature_dir(dir)?)?;
    let spk = dir.join("speakers.csv");
    if spk.exists() {
        let speakers = parse_speakers_csv(&fs::read_to_string(&spk)?)?;
        return Ok(corpus.with_speakers(speakers));
    }
    Ok(corpus)
}

pub fn read_labels(path: &Path, n: usize) -> Result<LabelSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    LabelSet::from_jsonl(&text, n).with_context(|| format!("decoding {}", path.display()))
}
