//! Stage runners. Every stage hashes its inputs, skips itself when the manifest
//! already holds an identical run, and otherwise writes its outputs atomically
//! before appending a manifest entry.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use matdnn::corpus::{
    extract_features, load_audio, utterance_stats, window_context, FeatureSequence,
};
use matdnn::evalviz::{
    cluster_purity_nmi, cooccurrence, corpus_boundary_prf, emit_grid, speaker_token_map, write_pgm,
};
use matdnn::init::initialize;
use matdnn::labels::{LabelSet, TokenLabelSequence};
use matdnn::mdnn::{extract_bnf, make_iteration_input, read_mdnn, train_mdnn, training_log_csv, write_mdnn, MdnnModel};
use matdnn::reinforce::{documents_to_jsonl, fused_to_jsonl, mutual_reinforce, write_lda_model};
use matdnn::retrieval::{
    average_precision, mean_average_precision, rank_documents, rankings_to_tsv, synthesize_std_fixture,
    token_distance_matrix, DistanceMatrix, RelevanceTable, SearchItem,
};
use matdnn::tokenizer::{decode_utterance, read_level_model, run_mat, write_level_model, Granularity, HalfStep, LevelModel};
use ndarray::{Array2, Axis};

use crate::config::{PipelineConfig, SearchMode};
use crate::manifest::{FileHash, Manifest, ManifestEntry};
use crate::store::{
    corpus_files, parse_speakers_csv, read_corpus, read_feature_dir, read_labels, sha256_hex, speakers_csv,
    write_atomic, Layout,
};

/// Mean speaker-map intensity over non-empty cells.
pub const SPEAKER_MAP_TARGET: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

type Outputs = Vec<(PathBuf, Vec<u8>)>;

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub layout: Layout,
    manifest: Manifest,
    config_sha: String,
    /// Rerun stages even when the manifest says they are up to date.
    pub force: bool,
    pub quiet: bool,
}

fn rel_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

impl Pipeline {
    /// Opens (or starts) the run in `cfg.paths.out` and records the config snapshot.
    pub fn open(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg.paths.out);
        let manifest = Manifest::open(&layout.manifest())?;
        let mut snapshot = cfg.clone();
        snapshot.paths.out = PathBuf::new();
        let text = snapshot.to_toml();
        let config_sha = sha256_hex(text.as_bytes());
        let mut p = Pipeline { cfg, layout, manifest, config_sha, force: false, quiet: false };
        p.run_stage("config", "config", &[], |_| Ok(vec![(PathBuf::from("config.toml"), text.into_bytes())]))?;
        Ok(p)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn rounds(&self) -> usize {
        self.cfg.mr.rounds
    }

    fn exists(&self, rel: &Path) -> bool {
        self.layout.abs(rel).exists()
    }

    fn hash_inputs(&self, inputs: &[PathBuf]) -> Result<Vec<FileHash>> {
        let mut out = Vec::new();
        for rel in inputs {
            let abs = self.layout.abs(rel);
            let files: Vec<PathBuf> = if abs.is_dir() {
                let mut v: Vec<PathBuf> = fs::read_dir(&abs)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_file() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
                    .map(|p| rel.join(p.file_name().expect("listed file")))
                    .collect();
                v.sort();
                v
            } else if abs.is_file() {
                vec![rel.clone()]
            } else {
                bail!("missing upstream artifact {}", abs.display());
            };
            for f in files {
                let bytes = fs::read(self.layout.abs(&f)).with_context(|| format!("reading {}", f.display()))?;
                let hash = FileHash { path: rel_str(&f), sha256: sha256_hex(&bytes) };
                if let Some((e, recorded)) = self.manifest.producer_of(&hash.path) {
                    if recorded.sha256 != hash.sha256 {
                        bail!("{} changed after stage {} wrote it; rerun that stage", hash.path, e.key);
                    }
                }
                out.push(hash);
            }
        }
        Ok(out)
    }

    fn outputs_intact(&self, e: &ManifestEntry) -> bool {
        e.outputs.iter().all(|o| {
            fs::read(self.layout.abs(Path::new(&o.path))).is_ok_and(|b| sha256_hex(&b) == o.sha256)
        })
    }

    fn run_stage(
        &mut self,
        stage: &str,
        key: &str,
        inputs: &[PathBuf],
        produce: impl FnOnce(&Self) -> Result<Outputs>,
    ) -> Result<StageStatus> {
        let start = Instant::now();
        let inputs = self.hash_inputs(inputs).with_context(|| format!("stage {stage} ({key})"))?;
        let mut fp = format!("{stage}\n{key}\n{}\n", self.config_sha);
        for i in &inputs {
            fp.push_str(&format!("{}\t{}\n", i.path, i.sha256));
        }
        let fingerprint = sha256_hex(fp.as_bytes());
        if !self.force {
            if let Some(e) = self.manifest.latest(key) {
                if e.stage == stage && e.fingerprint == fingerprint && self.outputs_intact(e) {
                    if !self.quiet {
                        eprintln!("[{stage}] {key}: up to date");
                    }
                    return Ok(StageStatus::Skipped);
                }
            }
        }
        let outputs = produce(self).with_context(|| format!("stage {stage} ({key})"))?;
        let mut hashes = Vec::with_capacity(outputs.len());
        for (rel, bytes) in &outputs {
            write_atomic(&self.layout.abs(rel), bytes)?;
            hashes.push(FileHash { path: rel_str(rel), sha256: sha256_hex(bytes) });
        }
        let elapsed_ms = start.elapsed().as_millis() as u64;
        self.manifest.append(ManifestEntry {
            stage: stage.into(),
            key: key.into(),
            fingerprint,
            config_sha256: self.config_sha.clone(),
            inputs,
            outputs: hashes,
            elapsed_ms,
        })?;
        if !self.quiet {
            eprintln!("[{stage}] {key}: {} files in {:.1} s", outputs.len(), elapsed_ms as f64 / 1000.0);
        }
        Ok(StageStatus::Ran)
    }

    /// Features the tokenizer of iteration `iter` runs on: MFCCs first, then
    /// the previous iteration's bottleneck features.
    pub fn acoustic_dir(&self, iter: usize) -> PathBuf {
        if iter <= 1 {
            Layout::corpus_dir()
        } else {
            Layout::bnf(iter - 1, self.rounds()).join("features")
        }
    }

    fn query_acoustic_dir(&self, iter: usize) -> PathBuf {
        if iter <= 1 {
            Layout::queries_dir()
        } else {
            Layout::bnf(iter - 1, self.rounds()).join("queries")
        }
    }

    fn has_queries(&self) -> bool {
        self.exists(&Layout::queries_dir())
    }

    fn has_truth(&self) -> bool {
        self.exists(&Layout::truth())
    }

    fn check_iter(&self, iter: usize) -> Result<()> {
        if iter == 0 {
            bail!("iterations are numbered from 1");
        }
        Ok(())
    }

    fn check_round(&self, round: usize) -> Result<()> {
        if round > self.rounds() {
            bail!("round {round} exceeds mr.rounds = {}", self.rounds());
        }
        Ok(())
    }

    pub fn cmd_synth(&mut self) -> Result<StageStatus> {
        let seed = self.cfg.seeds.stage("synth");
        self.run_stage("synth", "corpus", &[], |p| {
            let fx = synthesize_std_fixture(&p.cfg.synth, seed)?;
            let mut out = corpus_files(&Layout::corpus_dir(), &fx.documents.utterances);
            out.push((Layout::corpus_dir().join("speakers.csv"), speakers_csv(&fx.documents.speakers).into_bytes()));
            out.push((Layout::truth(), LabelSet::new(fx.truth.num_tokens, fx.truth.utterances).to_jsonl().into_bytes()));
            out.extend(corpus_files(&Layout::queries_dir(), &fx.queries));
            out.push((Layout::query_truth(), LabelSet::new(fx.truth.num_tokens, fx.query_truth).to_jsonl().into_bytes()));
            out.push((Layout::relevance(), fx.relevance.to_csv().into_bytes()));
            Ok(out)
        })
    }

    pub fn cmd_features(&mut self) -> Result<StageStatus> {
        let paths = self.cfg.paths.clone();
        let audio = paths.audio.clone().ok_or_else(|| anyhow!("paths.audio is not set"))?;
        let mut inputs = vec![audio.clone()];
        inputs.extend(paths.queries.clone());
        inputs.extend(paths.relevance.clone());
        inputs.extend(paths.speakers.clone());
        self.run_stage("features", "corpus", &inputs, |p| {
            let docs = extract_dir(&audio, &p.cfg)?;
            let mut out = corpus_files(&Layout::corpus_dir(), &docs);
            let mut speakers = BTreeMap::new();
            if let Some(s) = &paths.speakers {
                speakers = parse_speakers_csv(&fs::read_to_string(s)?)?;
            }
            out.push((Layout::corpus_dir().join("speakers.csv"), speakers_csv(&speakers).into_bytes()));
            if let Some(q) = &paths.queries {
                out.extend(corpus_files(&Layout::queries_dir(), &extract_dir(q, &p.cfg)?));
            }
            if let Some(r) = &paths.relevance {
                let table = RelevanceTable::from_csv(&fs::read_to_string(r)?)?;
                out.push((Layout::relevance(), table.to_csv().into_bytes()));
            }
            Ok(out)
        })
    }

    pub fn cmd_init(&mut self, iter: usize) -> Result<StageStatus> {
        self.check_iter(iter)?;
        let feats = self.acoustic_dir(iter);
        let key = rel_str(&Layout::tok(iter).join("init"));
        self.run_stage("init", &key, std::slice::from_ref(&feats), |p| {
            let corpus = read_corpus(&p.layout.abs(&feats))?;
            let mut out = Vec::new();
            for &n in &p.cfg.grid.phonetic {
                let seed = p.cfg.seeds.stage(&format!("init-{iter}-n{n}"));
                let labels = initialize(&corpus, n, &p.cfg.init, seed)?;
                out.push((Layout::init_labels(iter, n), labels.to_jsonl().into_bytes()));
            }
            Ok(out)
        })
    }

    fn initial_label_paths(&self, iter: usize, round: usize) -> Vec<PathBuf> {
        self.cfg
            .grid
            .phonetic
            .iter()
            .map(|&n| if round == 0 { Layout::init_labels(iter, n) } else { Layout::mr_labels(iter, round, n) })
            .collect()
    }

    pub fn cmd_mat(&mut self, iter: usize, round: usize) -> Result<StageStatus> {
        self.check_iter(iter)?;
        self.check_round(round)?;
        let feats = self.acoustic_dir(iter);
        let init_paths = self.initial_label_paths(iter, round);
        let mut inputs = vec![feats.clone()];
        inputs.extend(init_paths.iter().cloned());
        let key = rel_str(&Layout::mat_round(iter, round));
        self.run_stage("mat", &key, &inputs, |p| {
            let corpus = read_corpus(&p.layout.abs(&feats))?;
            let init = init_paths
                .iter()
                .zip(&p.cfg.grid.phonetic)
                .map(|(path, &n)| read_labels(&p.layout.abs(path), n))
                .collect::<Result<Vec<_>>>()?;
            let levels = run_mat(&corpus, &p.cfg.grid, &init, &p.cfg.tokenizer)?;
            let mut trace = String::from("m,n,outer,step,log_likelihood\n");
            let mut out = Vec::new();
            for l in &levels {
                let g = l.granularity;
                out.push((Layout::level_model(iter, round, g), write_level_model(&l.run.model)));
                out.push((Layout::level_labels(iter, round, g), l.run.labels.to_jsonl().into_bytes()));
                for t in &l.run.trace {
                    let step = match t.step {
                        HalfStep::FlatStart => "flat_start",
                        HalfStep::Train => "train",
                        HalfStep::Decode => "decode",
                    };
                    trace.push_str(&format!("{},{},{},{step},{}\n", g.m, g.n, t.outer, t.log_likelihood));
                }
            }
            out.push((Layout::mat_round(iter, round).join("trace.csv"), trace.into_bytes()));
            Ok(out)
        })
    }

    fn level_label_paths(&self, iter: usize, round: usize) -> Vec<(Granularity, PathBuf)> {
        self.cfg.grid.levels().into_iter().map(|g| (g, Layout::level_labels(iter, round, g))).collect()
    }

    fn read_level_labels(&self, iter: usize, round: usize) -> Result<Vec<(Granularity, LabelSet)>> {
        self.level_label_paths(iter, round)
            .into_iter()
            .map(|(g, path)| Ok((g, read_labels(&self.layout.abs(&path), g.n)?)))
            .collect()
    }

    fn read_level_models(&self, iter: usize, round: usize) -> Result<Vec<LevelModel>> {
        self.cfg
            .grid
            .levels()
            .into_iter()
            .map(|g| {
                let path = self.layout.abs(&Layout::level_model(iter, round, g));
                let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                read_level_model(&bytes).with_context(|| format!("decoding {}", path.display()))
            })
            .collect()
    }

    /// Reinforces the MAT output of round `round - 1` into initial labels for `round`.
    pub fn cmd_mr(&mut self, iter: usize, round: usize) -> Result<StageStatus> {
        self.check_iter(iter)?;
        self.check_round(round)?;
        if round == 0 {
            bail!("round 0 starts from the init labels; reinforcement produces rounds 1..={}", self.rounds());
        }
        let feats = self.acoustic_dir(iter);
        let mut inputs = vec![feats.clone()];
        inputs.extend(self.level_label_paths(iter, round - 1).into_iter().map(|(_, p)| p));
        let key = rel_str(&Layout::mat_round(iter, round).join("init"));
        let seed = self.cfg.seeds.stage(&format!("mr-{iter}-{round}"));
        self.run_stage("mr", &key, &inputs, |p| {
            let corpus = read_corpus(&p.layout.abs(&feats))?;
            let levels = p.read_level_labels(iter, round - 1)?;
            let refs: Vec<(Granularity, &LabelSet)> = levels.iter().map(|(g, l)| (*g, l)).collect();
            let res = mutual_reinforce(&corpus, &p.cfg.grid, &refs, &p.cfg.mr.reinforce(), seed)?;
            let dir = Layout::mat_round(iter, round).join("init");
            let mut out = vec![
                (dir.join("fused.jsonl"), fused_to_jsonl(&res.fused).into_bytes()),
                (dir.join("documents.jsonl"), documents_to_jsonl(&res.documents).into_bytes()),
            ];
            for ((&n, model), labels) in p.cfg.grid.phonetic.iter().zip(&res.models).zip(&res.labels) {
                out.push((dir.join(format!("lda_n{n}.matl")), write_lda_model(model)));
                out.push((Layout::mr_labels(iter, round, n), labels.to_jsonl().into_bytes()));
            }
            Ok(out)
        })
    }

    /// MDNN inputs of one utterance: MFCC context, previous BNF context, and
    /// the utterance statistics vector.
    pub fn utterance_input(&self, mfcc: &FeatureSequence, prev_bnf: Option<&FeatureSequence>) -> Result<Array2<f64>> {
        let r = self.cfg.mdnn.context;
        let m = window_context(mfcc, r);
        let b = prev_bnf.map(|b| window_context(b, r));
        let stats = self.cfg.mdnn.utterance_vector.then(|| utterance_stats(mfcc));
        Ok(make_iteration_input(&m, b.as_ref(), &[], stats.as_ref().and_then(|s| s.as_slice()))?)
    }

    fn prev_bnf_dir(&self, iter: usize, queries: bool) -> Option<PathBuf> {
        (iter > 1).then(|| Layout::bnf(iter - 1, self.rounds()).join(if queries { "queries" } else { "features" }))
    }

    fn read_prev_bnf(&self, iter: usize, queries: bool) -> Result<Option<BTreeMap<String, FeatureSequence>>> {
        match self.prev_bnf_dir(iter, queries) {
            None => Ok(None),
            Some(d) => {
                let seqs = read_feature_dir(&self.layout.abs(&d))?;
                Ok(Some(seqs.into_iter().map(|f| (f.utterance_id.clone(), f)).collect()))
            }
        }
    }

    fn inputs_for(&self, mfcc: &FeatureSequence, prev: Option<&BTreeMap<String, FeatureSequence>>) -> Result<Array2<f64>> {
        let b = match prev {
            None => None,
            Some(map) => Some(
                map.get(&mfcc.utterance_id)
                    .ok_or_else(|| anyhow!("no previous bottleneck features for {}", mfcc.utterance_id))?,
            ),
        };
        self.utterance_input(mfcc, b)
    }

    pub fn cmd_mdnn(&mut self, iter: usize) -> Result<StageStatus> {
        self.check_iter(iter)?;
        let round = self.rounds();
        let mut inputs = vec![Layout::corpus_dir()];
        inputs.extend(self.prev_bnf_dir(iter, false));
        inputs.extend(self.level_label_paths(iter, round).into_iter().map(|(_, p)| p));
        let dir = Layout::bnf(iter, round);
        let key = rel_str(&dir.join("model"));
        let seed = self.cfg.seeds.stage(&format!("mdnn-{iter}"));
        self.run_stage("mdnn", &key, &inputs, |p| {
            let mfcc = read_corpus(&p.layout.abs(&Layout::corpus_dir()))?;
            let prev = p.read_prev_bnf(iter, false)?;
            let levels = p.read_level_labels(iter, round)?;
            let refs: Vec<(Granularity, &LabelSet)> = levels.iter().map(|(g, l)| (*g, l)).collect();
            let targets = matdnn::mdnn::build_targets(&mfcc, &refs)?;
            let blocks = mfcc
                .canonical_order()
                .into_iter()
                .map(|u| p.inputs_for(&mfcc.utterances[u], prev.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
            let x = ndarray::concatenate(Axis(0), &views)?;
            let heads: Vec<usize> = refs.iter().map(|(g, _)| g.n).collect();
            let (model, log) = train_mdnn(x.view(), targets.view(), &heads, &p.cfg.mdnn.network(), seed)?;
            let info = serde_json::json!({
                "input_dim": model.input_dim(),
                "bottleneck_dim": model.bottleneck_dim(),
                "sizes": model.sizes,
                "heads": model.heads,
                "frames": x.nrows(),
            });
            Ok(vec![
                (dir.join("model.matn"), write_mdnn(&model)),
                (dir.join("train_log.csv"), training_log_csv(&log).into_bytes()),
                (dir.join("network.json"), format!("{}\n", serde_json::to_string_pretty(&info)?).into_bytes()),
            ])
        })
    }

    fn read_mdnn_model(&self, iter: usize) -> Result<MdnnModel> {
        let path = self.layout.abs(&Layout::bnf(iter, self.rounds()).join("model.matn"));
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        read_mdnn(&bytes).with_context(|| format!("decoding {}", path.display()))
    }

    pub fn cmd_extract(&mut self, iter: usize) -> Result<StageStatus> {
        self.check_iter(iter)?;
        let dir = Layout::bnf(iter, self.rounds());
        let queries = self.has_queries();
        let mut inputs = vec![dir.join("model.matn"), Layout::corpus_dir()];
        inputs.extend(self.prev_bnf_dir(iter, false));
        if queries {
            inputs.push(Layout::queries_dir());
            inputs.extend(self.prev_bnf_dir(iter, true));
        }
        let key = rel_str(&dir.join("features"));
        self.run_stage("extract", &key, &inputs, |p| {
            let model = p.read_mdnn_model(iter)?;
            let mut out = Vec::new();
            let mut sets = vec![(Layout::corpus_dir(), "features", false)];
            if queries {
                sets.push((Layout::queries_dir(), "queries", true));
            }
            for (src, sub, is_query) in sets {
                let prev = p.read_prev_bnf(iter, is_query)?;
                for f in read_feature_dir(&p.layout.abs(&src))? {
                    let x = p.inputs_for(&f, prev.as_ref())?;
                    let bnf = extract_bnf(&model, x.view(), &f)?;
                    out.extend(corpus_files(&dir.join(sub), std::slice::from_ref(&bnf)));
                }
            }
            Ok(out)
        })
    }

    pub fn cmd_std(&mut self, iter: usize) -> Result<StageStatus> {
        self.check_iter(iter)?;
        if !self.has_queries() {
            bail!("missing upstream artifact {}", self.layout.abs(&Layout::queries_dir()).display());
        }
        let round = self.rounds();
        let mode = self.cfg.retrieval.mode;
        let needs_bnf = matches!(mode, SearchMode::Bnf | SearchMode::Fusion);
        let bnf = Layout::bnf(iter, round);
        let mut inputs = vec![Layout::mat_round(iter, round), self.query_acoustic_dir(iter)];
        if mode != SearchMode::Token {
            inputs.extend([Layout::corpus_dir(), Layout::queries_dir()]);
        }
        if needs_bnf {
            inputs.extend([bnf.join("features"), bnf.join("queries")]);
        }
        let has_rel = self.exists(&Layout::relevance());
        if has_rel {
            inputs.push(Layout::relevance());
        }
        let dir = Layout::std(iter, round);
        self.run_stage("std", &rel_str(&dir), &inputs, |p| {
            let models = p.read_level_models(iter, round)?;
            let levels = p.read_level_labels(iter, round)?;
            let dists = models.iter().map(token_distance_matrix).collect::<matdnn::Result<Vec<DistanceMatrix>>>()?;
            let streams = |docs: &Path, bnf_dir: &Path| -> Result<BTreeMap<String, Vec<FeatureSequence>>> {
                let mut map: BTreeMap<String, Vec<FeatureSequence>> = BTreeMap::new();
                if mode == SearchMode::Token {
                    return Ok(map);
                }
                for f in read_feature_dir(&p.layout.abs(docs))? {
                    map.entry(f.utterance_id.clone()).or_default().push(f);
                }
                if needs_bnf {
                    for f in read_feature_dir(&p.layout.abs(bnf_dir))? {
                        map.entry(f.utterance_id.clone()).or_default().push(f);
                    }
                }
                Ok(map)
            };
            let mut doc_feats = streams(&Layout::corpus_dir(), &bnf.join("features"))?;
            let mut query_feats = streams(&Layout::queries_dir(), &bnf.join("queries"))?;

            let doc_ids: Vec<String> = levels[0].1.utterances.iter().map(|u| u.utterance_id.clone()).collect();
            let docs = doc_ids
                .iter()
                .map(|id| {
                    let tokens = levels
                        .iter()
                        .map(|(g, l)| {
                            l.get(id).map(TokenLabelSequence::token_ids).ok_or_else(|| anyhow!("level {g} has no labels for {id}"))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(SearchItem { id: id.clone(), tokens, features: doc_feats.remove(id).unwrap_or_default() })
                })
                .collect::<Result<Vec<_>>>()?;
            let queries: Vec<SearchItem> = read_feature_dir(&p.layout.abs(&p.query_acoustic_dir(iter)))?
                .into_iter()
                .map(|q| SearchItem {
                    tokens: models.iter().map(|m| decode_utterance(m, &q, p.cfg.tokenizer.lm_scale).token_ids()).collect(),
                    features: query_feats.remove(&q.utterance_id).unwrap_or_default(),
                    id: q.utterance_id,
                })
                .collect();

            let rank_mode = p.cfg.retrieval.rank_mode();
            let lists = queries
                .iter()
                .map(|q| rank_documents(q, &docs, &dists, &rank_mode))
                .collect::<matdnn::Result<Vec<_>>>()?;
            let mut out = vec![(dir.join("rankings.tsv"), rankings_to_tsv(&lists).into_bytes())];
            if has_rel {
                let rel = RelevanceTable::from_csv(&fs::read_to_string(p.layout.abs(&Layout::relevance()))?)?;
                let mut csv = String::from("query_id,average_precision\n");
                for l in &lists {
                    if let Some(ap) = average_precision(l, &rel)? {
                        csv.push_str(&format!("{},{ap:.6}\n", l.query_id));
                    }
                }
                csv.push_str(&format!("MAP,{:.6}\n", mean_average_precision(&lists, &rel)?));
                out.push((dir.join("ap.csv"), csv.into_bytes()));
            }
            Ok(out)
        })
    }

    fn read_truth(&self) -> Result<(LabelSet, usize)> {
        let truth = read_labels(&self.layout.abs(&Layout::truth()), usize::MAX)?;
        let units = truth.utterances.iter().flat_map(|u| u.segments.iter().map(|s| s.token + 1)).max().unwrap_or(1);
        Ok((LabelSet::new(units, truth.utterances), units))
    }

    /// Boundary P/R/F, purity and NMI of every level of every round.
    pub fn cmd_eval(&mut self, iter: usize) -> Result<StageStatus> {
        self.check_iter(iter)?;
        let mut status = StageStatus::Skipped;
        for round in 0..=self.rounds() {
            let inputs = vec![Layout::mat_round(iter, round), Layout::truth()];
            let dir = Layout::eval(iter, round);
            let s = self.run_stage("eval", &rel_str(&dir), &inputs, |p| {
                let (truth, _) = p.read_truth()?;
                let levels = p.read_level_labels(iter, round)?;
                let mut csv = String::from("m,n,precision,recall,f,purity,nmi\n");
                let mut grids: [Vec<(usize, usize, f64)>; 3] = Default::default();
                for (g, labels) in &levels {
                    let (hyp, reference) = aligned(labels, &truth)?;
                    let hb: Vec<Vec<usize>> = hyp.iter().map(|s| s.boundaries()).collect();
                    let rb: Vec<Vec<usize>> = reference.iter().map(|s| s.boundaries()).collect();
                    let prf = corpus_boundary_prf(&hb, &rb, 2)?;
                    let hf: Vec<usize> = hyp.iter().flat_map(|s| s.frame_labels()).collect();
                    let rf: Vec<usize> = reference.iter().flat_map(|s| s.frame_labels()).collect();
                    let (purity, nmi) = cluster_purity_nmi(&hf, &rf)?;
                    csv.push_str(&format!(
                        "{},{},{:.6},{:.6},{:.6},{purity:.6},{nmi:.6}\n",
                        g.m, g.n, prf.precision, prf.recall, prf.f
                    ));
                    grids[0].push((g.m, g.n, prf.f));
                    grids[1].push((g.m, g.n, purity));
                    grids[2].push((g.m, g.n, nmi));
                }
                let mut out = vec![(dir.join("levels.csv"), csv.into_bytes())];
                for (name, grid) in ["grid_f.csv", "grid_purity.csv", "grid_nmi.csv"].iter().zip(&grids) {
                    out.push((dir.join(name), emit_grid(grid)?.0.into_bytes()));
                }
                Ok(out)
            })?;
            if s == StageStatus::Ran {
                status = s;
            }
        }
        Ok(status)
    }

    /// Token/truth co-occurrence and speaker/token maps of the final round.
    pub fn cmd_viz(&mut self, iter: usize) -> Result<StageStatus> {
        self.check_iter(iter)?;
        let round = self.rounds();
        let truth = self.has_truth();
        let mut inputs = vec![Layout::mat_round(iter, round), Layout::corpus_dir().join("speakers.csv")];
        if truth {
            inputs.push(Layout::truth());
        }
        let dir = PathBuf::from(format!("VIZ-{}", crate::store::ordinal(iter))).join(format!("MR-{round}"));
        self.run_stage("viz", &rel_str(&dir), &inputs, |p| {
            let levels = p.read_level_labels(iter, round)?;
            let speakers = parse_speakers_csv(&fs::read_to_string(p.layout.abs(&Layout::corpus_dir().join("speakers.csv")))?)?;
            let truth = if truth { Some(p.read_truth()?) } else { None };
            let mut out = Vec::new();
            for (g, labels) in &levels {
                if let Some((t, units)) = &truth {
                    let c = cooccurrence(&labels.utterances, g.n, &t.utterances, *units)?;
                    let ordered = c.ordered().mapv(|v| v as f64);
                    let peak = ordered.iter().copied().fold(0.0, f64::max).max(1.0);
                    out.push((dir.join(format!("{g}_cooccurrence.csv")), c.to_csv().into_bytes()));
                    out.push((dir.join(format!("{g}_cooccurrence.pgm")), write_pgm(&(ordered / peak))));
                }
                if !speakers.is_empty() {
                    let map = speaker_token_map(&labels.utterances, g.n, &speakers, SPEAKER_MAP_TARGET)?;
                    out.push((dir.join(format!("{g}_speakers.csv")), map.to_csv().into_bytes()));
                    out.push((dir.join(format!("{g}_speakers.pgm")), write_pgm(&map.intensities())));
                }
            }
            if out.is_empty() {
                bail!("nothing to draw: no ground truth and no speaker table");
            }
            Ok(out)
        })
    }

    /// Full run: corpus, then per iteration init, MAT and reinforcement rounds,
    /// MDNN training and BNF extraction, search and evaluation when their
    /// inputs exist.
    pub fn cmd_iterate(&mut self) -> Result<()> {
        if self.cfg.paths.audio.is_some() {
            self.cmd_features()?;
        } else {
            self.cmd_synth()?;
        }
        for iter in 1..=self.cfg.iterations {
            self.cmd_init(iter)?;
            self.cmd_mat(iter, 0)?;
            for round in 1..=self.rounds() {
                self.cmd_mr(iter, round)?;
                self.cmd_mat(iter, round)?;
            }
            self.cmd_mdnn(iter)?;
            self.cmd_extract(iter)?;
            if self.has_queries() {
                self.cmd_std(iter)?;
            }
            if self.has_truth() {
                self.cmd_eval(iter)?;
            }
            if self.has_truth() || self.exists(&Layout::corpus_dir().join("speakers.csv")) {
                self.cmd_viz(iter)?;
            }
        }
        Ok(())
    }
}

fn extract_dir(dir: &Path, cfg: &PipelineConfig) -> Result<Vec<FeatureSequence>> {
    let mut wavs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    wavs.sort();
    if wavs.is_empty() {
        bail!("no .wav files in {}", dir.display());
    }
    wavs.iter()
        .map(|p| {
            let w = load_audio(p).with_context(|| format!("decoding {}", p.display()))?;
            Ok(extract_features(&w, &cfg.features)?)
        })
        .collect()
}

/// Hypothesis and reference sequences paired by utterance id.
fn aligned<'a>(hyp: &'a LabelSet, reference: &'a LabelSet) -> Result<(Vec<&'a TokenLabelSequence>, Vec<&'a TokenLabelSequence>)> {
    let mut h = Vec::with_capacity(hyp.utterances.len());
    let mut r = Vec::with_capacity(hyp.utterances.len());
    for u in &hyp.utterances {
        let t = reference.get(&u.utterance_id).ok_or_else(|| anyhow!("no reference labels for {}", u.utterance_id))?;
        if t.num_frames() != u.num_frames() {
            bail!("{}: {} labeled frames vs {} reference frames", u.utterance_id, u.num_frames(), t.num_frames());
        }
        h.push(u);
        r.push(t);
    }
    Ok((h, r))
}
