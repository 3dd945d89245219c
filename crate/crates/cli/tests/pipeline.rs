use std::fs;
use std::path::Path;
use std::process::Command as Proc;

use matdnn_cli::{Pipeline, PipelineConfig, StageStatus};

fn small_config(out: &Path, temporal: &[usize], phonetic: &[usize], rounds: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.out = out.to_path_buf();
    cfg.grid.temporal = temporal.to_vec();
    cfg.grid.phonetic = phonetic.to_vec();
    cfg.mr.rounds = rounds;
    cfg.mr.lda.sweeps = 50;
    cfg.mdnn.hidden = vec![32];
    cfg.mdnn.bottleneck = 6;
    cfg.mdnn.epochs = 3;
    cfg.mdnn.batch_size = 64;
    cfg.mdnn.learning_rate = 0.1;
    cfg.iterations = 1;
    cfg
}

fn open(cfg: PipelineConfig) -> Pipeline {
    let mut p = Pipeline::open(cfg).unwrap();
    p.quiet = true;
    p
}

#[test]
fn mat_on_single_level_grid_writes_one_model_and_one_label_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = open(small_config(dir.path(), &[3], &[5], 0));
    p.cmd_synth().unwrap();
    p.cmd_init(1).unwrap();
    let before = p.manifest().entries.len();
    assert_eq!(p.cmd_mat(1, 0).unwrap(), StageStatus::Ran);
    assert_eq!(p.manifest().entries.len(), before + 1);
    let e = p.manifest().latest("TOK-1st/MR-0").unwrap();
    let models: Vec<_> = e.outputs.iter().filter(|o| o.path.ends_with(".matm")).collect();
    let labels: Vec<_> = e.outputs.iter().filter(|o| o.path.ends_with(".jsonl")).collect();
    assert_eq!(models.len(), 1);
    assert_eq!(labels.len(), 1);
    assert_eq!(models[0].path, "TOK-1st/MR-0/m3_n5.matm");
    assert!(dir.path().join("TOK-1st/MR-0/m3_n5.jsonl").exists());
}

#[test]
fn zero_rounds_feed_init_labels_straight_to_the_tokenizer() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = open(small_config(dir.path(), &[3], &[5], 0));
    p.cmd_synth().unwrap();
    p.cmd_init(1).unwrap();
    p.cmd_mat(1, 0).unwrap();
    let init = p.manifest().latest("TOK-1st/init").unwrap().outputs[0].clone();
    let mat = p.manifest().latest("TOK-1st/MR-0").unwrap();
    assert!(mat.inputs.contains(&init));
    assert!(p.cmd_mr(1, 1).is_err());
    assert!(!dir.path().join("TOK-1st/MR-1").exists());
}

#[test]
fn second_iteration_input_adds_one_bnf_block() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), &[3], &[5], 0);
    cfg.iterations = 2;
    let (bottleneck, context) = (cfg.mdnn.bottleneck, cfg.mdnn.context);
    let mut p = open(cfg);
    p.cmd_iterate().unwrap();
    let dim = |k: &str| -> usize {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(k)).unwrap()).unwrap();
        v["input_dim"].as_u64().unwrap() as usize
    };
    let one = dim("BNF-1st/MR-0/network.json");
    let two = dim("BNF-2nd/MR-0/network.json");
    assert_eq!(two, one + bottleneck * (2 * context + 1));
    assert!(dir.path().join("TOK-2nd/MR-0/m3_n5.matm").exists());
    let tok2 = p.manifest().latest("TOK-2nd/MR-0").unwrap();
    assert!(tok2.inputs.iter().any(|i| i.path.starts_with("BNF-1st/MR-0/features/")));
    assert!(dir.path().join("STD-2nd/MR-0/ap.csv").exists());
    assert!(dir.path().join("EVAL-2nd/MR-0/grid_f.csv").exists());
}

#[test]
fn rerun_skips_and_tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), &[3], &[5], 0);
    let mut p = open(cfg.clone());
    p.cmd_synth().unwrap();
    p.cmd_init(1).unwrap();
    let mut again = open(cfg.clone());
    assert_eq!(again.cmd_synth().unwrap(), StageStatus::Skipped);
    assert_eq!(again.cmd_init(1).unwrap(), StageStatus::Skipped);
    let n = again.manifest().entries.len();

    let mut other_seed = cfg.clone();
    other_seed.seeds.base += 1;
    let mut changed = open(other_seed);
    assert_eq!(changed.cmd_synth().unwrap(), StageStatus::Ran);
    assert!(changed.manifest().entries.len() > n);

    fs::write(dir.path().join("TOK-1st/init/n5.jsonl"), "tampered").unwrap();
    let mut p = open(cfg);
    let err = p.cmd_mat(1, 0).unwrap_err();
    assert!(format!("{err:#}").contains("changed after stage"));
}

#[test]
fn missing_upstream_artifact_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = open(small_config(dir.path(), &[3], &[5], 0));
    let err = p.cmd_mat(1, 0).unwrap_err();
    assert!(format!("{err:#}").contains("missing upstream artifact"));
    assert!(p.cmd_mat(1, 2).is_err());
}

#[test]
fn binary_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = Proc::new(env!("CARGO_BIN_EXE_matdnn"))
        .args(["--quiet", "--out", dir.path().to_str().unwrap(), "mdnn"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing upstream artifact"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[mr]\nrounds = 7\n").unwrap();
    let out = Proc::new(env!("CARGO_BIN_EXE_matdnn")).args(["--config", cfg.to_str().unwrap(), "synth"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mr.rounds"));
}

fn write_tone(path: &Path, freqs: &[f64]) {
    let spec = hound::WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for (k, f) in freqs.iter().enumerate() {
        for i in 0..3200 {
            let t = (k * 3200 + i) as f64 / 16000.0;
            w.write_sample((8000.0 * (2.0 * std::f64::consts::PI * f * t).sin()) as i16).unwrap();
        }
    }
    w.finalize().unwrap();
}

#[test]
fn wav_corpus_flows_through_features_and_tokenizer() {
    let dir = tempfile::tempdir().unwrap();
    let audio = dir.path().join("audio");
    fs::create_dir(&audio).unwrap();
    write_tone(&audio.join("a.wav"), &[300.0, 900.0, 300.0, 1500.0]);
    write_tone(&audio.join("b.wav"), &[900.0, 1500.0, 300.0]);
    let mut cfg = small_config(&dir.path().join("out"), &[3], &[3], 0);
    cfg.paths.audio = Some(audio);
    let mut p = open(cfg);
    p.cmd_features().unwrap();
    p.cmd_init(1).unwrap();
    p.cmd_mat(1, 0).unwrap();
    let out = dir.path().join("out");
    assert!(out.join("corpus/a.matf").exists());
    assert!(out.join("TOK-1st/MR-0/m3_n3.jsonl").exists());
    assert!(p.cmd_std(1).is_err());
    assert!(p.cmd_eval(1).is_err());
}
