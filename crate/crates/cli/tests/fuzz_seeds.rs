//! Replays the checked-in fuzz seeds through every decoder: each seed decodes,
//! and no truncation or single-byte corruption of it panics.

use std::path::PathBuf;

use matdnn::corpus::{decode_wav, read_matf, write_matf};
use matdnn::mdnn::{read_mdnn, write_mdnn};
use matdnn::reinforce::{read_lda_model, write_lda_model};
use matdnn::retrieval::RelevanceTable;
use matdnn::tokenizer::{read_level_model, write_level_model};
use matdnn::LabelSet;
use matdnn_cli::store::{parse_speakers_csv, speakers_csv};
use matdnn_cli::PipelineConfig;

/// Returns whether `data` decoded.
fn decode(target: &str, data: &[u8]) -> bool {
    let text = std::str::from_utf8(data);
    match target {
        "wav" => decode_wav(data, "s").is_ok(),
        "matf" => read_matf(data, "s").map(|f| assert_eq!(read_matf(&write_matf(&f), "s").unwrap(), f)).is_ok(),
        "matm" => read_level_model(data).map(|m| assert_eq!(read_level_model(&write_level_model(&m)).unwrap(), m)).is_ok(),
        "matn" => read_mdnn(data).map(|m| read_mdnn(&write_mdnn(&m)).unwrap()).is_ok(),
        "matl" => read_lda_model(data).map(|m| read_lda_model(&write_lda_model(&m)).unwrap()).is_ok(),
        "labels_jsonl" | "labels_csv" => {
            let Some((&n, rest)) = data.split_first() else { return false };
            let Ok(text) = std::str::from_utf8(rest) else { return false };
            let n = usize::from(n).max(1);
            if target == "labels_csv" {
                LabelSet::from_csv(text, n).map(|l| assert_eq!(LabelSet::from_csv(&l.to_csv(), n).unwrap(), l)).is_ok()
            } else {
                LabelSet::from_jsonl(text, n).map(|l| assert_eq!(LabelSet::from_jsonl(&l.to_jsonl(), n).unwrap(), l)).is_ok()
            }
        }
        "relevance_csv" => text.is_ok_and(|t| {
            RelevanceTable::from_csv(t).map(|r| assert_eq!(RelevanceTable::from_csv(&r.to_csv()).unwrap(), r)).is_ok()
        }),
        "config_toml" => text.is_ok_and(|t| PipelineConfig::from_toml(t).is_ok()),
        "speakers_csv" => text.is_ok_and(|t| {
            parse_speakers_csv(t).map(|m| assert_eq!(parse_speakers_csv(&speakers_csv(&m)).unwrap(), m)).is_ok()
        }),
        other => panic!("no decoder for fuzz target {other}"),
    }
}

#[test]
fn seeds_decode_and_mutations_do_not_panic() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut targets: Vec<_> = std::fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    targets.sort();
    assert_eq!(targets.len(), 10);
    for dir in targets {
        let target = dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut seeds = 0;
        for seed in std::fs::read_dir(&dir).unwrap() {
            let data = std::fs::read(seed.unwrap().path()).unwrap();
            assert!(decode(&target, &data), "{target} seed does not decode");
            seeds += 1;
            for cut in 0..data.len() {
                decode(&target, &data[..cut]);
            }
            for i in (0..data.len()).step_by(data.len() / 64 + 1) {
                let mut bad = data.clone();
                bad[i] ^= 0xa5;
                decode(&target, &bad);
            }
        }
        assert!(seeds > 0, "{target} has no seeds");
    }
}
