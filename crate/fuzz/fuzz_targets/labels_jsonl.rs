#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // First byte picks the token inventory size.
    let Some((&n, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    if let Ok(l) = matdnn::LabelSet::from_jsonl(text, usize::from(n).max(1)) {
        assert_eq!(matdnn::LabelSet::from_jsonl(&l.to_jsonl(), l.n).expect("re-encoded labels decode"), l);
    }
});
