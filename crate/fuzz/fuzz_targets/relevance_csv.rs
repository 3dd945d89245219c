#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = matdnn::retrieval::RelevanceTable::from_csv(text) {
        assert_eq!(matdnn::retrieval::RelevanceTable::from_csv(&r.to_csv()).expect("re-encoded table decodes"), r);
    }
});
