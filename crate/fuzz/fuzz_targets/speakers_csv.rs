#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = matdnn_cli::store::parse_speakers_csv(text) {
        let again = matdnn_cli::store::parse_speakers_csv(&matdnn_cli::store::speakers_csv(&m)).expect("re-encoded table decodes");
        assert_eq!(again, m);
    }
});
