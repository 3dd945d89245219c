#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = matdnn::tokenizer::read_level_model(data) {
        let again = matdnn::tokenizer::read_level_model(&matdnn::tokenizer::write_level_model(&m)).expect("re-encoded MATM decodes");
        assert_eq!(again, m);
    }
});
