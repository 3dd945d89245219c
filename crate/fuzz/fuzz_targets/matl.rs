#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = matdnn::reinforce::read_lda_model(data) {
        matdnn::reinforce::read_lda_model(&matdnn::reinforce::write_lda_model(&m)).expect("re-encoded MATL decodes");
    }
});
