#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = matdnn::mdnn::read_mdnn(data) {
        matdnn::mdnn::read_mdnn(&matdnn::mdnn::write_mdnn(&m)).expect("re-encoded MATN decodes");
    }
});
