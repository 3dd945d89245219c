#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = matdnn::corpus::decode_wav(data, "fuzz");
});
