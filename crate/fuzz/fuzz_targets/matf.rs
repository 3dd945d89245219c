#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = matdnn::corpus::read_matf(data, "fuzz") {
        let again = matdnn::corpus::read_matf(&matdnn::corpus::write_matf(&f), "fuzz").expect("re-encoded MATF decodes");
        assert_eq!(again, f);
    }
});
