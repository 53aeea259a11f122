#![no_main]

use libfuzzer_sys::fuzz_target;
use mesu::exact::MilpModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = MilpModel::from_json(text);
    }
});
