#![no_main]

use libfuzzer_sys::fuzz_target;
use mesu::topology::{PathTable, Topology};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = Topology::parse(text) {
            let _ = PathTable::build(&t);
            let _ = Topology::parse(&t.to_text());
        }
    }
});
