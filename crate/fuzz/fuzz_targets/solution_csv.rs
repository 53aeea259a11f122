#![no_main]

use libfuzzer_sys::fuzz_target;
use mesu::exact::read_solution_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_solution_csv(data);
});
