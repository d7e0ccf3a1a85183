#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| proviq_testkit::fuzz::embedding_table(data));
