//! The solution dump decoder parses its grid size from the input, so it
//! must bound allocations and length arithmetic before trusting it.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = hstokes::cache::decode_solution(data);
});
