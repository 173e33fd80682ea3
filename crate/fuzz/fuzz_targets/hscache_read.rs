//! The corrector cache decoder must treat arbitrary bytes as a
//! structural error, never panic, and never over-allocate; the key
//! below matches the seed corpus so mutations can reach past the
//! header check.

#![no_main]

use hstokes::cache::{decode_correctors, CacheKey};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let key = CacheKey {
        family: "laminate".to_string(),
        params: "offset=2,amplitude=1,mu=1".to_string(),
        n: 4,
        tol: 1e-9,
    };
    let _ = decode_correctors(&key, data);
});
