//! The config parser must reject arbitrary text with an error, never a
//! panic, and must not accept values its validator forbids.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = hstokes::config::parse_config_str(text) {
            cfg.validate().expect("parsed configs satisfy validation");
        }
    }
});
