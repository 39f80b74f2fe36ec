//! Fuzzes the configuration parser. Arbitrary input must either produce
//! a validated run configuration or a structured parse error; panics and
//! crashes are the only failures.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        match blindbeam::config::parse_config(text) {
            Ok(config) => {
                // A config that parses must also survive the derived
                // accessors the binary calls unconditionally.
                let _ = config.effective_noise_power();
            }
            Err(error) => {
                let _ = error.to_string();
            }
        }
    }
});
