//! Model-file decoding: arbitrary bytes must never panic, and any accepted
//! file must round-trip through the encoder unchanged.

#![no_main]

use libfuzzer_sys::fuzz_target;
use v6forge_core::vae6::{load_params, save_params};

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = load_params(data) {
        let bytes = save_params(&params);
        let again = load_params(&bytes).expect("re-encoded model must load");
        assert_eq!(again, params);
        assert_eq!(bytes, data, "encoding must be canonical");
    }
});
