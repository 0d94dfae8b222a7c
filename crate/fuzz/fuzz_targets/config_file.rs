//! Config grammar: parsing arbitrary text and applying the resulting
//! assignments must never panic, only return errors.

#![no_main]

use libfuzzer_sys::fuzz_target;
use v6forge_cli::config::{parse_text, PipelineConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(pairs) = parse_text(text) {
        let mut cfg = PipelineConfig::default();
        for (key, value) in pairs {
            let _ = cfg.apply(&key, &value);
        }
        let snapshot = cfg.snapshot();
        assert_eq!(snapshot.len(), PipelineConfig::default().snapshot().len());
    }
});
