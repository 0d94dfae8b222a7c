//! Line-oriented seed loading: lenient mode must never fail on in-memory
//! input, its accounting must balance, and strict mode must agree whenever
//! no line is malformed.

#![no_main]

use libfuzzer_sys::fuzz_target;
use v6forge_core::addr6::{load_seed_set, LoadMode};

fuzz_target!(|data: &[u8]| {
    let (set, stats) = load_seed_set(std::io::Cursor::new(data), LoadMode::Lenient)
        .expect("lenient in-memory loads cannot fail");
    assert_eq!(stats.parsed, set.len() + stats.duplicates);

    let strict = load_seed_set(std::io::Cursor::new(data), LoadMode::Strict);
    if stats.malformed == 0 {
        let (strict_set, strict_stats) = strict.expect("clean input must load strictly");
        assert_eq!(strict_stats.parsed, stats.parsed);
        let a: Vec<_> = set.iter().copied().collect();
        let b: Vec<_> = strict_set.iter().copied().collect();
        assert_eq!(a, b);
    } else {
        assert!(strict.is_err(), "strict must reject malformed input");
    }
});
